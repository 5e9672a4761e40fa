//! Ranking comparisons across species and across stimulus sets.

use std::path::PathBuf;

use crossrsa_core::cross_species::RankingComparison;
use crossrsa_core::results::{read_results, CeilingRecord};
use crossrsa_core::{
    interaction_effects, ranking_comparison, rule_profiles, stimulus_control, v1_invariance, ResultRecord,
    Rule, RuleRhos, RsaResult, Species,
};

use crate::args::*;
use crate::error::{CliError, Result};
use crate::table::{emit, Cell, Format, Table};

#[derive(Debug, Default)]
pub struct Loaded {
    pub rsa: Vec<RsaResult>,
    pub ceilings: Vec<CeilingRecord>,
}

pub fn load(paths: &[PathBuf]) -> Result<Loaded> {
    if paths.is_empty() {
        return Err(CliError::Config("--data is required".into()));
    }
    let mut out = Loaded::default();
    for p in paths {
        for r in read_results(p)? {
            match r {
                ResultRecord::Rsa(x) => out.rsa.push(x),
                ResultRecord::Ceiling(c) => out.ceilings.push(c),
            }
        }
    }
    check_duplicates(&out.rsa)?;
    Ok(out)
}

/// Two records for the same condition, seed, layer and place cannot both be
/// right; averaging them as if they were seeds would hide the conflict.
fn check_duplicates(rsa: &[RsaResult]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for r in rsa {
        let key = (r.species, &r.region, &r.stimulus_set, &r.condition, r.seed, &r.layer);
        if !seen.insert(key) {
            return Err(CliError::Data(format!(
                "duplicate result for {} {} {} on {} (seed {:?}, layer {})",
                r.species, r.region, r.condition, r.stimulus_set, r.seed, r.layer
            )));
        }
    }
    Ok(())
}

/// Keeps, for every species and region, only the stimulus set that appears
/// first; later sets are stimulus-control material.
pub fn primary_sets(rsa: &[RsaResult]) -> Vec<RsaResult> {
    let mut chosen: Vec<(Species, &str, &str)> = Vec::new();
    let mut out = Vec::new();
    for r in rsa {
        let set = match chosen.iter().find(|(s, reg, _)| *s == r.species && *reg == r.region) {
            Some((_, _, set)) => *set,
            None => {
                chosen.push((r.species, &r.region, &r.stimulus_set));
                &r.stimulus_set
            }
        };
        if set == r.stimulus_set {
            out.push(r.clone());
        } else {
            log::debug!("{} {}: {} set aside, primary set is {set}", r.species, r.region, r.stimulus_set);
        }
    }
    out
}

pub fn profiles(rsa: &[RsaResult], species: Species) -> Result<Vec<(String, RuleRhos)>> {
    Ok(rule_profiles(rsa.iter().filter(|r| r.species == species))?)
}

/// Human-order regions present on both sides.
fn common(human: &[(String, RuleRhos)], macaque: &[(String, RuleRhos)]) -> Vec<String> {
    human.iter().map(|(r, _)| r.clone()).filter(|r| macaque.iter().any(|(m, _)| m == r)).collect()
}

fn find<'a>(p: &'a [(String, RuleRhos)], region: &str) -> &'a RuleRhos {
    &p.iter().find(|(r, _)| r == region).expect("region checked").1
}

pub struct SpeciesComparison {
    pub rankings: Vec<RankingComparison>,
    pub human: Vec<(String, RuleRhos)>,
    pub macaque: Vec<(String, RuleRhos)>,
    pub regions: Vec<String>,
}

pub fn compare_species(rsa: &[RsaResult]) -> Result<SpeciesComparison> {
    let primary = primary_sets(rsa);
    let human = profiles(&primary, Species::Human)?;
    let macaque = profiles(&primary, Species::Macaque)?;
    let regions = common(&human, &macaque);
    if regions.is_empty() {
        return Err(CliError::Data("no region has rule results for both species".into()));
    }
    let rankings = regions
        .iter()
        .map(|r| Ok(ranking_comparison(find(&human, r), find(&macaque, r), r)?.with_sides("human", "macaque")))
        .collect::<Result<_>>()?;
    Ok(SpeciesComparison { rankings, human, macaque, regions })
}

fn ranking_row(c: &RankingComparison, alpha: f64) -> Vec<Cell> {
    vec![
        c.region.clone().into(),
        c.labels.len().into(),
        c.tau.into(),
        c.p_one_sided.into(),
        c.p_two_sided.into(),
        (c.p_two_sided < alpha).into(),
    ]
}

fn alpha_arg(alpha: Option<f64>) -> Result<f64> {
    let a = alpha.unwrap_or(DEFAULT_ALPHA);
    if !(a > 0.0 && a < 1.0) {
        return Err(CliError::Config(format!("--alpha must lie in (0, 1), got {a}")));
    }
    Ok(a)
}

pub fn compare_tables(rsa: &[RsaResult], focus: &str, alpha: f64) -> Result<Vec<Table>> {
    let cmp = compare_species(rsa)?;
    let mut ranking =
        Table::new("ranking", &["region", "n_rules", "tau", "p_one_sided", "p_two_sided", "significant"]);
    for c in &cmp.rankings {
        ranking.push(ranking_row(c, alpha));
    }

    let mut spread = Table::new("invariance", &["species", "region", "delta_rho", "max_rule", "min_rule"]);
    for (species, p) in [(Species::Human, &cmp.human), (Species::Macaque, &cmp.macaque)] {
        let Some((region, rhos)) = p.iter().find(|(r, _)| r.eq_ignore_ascii_case(focus)) else { continue };
        let by = |pick: fn(f64, f64) -> bool| {
            rhos.0.iter().fold(None::<(Rule, f64)>, |best, (&k, &v)| match best {
                Some((_, b)) if !pick(v, b) => best,
                _ => Some((k, v)),
            })
        };
        spread.push(vec![
            species.to_string().into(),
            region.clone().into(),
            v1_invariance(rhos)?.into(),
            by(|v, b| v > b).map(|(k, _)| k.to_string()).into(),
            by(|v, b| v < b).map(|(k, _)| k.to_string()).into(),
        ]);
    }

    let human: Vec<_> = cmp.human.iter().filter(|(r, _)| cmp.regions.contains(r)).cloned().collect();
    let macaque: Vec<_> = cmp.macaque.iter().filter(|(r, _)| cmp.regions.contains(r)).cloned().collect();
    let mut inter = Table::new("interaction", &["region", "rule", "delta_human", "delta_macaque", "interaction"]);
    for c in interaction_effects(&human, &macaque)? {
        if c.rule == Rule::Random {
            continue;
        }
        inter.push(vec![
            c.region.into(),
            c.rule.to_string().into(),
            c.delta_human.into(),
            c.delta_macaque.into(),
            c.interaction.into(),
        ]);
    }
    Ok(vec![ranking, spread, inter])
}

pub fn compare(a: &CompareArgs) -> Result<()> {
    let data = load(&a.data)?;
    let alpha = alpha_arg(a.alpha)?;
    let tables = compare_tables(&data.rsa, a.region.as_deref().unwrap_or("V1"), alpha)?;
    emit(&tables, a.format.unwrap_or_default(), a.out.as_deref())
}

pub struct ControlComparison {
    pub species: Species,
    pub other_set: String,
    pub result: RankingComparison,
}

/// Every (species, region) that has the reference set and at least one
/// other set, compared set against set.
pub fn control_comparisons(rsa: &[RsaResult], reference: &str, species: Option<Species>) -> Result<Vec<ControlComparison>> {
    let mut places: Vec<(Species, String)> = Vec::new();
    for r in rsa.iter().filter(|r| species.is_none_or(|s| s == r.species)) {
        if !places.iter().any(|(s, reg)| *s == r.species && *reg == r.region) {
            places.push((r.species, r.region.clone()));
        }
    }
    let mut out = Vec::new();
    for (sp, region) in places {
        let here: Vec<&RsaResult> = rsa.iter().filter(|r| r.species == sp && r.region == region).collect();
        let mut sets: Vec<&str> = Vec::new();
        for r in &here {
            if !sets.contains(&r.stimulus_set.as_str()) {
                sets.push(&r.stimulus_set);
            }
        }
        if !sets.contains(&reference) {
            continue;
        }
        let profile = |set: &str| -> Result<RuleRhos> {
            let recs = here.iter().copied().filter(|r| r.stimulus_set == set);
            Ok(rule_profiles(recs)?.pop().map(|(_, p)| p).unwrap_or_default())
        };
        let base = profile(reference)?;
        for other in sets.into_iter().filter(|s| *s != reference) {
            let o = profile(other)?;
            let result = stimulus_control(&base, &o, &region, (reference, other))?;
            out.push(ControlComparison { species: sp, other_set: other.into(), result });
        }
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("no region has results on {reference:?} and on another stimulus set")));
    }
    Ok(out)
}

pub fn stimcontrol(a: &StimcontrolArgs) -> Result<()> {
    let data = load(&a.data)?;
    let alpha = alpha_arg(a.alpha)?;
    let species = a.species.as_deref().map(str::parse::<Species>).transpose().map_err(CliError::Config)?;
    let reference = a.reference.as_deref().unwrap_or(DEFAULT_REFERENCE);
    let mut t = Table::new(
        "stimulus_control",
        &["species", "region", "reference", "other", "n_rules", "tau", "p_one_sided", "p_two_sided", "significant"],
    );
    for c in control_comparisons(&data.rsa, reference, species)? {
        let r = &c.result;
        t.push(vec![
            c.species.to_string().into(),
            r.region.clone().into(),
            reference.into(),
            c.other_set.clone().into(),
            r.labels.len().into(),
            r.tau.into(),
            r.p_one_sided.into(),
            r.p_two_sided.into(),
            (r.p_two_sided < alpha).into(),
        ]);
    }
    emit(&[t], a.format.unwrap_or(Format::Csv), a.out.as_deref())
}
