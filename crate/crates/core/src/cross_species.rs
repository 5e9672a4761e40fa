//! Comparisons of per-rule alignment profiles across species and stimulus sets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::nn::Rule;
use crate::results::RsaResult;
use crate::stats::{exact_permutation_test, mean_std, RankVector, Sidedness, StatsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("rule labels differ: {left:?} vs {right:?}")]
    LabelMismatch { left: Vec<Rule>, right: Vec<Rule> },
    #[error("region {region}: no Random baseline on the {side} side")]
    MissingBaseline { region: String, side: String },
    #[error("region {0} is not present on both sides")]
    MissingRegion(String),
    #[error("results disagree on {field}: {a:?} vs {b:?}")]
    Inconsistent { field: &'static str, a: String, b: String },
    #[error("nothing to aggregate: {0}")]
    Empty(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// One rho per learning rule, ordered BP, FA, PC, STDP, Random.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleRhos(pub BTreeMap<Rule, f64>);

impl RuleRhos {
    pub fn new(pairs: impl IntoIterator<Item = (Rule, f64)>) -> Self {
        RuleRhos(pairs.into_iter().collect())
    }

    pub fn get(&self, rule: Rule) -> Option<f64> {
        self.0.get(&rule).copied()
    }

    pub fn rules(&self) -> Vec<Rule> {
        self.0.keys().copied().collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.0.values().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingComparison {
    pub region: String,
    /// What the two vectors come from (species or stimulus-set labels).
    pub sides: (String, String),
    pub labels: Vec<Rule>,
    pub rho_a: RankVector,
    pub rho_b: RankVector,
    pub tau: f64,
    pub p_one_sided: f64,
    pub p_two_sided: f64,
}

fn aligned(a: &RuleRhos, b: &RuleRhos) -> Result<(Vec<Rule>, Vec<f64>, Vec<f64>), AnalysisError> {
    if a.rules() != b.rules() {
        return Err(AnalysisError::LabelMismatch { left: a.rules(), right: b.rules() });
    }
    Ok((a.rules(), a.values(), b.values()))
}

/// Kendall tau between two rule profiles with its exact permutation p-values.
pub fn ranking_comparison(a: &RuleRhos, b: &RuleRhos, region: &str) -> Result<RankingComparison, AnalysisError> {
    compare(a, b, region, ("a".into(), "b".into()))
}

/// [`ranking_comparison`] for the same species under two stimulus sets.
pub fn stimulus_control(
    set_a: &RuleRhos,
    set_b: &RuleRhos,
    region: &str,
    labels: (&str, &str),
) -> Result<RankingComparison, AnalysisError> {
    compare(set_a, set_b, region, (labels.0.into(), labels.1.into()))
}

fn compare(a: &RuleRhos, b: &RuleRhos, region: &str, sides: (String, String)) -> Result<RankingComparison, AnalysisError> {
    let (labels, va, vb) = aligned(a, b)?;
    let rho_a = RankVector::new(va)?;
    let rho_b = RankVector::new(vb)?;
    let test = exact_permutation_test(&rho_a, &rho_b, Sidedness::Two)?;
    Ok(RankingComparison {
        region: region.to_string(),
        sides,
        labels,
        rho_a,
        rho_b,
        tau: test.tau,
        p_one_sided: test.p_one_sided,
        p_two_sided: test.p_two_sided,
    })
}

impl RankingComparison {
    pub fn with_sides(mut self, a: &str, b: &str) -> Self {
        self.sides = (a.into(), b.into());
        self
    }
}

/// Spread of alignment across rules: `max - min`.
pub fn v1_invariance(rhos: &RuleRhos) -> Result<f64, AnalysisError> {
    let v = rhos.values();
    if v.is_empty() {
        return Err(AnalysisError::Empty("no rules given".into()));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionCell {
    pub rule: Rule,
    pub region: String,
    pub delta_human: f64,
    pub delta_macaque: f64,
    pub interaction: f64,
}

/// Per region and rule, `(rho_rule - rho_random)` for each species and the
/// human-minus-macaque difference. Random rows are included and are zero.
/// Cells follow the region order of `human`.
pub fn interaction_effects(
    human: &[(String, RuleRhos)],
    macaque: &[(String, RuleRhos)],
) -> Result<Vec<InteractionCell>, AnalysisError> {
    if human.len() != macaque.len() {
        let missing = human
            .iter()
            .map(|(r, _)| r)
            .chain(macaque.iter().map(|(r, _)| r))
            .find(|r| !human.iter().any(|(h, _)| h == *r) || !macaque.iter().any(|(m, _)| m == *r))
            .cloned()
            .unwrap_or_default();
        return Err(AnalysisError::MissingRegion(missing));
    }
    let mut cells = Vec::new();
    for (region, h) in human {
        let m = &macaque
            .iter()
            .find(|(r, _)| r == region)
            .ok_or_else(|| AnalysisError::MissingRegion(region.clone()))?
            .1;
        aligned(h, m)?;
        let base = |rr: &RuleRhos, side: &str| {
            rr.get(Rule::Random).ok_or_else(|| AnalysisError::MissingBaseline {
                region: region.clone(),
                side: side.into(),
            })
        };
        let (bh, bm) = (base(h, "human")?, base(m, "macaque")?);
        for (&rule, &rh) in &h.0 {
            let delta_human = rh - bh;
            let delta_macaque = m.0[&rule] - bm;
            cells.push(InteractionCell {
                rule,
                region: region.clone(),
                delta_human,
                delta_macaque,
                interaction: delta_human - delta_macaque,
            });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub condition: String,
    pub region: String,
    pub layer: String,
    pub mean_rho: f64,
    /// Population standard deviation (divides by the number of values).
    pub std_rho: f64,
    pub seeds_used: Vec<u64>,
    /// Seeds dropped because their checkpoint had no FC weights.
    pub seeds_excluded: Vec<u64>,
}

/// Mean and population std of rho over seeds sharing condition, region and
/// layer. Results for an FC layer whose checkpoint had no FC weights are
/// excluded automatically.
pub fn aggregate_seeds(results: &[RsaResult]) -> Result<SeedAggregate, AnalysisError> {
    let first = results.first().ok_or_else(|| AnalysisError::Empty("no results".into()))?;
    for r in &results[1..] {
        for (field, a, b) in [
            ("condition", &first.condition, &r.condition),
            ("region", &first.region, &r.region),
            ("layer", &first.layer, &r.layer),
        ] {
            if a != b {
                return Err(AnalysisError::Inconsistent { field, a: a.clone(), b: b.clone() });
            }
        }
    }
    let (kept, dropped): (Vec<&RsaResult>, Vec<&RsaResult>) =
        results.iter().partition(|r| r.has_fc1 || !r.is_fc_layer());
    if kept.is_empty() {
        return Err(AnalysisError::Empty(format!(
            "every {} {} result lacks FC weights",
            first.condition, first.region
        )));
    }
    let rhos: Vec<f64> = kept.iter().map(|r| r.rho).collect();
    let (mean_rho, std_rho) = mean_std(&rhos);
    let mut seeds_used: Vec<u64> = kept.iter().filter_map(|r| r.seed).collect();
    seeds_used.sort_unstable();
    let mut seeds_excluded: Vec<u64> = dropped.iter().filter_map(|r| r.seed).collect();
    seeds_excluded.sort_unstable();
    Ok(SeedAggregate {
        condition: first.condition.clone(),
        region: first.region.clone(),
        layer: first.layer.clone(),
        mean_rho,
        std_rho,
        seeds_used,
        seeds_excluded,
    })
}

/// Groups results into one rule profile per region, regions in order of
/// first appearance. Records whose condition is not a rule label are skipped;
/// several seeds of one (region, rule) are averaged with [`aggregate_seeds`].
pub fn rule_profiles<'a>(
    results: impl IntoIterator<Item = &'a RsaResult>,
) -> Result<Vec<(String, RuleRhos)>, AnalysisError> {
    let mut groups: Vec<(String, BTreeMap<Rule, Vec<RsaResult>>)> = Vec::new();
    for r in results {
        let Some(rule) = r.rule() else { continue };
        let pos = match groups.iter().position(|(region, _)| *region == r.region) {
            Some(p) => p,
            None => {
                groups.push((r.region.clone(), BTreeMap::new()));
                groups.len() - 1
            }
        };
        groups[pos].1.entry(rule).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(region, by_rule)| {
            let mut rhos = RuleRhos::default();
            for (rule, rs) in by_rule {
                let rho = if rs.len() == 1 { rs[0].rho } else { aggregate_seeds(&rs)?.mean_rho };
                rhos.0.insert(rule, rho);
            }
            Ok((region, rhos))
        })
        .collect()
}
