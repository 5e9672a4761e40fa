//! Six figure tables (CSV) with SVG renderings, all derived from results
//! files alone.

use std::path::Path;

use crossrsa_core::results::CeilingRecord;
use crossrsa_core::{aggregate_seeds, Rule, RsaResult, Species};

use crate::analysis::{self, compare_species, control_comparisons, primary_sets};
use crate::args::*;
use crate::error::{CliError, Result};
use crate::svg::{self, colour, diverging, legend, nice_range, Frame, Svg};
use crate::table::{fmt_num, write_file, Cell, Table};

/// Rules in their canonical order, then any other condition as first seen.
fn conditions(rsa: &[RsaResult]) -> Vec<String> {
    let mut out: Vec<String> =
        Rule::ALL.iter().map(Rule::to_string).filter(|c| rsa.iter().any(|r| r.condition == *c)).collect();
    for r in rsa {
        if !out.contains(&r.condition) {
            out.push(r.condition.clone());
        }
    }
    out
}

fn species_present(rsa: &[RsaResult]) -> Vec<Species> {
    let mut s: Vec<Species> = rsa.iter().map(|r| r.species).collect();
    s.sort();
    s.dedup();
    s
}

fn regions_of(rsa: &[RsaResult], species: Species) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rsa.iter().filter(|r| r.species == species) {
        if !out.contains(&r.region) {
            out.push(r.region.clone());
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Summary {
    species: Species,
    region: String,
    condition: String,
    mean: f64,
    std: f64,
    n_seeds: usize,
    excluded: Vec<u64>,
    ci: Option<(f64, f64)>,
    ceiling: Option<(f64, f64)>,
}

fn summarise(rsa: &[RsaResult], ceilings: &[CeilingRecord]) -> Result<Vec<Summary>> {
    let conds = conditions(rsa);
    let mut out = Vec::new();
    for species in species_present(rsa) {
        for region in regions_of(rsa, species) {
            let here: Vec<&RsaResult> = rsa.iter().filter(|r| r.species == species && r.region == region).collect();
            let set = &here[0].stimulus_set;
            let ceiling = ceilings
                .iter()
                .filter(|c| c.species == species && c.region == region)
                .max_by_key(|c| c.stimulus_set == *set)
                .map(|c| (c.ceiling.mean_corrected, c.ceiling.std_corrected));
            for cond in &conds {
                let recs: Vec<RsaResult> = here.iter().filter(|r| r.condition == *cond).map(|r| (*r).clone()).collect();
                if recs.is_empty() {
                    continue;
                }
                let agg = aggregate_seeds(&recs)?;
                let kept: Vec<&RsaResult> = recs.iter().filter(|r| r.has_fc1 || !r.is_fc_layer()).collect();
                let cis: Vec<_> = kept.iter().filter_map(|r| r.ci.as_ref()).collect();
                // several seeds: average the per-seed bounds
                let ci = (!cis.is_empty() && cis.len() == kept.len()).then(|| {
                    let n = cis.len() as f64;
                    (cis.iter().map(|c| c.lower).sum::<f64>() / n, cis.iter().map(|c| c.upper).sum::<f64>() / n)
                });
                out.push(Summary {
                    species,
                    region: region.clone(),
                    condition: cond.clone(),
                    mean: agg.mean_rho,
                    std: agg.std_rho,
                    n_seeds: kept.len(),
                    excluded: agg.seeds_excluded,
                    ci,
                    ceiling,
                });
            }
        }
    }
    Ok(out)
}

struct Figure {
    table: Table,
    svg: String,
}

fn fig1(summary: &[Summary], conds: &[String]) -> Figure {
    let mut t = Table::new(
        "fig1_profiles",
        &["species", "region", "condition", "n_seeds", "rho", "ci_lower", "ci_upper", "ceiling", "ceiling_std"],
    );
    for s in summary {
        t.push(vec![
            s.species.to_string().into(),
            s.region.clone().into(),
            s.condition.clone().into(),
            s.n_seeds.into(),
            s.mean.into(),
            s.ci.map(|c| c.0).into(),
            s.ci.map(|c| c.1).into(),
            s.ceiling.map(|c| c.0).into(),
            s.ceiling.map(|c| c.1).into(),
        ]);
    }

    let species: Vec<Species> = {
        let mut v: Vec<Species> = summary.iter().map(|s| s.species).collect();
        v.dedup();
        v
    };
    let (pw, ph) = (380.0, 280.0);
    let mut svg = Svg::new(70.0 + pw * species.len() as f64 + 90.0, ph + 100.0);
    svg.raw(svg::HATCH);
    let (ymin, ymax) = nice_range(summary.iter().flat_map(|s| {
        [Some(s.mean), s.ci.map(|c| c.0), s.ci.map(|c| c.1), s.ceiling.map(|c| c.0 + c.1)].into_iter().flatten()
    }));
    for (pi, sp) in species.iter().enumerate() {
        let rows: Vec<&Summary> = summary.iter().filter(|s| s.species == *sp).collect();
        let mut regions: Vec<String> = Vec::new();
        for r in &rows {
            if !regions.contains(&r.region) {
                regions.push(r.region.clone());
            }
        }
        let f = Frame { x0: 70.0 + pi as f64 * pw, y0: 40.0, w: pw - 60.0, h: ph - 40.0, ymin, ymax, xmin: 0.0, xmax: 1.0 };
        svg.text(f.x0 + f.w / 2.0, 25.0, 13.0, "middle", &sp.to_string());
        let n = regions.len();
        let slot = f.w / n as f64;
        for (ri, region) in regions.iter().enumerate() {
            if let Some((m, sd)) = rows.iter().find(|r| r.region == *region).and_then(|r| r.ceiling) {
                let (top, bot) = (f.sy(m + sd), f.sy(m - sd));
                svg.raw(&format!(
                    r#"<rect x="{:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="url(#hatch)" fill-opacity="0.7"/>"#,
                    f.slot(ri, n) - 0.4 * slot,
                    0.8 * slot,
                    (bot - top).max(1.0)
                ));
            }
        }
        for (ci, cond) in conds.iter().enumerate() {
            let pts: Vec<Option<&Summary>> =
                regions.iter().map(|r| rows.iter().copied().find(|s| s.region == *r && s.condition == *cond)).collect();
            // contiguous runs only; a missing region breaks the line
            let mut run: Vec<(usize, &Summary)> = Vec::new();
            let flush = |run: &mut Vec<(usize, &Summary)>, svg: &mut Svg| {
                if run.iter().all(|(_, s)| s.ci.is_some()) && run.len() > 1 {
                    let mut band: Vec<(f64, f64)> = run.iter().map(|(i, s)| (f.slot(*i, n), f.sy(s.ci.unwrap().1))).collect();
                    band.extend(run.iter().rev().map(|(i, s)| (f.slot(*i, n), f.sy(s.ci.unwrap().0))));
                    svg.polygon(&band, colour(ci), 0.15);
                }
                let line: Vec<(f64, f64)> = run.iter().map(|(i, s)| (f.slot(*i, n), f.sy(s.mean))).collect();
                if line.len() > 1 {
                    svg.polyline(&line, colour(ci));
                }
                for (x, y) in line {
                    svg.circle(x, y, 3.0, colour(ci));
                }
                run.clear();
            };
            for (i, p) in pts.iter().enumerate() {
                match p {
                    Some(s) => run.push((i, s)),
                    None => flush(&mut run, &mut svg),
                }
            }
            flush(&mut run, &mut svg);
        }
        f.y_axis(&mut svg, "Spearman rho");
        f.categories(&mut svg, &regions);
    }
    legend(&mut svg, 70.0 + pw * species.len() as f64 - 40.0, 50.0, conds);
    Figure { table: t, svg: svg.finish() }
}

struct ScatterPanel {
    title: String,
    points: Vec<(usize, String, f64, f64)>,
}

fn scatter(panels: &[ScatterPanel], xlabel: &str, ylabel: &str, legend_labels: &[String]) -> String {
    let cols = panels.len().clamp(1, 4);
    let rows = panels.len().div_ceil(cols).max(1);
    let size = 220.0;
    let mut svg = Svg::new(60.0 + cols as f64 * (size + 60.0) + 90.0, 30.0 + rows as f64 * (size + 80.0));
    for (i, p) in panels.iter().enumerate() {
        let (lo, hi) = nice_range(p.points.iter().flat_map(|q| [q.2, q.3]));
        let f = Frame {
            x0: 70.0 + (i % cols) as f64 * (size + 60.0),
            y0: 40.0 + (i / cols) as f64 * (size + 80.0),
            w: size,
            h: size,
            ymin: lo,
            ymax: hi,
            xmin: lo,
            xmax: hi,
        };
        svg.text(f.x0 + size / 2.0, f.y0 - 10.0, 12.0, "middle", &p.title);
        svg.line((f.sx(lo), f.sy(lo)), (f.sx(hi), f.sy(hi)), "#888888", 1.0, true);
        for (c, _, x, y) in &p.points {
            svg.circle(f.sx(*x), f.sy(*y), 4.0, colour(*c));
        }
        f.x_axis(&mut svg, xlabel);
        f.y_axis(&mut svg, ylabel);
    }
    legend(&mut svg, 60.0 + cols as f64 * (size + 60.0), 50.0, legend_labels);
    svg.finish()
}

/// `groups[g].1[s]` is bar `s` of group `g`: `(value, error bar)`.
fn bars(title: &str, groups: &[(String, Vec<Option<(f64, Option<f64>)>>)], labels: &[String], ylabel: &str) -> String {
    let w = (groups.len() * (labels.len() * 14 + 30)).max(300) as f64;
    let mut svg = Svg::new(w + 180.0, 340.0);
    let (ymin, ymax) = nice_range(groups.iter().flat_map(|(_, v)| {
        v.iter().flatten().map(|(m, e)| m + e.unwrap_or(0.0)).chain(v.iter().flatten().map(|(m, e)| m - e.unwrap_or(0.0)))
    }));
    let f = Frame { x0: 70.0, y0: 40.0, w, h: 240.0, ymin, ymax, xmin: 0.0, xmax: 1.0 };
    svg.text(f.x0 + w / 2.0, 22.0, 13.0, "middle", title);
    let names: Vec<String> = groups.iter().map(|(g, _)| g.clone()).collect();
    let n = groups.len();
    let bw = (w / n as f64 - 20.0) / labels.len().max(1) as f64;
    for (gi, (_, vals)) in groups.iter().enumerate() {
        let left = f.slot(gi, n) - bw * labels.len() as f64 / 2.0;
        for (si, v) in vals.iter().enumerate() {
            let Some((m, e)) = v else { continue };
            let x = left + si as f64 * bw;
            let (a, b) = (f.sy(*m), f.sy(0.0));
            svg.rect(x + 1.0, a.min(b), bw - 2.0, (a - b).abs(), colour(si));
            if let Some(e) = e.filter(|e| *e > 0.0) {
                let cx = x + bw / 2.0;
                svg.line((cx, f.sy(m - e)), (cx, f.sy(m + e)), "black", 1.0, false);
            }
        }
    }
    f.y_axis(&mut svg, ylabel);
    f.categories(&mut svg, &names);
    legend(&mut svg, f.x0 + w + 20.0, 50.0, labels);
    svg.finish()
}

fn fig2(rsa: &[RsaResult]) -> Result<Figure> {
    let cmp = compare_species(rsa)?;
    let mut t = Table::new("fig2_scatter", &["region", "condition", "rho_human", "rho_macaque", "tau", "p_two_sided"]);
    let labels: Vec<String> = Rule::ALL.iter().map(Rule::to_string).collect();
    let mut panels = Vec::new();
    for c in &cmp.rankings {
        let mut points = Vec::new();
        for (i, rule) in c.labels.iter().enumerate() {
            let (h, m) = (c.rho_a.values()[i], c.rho_b.values()[i]);
            t.push(vec![
                c.region.clone().into(),
                rule.to_string().into(),
                h.into(),
                m.into(),
                c.tau.into(),
                c.p_two_sided.into(),
            ]);
            let idx = Rule::ALL.iter().position(|r| r == rule).expect("known rule");
            points.push((idx, rule.to_string(), h, m));
        }
        let title = format!("{}: tau = {}, p = {}", c.region, fmt2(c.tau), fmt2(c.p_two_sided));
        panels.push(ScatterPanel { title, points });
    }
    Ok(Figure { table: t, svg: scatter(&panels, "human rho", "macaque rho", &labels) })
}

fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" { "0.00".into() } else { s }
}

fn fig3(summary: &[Summary], region: &str) -> Figure {
    let mut t = Table::new("fig3_region", &["species", "region", "condition", "rho", "delta_rho"]);
    let rows: Vec<&Summary> = summary.iter().filter(|s| s.region.eq_ignore_ascii_case(region)).collect();
    let mut species: Vec<Species> = rows.iter().map(|s| s.species).collect();
    species.dedup();
    let rules: Vec<String> = Rule::ALL.iter().map(Rule::to_string).collect();
    let mut groups = Vec::new();
    let mut title = format!("{region} per learning rule");
    for sp in &species {
        let mine: Vec<&&Summary> = rows.iter().filter(|s| s.species == *sp && rules.contains(&s.condition)).collect();
        let vals: Vec<f64> = mine.iter().map(|s| s.mean).collect();
        let spread = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max) - vals.iter().copied().fold(f64::INFINITY, f64::min);
        for s in &mine {
            t.push(vec![
                sp.to_string().into(),
                s.region.clone().into(),
                s.condition.clone().into(),
                s.mean.into(),
                spread.into(),
            ]);
        }
        if !mine.is_empty() {
            title.push_str(&format!("; {sp} delta = {}", fmt_num((spread * 1000.0).round() / 1000.0)));
        }
        let bars: Vec<Option<(f64, Option<f64>)>> =
            rules.iter().map(|r| mine.iter().find(|s| s.condition == *r).map(|s| (s.mean, None))).collect();
        groups.push((sp.to_string(), bars));
    }
    Figure { table: t, svg: bars(&title, &groups, &rules, "Spearman rho") }
}

fn fig4(rsa: &[RsaResult]) -> Result<Figure> {
    let tables = analysis::compare_tables(rsa, "V1", DEFAULT_ALPHA)?;
    let inter = tables.into_iter().find(|t| t.name == "interaction").expect("interaction table");
    let mut t = Table::new("fig4_interaction", &["region", "condition", "delta_human", "delta_macaque", "interaction"]);
    t.rows = inter.rows;

    let mut regions: Vec<String> = Vec::new();
    let mut rules: Vec<String> = Vec::new();
    let mut cells = Vec::new();
    for row in &t.rows {
        let (Cell::Str(reg), Cell::Str(rule), Cell::Num(v)) = (&row[0], &row[1], &row[4]) else { unreachable!() };
        if !regions.contains(reg) {
            regions.push(reg.clone());
        }
        if !rules.contains(rule) {
            rules.push(rule.clone());
        }
        cells.push((reg.clone(), rule.clone(), *v));
    }
    let max_abs = cells.iter().fold(0.0f64, |a, c| a.max(c.2.abs()));
    let (cw, ch) = (80.0, 36.0);
    let mut svg = Svg::new(90.0 + cw * rules.len() as f64 + 20.0, 70.0 + ch * regions.len() as f64 + 20.0);
    svg.text(20.0, 22.0, 13.0, "start", "interaction: (rule - Random) human minus macaque");
    for (j, rule) in rules.iter().enumerate() {
        svg.text(90.0 + (j as f64 + 0.5) * cw, 58.0, 11.0, "middle", rule);
    }
    for (i, reg) in regions.iter().enumerate() {
        let y = 66.0 + i as f64 * ch;
        svg.text(80.0, y + ch / 2.0 + 4.0, 11.0, "end", reg);
        for (j, rule) in rules.iter().enumerate() {
            let Some(c) = cells.iter().find(|c| c.0 == *reg && c.1 == *rule) else { continue };
            let x = 90.0 + j as f64 * cw;
            svg.rect(x, y, cw - 2.0, ch - 2.0, &diverging(c.2, max_abs));
            svg.text(x + cw / 2.0, y + ch / 2.0 + 4.0, 11.0, "middle", &format!("{:+.3}", c.2));
        }
    }
    Ok(Figure { table: t, svg: svg.finish() })
}

fn fig5(summary: &[Summary], conds: &[String]) -> Figure {
    let mut t = Table::new(
        "fig5_architecture",
        &["species", "region", "condition", "mean_rho", "std_rho", "n_seeds", "excluded_seeds"],
    );
    for s in summary {
        let excluded: Vec<String> = s.excluded.iter().map(u64::to_string).collect();
        t.push(vec![
            s.species.to_string().into(),
            s.region.clone().into(),
            s.condition.clone().into(),
            s.mean.into(),
            s.std.into(),
            s.n_seeds.into(),
            excluded.join(";").into(),
        ]);
    }
    // one bar chart per species, stacked vertically
    let mut species: Vec<Species> = summary.iter().map(|s| s.species).collect();
    species.dedup();
    let mut parts = Vec::new();
    for sp in species {
        let mut regions: Vec<String> = Vec::new();
        for s in summary.iter().filter(|s| s.species == sp) {
            if !regions.contains(&s.region) {
                regions.push(s.region.clone());
            }
        }
        let groups: Vec<_> = regions
            .iter()
            .map(|r| {
                let v = conds
                    .iter()
                    .map(|c| {
                        summary
                            .iter()
                            .find(|s| s.species == sp && s.region == *r && s.condition == *c)
                            .map(|s| (s.mean, (s.n_seeds > 1).then_some(s.std)))
                    })
                    .collect();
                (r.clone(), v)
            })
            .collect();
        parts.push(bars(&format!("{sp}: mean +/- std across seeds"), &groups, conds, "Spearman rho"));
    }
    Figure { table: t, svg: stack(&parts) }
}

/// Places complete SVG documents one under another.
fn stack(parts: &[String]) -> String {
    let dims: Vec<(f64, f64)> = parts
        .iter()
        .map(|p| {
            let num = |key: &str| -> f64 {
                let i = p.find(key).expect("dimension") + key.len();
                p[i..].split('"').next().and_then(|v| v.parse().ok()).expect("numeric dimension")
            };
            (num("width=\""), num("height=\""))
        })
        .collect();
    let w = dims.iter().fold(0.0f64, |a, d| a.max(d.0));
    let h: f64 = dims.iter().map(|d| d.1).sum();
    let mut svg = Svg::new(w.max(1.0), h.max(1.0));
    let mut y = 0.0;
    for (p, (_, ph)) in parts.iter().zip(&dims) {
        svg.raw(&format!(r#"<g transform="translate(0 {y})">"#));
        svg.raw(p.trim_end());
        svg.raw("</g>");
        y += ph;
    }
    svg.finish()
}

fn fig6(rsa: &[RsaResult], reference: &str) -> Result<Figure> {
    let comps = control_comparisons(rsa, reference, None)?;
    let mut t = Table::new(
        "fig6_stimulus",
        &["species", "region", "condition", "rho_reference", "rho_other", "other_set", "tau", "p_two_sided"],
    );
    let labels: Vec<String> = Rule::ALL.iter().map(Rule::to_string).collect();
    let mut panels = Vec::new();
    for c in &comps {
        let r = &c.result;
        let mut points = Vec::new();
        for (i, rule) in r.labels.iter().enumerate() {
            let (x, y) = (r.rho_a.values()[i], r.rho_b.values()[i]);
            t.push(vec![
                c.species.to_string().into(),
                r.region.clone().into(),
                rule.to_string().into(),
                x.into(),
                y.into(),
                c.other_set.clone().into(),
                r.tau.into(),
                r.p_two_sided.into(),
            ]);
            let idx = Rule::ALL.iter().position(|q| q == rule).expect("known rule");
            points.push((idx, rule.to_string(), x, y));
        }
        panels.push(ScatterPanel {
            title: format!("{} {}: tau = {}, p = {}", c.species, r.region, fmt2(r.tau), fmt2(r.p_two_sided)),
            points,
        });
    }
    Ok(Figure { table: t, svg: scatter(&panels, &format!("rho on {reference}"), "rho on species set", &labels) })
}

fn save(dir: &Path, fig: Figure) -> Result<()> {
    write_file(&dir.join(format!("{}.csv", fig.table.name)), &fig.table.to_csv())?;
    write_file(&dir.join(format!("{}.svg", fig.table.name)), &fig.svg)
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let out = a.out.as_ref().ok_or_else(|| CliError::Config("--out is required".into()))?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let data = analysis::load(&a.data)?;
    let primary = primary_sets(&data.rsa);
    let conds = conditions(&primary);
    let summary = summarise(&primary, &data.ceilings)?;
    save(out, fig1(&summary, &conds))?;
    match fig2(&data.rsa) {
        Ok(f) => save(out, f)?,
        Err(e) => log::warn!("fig2 skipped: {e}"),
    }
    save(out, fig3(&summary, a.region.as_deref().unwrap_or("V1")))?;
    match fig4(&data.rsa) {
        Ok(f) => save(out, f)?,
        Err(e) => log::warn!("fig4 skipped: {e}"),
    }
    save(out, fig5(&summary, &conds))?;
    let control = if a.control.is_empty() { data.rsa } else { analysis::load(&a.control)?.rsa };
    match fig6(&control, a.reference.as_deref().unwrap_or(DEFAULT_REFERENCE)) {
        Ok(f) => save(out, f)?,
        Err(e) => log::warn!("fig6 skipped: {e}"),
    }
    Ok(())
}
