//! Commands that produce artifacts: checkpoints, features, results, data.

use std::path::{Path, PathBuf};

use crossrsa_core::features::{save_features, DEFAULT_TARGET};
use crossrsa_core::neuro::NeuroFormat;
use crossrsa_core::nn::{init_network, load_checkpoint, save_checkpoint, FaParams, TrainingLog};
use crossrsa_core::results::{read_results, write_results, CeilingRecord};
use crossrsa_core::{
    average_repetitions, bootstrap_rsa, compute_rdm, extract_features, generate_synthetic, import_external_features,
    load_neural_dataset, rsa_score, save_neural_dataset, split_half_ceiling, DistanceMetric, LayerName,
    LayerRegionMap, RecordSource, ResultRecord, Rule, RsaResult, StimulusSet, SyntheticSpec, TrainingConfig,
};

use crate::args::*;
use crate::error::{CliError, Result};

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| CliError::Config(format!("--{flag} is required")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "unknown".into(), |s| s.to_string_lossy().into_owned())
}

pub fn rule_arg(s: &str) -> Result<Rule> {
    s.parse().map_err(CliError::Config)
}

pub fn ckpt_name(rule: Rule, seed: u64) -> String {
    format!("{}-seed{seed}", rule.to_string().to_ascii_lowercase())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let rule = rule_arg(required(&a.rule, "rule")?)?;
    let seeds = match (a.seed, &a.seeds) {
        (Some(s), _) => vec![s],
        (None, Some(list)) => parse_seeds(list).map_err(CliError::Config)?,
        (None, None) => parse_seeds(DEFAULT_SEEDS).expect("default parses"),
    };
    let out = required(&a.out, "out")?;
    create_dir(out)?;
    let epochs = a.epochs.unwrap_or(DEFAULT_EPOCHS);
    for seed in seeds {
        let name = ckpt_name(rule, seed);
        let (ckpt, log) = if rule == Rule::Random {
            (init_network(seed), TrainingLog::default())
        } else {
            let defaults = TrainingConfig::default();
            let config = TrainingConfig {
                rule,
                epochs,
                learning_rate: a.lr.unwrap_or(defaults.learning_rate),
                batch_size: a.batch_size.unwrap_or(defaults.batch_size),
                seed,
                data: Some(required(&a.data, "data")?.clone()),
                limit: a.limit,
                fa: FaParams { feedback_seed: a.feedback_seed },
                ..defaults
            };
            log::info!("training {name} for {epochs} epochs");
            crossrsa_core::train(&config)?
        };
        save_checkpoint(&ckpt, out.join(format!("{name}.ckpt")))?;
        let log_path = out.join(format!("{name}.log.json"));
        let text = serde_json::to_string_pretty(&log).expect("log serialises");
        std::fs::write(&log_path, text + "\n").map_err(|e| CliError::io(&log_path, e))?;
        if let Some(last) = log.epochs.last() {
            log::info!("{name}: loss {:.4} accuracy {:.3}", last.loss, last.accuracy);
        }
    }
    Ok(())
}

const DEFAULT_LAYERS: [&str; 4] = ["Conv1", "Conv2", "Conv3", "FC1"];

pub fn extract(a: &ExtractArgs) -> Result<()> {
    if a.ckpt.is_empty() {
        return Err(CliError::Config("--ckpt is required".into()));
    }
    let set = StimulusSet::load(required(&a.data, "data")?)?;
    let out = required(&a.out, "out")?;
    create_dir(out)?;
    let names: Vec<String> =
        if a.layer.is_empty() { DEFAULT_LAYERS.map(String::from).to_vec() } else { a.layer.clone() };
    let layers: Vec<LayerName> = names
        .iter()
        .map(|l| l.parse().map_err(|_| CliError::Config(format!("unknown layer {l:?}"))))
        .collect::<Result<_>>()?;
    let target = a.target.unwrap_or(DEFAULT_TARGET);
    for path in &a.ckpt {
        let ckpt = load_checkpoint(path)?;
        for &layer in &layers {
            if layer.is_fc() && !ckpt.has_fc1 {
                log::warn!("{}: no FC weights, skipping {layer}", path.display());
                continue;
            }
            let fm = extract_features(&ckpt, &set, layer, target)?;
            let file = out.join(format!("{}-{layer}.feat", ckpt_name(ckpt.rule, ckpt.seed)));
            save_features(&fm, &file)?;
            log::info!("wrote {} ({} x {})", file.display(), fm.n_stimuli(), fm.n_features());
        }
    }
    Ok(())
}

fn store(records: Vec<ResultRecord>, out: &Path, append: bool) -> Result<()> {
    let mut all = if append && out.exists() { read_results(out)? } else { Vec::new() };
    all.extend(records);
    write_results(&all, out)?;
    Ok(())
}

pub fn score(a: &ScoreArgs) -> Result<()> {
    let data_path = required(&a.data, "data")?;
    if a.features.is_empty() {
        return Err(CliError::Config("--features is required".into()));
    }
    let out = required(&a.out, "out")?;
    let data = load_neural_dataset(data_path)?;
    let region = a.region.clone().unwrap_or_else(|| data.region().to_string());
    let stimulus_set = a.stimulus_set.clone().unwrap_or_else(|| file_stem(data_path));
    let map = match a.map.as_deref() {
        None => None,
        Some("default") => Some(LayerRegionMap::for_species(data.species())),
        Some(s) => Some(LayerRegionMap::parse(s).map_err(|e| CliError::Config(e.to_string()))?),
    };
    let n_boot = a.n_boot.unwrap_or(DEFAULT_N_BOOT);
    let alpha = a.alpha.unwrap_or(DEFAULT_ALPHA);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Config(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    let seed = a.seed.unwrap_or(0);
    let neural = compute_rdm(&average_repetitions(&data).map_err(crossrsa_core::Error::from)?)
        .map_err(crossrsa_core::Error::from)?;

    let mut records = Vec::new();
    for path in &a.features {
        let fm = import_external_features(path)?;
        let p = fm.provenance().clone();
        if let Some(map) = &map {
            if !map.regions_for(&p.layer).iter().any(|r| r.eq_ignore_ascii_case(&region)) {
                log::info!("{}: {} is not mapped to {region}, skipped", path.display(), p.layer);
                continue;
            }
        }
        let model = compute_rdm(&fm).map_err(crossrsa_core::Error::from)?;
        let rho = rsa_score(&model, &neural)?;
        let ci = (n_boot > 0).then(|| bootstrap_rsa(&model, &neural, n_boot, seed, alpha)).transpose()?;
        log::info!("{} {} {}: rho {rho:.4}", p.condition, p.layer, region);
        records.push(ResultRecord::Rsa(RsaResult {
            rho,
            ci,
            condition: p.condition,
            seed: p.seed,
            layer: p.layer,
            region: region.clone(),
            species: data.species(),
            stimulus_set: stimulus_set.clone(),
            source: RecordSource::Computed,
            has_fc1: true,
        }));
    }
    store(records, out, a.append)
}

pub fn ceiling(a: &CeilingArgs) -> Result<()> {
    let data_path = required(&a.data, "data")?;
    let out = required(&a.out, "out")?;
    let data = load_neural_dataset(data_path)?;
    let n_splits = a.n_splits.unwrap_or(DEFAULT_N_SPLITS);
    let ceiling = split_half_ceiling(&data, n_splits, a.seed.unwrap_or(0), DistanceMetric::Correlation)?;
    if !ceiling.skipped_splits.is_empty() {
        log::warn!("{} of {n_splits} splits skipped as degenerate", ceiling.skipped_splits.len());
    }
    let record = CeilingRecord {
        region: a.region.clone().unwrap_or_else(|| data.region().to_string()),
        species: data.species(),
        stimulus_set: a.stimulus_set.clone().unwrap_or_else(|| file_stem(data_path)),
        ceiling,
    };
    store(vec![ResultRecord::Ceiling(record)], out, a.append)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let src = import_external_features(required(&a.data, "data")?)?;
    let out: &PathBuf = required(&a.out, "out")?;
    let spec = SyntheticSpec {
        generator_layer: src.provenance().layer.clone(),
        snr: a.snr.unwrap_or(1.0),
        n_neurons: a.neurons.unwrap_or(100),
        n_repetitions: a.reps.unwrap_or(10),
        seed: a.seed.unwrap_or(0),
    };
    let data = generate_synthetic(&spec, &src).map_err(crossrsa_core::Error::from)?;
    save_neural_dataset(&data, out, NeuroFormat::from_path(out))?;
    Ok(())
}
