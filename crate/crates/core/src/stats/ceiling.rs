use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_std, spearman, spearman_brown, StatsError};
use crate::error::Result;
use crate::neuro::{average_repetitions, NeuralDataset};
use crate::rdm::{compute_rdm_with, upper_triangle, DistanceMetric};
use crate::rng::{self, Purpose};

/// Split-half reliability of a neural RDM, Spearman-Brown corrected per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCeiling {
    pub mean_corrected: f64,
    pub std_corrected: f64,
    /// Mean split-half rho before correction.
    pub mean_raw: f64,
    pub n_splits: usize,
    /// Splits dropped because one half produced a degenerate RDM.
    pub skipped_splits: Vec<usize>,
    pub seed: u64,
}

/// Neuron split-half noise ceiling.
///
/// Per split the neurons are shuffled and halved (an odd leftover neuron joins
/// a randomly chosen half), each half's repetition-averaged responses give an
/// RDM, the two upper triangles are Spearman-correlated, and the correlation
/// is Spearman-Brown corrected. The result averages the corrected values.
pub fn split_half_ceiling(
    data: &NeuralDataset,
    n_splits: usize,
    seed: u64,
    metric: DistanceMetric,
) -> Result<NoiseCeiling> {
    if data.n_neurons() < 4 {
        return Err(StatsError::TooShort { len: data.n_neurons(), min: 4 }.into());
    }
    if data.n_stimuli() < 4 {
        return Err(StatsError::TooShort { len: data.n_stimuli(), min: 4 }.into());
    }
    if n_splits == 0 {
        return Err(StatsError::InvalidArgument("n_splits must be >= 1".into()).into());
    }
    let averaged = average_repetitions(data)?;
    let n = data.n_neurons();

    let per_split: Vec<Option<(f64, f64)>> = (0..n_splits)
        .into_par_iter()
        .map(|split| {
            let mut rng = rng::stream(seed, Purpose::SplitHalf, split as u64);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut cut = n / 2;
            if n % 2 == 1 && rng.random_bool(0.5) {
                cut += 1;
            }
            let (a, b) = order.split_at(cut);
            let rdm_a = compute_rdm_with(&averaged.select_features(a).ok()?, metric).ok()?;
            let rdm_b = compute_rdm_with(&averaged.select_features(b).ok()?, metric).ok()?;
            let r = spearman(&upper_triangle(&rdm_a), &upper_triangle(&rdm_b)).ok()?;
            spearman_brown(r).ok().map(|c| (r, c))
        })
        .collect();

    let skipped: Vec<usize> = per_split
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.is_none().then_some(i))
        .collect();
    for &i in &skipped {
        log::warn!("split {i}: degenerate half RDM, split skipped");
    }
    let (raw, corrected): (Vec<f64>, Vec<f64>) = per_split.into_iter().flatten().unzip();
    if corrected.is_empty() {
        return Err(StatsError::Degenerate("every split produced a degenerate RDM".into()).into());
    }
    let (mean_corrected, std_corrected) = mean_std(&corrected);
    Ok(NoiseCeiling {
        mean_corrected,
        std_corrected,
        mean_raw: mean_std(&raw).0,
        n_splits,
        skipped_splits: skipped,
        seed,
    })
}
