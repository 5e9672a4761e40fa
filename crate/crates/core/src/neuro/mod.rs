//! Neural response datasets.
//!
//! Responses live in a dense `stimuli x neurons x repetitions` array. Missing
//! repetitions are NaN; every (stimulus, neuron) cell needs at least one value.

mod format;
mod synthetic;

pub use format::{load_neural_dataset, save_neural_dataset, NeuroFormat, NEURO_MAGIC};
pub use synthetic::{generate_synthetic, synthesize, SyntheticSpec};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio::FormatError;
use crate::rdm::{FeatureMatrix, Provenance, RdmError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("duplicate response key (stimulus {stimulus:?}, neuron {neuron:?}, repetition {repetition})")]
    DuplicateKey {
        stimulus: String,
        neuron: String,
        repetition: usize,
    },
    #[error("no valid repetition for stimulus {stimulus:?}, neuron {neuron:?}")]
    EmptyCell { stimulus: String, neuron: String },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Rdm(#[from] RdmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Human,
    Macaque,
    Synthetic,
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Species::Human => "human",
            Species::Macaque => "macaque",
            Species::Synthetic => "synthetic",
        })
    }
}

impl FromStr for Species {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "human" => Ok(Species::Human),
            "macaque" => Ok(Species::Macaque),
            "synthetic" => Ok(Species::Synthetic),
            other => Err(format!("unknown species {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralDataset {
    species: Species,
    region: String,
    stimulus_ids: Vec<String>,
    neuron_ids: Vec<String>,
    responses: Array3<f64>,
    repetition_counts: Vec<usize>,
}

fn unique(ids: &[String], what: &str) -> Result<(), DataError> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(DataError::Invalid(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(())
}

impl NeuralDataset {
    /// Validates and wraps a response array (NaN marks a missing repetition).
    pub fn new(
        species: Species,
        region: impl Into<String>,
        stimulus_ids: Vec<String>,
        neuron_ids: Vec<String>,
        responses: Array3<f64>,
    ) -> Result<Self, DataError> {
        let (s, n, r) = responses.dim();
        if s != stimulus_ids.len() || n != neuron_ids.len() {
            return Err(DataError::Invalid(format!(
                "response array is {s}x{n}x{r} but there are {} stimuli and {} neurons",
                stimulus_ids.len(),
                neuron_ids.len()
            )));
        }
        if s == 0 || n == 0 || r == 0 {
            return Err(DataError::Invalid("empty response array".into()));
        }
        unique(&stimulus_ids, "stimulus")?;
        unique(&neuron_ids, "neuron")?;
        let mut repetition_counts = vec![0; s];
        for si in 0..s {
            for ni in 0..n {
                let mut valid = 0;
                for ri in 0..r {
                    let v = responses[[si, ni, ri]];
                    if v.is_infinite() {
                        return Err(DataError::Invalid(format!(
                            "infinite response at stimulus {:?}, neuron {:?}",
                            stimulus_ids[si], neuron_ids[ni]
                        )));
                    }
                    if !v.is_nan() {
                        valid += 1;
                        repetition_counts[si] = repetition_counts[si].max(ri + 1);
                    }
                }
                if valid == 0 {
                    return Err(DataError::EmptyCell {
                        stimulus: stimulus_ids[si].clone(),
                        neuron: neuron_ids[ni].clone(),
                    });
                }
            }
        }
        Ok(NeuralDataset {
            species,
            region: region.into(),
            stimulus_ids,
            neuron_ids,
            responses,
            repetition_counts,
        })
    }

    pub fn species(&self) -> Species {
        self.species
    }

    pub fn region(&self) -> &str {
        &self.region
    }

    pub fn stimulus_ids(&self) -> &[String] {
        &self.stimulus_ids
    }

    pub fn neuron_ids(&self) -> &[String] {
        &self.neuron_ids
    }

    pub fn responses(&self) -> &Array3<f64> {
        &self.responses
    }

    /// Number of repetition slots in use per stimulus.
    pub fn repetition_counts(&self) -> &[usize] {
        &self.repetition_counts
    }

    pub fn n_stimuli(&self) -> usize {
        self.stimulus_ids.len()
    }

    pub fn n_neurons(&self) -> usize {
        self.neuron_ids.len()
    }

    pub fn n_repetitions(&self) -> usize {
        self.responses.dim().2
    }
}

/// Per-stimulus mean over the non-missing repetitions of each neuron.
pub fn average_repetitions(data: &NeuralDataset) -> Result<FeatureMatrix, DataError> {
    let (s, n, _) = data.responses.dim();
    let mut out = Array2::zeros((s, n));
    for si in 0..s {
        for ni in 0..n {
            let (sum, count) = data
                .responses
                .slice(ndarray::s![si, ni, ..])
                .iter()
                .filter(|v| !v.is_nan())
                .fold((0.0, 0usize), |(a, c), v| (a + v, c + 1));
            if count == 0 {
                return Err(DataError::EmptyCell {
                    stimulus: data.stimulus_ids[si].clone(),
                    neuron: data.neuron_ids[ni].clone(),
                });
            }
            out[[si, ni]] = sum / count as f64;
        }
    }
    let provenance = Provenance {
        condition: data.species.to_string(),
        seed: None,
        layer: data.region.clone(),
    };
    Ok(FeatureMatrix::new(data.stimulus_ids.clone(), out, provenance)?)
}
