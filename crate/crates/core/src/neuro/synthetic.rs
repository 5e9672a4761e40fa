//! Synthetic neural populations with a planted linear code.
//!
//! Each neuron reads out the source features through standard-normal weights
//! projected onto zero sum (so the readout ignores each stimulus's mean
//! activation, the same quantity correlation distance discards). Every
//! repetition adds i.i.d. Gaussian noise whose variance is the neuron's
//! signal variance across stimuli divided by `snr`.

use ndarray::{Array2, Array3, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataError, NeuralDataset, Species};
use crate::rdm::FeatureMatrix;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Layer whose features drive the population; becomes the region label.
    pub generator_layer: String,
    /// Signal variance over noise variance, per neuron.
    pub snr: f64,
    pub n_neurons: usize,
    pub n_repetitions: usize,
    pub seed: u64,
}

/// Generates the population; see [`synthesize`] for the planted signal.
pub fn generate_synthetic(spec: &SyntheticSpec, source: &FeatureMatrix) -> Result<NeuralDataset, DataError> {
    synthesize(spec, source).map(|(d, _)| d)
}

/// Returns the dataset together with its noiseless `stimuli x neurons` signal.
pub fn synthesize(
    spec: &SyntheticSpec,
    source: &FeatureMatrix,
) -> Result<(NeuralDataset, Array2<f64>), DataError> {
    if !(spec.snr > 0.0) {
        return Err(DataError::Invalid(format!("snr must be > 0, got {}", spec.snr)));
    }
    if spec.n_neurons == 0 || spec.n_repetitions == 0 {
        return Err(DataError::Invalid("n_neurons and n_repetitions must be >= 1".into()));
    }
    let x = source.features();
    let (m, f) = x.dim();

    let mut rng = rng::stream(spec.seed, Purpose::SyntheticReadout, 0);
    let mut weights = Array2::<f64>::from_shape_fn((f, spec.n_neurons), |_| StandardNormal.sample(&mut rng));
    let col_means = weights.mean_axis(Axis(0)).expect("f >= 2");
    weights -= &col_means;
    let signal = x.dot(&weights);

    let mut noise_sd = Vec::with_capacity(spec.n_neurons);
    for (j, col) in signal.columns().into_iter().enumerate() {
        let mean = col.sum() / m as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
        let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(var > 1e-24 * scale * scale) {
            return Err(DataError::Degenerate(format!(
                "readout {j} has no variance across stimuli; source features are degenerate"
            )));
        }
        noise_sd.push((var / spec.snr).sqrt());
    }

    let mut rng = rng::stream(spec.seed, Purpose::SyntheticNoise, 0);
    let responses = Array3::from_shape_fn((m, spec.n_neurons, spec.n_repetitions), |(s, n, _)| {
        let z: f64 = StandardNormal.sample(&mut rng);
        signal[[s, n]] + noise_sd[n] * z
    });
    let neuron_ids = (0..spec.n_neurons).map(|i| format!("syn{i:04}")).collect();
    let data = NeuralDataset::new(
        Species::Synthetic,
        spec.generator_layer.clone(),
        source.stimulus_ids().to_vec(),
        neuron_ids,
        responses,
    )?;
    Ok((data, signal))
}
