//! Cross-species representational similarity analysis.
//!
//! The crate covers the whole model-to-brain comparison path:
//!
//! - [`stats`]: rank correlations, exact permutation tests over all `n!`
//!   orderings, stimulus bootstrap and split-half noise ceilings.
//! - [`rdm`]: feature matrices and correlation-distance RDMs.
//! - [`neuro`]: neural response datasets, the neutral on-disk format, and a
//!   synthetic generator with planted ground truth.
//! - [`nn`]: a small CNN trained under five learning-rule conditions
//!   (backpropagation, feedback alignment, predictive coding, STDP, untrained).
//! - [`features`]: stimulus preprocessing, layer feature extraction, and
//!   import of externally computed features.
//! - [`cross_species`]: ranking comparisons, invariance spreads, interaction
//!   effects, stimulus control and seed aggregation.
//!
//! Every stochastic routine takes an explicit seed; see [`rng`] for the
//! stream layout.

pub mod binio;
pub mod cross_species;
pub mod error;
pub mod features;
pub mod neuro;
pub mod nn;
pub mod rdm;
pub mod results;
pub mod rng;
pub mod stats;

pub use cross_species::{
    aggregate_seeds, interaction_effects, ranking_comparison, rule_profiles, stimulus_control, v1_invariance,
    InteractionCell, RankingComparison, Rule, RuleRhos, SeedAggregate,
};
pub use error::{Error, Result};
pub use features::{
    extract_features, import_external_features, preprocess_stimuli, LayerRegionMap, RasterImage,
    StimulusSet,
};
pub use neuro::{
    average_repetitions, generate_synthetic, load_neural_dataset, save_neural_dataset,
    NeuralDataset, Species, SyntheticSpec,
};
pub use nn::{
    bp_gradient, init_network, train, Checkpoint, LayerName, NetworkSpec, TrainingConfig,
};
pub use rdm::{compute_rdm, rsa_score, upper_triangle, DistanceMetric, FeatureMatrix, Provenance, Rdm};
pub use results::{RecordSource, ResultRecord, RsaResult};
pub use stats::{
    bootstrap_rsa, exact_permutation_test, kendall_tau, spearman, spearman_brown,
    split_half_ceiling, BootstrapCI, NoiseCeiling, PermutationTestResult, RankVector, Sidedness,
};
