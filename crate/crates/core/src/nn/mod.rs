//! A small CNN and the learning rules it is trained under.
//!
//! The network is `Conv1..ConvK` (3x3, stride 1, pad 1, ReLU, 2x2 max-pool)
//! followed by fully connected layers (ReLU on hidden, identity on the output).
//! Activations are `f64` throughout so gradient checks are meaningful.

mod data;
mod io;
pub mod layer;
pub mod ops;
pub mod pc;
pub mod stdp;
mod train;

pub use data::{load_cifar_binary, load_png_directory, load_training_data, TrainSet};
pub use io::{load_checkpoint, save_checkpoint, CKPT_MAGIC};
pub use layer::{Act, Activation, Grad, Layer, LayerKind, Shape};
pub use pc::PcParams;
pub use stdp::StdpParams;
pub use train::{
    cosine_sim, feedback_matrices, train, train_on, AlignmentSample, EpochMetrics, FaParams, TrainingConfig,
    TrainingLog,
};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio::FormatError;
use crate::rng::{self, Purpose};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer {layer}: {msg}")]
    Shape { layer: String, msg: String },
    #[error("checkpoint has no FC weights (convolutional-only STDP checkpoint); {0} is unavailable")]
    MissingFc(LayerName),
    #[error("unknown layer {0:?}")]
    UnknownLayer(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training data: {0}")]
    Data(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Layer label: `Conv1`, `Conv2`, ..., `FC1`, `FC2`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerName {
    Conv(u8),
    Fc(u8),
}

impl LayerName {
    pub fn is_fc(self) -> bool {
        matches!(self, LayerName::Fc(_))
    }
}

impl fmt::Display for LayerName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerName::Conv(i) => write!(f, "Conv{i}"),
            LayerName::Fc(i) => write!(f, "FC{i}"),
        }
    }
}

impl FromStr for LayerName {
    type Err = NnError;
    fn from_str(s: &str) -> Result<Self, NnError> {
        let lower = s.to_ascii_lowercase();
        let parse = |rest: &str| rest.parse::<u8>().ok().filter(|&i| i >= 1);
        if let Some(i) = lower.strip_prefix("conv").and_then(parse) {
            Ok(LayerName::Conv(i))
        } else if let Some(i) = lower.strip_prefix("fc").and_then(parse) {
            Ok(LayerName::Fc(i))
        } else {
            Err(NnError::UnknownLayer(s.to_string()))
        }
    }
}

impl Serialize for LayerName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LayerName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Training condition of a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "BP")]
    Bp,
    #[serde(rename = "FA")]
    Fa,
    #[serde(rename = "PC")]
    Pc,
    #[serde(rename = "STDP")]
    Stdp,
    Random,
}

impl Rule {
    pub const ALL: [Rule; 5] = [Rule::Bp, Rule::Fa, Rule::Pc, Rule::Stdp, Rule::Random];
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Bp => "BP",
            Rule::Fa => "FA",
            Rule::Pc => "PC",
            Rule::Stdp => "STDP",
            Rule::Random => "Random",
        })
    }
}

impl FromStr for Rule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "bp" => Ok(Rule::Bp),
            "fa" => Ok(Rule::Fa),
            "pc" => Ok(Rule::Pc),
            "stdp" => Ok(Rule::Stdp),
            "random" => Ok(Rule::Random),
            other => Err(format!("unknown rule {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub in_channels: usize,
    /// Training-time square input size; must be divisible by `2^conv_widths.len()`.
    pub input_size: usize,
    pub conv_widths: Vec<usize>,
    /// Hidden FC widths followed by the number of classes.
    pub fc_widths: Vec<usize>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            in_channels: 3,
            input_size: 32,
            conv_widths: vec![32, 64, 128],
            fc_widths: vec![512, 10],
        }
    }
}

pub const KERNEL: usize = 3;

impl NetworkSpec {
    /// The 8-8-8 / 16 network used for gradient checks.
    pub fn toy(n_classes: usize) -> Self {
        NetworkSpec {
            in_channels: 3,
            input_size: 8,
            conv_widths: vec![8, 8, 8],
            fc_widths: vec![16, n_classes],
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.in_channels == 0 || self.conv_widths.is_empty() || self.fc_widths.is_empty() {
            return Err(NnError::Config("network needs input channels, conv and FC layers".into()));
        }
        if self.conv_widths.iter().chain(&self.fc_widths).any(|&w| w == 0) {
            return Err(NnError::Config("layer widths must be positive".into()));
        }
        let div = 1usize << self.conv_widths.len();
        if self.input_size == 0 || self.input_size % div != 0 {
            return Err(NnError::Config(format!(
                "input size {} is not divisible by {div}",
                self.input_size
            )));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        *self.fc_widths.last().expect("validated")
    }

    /// Spatial side of the last conv block's output at training resolution.
    pub fn grid(&self) -> usize {
        self.input_size >> self.conv_widths.len()
    }

    pub fn layer_names(&self) -> Vec<LayerName> {
        let conv = (1..=self.conv_widths.len()).map(|i| LayerName::Conv(i as u8));
        let fc = (1..=self.fc_widths.len()).map(|i| LayerName::Fc(i as u8));
        conv.chain(fc).collect()
    }

    /// Zero-initialised layers (all of them, or only the conv stack).
    fn build_layers(&self, with_fc: bool) -> Vec<Layer> {
        let mut layers = Vec::new();
        let mut c_in = self.in_channels;
        for (i, &c) in self.conv_widths.iter().enumerate() {
            layers.push(Layer {
                name: LayerName::Conv(i as u8 + 1),
                kind: LayerKind::Conv { in_channels: c_in, kernel: KERNEL, padding: 1, pool: true },
                weight: Array2::zeros((c, c_in * KERNEL * KERNEL)),
                bias: Array1::zeros(c),
                activation: Activation::Relu,
            });
            c_in = c;
        }
        if with_fc {
            let g = self.grid();
            let mut d_in = c_in * g * g;
            for (i, &d) in self.fc_widths.iter().enumerate() {
                let last = i + 1 == self.fc_widths.len();
                layers.push(Layer {
                    name: LayerName::Fc(i as u8 + 1),
                    kind: LayerKind::Dense { grid: (i == 0).then_some((c_in, g, g)) },
                    weight: Array2::zeros((d, d_in)),
                    bias: Array1::zeros(d),
                    activation: if last { Activation::Identity } else { Activation::Relu },
                });
                d_in = d;
            }
        }
        layers
    }
}

/// Per-channel standardisation applied to `[0, 1]` pixel values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Default for ChannelNorm {
    /// CIFAR-10 training-set statistics; replaced by the actual training
    /// data's statistics whenever a network is trained.
    fn default() -> Self {
        ChannelNorm {
            mean: vec![0.4914, 0.4822, 0.4465],
            std: vec![0.2470, 0.2435, 0.2616],
        }
    }
}

impl ChannelNorm {
    pub fn identity(channels: usize) -> Self {
        ChannelNorm { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    /// Standardises a spatial `(channels, pixels)` tensor in place.
    pub fn apply(&self, data: &mut Array2<f64>) {
        for (c, mut row) in data.rows_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[c], self.std[c]);
            row.mapv_inplace(|v| (v - m) / s);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub rule: Rule,
    pub seed: u64,
    pub epochs_trained: usize,
    /// False only for convolution-only checkpoints, whose `layers` then hold
    /// the conv stack alone.
    pub has_fc1: bool,
    pub layers: Vec<Layer>,
    pub norm: ChannelNorm,
}

/// Fresh Kaiming-initialised network with the default architecture.
pub fn init_network(seed: u64) -> Checkpoint {
    init_network_with(&NetworkSpec::default(), seed).expect("default spec is valid")
}

/// Kaiming fan-in normal weights (`std = sqrt(2 / fan_in)`), zero biases.
/// Layer `i` draws from its own stream so widths do not shift other layers.
pub fn init_network_with(spec: &NetworkSpec, seed: u64) -> Result<Checkpoint, NnError> {
    spec.validate()?;
    let mut layers = spec.build_layers(true);
    for (i, layer) in layers.iter_mut().enumerate() {
        let fan_in = layer.weight.ncols();
        let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        let mut rng = rng::stream(seed, Purpose::WeightInit, i as u64);
        layer.weight.mapv_inplace(|_| dist.sample(&mut rng));
    }
    Ok(Checkpoint {
        spec: spec.clone(),
        rule: Rule::Random,
        seed,
        epochs_trained: 0,
        has_fc1: true,
        layers,
        norm: ChannelNorm::default(),
    })
}

/// Recorded activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub activations: Vec<(LayerName, Act)>,
}

impl ForwardPass {
    pub fn get(&self, name: LayerName) -> Option<&Act> {
        self.activations.iter().find(|(n, _)| *n == name).map(|(_, a)| a)
    }

    /// Output of the final layer, `(classes, batch)`, if it was reached.
    pub fn logits(&self) -> Option<&Array2<f64>> {
        self.activations
            .last()
            .filter(|(n, _)| n.is_fc())
            .map(|(_, a)| &a.data)
    }
}

impl Checkpoint {
    /// Checks layer count and tensor shapes against the spec.
    pub fn validate(&self) -> Result<(), NnError> {
        self.spec.validate()?;
        if !self.has_fc1 && self.rule != Rule::Stdp {
            return Err(NnError::Config(format!(
                "only STDP checkpoints may omit FC weights (rule is {})",
                self.rule
            )));
        }
        let expected = self.spec.build_layers(self.has_fc1);
        if expected.len() != self.layers.len() {
            return Err(NnError::Config(format!(
                "expected {} layers, found {}",
                expected.len(),
                self.layers.len()
            )));
        }
        for (e, l) in expected.iter().zip(&self.layers) {
            if e.name != l.name || e.kind != l.kind || e.activation != l.activation {
                return Err(NnError::Config(format!("layer {} does not match the spec", l.name)));
            }
            if e.weight.dim() != l.weight.dim() || e.bias.len() != l.bias.len() {
                return Err(NnError::Shape {
                    layer: l.name.to_string(),
                    msg: format!("weight {:?} / bias {} expected {:?} / {}", l.weight.dim(), l.bias.len(), e.weight.dim(), e.bias.len()),
                });
            }
        }
        if self.norm.mean.len() != self.spec.in_channels || self.norm.std.len() != self.spec.in_channels {
            return Err(NnError::Config("normalisation constants do not match input channels".into()));
        }
        if self.norm.std.iter().any(|&s| !(s > 0.0)) {
            return Err(NnError::Config("normalisation std must be positive".into()));
        }
        Ok(())
    }

    pub fn layer(&self, name: LayerName) -> Result<&Layer, NnError> {
        if name.is_fc() && !self.has_fc1 {
            return Err(NnError::MissingFc(name));
        }
        self.layers
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| NnError::UnknownLayer(name.to_string()))
    }

    /// Drops the FC layers, as a convolution-only save would.
    pub fn conv_only(mut self) -> Result<Self, NnError> {
        if self.rule != Rule::Stdp {
            return Err(NnError::Config("only STDP checkpoints may omit FC weights".into()));
        }
        self.layers.retain(|l| !l.name.is_fc());
        self.has_fc1 = false;
        Ok(self)
    }

    /// Runs the network on standardised input, recording every layer output
    /// up to and including `through` (all layers when `None`).
    pub fn forward(&self, input: &Act, through: Option<LayerName>) -> Result<ForwardPass, NnError> {
        let stop = match through {
            Some(name) => self.layers.iter().position(|l| l.name == name).ok_or_else(|| {
                if name.is_fc() && !self.has_fc1 {
                    NnError::MissingFc(name)
                } else {
                    NnError::UnknownLayer(name.to_string())
                }
            })?,
            None => self.layers.len() - 1,
        };
        let mut activations: Vec<(LayerName, Act)> = Vec::with_capacity(stop + 1);
        for layer in &self.layers[..=stop] {
            let x = activations.last().map_or(input, |(_, a)| a);
            let (out, _) = layer.forward(x)?;
            activations.push((layer.name, out));
        }
        Ok(ForwardPass { activations })
    }

    /// Builds a standardised spatial batch from raw `[0, 1]` images, each a
    /// `(channel, y, x)` flattened row of `images`.
    pub fn prepare_batch(&self, images: &Array2<f64>, size: usize) -> Act {
        let mut act = images_to_act(images, self.spec.in_channels, size);
        self.norm.apply(&mut act.data);
        act
    }
}

/// Rearranges `(batch, c*h*w)` image rows into the spatial layout.
pub fn images_to_act(images: &Array2<f64>, channels: usize, size: usize) -> Act {
    let batch = images.nrows();
    let hw = size * size;
    let data = Array2::from_shape_fn((channels, batch * hw), |(c, col)| images[[col / hw, c * hw + col % hw]]);
    Act::spatial(data, batch, size, size)
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let batch = labels.len() as f64;
    let mut p = ops::softmax(logits);
    let mut loss = 0.0;
    for (b, &y) in labels.iter().enumerate() {
        loss -= p[[y, b]].max(f64::MIN_POSITIVE).ln();
        p[[y, b]] -= 1.0;
    }
    p /= batch;
    (loss / batch, p)
}

/// Mean cross-entropy of the network on a batch.
pub fn batch_loss(ckpt: &Checkpoint, input: &Act, labels: &[usize]) -> Result<f64, NnError> {
    let pass = ckpt.forward(input, None)?;
    let logits = pass.logits().ok_or(NnError::MissingFc(LayerName::Fc(1)))?;
    Ok(cross_entropy(logits, labels).0)
}

/// Exact reverse-mode gradients of the mean cross-entropy, one per layer.
pub fn bp_gradient(ckpt: &Checkpoint, input: &Act, labels: &[usize]) -> Result<Vec<Grad>, NnError> {
    if !ckpt.has_fc1 {
        return Err(NnError::MissingFc(LayerName::Fc(1)));
    }
    check_labels(labels, input.batch(), ckpt.spec.n_classes())?;
    let (caches, outs) = layer::forward_cached(&ckpt.layers, input)?;
    let (_, d) = cross_entropy(&outs.last().expect("non-empty").data, labels);
    Ok(layer::backward(&ckpt.layers, &caches, d, None, 0).into_iter().map(|g| g.expect("all layers")).collect())
}

pub(crate) fn check_labels(labels: &[usize], batch: usize, classes: usize) -> Result<(), NnError> {
    if labels.len() != batch {
        return Err(NnError::Data(format!("{} labels for a batch of {batch}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(NnError::Data(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}
