use std::path::PathBuf;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layer::{backward, error_signals, forward_cached, Act, Grad, Layer};
use super::pc::{pc_gradients, Objective, PcParams};
use super::stdp::{conv_step, StdpParams};
use super::{
    check_labels, cross_entropy, images_to_act, init_network_with, Checkpoint, NetworkSpec, NnError, Rule,
    TrainSet,
};
use crate::error::Result;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FaParams {
    /// Seed of the fixed feedback matrices; the training seed when unset.
    pub feedback_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub rule: Rule,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// CIFAR-10 binary file/directory or a PNG class tree.
    pub data: Option<PathBuf>,
    /// Use at most this many training images.
    pub limit: Option<usize>,
    pub spec: NetworkSpec,
    pub fa: FaParams,
    pub pc: PcParams,
    pub stdp: StdpParams,
    /// Record, per batch, the cosine between the rule's update and the exact
    /// gradient for every layer (costs one extra backward pass).
    pub track_alignment: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            rule: Rule::Bp,
            epochs: 40,
            learning_rate: 0.01,
            batch_size: 64,
            seed: 0,
            data: None,
            limit: None,
            spec: NetworkSpec::default(),
            fa: FaParams::default(),
            pc: PcParams::default(),
            stdp: StdpParams::default(),
            track_alignment: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        self.spec.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(NnError::Config("batch size must be >= 1".into()));
        }
        match self.rule {
            Rule::Pc => self.pc.validate(),
            Rule::Stdp => self.stdp.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 0 is the state before any supervised update.
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSample {
    pub epoch: usize,
    pub batch: usize,
    /// Cosine between the applied update direction and the exact gradient,
    /// per layer (`None` for layers the rule does not update, or when either
    /// vector is zero).
    pub cosine: Vec<Option<f64>>,
    /// FA only: cosine between the error each layer receives through the
    /// feedback matrices and the one exact backpropagation would deliver.
    #[serde(default)]
    pub signal_cosine: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochMetrics>,
    pub alignment: Vec<AlignmentSample>,
}

/// Loads `config.data` and trains on it.
pub fn train(config: &TrainingConfig) -> Result<(Checkpoint, TrainingLog)> {
    config.validate()?;
    let path = config
        .data
        .as_ref()
        .ok_or_else(|| NnError::Config("training needs a dataset path".into()))?;
    let set = super::load_training_data(path, config.spec.input_size, config.limit)?;
    Ok(train_on(config, &set)?)
}

/// Trains on in-memory data. Identical configs and data give bit-identical
/// checkpoints.
pub fn train_on(config: &TrainingConfig, data: &TrainSet) -> Result<(Checkpoint, TrainingLog), NnError> {
    config.validate()?;
    let spec = &config.spec;
    if data.size != spec.input_size || data.channels != spec.in_channels {
        return Err(NnError::Data(format!(
            "images are {}x{}x{}, network expects {}x{}x{}",
            data.channels, data.size, data.size, spec.in_channels, spec.input_size, spec.input_size
        )));
    }
    if data.n_classes > spec.n_classes() {
        return Err(NnError::Data(format!(
            "{} classes in the data, network has {} outputs",
            data.n_classes,
            spec.n_classes()
        )));
    }
    let set = match config.limit {
        Some(l) if l < data.len() => data.subset(&(0..l).collect::<Vec<_>>()),
        _ => data.clone(),
    };
    let mut ckpt = init_network_with(spec, config.seed)?;
    ckpt.rule = config.rule;
    ckpt.norm = set.channel_norm();
    let mut log = TrainingLog::default();
    if config.epochs == 0 || config.rule == Rule::Random {
        return Ok((ckpt, log));
    }

    let n_conv = spec.conv_widths.len();
    // STDP: greedy unsupervised conv stack, then the FC readout on frozen
    // conv features; the other rules train everything end to end
    let (inputs, lowest) = if config.rule == Rule::Stdp {
        stdp_conv_phase(&mut ckpt, &set, config)?;
        (conv_features(&ckpt, &set, n_conv)?, n_conv)
    } else {
        let x = images_to_act(&set.images, set.channels, set.size);
        let mut x = x.data;
        ckpt.norm.apply(&mut x);
        (Inputs::Images(x), 0)
    };

    let feedback = (config.rule == Rule::Fa)
        .then(|| feedback_matrices(&ckpt.layers, config.fa.feedback_seed.unwrap_or(config.seed)));
    let (loss, accuracy) = evaluate_on(&ckpt.layers[lowest..], &inputs, &set)?;
    log.epochs.push(EpochMetrics { epoch: 0, loss, accuracy });

    let mut order: Vec<usize> = (0..set.len()).collect();
    for epoch in 1..=config.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(config.seed, Purpose::Shuffle, epoch as u64));
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let x = inputs.batch(idx, &set);
            let labels: Vec<usize> = idx.iter().map(|&i| set.labels[i]).collect();
            let layers = &ckpt.layers[lowest..];
            let (caches, outs) = forward_cached(layers, &x)?;
            let (batch_loss, d) = cross_entropy(&outs.last().expect("layers").data, &labels);
            if !batch_loss.is_finite() {
                return Err(NnError::Diverged { epoch });
            }
            let exact = || -> Vec<Grad> {
                backward(layers, &caches, d.clone(), None, 0).into_iter().map(|g| g.expect("all")).collect()
            };
            let grads: Vec<Grad> = match config.rule {
                Rule::Bp | Rule::Stdp => exact(),
                Rule::Fa => {
                    let fb = &feedback.as_ref().expect("FA feedback")[lowest..];
                    backward(layers, &caches, d.clone(), Some(fb), 0).into_iter().map(|g| g.expect("all")).collect()
                }
                Rule::Pc => pc_gradients(layers, &x, Objective::CrossEntropy(&labels), &config.pc)?,
                Rule::Random => unreachable!(),
            };
            if config.track_alignment {
                let reference = exact();
                let mut cosine = vec![None; lowest];
                cosine.extend(grads.iter().zip(&reference).map(|(a, b)| cosine_sim(&a.flat(), &b.flat())));
                let mut signal_cosine = vec![None; lowest];
                if config.rule == Rule::Fa {
                    let fb = &feedback.as_ref().expect("FA feedback")[lowest..];
                    let fa = error_signals(layers, &caches, d.clone(), Some(fb), 0);
                    let bp = error_signals(layers, &caches, d.clone(), None, 0);
                    signal_cosine.extend(fa.iter().zip(&bp).map(|(a, b)| {
                        cosine_sim(a.as_ref()?.as_slice()?, b.as_ref()?.as_slice()?)
                    }));
                }
                log.alignment.push(AlignmentSample { epoch, batch: bi, cosine, signal_cosine });
            }
            for (layer, g) in ckpt.layers[lowest..].iter_mut().zip(&grads) {
                layer.weight.scaled_add(-config.learning_rate, &g.weight);
                layer.bias.scaled_add(-config.learning_rate, &g.bias);
            }
        }
        let (loss, accuracy) = evaluate_on(&ckpt.layers[lowest..], &inputs, &set)?;
        if !loss.is_finite() || ckpt.layers.iter().any(|l| l.weight.iter().any(|w| !w.is_finite())) {
            return Err(NnError::Diverged { epoch });
        }
        log::debug!("{} epoch {epoch}: loss {loss:.4} accuracy {accuracy:.3}", config.rule);
        log.epochs.push(EpochMetrics { epoch, loss, accuracy });
    }
    ckpt.epochs_trained = config.epochs;
    Ok((ckpt, log))
}

/// Network inputs for the supervised phase: standardised images, or frozen
/// conv features (`(features, n)` columns) for the STDP readout.
enum Inputs {
    Images(Array2<f64>),
    Features(Array2<f64>),
}

impl Inputs {
    fn batch(&self, idx: &[usize], set: &TrainSet) -> Act {
        match self {
            Inputs::Images(x) => {
                let hw = set.size * set.size;
                let mut data = Array2::zeros((x.nrows(), idx.len() * hw));
                for (b, &i) in idx.iter().enumerate() {
                    data.slice_mut(s![.., b * hw..(b + 1) * hw]).assign(&x.slice(s![.., i * hw..(i + 1) * hw]));
                }
                Act::spatial(data, idx.len(), set.size, set.size)
            }
            Inputs::Features(f) => Act::flat(f.select(ndarray::Axis(1), idx)),
        }
    }
}

const EVAL_BATCH: usize = 256;

fn evaluate_on(layers: &[Layer], inputs: &Inputs, set: &TrainSet) -> Result<(f64, f64), NnError> {
    let (mut loss, mut correct) = (0.0, 0usize);
    let all: Vec<usize> = (0..set.len()).collect();
    for idx in all.chunks(EVAL_BATCH) {
        let x = inputs.batch(idx, set);
        let labels: Vec<usize> = idx.iter().map(|&i| set.labels[i]).collect();
        check_labels(&labels, x.batch(), layers.last().expect("layers").out_features())?;
        let (_, outs) = forward_cached(layers, &x)?;
        let logits = &outs.last().expect("layers").data;
        loss += cross_entropy(logits, &labels).0 * idx.len() as f64;
        for (b, &y) in labels.iter().enumerate() {
            let col = logits.column(b);
            let pred = (0..col.len()).fold(0, |best, k| if col[k] > col[best] { k } else { best });
            correct += usize::from(pred == y);
        }
    }
    Ok((loss / set.len() as f64, correct as f64 / set.len() as f64))
}

/// Fixed random feedback matrices, one per layer, Kaiming-scaled like the
/// forward weights.
pub fn feedback_matrices(layers: &[Layer], seed: u64) -> Vec<Array2<f64>> {
    layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let dist = Normal::new(0.0, (2.0 / l.weight.ncols() as f64).sqrt()).expect("positive");
            let mut rng = rng::stream(seed, Purpose::Feedback, i as u64);
            Array2::from_shape_simple_fn(l.weight.dim(), || dist.sample(&mut rng))
        })
        .collect()
}

/// Cosine of the angle between two vectors; `None` when either is zero.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
}

fn stdp_conv_phase(ckpt: &mut Checkpoint, set: &TrainSet, config: &TrainingConfig) -> Result<(), NnError> {
    let n_conv = config.spec.conv_widths.len();
    let p: &StdpParams = &config.stdp;
    let mut x = images_to_act(&set.images, set.channels, set.size).data;
    ckpt.norm.apply(&mut x);
    let inputs = Inputs::Images(x);
    let mut order: Vec<usize> = (0..set.len()).collect();
    for li in 0..n_conv {
        for ep in 0..p.epochs_per_layer {
            order.sort_unstable();
            let index = (1u64 << 32) | ((li as u64) << 16) | ep as u64;
            order.shuffle(&mut rng::stream(config.seed, Purpose::Shuffle, index));
            for idx in order.chunks(config.batch_size) {
                let mut a = inputs.batch(idx, set);
                for layer in &ckpt.layers[..li] {
                    a = layer.forward(&a)?.0;
                }
                conv_step(&mut ckpt.layers[li], &a, p)?;
            }
        }
        if ckpt.layers[li].weight.iter().any(|w| !w.is_finite()) {
            return Err(NnError::Diverged { epoch: 0 });
        }
    }
    Ok(())
}

/// Output of the conv stack for every image, as `(features, n)` columns.
fn conv_features(ckpt: &Checkpoint, set: &TrainSet, n_conv: usize) -> Result<Inputs, NnError> {
    let g = ckpt.spec.grid();
    let d = ckpt.spec.conv_widths[n_conv - 1] * g * g;
    let mut out = Array2::zeros((d, set.len()));
    let all: Vec<usize> = (0..set.len()).collect();
    for idx in all.chunks(EVAL_BATCH) {
        let imgs = set.images.select(ndarray::Axis(0), idx);
        let mut a = ckpt.prepare_batch(&imgs, set.size);
        for layer in &ckpt.layers[..n_conv] {
            a = layer.forward(&a)?.0;
        }
        for (b, &i) in idx.iter().enumerate() {
            out.column_mut(i).assign(&ndarray::Array1::from(a.image_row(b)));
        }
    }
    Ok(Inputs::Features(out))
}
