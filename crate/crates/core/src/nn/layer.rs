//! Layers, activations and the reverse pass.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::ops;
use super::{LayerName, NnError};

/// A batch of activations. Spatial tensors use the channel-major layout from
/// [`ops`]; flat tensors are `(features, batch)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Act {
    pub data: Array2<f64>,
    pub shape: Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Spatial { batch: usize, h: usize, w: usize },
    Flat { batch: usize },
}

impl Shape {
    pub fn batch(&self) -> usize {
        match *self {
            Shape::Spatial { batch, .. } | Shape::Flat { batch } => batch,
        }
    }
}

impl Act {
    pub fn spatial(data: Array2<f64>, batch: usize, h: usize, w: usize) -> Self {
        debug_assert_eq!(data.ncols(), batch * h * w);
        Act { data, shape: Shape::Spatial { batch, h, w } }
    }

    pub fn flat(data: Array2<f64>) -> Self {
        let batch = data.ncols();
        Act { data, shape: Shape::Flat { batch } }
    }

    pub fn batch(&self) -> usize {
        self.shape.batch()
    }

    /// Features of image `b` in `(channel, y, x)` order.
    pub fn image_row(&self, b: usize) -> Vec<f64> {
        match self.shape {
            Shape::Flat { .. } => self.data.column(b).to_vec(),
            Shape::Spatial { h, w, .. } => {
                let hw = h * w;
                let mut out = Vec::with_capacity(self.data.nrows() * hw);
                for row in self.data.rows() {
                    out.extend(row.iter().skip(b * hw).take(hw));
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    /// Stride-1 convolution with square `kernel`, optional 2x2 max-pool.
    Conv {
        in_channels: usize,
        kernel: usize,
        padding: usize,
        pool: bool,
    },
    /// Fully connected. `grid` is the `(channels, h, w)` shape the weights
    /// were built for when the input is spatial; larger maps are adaptively
    /// average-pooled onto it.
    Dense { grid: Option<(usize, usize, usize)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: LayerName,
    pub kind: LayerKind,
    /// `(out, in)`; for convolutions `in = in_channels * kernel^2`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// Everything the reverse pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct Cache {
    input_shape: Shape,
    /// im2col columns (conv) or flattened input (dense).
    x: Array2<f64>,
    pre: Array2<f64>,
    pool_arg: Option<Vec<u32>>,
    /// Dense only: spatial size before adaptive pooling.
    pooled_from: Option<(usize, usize)>,
}

impl Cache {
    pub fn input_matrix(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn pre_activation(&self) -> &Array2<f64> {
        &self.pre
    }
}

/// Parameter gradients of one layer, same shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Grad {
    pub fn flat(&self) -> Vec<f64> {
        self.weight.iter().chain(self.bias.iter()).copied().collect()
    }
}

impl Layer {
    pub fn out_features(&self) -> usize {
        self.weight.nrows()
    }

    fn mismatch(&self, msg: String) -> NnError {
        NnError::Shape { layer: self.name.to_string(), msg }
    }

    pub fn forward(&self, input: &Act) -> Result<(Act, Cache), NnError> {
        match (&self.kind, input.shape) {
            (&LayerKind::Conv { in_channels, kernel, padding, pool }, Shape::Spatial { batch, h, w }) => {
                if input.data.nrows() != in_channels {
                    return Err(self.mismatch(format!(
                        "expected {in_channels} input channels, got {}",
                        input.data.nrows()
                    )));
                }
                let (ho, wo) = (h + 2 * padding + 1 - kernel, w + 2 * padding + 1 - kernel);
                if pool && (ho % 2 != 0 || wo % 2 != 0) {
                    return Err(self.mismatch(format!("cannot 2x2-pool a {ho}x{wo} map")));
                }
                let cols = ops::im2col(&input.data, batch, h, w, kernel, padding);
                let mut pre = self.weight.dot(&cols);
                ops::add_bias(&mut pre, &self.bias);
                let post = self.activate(&pre);
                let (out, pool_arg, shape) = if pool {
                    let (p, arg) = ops::max_pool2(&post, batch, ho, wo);
                    (p, Some(arg), Shape::Spatial { batch, h: ho / 2, w: wo / 2 })
                } else {
                    (post, None, Shape::Spatial { batch, h: ho, w: wo })
                };
                let cache = Cache { input_shape: input.shape, x: cols, pre, pool_arg, pooled_from: None };
                Ok((Act { data: out, shape }, cache))
            }
            (LayerKind::Conv { .. }, Shape::Flat { .. }) => {
                Err(self.mismatch("convolution needs a spatial input".into()))
            }
            (&LayerKind::Dense { grid }, shape) => {
                let batch = shape.batch();
                let (x, pooled_from) = match (shape, grid) {
                    (Shape::Flat { .. }, _) => (input.data.clone(), None),
                    (Shape::Spatial { h, w, .. }, Some((c, gh, gw))) => {
                        if input.data.nrows() != c {
                            return Err(self.mismatch(format!(
                                "expected {c} input channels, got {}",
                                input.data.nrows()
                            )));
                        }
                        if h < gh || w < gw {
                            return Err(self.mismatch(format!(
                                "{h}x{w} input is smaller than the {gh}x{gw} training grid"
                            )));
                        }
                        if (h, w) == (gh, gw) {
                            (ops::flatten(&input.data, batch, h * w), None)
                        } else {
                            let p = ops::adaptive_avg_pool(&input.data, batch, h, w, gh, gw);
                            (ops::flatten(&p, batch, gh * gw), Some((h, w)))
                        }
                    }
                    (Shape::Spatial { h, w, .. }, None) => (ops::flatten(&input.data, batch, h * w), None),
                };
                if x.nrows() != self.weight.ncols() {
                    return Err(self.mismatch(format!(
                        "expected {} input features, got {}",
                        self.weight.ncols(),
                        x.nrows()
                    )));
                }
                let mut pre = self.weight.dot(&x);
                ops::add_bias(&mut pre, &self.bias);
                let out = self.activate(&pre);
                let cache = Cache { input_shape: shape, x, pre, pool_arg: None, pooled_from };
                Ok((Act::flat(out), cache))
            }
        }
    }

    fn activate(&self, pre: &Array2<f64>) -> Array2<f64> {
        match self.activation {
            Activation::Relu => pre.mapv(|v| v.max(0.0)),
            Activation::Identity => pre.clone(),
        }
    }

    /// Gradient with respect to the pre-activation, given the gradient with
    /// respect to the layer output.
    pub fn d_pre(&self, cache: &Cache, d_out: &Array2<f64>) -> Array2<f64> {
        let mut d = match &cache.pool_arg {
            Some(arg) => ops::max_pool2_backward(d_out, arg, cache.pre.ncols()),
            None => d_out.clone(),
        };
        if self.activation == Activation::Relu {
            d.zip_mut_with(&cache.pre, |g, &p| {
                if p <= 0.0 {
                    *g = 0.0
                }
            });
        }
        d
    }

    pub fn param_grad(&self, cache: &Cache, d_pre: &Array2<f64>) -> Grad {
        Grad {
            weight: d_pre.dot(&cache.x.t()),
            bias: d_pre.sum_axis(Axis(1)),
        }
    }

    /// Propagates `d_pre` to the layer input through `matrix`, which is the
    /// forward weight for exact gradients or a fixed feedback matrix.
    pub fn input_grad(&self, cache: &Cache, d_pre: &Array2<f64>, matrix: &Array2<f64>) -> Array2<f64> {
        let dx = matrix.t().dot(d_pre);
        match (&self.kind, cache.input_shape) {
            (&LayerKind::Conv { in_channels, kernel, padding, .. }, Shape::Spatial { batch, h, w }) => {
                ops::col2im(&dx, in_channels, batch, h, w, kernel, padding)
            }
            (&LayerKind::Dense { grid }, Shape::Spatial { batch, h, w }) => match (grid, cache.pooled_from) {
                (Some((c, gh, gw)), Some(_)) => {
                    let g = ops::unflatten(&dx, c, batch, gh * gw);
                    ops::adaptive_avg_pool_backward(&g, batch, h, w, gh, gw)
                }
                _ => ops::unflatten(&dx, dx.nrows() / (h * w), batch, h * w),
            },
            _ => dx,
        }
    }
}

/// Forward through every layer, keeping caches.
pub fn forward_cached(layers: &[Layer], input: &Act) -> Result<(Vec<Cache>, Vec<Act>), NnError> {
    let mut caches = Vec::with_capacity(layers.len());
    let mut outs: Vec<Act> = Vec::with_capacity(layers.len());
    for layer in layers {
        let (out, cache) = layer.forward(outs.last().unwrap_or(input))?;
        caches.push(cache);
        outs.push(out);
    }
    Ok((caches, outs))
}

/// Reverse pass from the gradient of the last layer's output.
///
/// `feedback[i]`, when given, replaces layer `i`'s weight in the error path.
/// Only layers at index `>= lowest` receive gradients.
pub fn backward(
    layers: &[Layer],
    caches: &[Cache],
    d_out: Array2<f64>,
    feedback: Option<&[Array2<f64>]>,
    lowest: usize,
) -> Vec<Option<Grad>> {
    error_signals(layers, caches, d_out, feedback, lowest)
        .iter()
        .enumerate()
        .map(|(i, d_pre)| d_pre.as_ref().map(|d| layers[i].param_grad(&caches[i], d)))
        .collect()
}

/// The per-layer error at the pre-activation that [`backward`] turns into
/// parameter gradients.
pub fn error_signals(
    layers: &[Layer],
    caches: &[Cache],
    d_out: Array2<f64>,
    feedback: Option<&[Array2<f64>]>,
    lowest: usize,
) -> Vec<Option<Array2<f64>>> {
    let mut signals = vec![None; layers.len()];
    let mut d = d_out;
    for i in (lowest..layers.len()).rev() {
        let d_pre = layers[i].d_pre(&caches[i], &d);
        if i > lowest {
            let m = feedback.map_or(&layers[i].weight, |f| &f[i]);
            d = layers[i].input_grad(&caches[i], &d_pre, m);
        }
        signals[i] = Some(d_pre);
    }
    signals
}
