//! Pair-based STDP with latency-coded activations.
//!
//! A non-negative activation `a` in a map whose largest value is `a_max`
//! fires a single spike at `t = 1 - a / a_max` (stronger fires earlier; zero
//! never fires). Each pre/post spike pair with `dt = t_post - t_pre` changes
//! the weight by
//!
//! ```text
//! dt > 0:  +a_plus  * exp(-dt / tau_plus)     pre before post
//! dt <= 0: -a_minus * exp( dt / tau_minus)    post before (or with) pre
//! ```
//!
//! which is what exponential pre/post traces produce when the post trace is
//! read before the pre trace is bumped (see [`trace_update`]).
//!
//! Conv layers learn greedily, one at a time: per image and position, the
//! filter with the largest response (winner-take-all) is the only post
//! spike, its filter weights get the pair updates from the patch, and every
//! filter is renormalised to its previous norm after the batch step.

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layer::{Act, Layer, LayerKind, Shape};
use super::{ops, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdpParams {
    pub tau_plus: f64,
    pub tau_minus: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    /// Multiplies the batch-averaged pair updates.
    pub learning_rate: f64,
    pub epochs_per_layer: usize,
    pub winner_take_all: bool,
}

impl Default for StdpParams {
    fn default() -> Self {
        StdpParams {
            tau_plus: 0.2,
            tau_minus: 0.2,
            a_plus: 1.0,
            a_minus: 1.05,
            learning_rate: 0.05,
            epochs_per_layer: 1,
            winner_take_all: true,
        }
    }
}

impl StdpParams {
    pub fn validate(&self) -> Result<(), NnError> {
        let ok = [self.tau_plus, self.tau_minus, self.a_plus, self.a_minus, self.learning_rate]
            .iter()
            .all(|&v| v > 0.0 && v.is_finite());
        if !ok {
            return Err(NnError::Config("STDP constants must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Spike time of activation `a` given the map maximum; `None` if silent.
pub fn latency(a: f64, a_max: f64) -> Option<f64> {
    (a > 0.0 && a_max > 0.0).then(|| 1.0 - (a / a_max).min(1.0))
}

/// Weight change from one pre/post spike pair.
pub fn pair_update(t_pre: Option<f64>, t_post: Option<f64>, p: &StdpParams) -> f64 {
    match (t_pre, t_post) {
        (Some(pre), Some(post)) => {
            let dt = post - pre;
            if dt > 0.0 {
                p.a_plus * (-dt / p.tau_plus).exp()
            } else {
                -p.a_minus * (dt / p.tau_minus).exp()
            }
        }
        _ => 0.0,
    }
}

/// Event-driven trace simulation of one synapse over whole spike trains.
///
/// Spikes are processed in time order; at equal times post spikes come
/// first, so a coincident pair depresses. Sums to the pairwise closed form.
pub fn trace_update(pre: &[f64], post: &[f64], p: &StdpParams) -> f64 {
    let mut events: Vec<(f64, bool)> = pre.iter().map(|&t| (t, true)).chain(post.iter().map(|&t| (t, false))).collect();
    // post (false) before pre (true) at ties
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (mut x_pre, mut y_post, mut last) = (0.0, 0.0, f64::NEG_INFINITY);
    let mut dw = 0.0;
    for (t, is_pre) in events {
        if last.is_finite() {
            x_pre *= (-(t - last) / p.tau_plus).exp();
            y_post *= (-(t - last) / p.tau_minus).exp();
        }
        last = t;
        if is_pre {
            dw -= p.a_minus * y_post;
            x_pre += 1.0;
        } else {
            dw += p.a_plus * x_pre;
            y_post += 1.0;
        }
    }
    dw
}

/// Applies pair updates to a dense `(post, pre)` weight matrix in place.
pub fn dense_update(weight: &mut Array2<f64>, pre: &[Option<f64>], post: &[Option<f64>], p: &StdpParams) {
    for (i, &t_post) in post.iter().enumerate() {
        for (j, &t_pre) in pre.iter().enumerate() {
            weight[[i, j]] += p.learning_rate * pair_update(t_pre, t_post, p);
        }
    }
}

/// Batch-averaged pair updates for a conv layer's weight matrix.
pub fn conv_update(layer: &Layer, input: &Act, p: &StdpParams) -> Result<Array2<f64>, NnError> {
    let (kernel, padding) = match layer.kind {
        LayerKind::Conv { kernel, padding, .. } => (kernel, padding),
        LayerKind::Dense { .. } => {
            return Err(NnError::Config(format!("{} is not convolutional", layer.name)));
        }
    };
    let Shape::Spatial { batch, h, w } = input.shape else {
        return Err(NnError::Shape { layer: layer.name.to_string(), msg: "needs spatial input".into() });
    };
    let (ho, wo) = (h + 2 * padding + 1 - kernel, w + 2 * padding + 1 - kernel);
    let positions = ho * wo;
    let (c_out, k_in) = layer.weight.dim();
    let per_image: Vec<Array2<f64>> = (0..batch)
        .into_par_iter()
        .map(|b| {
            let img = input.data.slice(s![.., b * h * w..(b + 1) * h * w]).to_owned();
            let cols = ops::im2col(&img, 1, h, w, kernel, padding);
            let mut post = layer.weight.dot(&cols);
            ops::add_bias(&mut post, &layer.bias);
            let pre_max = cols.iter().fold(0.0f64, |m, &v| m.max(v));
            let post_max = post.iter().fold(0.0f64, |m, &v| m.max(v));
            let mut dw = Array2::zeros((c_out, k_in));
            let mut t_pre = vec![None; k_in];
            for pos in 0..positions {
                for (k, t) in t_pre.iter_mut().enumerate() {
                    *t = latency(cols[[k, pos]], pre_max);
                }
                let column = post.column(pos);
                let spiking: Vec<usize> = if p.winner_take_all {
                    let best = (0..c_out).fold(None::<usize>, |best, c| match best {
                        Some(bi) if column[bi] >= column[c] => Some(bi),
                        _ => Some(c),
                    });
                    best.filter(|&c| column[c] > 0.0).into_iter().collect()
                } else {
                    (0..c_out).filter(|&c| column[c] > 0.0).collect()
                };
                for c in spiking {
                    let t_post = latency(column[c], post_max);
                    let mut row = dw.row_mut(c);
                    for (k, &tp) in t_pre.iter().enumerate() {
                        row[k] += pair_update(tp, t_post, p);
                    }
                }
            }
            dw
        })
        .collect();
    let mut total = Array2::zeros((c_out, k_in));
    for dw in &per_image {
        total += dw;
    }
    total /= (batch * positions) as f64;
    Ok(total)
}

/// One STDP step on a conv layer: apply the scaled update, then restore each
/// filter's norm.
pub fn conv_step(layer: &mut Layer, input: &Act, p: &StdpParams) -> Result<(), NnError> {
    let dw = conv_update(layer, input, p)?;
    let norms: Vec<f64> = layer.weight.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    layer.weight.scaled_add(p.learning_rate, &dw);
    for (mut row, n) in layer.weight.rows_mut().into_iter().zip(norms) {
        let now = row.dot(&row).sqrt();
        if now > 0.0 {
            row *= n / now;
        }
    }
    Ok(())
}
