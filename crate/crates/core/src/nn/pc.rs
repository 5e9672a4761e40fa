//! Predictive coding in the Whittington-Bogacz formulation.
//!
//! Every layer output `x_l` becomes a latent node predicted by
//! `mu_l = f_l(x_{l-1})`, with error `e_l = x_l - mu_l`. The input is clamped;
//! the top error is `-dloss/dmu_L` per sample (`y - softmax` for cross-entropy,
//! `y - mu` for squared error), scaled by `output_precision`. Latents start at
//! the feedforward values and relax by gradient descent on the energy
//!
//! ```text
//! x_l += rate * (-e_l + J_{l+1}^T e_{l+1})
//! ```
//!
//! for `inference_steps` steps. The weight update of layer `l` is the local
//! product `J_theta^T e_l`, averaged over the batch. [`pc_gradients`] returns
//! its negation divided by `output_precision`, so it is directly comparable
//! with (and at equilibrium for small errors approaches) the backprop
//! gradient of the mean loss.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::layer::{forward_cached, Act, Grad, Layer};
use super::{ops, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcParams {
    pub inference_steps: usize,
    pub inference_rate: f64,
    /// Weight of the output error relative to the latent errors.
    pub output_precision: f64,
}

impl Default for PcParams {
    fn default() -> Self {
        PcParams { inference_steps: 20, inference_rate: 0.1, output_precision: 1.0 }
    }
}

impl PcParams {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.inference_rate > 0.0) || !(self.output_precision > 0.0) {
            return Err(NnError::Config("PC rates must be positive".into()));
        }
        Ok(())
    }
}

/// What the output layer is trained towards.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    CrossEntropy(&'a [usize]),
    /// `(outputs, batch)` regression targets under mean `0.5 * |y - mu|^2`.
    Squared(&'a Array2<f64>),
}

fn output_error(mu: &Array2<f64>, objective: Objective<'_>, precision: f64) -> Array2<f64> {
    let mut e = match objective {
        Objective::CrossEntropy(labels) => {
            let mut e = ops::softmax(mu).mapv(|p| -p);
            for (b, &y) in labels.iter().enumerate() {
                e[[y, b]] += 1.0;
            }
            e
        }
        Objective::Squared(target) => target - mu,
    };
    e *= precision;
    e
}

/// Mean loss gradient of `objective` at `mu`, matching the `1/B` scaling of
/// [`super::cross_entropy`].
pub fn loss_gradient(mu: &Array2<f64>, objective: Objective<'_>) -> Array2<f64> {
    -output_error(mu, objective, 1.0) / mu.ncols() as f64
}

/// Runs inference on one batch and returns the PC weight-update estimate of
/// every layer, expressed as a descent gradient.
pub fn pc_gradients(
    layers: &[Layer],
    input: &Act,
    objective: Objective<'_>,
    params: &PcParams,
) -> Result<Vec<Grad>, NnError> {
    params.validate()?;
    let n = layers.len();
    let batch = input.batch() as f64;
    let (_, mut x) = forward_cached(layers, input)?;
    // x[n-1] is the prediction at the output, not a latent; only x[..n-1] relax
    for _ in 0..params.inference_steps {
        let errors = errors(layers, input, &x, objective, params)?;
        for l in 0..n - 1 {
            let (cache, e_next) = (&errors[l + 1].0, &errors[l + 1].1);
            let d_pre = layers[l + 1].d_pre(cache, e_next);
            let back = layers[l + 1].input_grad(cache, &d_pre, &layers[l + 1].weight);
            let step = &back - &errors[l].1;
            x[l].data.scaled_add(params.inference_rate, &step);
        }
    }
    let errors = errors(layers, input, &x, objective, params)?;
    let scale = -1.0 / (batch * params.output_precision);
    Ok(layers
        .iter()
        .zip(&errors)
        .map(|(layer, (cache, e))| {
            let d_pre = layer.d_pre(cache, e);
            let g = layer.param_grad(cache, &d_pre);
            Grad { weight: g.weight * scale, bias: g.bias * scale }
        })
        .collect())
}

/// Per-layer forward caches and prediction errors at the current latents.
fn errors(
    layers: &[Layer],
    input: &Act,
    x: &[Act],
    objective: Objective<'_>,
    params: &PcParams,
) -> Result<Vec<(super::layer::Cache, Array2<f64>)>, NnError> {
    let n = layers.len();
    let mut out = Vec::with_capacity(n);
    for l in 0..n {
        let src = if l == 0 { input } else { &x[l - 1] };
        let (mu, cache) = layers[l].forward(src)?;
        let e = if l + 1 == n {
            output_error(&mu.data, objective, params.output_precision)
        } else {
            &x[l].data - &mu.data
        };
        out.push((cache, e));
    }
    Ok(out)
}
