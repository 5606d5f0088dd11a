use super::RegionWeights;
use crate::fs::{Activation, FsParams};
use crate::{Error, Result};

/// Triangle-shaped stand-in for the derivative of the Heaviside step:
/// `max(0, 1 - |v - threshold| / width)`.
#[inline]
pub fn pseudo_grad(v: f64, threshold: f64, width: f64) -> f64 {
    (1.0 - (v - threshold).abs() / width).max(0.0)
}

/// Antiderivative of the triangle, i.e. the smooth step whose exact derivative
/// is [`pseudo_grad`]. Rises from 0 at `u = -width` to `width` at `u = width`.
#[inline]
pub fn smooth_step(u: f64, width: f64) -> f64 {
    if u <= -width {
        0.0
    } else if u <= 0.0 {
        (u + width) * (u + width) / (2.0 * width)
    } else if u < width {
        width - (width - u) * (width - u) / (2.0 * width)
    } else {
        width
    }
}

/// How spikes are produced in the forward pass of [`forward_backward`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikeRelaxation {
    /// True Heaviside spikes; the backward pass substitutes [`pseudo_grad`].
    /// This is what training uses.
    Hard,
    /// Spikes replaced by [`smooth_step`], making the backward pass the exact
    /// gradient of a smooth surrogate loss.
    Smoothed,
}

/// Loss and parameter gradients for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad_thresholds: Vec<f64>,
    pub grad_resets: Vec<f64>,
    pub grad_output_weights: Vec<f64>,
}

impl LossGrad {
    /// Gradients in the `[T.., h.., d..]` layout of [`FsParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut g = self.grad_thresholds.clone();
        g.extend_from_slice(&self.grad_resets);
        g.extend_from_slice(&self.grad_output_weights);
        g
    }
}

/// Weighted MSE of the FS-neuron against `target` over `xs`, with gradients
/// obtained by backpropagating through the unrolled `K` steps.
pub fn forward_backward(
    xs: &[f64],
    params: &FsParams,
    target: &dyn Activation,
    weights: &RegionWeights,
    width: f64,
    relaxation: SpikeRelaxation,
) -> Result<LossGrad> {
    if xs.is_empty() {
        return Err(Error::invalid("batch", "empty batch"));
    }
    if !(width > 0.0) {
        return Err(Error::invalid("pseudo-derivative width", "must be positive"));
    }
    let k = params.num_steps();
    let (th, rs, ow) = (
        params.thresholds(),
        params.resets(),
        params.output_weights(),
    );

    let w: Vec<f64> = xs.iter().map(|&x| weights.weight_at(x)).collect();
    let w_sum: f64 = w.iter().sum();

    let mut grad_thresholds = vec![0.0; k];
    let mut grad_resets = vec![0.0; k];
    let mut grad_output_weights = vec![0.0; k];
    let mut potentials = vec![0.0; k];
    let mut spikes = vec![0.0; k];
    let mut loss = 0.0;

    for (&x, &wx) in xs.iter().zip(&w) {
        let mut v = x;
        let mut out = 0.0;
        for t in 0..k {
            let u = v - th[t];
            let z = match relaxation {
                SpikeRelaxation::Hard => {
                    if u >= 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                SpikeRelaxation::Smoothed => smooth_step(u, width),
            };
            potentials[t] = v;
            spikes[t] = z;
            out += ow[t] * z;
            v -= rs[t] * z;
        }
        let residual = out - target.eval(x);
        loss += wx * residual * residual;

        let g_out = 2.0 * wx * residual / w_sum;
        // dL/dv(t+1); v(K+1) feeds nothing
        let mut g_v = 0.0;
        for t in (0..k).rev() {
            let z = spikes[t];
            let g_z = g_out * ow[t] - g_v * rs[t];
            grad_output_weights[t] += g_out * z;
            grad_resets[t] -= g_v * z;
            let g_u = g_z * pseudo_grad(potentials[t], th[t], width);
            grad_thresholds[t] -= g_u;
            g_v += g_u;
        }
    }
    let loss = loss / w_sum;

    let finite = loss.is_finite()
        && grad_thresholds
            .iter()
            .chain(&grad_resets)
            .chain(&grad_output_weights)
            .all(|g| g.is_finite());
    if !finite {
        return Err(Error::Divergence(format!(
            "non-finite loss or gradient (loss = {loss})"
        )));
    }
    Ok(LossGrad {
        loss,
        grad_thresholds,
        grad_resets,
        grad_output_weights,
    })
}
