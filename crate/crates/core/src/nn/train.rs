use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LayerKind, LayerSpec, NetworkSpec, Tensor};
use crate::data::Dataset;
use crate::fs::ActivationKind;
use crate::{Error, Result};

/// Layer widths of a dense network, input first. A final width of 1 trains a
/// binary classifier on labels 0/1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpArch {
    pub widths: Vec<usize>,
    /// Activation of the hidden layers; the output layer is linear.
    pub activation: ActivationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 5,
            batch_size: 64,
            momentum: 0.9,
            seed: 2021,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Accuracy on the training batches as they were seen during the epoch.
    pub running_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub arch: MlpArch,
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: NetworkSpec,
    pub report: TrainReport,
}

struct DenseParams {
    n_in: usize,
    n_out: usize,
    w: Vec<f64>,
    b: Vec<f64>,
    vw: Vec<f64>,
    vb: Vec<f64>,
    gw: Vec<f64>,
    gb: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn derivative(act: ActivationKind, z: f64) -> f64 {
    match act {
        ActivationKind::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        ActivationKind::Silu => {
            let s = ActivationKind::Sigmoid.eval(z);
            s * (1.0 + z * (1.0 - s))
        }
        ActivationKind::Sigmoid => {
            let s = ActivationKind::Sigmoid.eval(z);
            s * (1.0 - s)
        }
        ActivationKind::Identity => 1.0,
    }
}

fn validate(train: &Dataset, arch: &MlpArch, cfg: &TrainConfig) -> Result<()> {
    let w = &arch.widths;
    if w.len() < 2 || w.contains(&0) {
        return Err(Error::invalid("architecture", "need at least two positive widths"));
    }
    let n_in: usize = train.sample_shape().iter().product();
    if w[0] != n_in {
        return Err(Error::invalid(
            "architecture",
            format!("input width {} but samples have {n_in} values", w[0]),
        ));
    }
    let out = *w.last().unwrap();
    if out != train.class_count && !(out == 1 && train.class_count == 2) {
        return Err(Error::invalid(
            "architecture",
            format!("output width {out} for {} classes", train.class_count),
        ));
    }
    if !matches!(arch.activation, ActivationKind::Relu | ActivationKind::Silu) {
        return Err(Error::invalid("architecture", "hidden activation must be relu or silu"));
    }
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::invalid("learning_rate", "must be finite and non-negative"));
    }
    if !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::invalid("momentum", "must lie in [0, 1)"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::invalid("training schedule", "epochs and batch_size must be positive"));
    }
    if train.is_empty() {
        return Err(Error::invalid("training set", "empty"));
    }
    Ok(())
}

/// Trains a dense network with mini-batch SGD and momentum on softmax
/// cross-entropy (logistic loss for a single output). Deterministic for a
/// fixed seed.
pub fn train_mlp(
    train: &Dataset,
    test: Option<&Dataset>,
    arch: &MlpArch,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    validate(train, arch, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let widths = &arch.widths;
    let mut layers: Vec<DenseParams> = widths
        .windows(2)
        .map(|p| {
            let (n_in, n_out) = (p[0], p[1]);
            let a = (6.0 / n_in as f64).sqrt();
            DenseParams {
                n_in,
                n_out,
                w: (0..n_in * n_out).map(|_| rng.gen_range(-a..a)).collect(),
                b: vec![0.0; n_out],
                vw: vec![0.0; n_in * n_out],
                vb: vec![0.0; n_out],
                gw: vec![0.0; n_in * n_out],
                gb: vec![0.0; n_out],
            }
        })
        .collect();
    let n_layers = layers.len();
    let binary = *widths.last().unwrap() == 1;
    let act = arch.activation;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    // per-layer pre-activations and outputs for one sample
    let mut zs: Vec<Vec<f64>> = widths[1..].iter().map(|&n| vec![0.0; n]).collect();
    let mut outs: Vec<Vec<f64>> = widths[1..].iter().map(|&n| vec![0.0; n]).collect();
    let mut deltas: Vec<Vec<f64>> = widths[1..].iter().map(|&n| vec![0.0; n]).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            for l in layers.iter_mut() {
                l.gw.iter_mut().for_each(|g| *g = 0.0);
                l.gb.iter_mut().for_each(|g| *g = 0.0);
            }
            let scale = 1.0 / batch.len() as f64;
            for &s in batch {
                let x = train.images.sample(s);
                for li in 0..n_layers {
                    let (prev, cur) = outs.split_at_mut(li);
                    let input: &[f64] = if li == 0 { x } else { &prev[li - 1] };
                    let l = &layers[li];
                    let last = li + 1 == n_layers;
                    for o in 0..l.n_out {
                        let z = dot(&l.w[o * l.n_in..(o + 1) * l.n_in], input) + l.b[o];
                        zs[li][o] = z;
                        cur[0][o] = if last { z } else { act.eval(z) };
                    }
                }
                let logits = &zs[n_layers - 1];
                let y = train.labels[s];
                let out_delta = &mut deltas[n_layers - 1];
                if binary {
                    let z = logits[0];
                    let t = y as f64;
                    loss_sum += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
                    out_delta[0] = ActivationKind::Sigmoid.eval(z) - t;
                    hits += usize::from((z >= 0.0) == (y == 1));
                } else {
                    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = logits.iter().map(|&z| (z - m).exp()).sum();
                    loss_sum += m + sum.ln() - logits[y];
                    for (o, d) in out_delta.iter_mut().enumerate() {
                        *d = (logits[o] - m).exp() / sum - if o == y { 1.0 } else { 0.0 };
                    }
                    hits += usize::from(super::predict(logits) == y);
                }

                for li in (0..n_layers).rev() {
                    let input: &[f64] = if li == 0 { x } else { &outs[li - 1] };
                    let (lower, upper) = deltas.split_at_mut(li);
                    let delta = &upper[0];
                    let l = &mut layers[li];
                    for (o, &dv) in delta.iter().enumerate() {
                        let g = dv * scale;
                        if g != 0.0 {
                            axpy(g, input, &mut l.gw[o * l.n_in..(o + 1) * l.n_in]);
                            l.gb[o] += g;
                        }
                    }
                    if li > 0 {
                        let below = &mut lower[li - 1];
                        below.iter_mut().for_each(|d| *d = 0.0);
                        for (o, &dv) in delta.iter().enumerate() {
                            if dv != 0.0 {
                                axpy(dv, &l.w[o * l.n_in..(o + 1) * l.n_in], below);
                            }
                        }
                        for (d, &z) in below.iter_mut().zip(&zs[li - 1]) {
                            *d *= derivative(act, z);
                        }
                    }
                }
            }
            for l in layers.iter_mut() {
                for ((w, v), g) in l.w.iter_mut().zip(&mut l.vw).zip(&l.gw) {
                    *v = cfg.momentum * *v + g;
                    *w -= cfg.learning_rate * *v;
                }
                for ((b, v), g) in l.b.iter_mut().zip(&mut l.vb).zip(&l.gb) {
                    *v = cfg.momentum * *v + g;
                    *b -= cfg.learning_rate * *v;
                }
            }
            if !loss_sum.is_finite() || layers.iter().any(|l| l.w.iter().any(|w| !w.is_finite())) {
                return Err(Error::Divergence(format!(
                    "loss or weights became non-finite in epoch {epoch}"
                )));
            }
        }
        epochs.push(EpochRecord {
            epoch,
            mean_loss: loss_sum / train.len() as f64,
            running_accuracy: hits as f64 / train.len() as f64,
        });
    }

    let mut specs = Vec::with_capacity(n_layers + 1);
    if train.sample_shape().len() > 1 {
        specs.push(LayerSpec::new(LayerKind::Flatten, ActivationKind::Identity));
    }
    for (i, l) in layers.into_iter().enumerate() {
        let activation = if i + 1 == n_layers { ActivationKind::Identity } else { act };
        specs.push(LayerSpec::dense(
            Tensor::new(vec![l.n_out, l.n_in], l.w)?,
            Tensor::vector(l.b)?,
            activation,
        ));
    }
    let net = NetworkSpec::new(specs, train.sample_shape().to_vec(), *widths.last().unwrap())?;
    let train_accuracy = net.accuracy(&train.images, &train.labels)?;
    let test_accuracy = test
        .map(|t| net.accuracy(&t.images, &t.labels))
        .transpose()?;
    Ok(TrainOutcome {
        net,
        report: TrainReport {
            arch: arch.clone(),
            config: cfg.clone(),
            epochs,
            train_accuracy,
            test_accuracy,
        },
    })
}
