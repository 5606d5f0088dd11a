use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{run_single, SpikeAccounting, SpikeSummary, Transport};
use crate::convert::{convert, SnnSpec};
use crate::fs::{make_relu_params, ActivationKind, FsParams};
use crate::nn::{predict, NetworkSpec, Tensor};
use crate::{Error, Result};

/// ANN against SNN on the same batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParityReport {
    pub images: usize,
    pub ann_accuracy: f64,
    pub snn_accuracy: f64,
    /// `snn_accuracy - ann_accuracy` in percentage points.
    pub accuracy_delta_pp: f64,
    /// Fraction of images where both predict the same class.
    pub agreement: f64,
    pub max_abs_logit_delta: f64,
    /// Largest output difference per layer; empty when the two networks
    /// have different layer counts.
    pub per_layer_max_abs_delta: Vec<f64>,
    pub tolerance: f64,
    /// `max_abs_logit_delta <= tolerance`.
    pub within_tolerance: bool,
    pub spikes: SpikeSummary,
}

struct Sample {
    ann_hit: bool,
    snn_hit: bool,
    agree: bool,
    logit_delta: f64,
    layer_delta: Vec<f64>,
    accounting: SpikeAccounting,
}

/// Runs `net` and `snn` on every sample of `batch` and compares logits,
/// layer outputs and predictions.
pub fn compare_with_ann(
    net: &NetworkSpec,
    snn: &SnnSpec,
    batch: &Tensor,
    labels: &[usize],
    tolerance: f64,
    transport: Transport,
) -> Result<ParityReport> {
    net.check_batch(batch)?;
    snn.network().check_batch(batch)?;
    if labels.len() != batch.batch_len() || labels.is_empty() {
        return Err(Error::Shape(format!(
            "{} samples but {} labels",
            batch.batch_len(),
            labels.len()
        )));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::invalid("tolerance", format!("must be non-negative, got {tolerance}")));
    }
    let same_depth = net.layers().len() == snn.network().layers().len();
    let samples = (0..batch.batch_len())
        .into_par_iter()
        .map(|i| {
            let x = batch.sample_tensor(i);
            let ann = net.layer_values(&x)?;
            let run = run_single(snn, &x, transport)?;
            let ann_logits = ann.outputs.last().map_or(x.data(), Vec::as_slice);
            let snn_logits = run.logits.data();
            let logit_delta = max_abs(ann_logits, snn_logits);
            let layer_delta = if same_depth {
                ann.outputs
                    .iter()
                    .zip(&run.layer_outputs)
                    .map(|(a, b)| max_abs(a, b))
                    .collect()
            } else {
                Vec::new()
            };
            let (pa, ps) = (predict(ann_logits), predict(snn_logits));
            Ok(Sample {
                ann_hit: pa == labels[i],
                snn_hit: ps == labels[i],
                agree: pa == ps,
                logit_delta,
                layer_delta,
                accounting: run.accounting,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = samples.len() as f64;
    let frac = |f: fn(&Sample) -> bool| samples.iter().filter(|s| f(s)).count() as f64 / n;
    let ann_accuracy = frac(|s| s.ann_hit);
    let snn_accuracy = frac(|s| s.snn_hit);
    let max_abs_logit_delta = samples.iter().map(|s| s.logit_delta).fold(0.0, f64::max);
    let mut per_layer = if same_depth { vec![0.0; net.layers().len()] } else { Vec::new() };
    for s in &samples {
        for (m, &d) in per_layer.iter_mut().zip(&s.layer_delta) {
            *m = f64::max(*m, d);
        }
    }
    let accounting = samples
        .iter()
        .try_fold(SpikeAccounting::default(), |acc, s| acc.merge(s.accounting.clone()))?;
    Ok(ParityReport {
        images: samples.len(),
        ann_accuracy,
        snn_accuracy,
        accuracy_delta_pp: 100.0 * (snn_accuracy - ann_accuracy),
        agreement: frac(|s| s.agree),
        max_abs_logit_delta,
        per_layer_max_abs_delta: per_layer,
        tolerance,
        within_tolerance: max_abs_logit_delta <= tolerance,
        spikes: accounting.summary(),
    })
}

/// One row of [`accuracy_vs_k`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub k: usize,
    pub ann_accuracy: f64,
    pub snn_accuracy: f64,
    pub spikes_per_neuron: f64,
}

/// SNN accuracy with the ReLU layers converted at each `K` in `k_values`.
/// Other activations keep their entries in `fs_table`; `alpha` is fixed
/// across rows.
pub fn accuracy_vs_k(
    net: &NetworkSpec,
    fs_table: &BTreeMap<ActivationKind, FsParams>,
    alpha: &[Option<f64>],
    k_values: &[usize],
    batch: &Tensor,
    labels: &[usize],
) -> Result<Vec<AccuracyRow>> {
    k_values
        .iter()
        .map(|&k| {
            let mut table = fs_table.clone();
            table.insert(ActivationKind::Relu, make_relu_params(k, 1.0)?);
            let snn = convert(net, &table, alpha)?;
            let rep = compare_with_ann(net, &snn, batch, labels, f64::INFINITY, Transport::Decoded)?;
            Ok(AccuracyRow {
                k,
                ann_accuracy: rep.ann_accuracy,
                snn_accuracy: rep.snn_accuracy,
                spikes_per_neuron: rep.spikes.spikes_per_neuron,
            })
        })
        .collect()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
