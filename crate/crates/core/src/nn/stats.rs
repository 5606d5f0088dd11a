use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{NetworkSpec, Tensor};
use crate::fs::{linspace, ActivationKind};
use crate::{Error, Result};

/// Equal-width histogram bins over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            lo: -10.0,
            hi: 10.0,
            bins: 80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Values below the first edge.
    pub below: u64,
    /// Values above the last edge.
    pub above: u64,
}

impl Histogram {
    fn new(spec: &HistogramSpec) -> Self {
        Self {
            edges: linspace(spec.lo, spec.hi, spec.bins + 1).collect(),
            counts: vec![0; spec.bins],
            below: 0,
            above: 0,
        }
    }

    fn add(&mut self, v: f64) {
        let (lo, hi) = (self.edges[0], *self.edges.last().unwrap());
        if v < lo {
            self.below += 1;
        } else if v > hi {
            self.above += 1;
        } else {
            let bins = self.counts.len();
            let i = (((v - lo) / (hi - lo)) * bins as f64) as usize;
            self.counts[i.min(bins - 1)] += 1;
        }
    }
}

/// Statistics of all pre-activation scalars of one activation layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerStats {
    pub layer: usize,
    pub activation: ActivationKind,
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
}

/// Pre-activation statistics of every layer with a non-identity activation,
/// over a calibration batch `[N, ..input_shape]`.
pub fn activation_stats(
    net: &NetworkSpec,
    calibration: &Tensor,
    histogram: &HistogramSpec,
) -> Result<Vec<LayerStats>> {
    if calibration.batch_len() == 0 {
        return Err(Error::invalid("calibration batch", "empty"));
    }
    if !(histogram.lo < histogram.hi) || histogram.bins == 0 {
        return Err(Error::invalid("histogram", "need lo < hi and at least one bin"));
    }
    net.check_batch(calibration)?;
    let layers: Vec<usize> = net
        .layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.activation.is_linear())
        .map(|(i, _)| i)
        .collect();

    let per_sample: Vec<Vec<Vec<f64>>> = (0..calibration.batch_len())
        .into_par_iter()
        .map(|i| {
            let mut values = net.layer_values(&calibration.sample_tensor(i))?;
            Ok(layers
                .iter()
                .map(|&l| std::mem::take(&mut values.pre_activations[l]))
                .collect())
        })
        .collect::<Result<_>>()?;

    Ok(layers
        .iter()
        .enumerate()
        .map(|(j, &layer)| {
            let (mut n, mut mean, mut m2) = (0u64, 0.0, 0.0);
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            let mut hist = Histogram::new(histogram);
            for v in per_sample.iter().flat_map(|s| s[j].iter().copied()) {
                n += 1;
                let delta = v - mean;
                mean += delta / n as f64;
                m2 += delta * (v - mean);
                min = min.min(v);
                max = max.max(v);
                hist.add(v);
            }
            LayerStats {
                layer,
                activation: net.layers()[layer].activation,
                count: n,
                mean,
                variance: if n > 0 { m2 / n as f64 } else { 0.0 },
                min,
                max,
                histogram: hist,
            }
        })
        .collect())
}
