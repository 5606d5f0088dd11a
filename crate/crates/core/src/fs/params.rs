use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ActivationKind;
use crate::{Error, Result};

/// Per-step schedules of an FS-neuron: threshold `T(t)`, reset `h(t)` and
/// output weight `d(t)` for `t = 1..=K`.
///
/// All neurons emulating the same activation share one `FsParams`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct FsParams {
    thresholds: Vec<f64>,
    resets: Vec<f64>,
    output_weights: Vec<f64>,
    activation: ActivationKind,
}

impl FsParams {
    pub fn new(
        thresholds: Vec<f64>,
        resets: Vec<f64>,
        output_weights: Vec<f64>,
        activation: ActivationKind,
    ) -> Result<Self> {
        let k = thresholds.len();
        if k == 0 {
            return Err(Error::invalid("FS parameters", "K must be at least 1"));
        }
        if resets.len() != k || output_weights.len() != k {
            return Err(Error::invalid(
                "FS parameters",
                format!(
                    "schedules must all have K={k} entries (t={k}, h={}, d={})",
                    resets.len(),
                    output_weights.len()
                ),
            ));
        }
        let finite = thresholds
            .iter()
            .chain(&resets)
            .chain(&output_weights)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("FS parameters", "non-finite entry"));
        }
        Ok(FsParams {
            thresholds,
            resets,
            output_weights,
            activation,
        })
    }

    pub fn num_steps(&self) -> usize {
        self.thresholds.len()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn resets(&self) -> &[f64] {
        &self.resets
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.output_weights
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    /// Applies `f` to every entry of `T`, `h` and `d`.
    pub fn map_entries(&self, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        FsParams::new(
            self.thresholds.iter().map(|&v| f(v)).collect(),
            self.resets.iter().map(|&v| f(v)).collect(),
            self.output_weights.iter().map(|&v| f(v)).collect(),
            self.activation,
        )
    }

    /// Flattened `[T.., h.., d..]`, the layout the fitter optimizes over.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(3 * self.num_steps());
        flat.extend_from_slice(&self.thresholds);
        flat.extend_from_slice(&self.resets);
        flat.extend_from_slice(&self.output_weights);
        flat
    }

    pub fn from_flat(flat: &[f64], activation: ActivationKind) -> Result<Self> {
        if flat.is_empty() || !flat.len().is_multiple_of(3) {
            return Err(Error::invalid(
                "FS parameters",
                format!("flat length {} is not 3*K", flat.len()),
            ));
        }
        let k = flat.len() / 3;
        FsParams::new(
            flat[..k].to_vec(),
            flat[k..2 * k].to_vec(),
            flat[2 * k..].to_vec(),
            activation,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        crate::data::write_atomic(path.as_ref(), text.as_bytes())
    }
}

/// Builds the analytic ReLU coder: `T(t) = h(t) = d(t) = alpha * 2^-t`.
///
/// Non-negative inputs below `alpha` are emitted as their `K`-bit binary
/// expansion, so multiples of `alpha * 2^-K` are reproduced exactly.
pub fn make_relu_params(num_steps: usize, alpha: f64) -> Result<FsParams> {
    if num_steps == 0 {
        return Err(Error::invalid("ReLU parameters", "K must be at least 1"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(
            "ReLU parameters",
            format!("alpha must be a positive finite number, got {alpha}"),
        ));
    }
    // powi keeps each entry an exact power-of-two multiple of alpha
    let schedule: Vec<f64> = (1..=num_steps)
        .map(|t| alpha * 2f64.powi(-(t as i32)))
        .collect();
    FsParams::new(
        schedule.clone(),
        schedule.clone(),
        schedule,
        ActivationKind::Relu,
    )
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    k: usize,
    t: Vec<f64>,
    h: Vec<f64>,
    d: Vec<f64>,
    activation: String,
}

impl TryFrom<RawParams> for FsParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        for (name, len) in [("t", raw.t.len()), ("h", raw.h.len()), ("d", raw.d.len())] {
            if len != raw.k {
                return Err(Error::invalid(
                    "FS parameters",
                    format!("array \"{name}\" has {len} entries but k = {}", raw.k),
                ));
            }
        }
        let activation = raw.activation.parse()?;
        FsParams::new(raw.t, raw.h, raw.d, activation)
    }
}

impl From<FsParams> for RawParams {
    fn from(p: FsParams) -> Self {
        RawParams {
            k: p.num_steps(),
            activation: p.activation.name().to_string(),
            t: p.thresholds,
            h: p.resets,
            d: p.output_weights,
        }
    }
}
