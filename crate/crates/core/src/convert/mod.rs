//! ANN to SNN conversion: shared FS parameters per activation kind, ReLU
//! scale calibration and linear-layer collapsing.

mod collapse;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fs::{make_relu_params, ActivationKind, FsParams};
use crate::nn::{read_manifest_extras, write_with_extras, Dtype, LayerKind, LayerStats, NetworkSpec};
use crate::{Error, Result};

pub use collapse::{collapse_linear, CollapseReport};

/// Safety factor applied to the observed maximum by default.
pub const DEFAULT_ALPHA_SAFETY: f64 = 1.1;

/// How the ReLU input scale `α` of each layer is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum AlphaPolicy {
    /// The same `α` for every ReLU layer.
    GlobalFixed { alpha: f64 },
    /// `safety` times the largest pre-activation seen during calibration.
    PerLayerMax { safety: f64 },
}

impl Default for AlphaPolicy {
    fn default() -> Self {
        AlphaPolicy::PerLayerMax {
            safety: DEFAULT_ALPHA_SAFETY,
        }
    }
}

/// Per-layer `α` (`Some` exactly for ReLU layers).
///
/// A ReLU layer whose calibration maximum is not positive never fires; it
/// gets `α = safety`.
pub fn calibrate_alpha(net: &NetworkSpec, stats: &[LayerStats], policy: &AlphaPolicy) -> Result<Vec<Option<f64>>> {
    let check = |v: f64, what: &'static str| {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::invalid(what, format!("must be positive, got {v}")))
        }
    };
    net.layers()
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            if layer.activation != ActivationKind::Relu {
                return Ok(None);
            }
            match *policy {
                AlphaPolicy::GlobalFixed { alpha } => check(alpha, "alpha").map(Some),
                AlphaPolicy::PerLayerMax { safety } => {
                    let safety = check(safety, "alpha safety factor")?;
                    let s = stats.iter().find(|s| s.layer == i).ok_or_else(|| {
                        Error::invalid("alpha calibration", format!("no statistics for relu layer {i}"))
                    })?;
                    Ok(Some(if s.max > 0.0 { safety * s.max } else { safety }))
                }
            }
        })
        .collect()
}

/// A network whose activation layers are FS-neuron populations.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnSpec {
    network: NetworkSpec,
    fs_table: BTreeMap<ActivationKind, FsParams>,
    alpha: Vec<Option<f64>>,
    k_by_kind: BTreeMap<ActivationKind, usize>,
    layer_params: Vec<Option<FsParams>>,
}

/// Converts a batch-norm-free network. Every non-identity activation in `net`
/// needs an entry in `fs_table`; ReLU layers use the analytic coder with the
/// `K` of the table's ReLU entry and their own `alpha`.
pub fn convert(
    net: &NetworkSpec,
    fs_table: &BTreeMap<ActivationKind, FsParams>,
    alpha: &[Option<f64>],
) -> Result<SnnSpec> {
    if let Some(i) = net
        .layers()
        .iter()
        .position(|l| matches!(l.kind, LayerKind::BatchNorm { .. }))
    {
        return Err(Error::invalid(
            "network",
            format!("batch-norm layer {i} must be folded before conversion"),
        ));
    }
    if alpha.len() != net.layers().len() {
        return Err(Error::invalid(
            "alpha",
            format!("{} entries for {} layers", alpha.len(), net.layers().len()),
        ));
    }
    for (&kind, p) in fs_table {
        if p.activation() != kind {
            return Err(Error::invalid(
                "FS parameter table",
                format!("entry for {kind} holds parameters tagged {}", p.activation()),
            ));
        }
    }

    let mut used = BTreeMap::new();
    let mut k_by_kind = BTreeMap::new();
    let mut layer_params = Vec::with_capacity(net.layers().len());
    let mut alphas = Vec::with_capacity(net.layers().len());
    for (i, layer) in net.layers().iter().enumerate() {
        let kind = layer.activation;
        if kind.is_linear() {
            layer_params.push(None);
            alphas.push(None);
            continue;
        }
        let template = fs_table.get(&kind).ok_or(Error::MissingFsParams(kind))?;
        used.insert(kind, template.clone());
        k_by_kind.insert(kind, template.num_steps());
        if kind == ActivationKind::Relu {
            let a = alpha[i].ok_or_else(|| Error::invalid("alpha", format!("relu layer {i} has no alpha")))?;
            layer_params.push(Some(make_relu_params(template.num_steps(), a)?));
            alphas.push(Some(a));
        } else {
            layer_params.push(Some(template.clone()));
            alphas.push(None);
        }
    }
    Ok(SnnSpec {
        network: net.clone(),
        fs_table: used,
        alpha: alphas,
        k_by_kind,
        layer_params,
    })
}

impl SnnSpec {
    pub fn network(&self) -> &NetworkSpec {
        &self.network
    }

    /// Shared parameters per activation kind in use.
    pub fn fs_table(&self) -> &BTreeMap<ActivationKind, FsParams> {
        &self.fs_table
    }

    /// `α` per layer, `Some` for ReLU layers.
    pub fn alpha(&self) -> &[Option<f64>] {
        &self.alpha
    }

    pub fn k_by_kind(&self) -> &BTreeMap<ActivationKind, usize> {
        &self.k_by_kind
    }

    /// FS parameters driving layer `i`, `None` for identity layers.
    pub fn layer_params(&self, i: usize) -> Option<&FsParams> {
        self.layer_params[i].as_ref()
    }

    /// Indices of the layers made of FS-neurons, in order.
    pub fn fs_layers(&self) -> Vec<usize> {
        (0..self.layer_params.len())
            .filter(|&i| self.layer_params[i].is_some())
            .collect()
    }

    /// Largest `K` over all FS layers (0 without FS layers).
    pub fn max_k(&self) -> usize {
        self.k_by_kind.values().copied().max().unwrap_or(0)
    }

    pub fn is_mixed_k(&self) -> bool {
        let mut ks = self.k_by_kind.values();
        ks.next().is_some_and(|&k| ks.any(|&o| o != k))
    }

    /// FS-neurons per inference; equals the source network's activation
    /// neuron count.
    pub fn neuron_count(&self) -> usize {
        self.network.activation_neuron_count()
    }

    pub fn parameter_count(&self) -> usize {
        self.network.parameter_count()
    }

    /// Writes the network container plus the conversion fields.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        write_with_extras(
            &self.network,
            dir.as_ref(),
            Dtype::F64,
            crate::nn::ManifestExtras {
                fs_table: Some(self.fs_table.clone()),
                alpha: Some(self.alpha.clone()),
                k_by_kind: Some(self.k_by_kind.clone()),
            },
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (net, extras, mpath) = read_manifest_extras(path.as_ref())?;
        let missing = |field: &str| Error::Manifest {
            path: mpath.clone(),
            msg: format!("not a converted network: missing \"{field}\""),
        };
        let fs_table = extras.fs_table.ok_or_else(|| missing("fs_table"))?;
        let alpha = extras.alpha.ok_or_else(|| missing("alpha"))?;
        let k_by_kind = extras.k_by_kind.ok_or_else(|| missing("k_by_kind"))?;
        let snn = convert(&net, &fs_table, &alpha)?;
        if snn.k_by_kind != k_by_kind {
            return Err(Error::Manifest {
                path: mpath,
                msg: format!("k_by_kind {k_by_kind:?} disagrees with fs_table ({:?})", snn.k_by_kind),
            });
        }
        Ok(snn)
    }
}
