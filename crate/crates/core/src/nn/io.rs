//! Weight container: `manifest.json` describing the layers plus `weights.bin`
//! holding every parameter tensor as little-endian floats.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LayerKind, LayerSpec, NetworkSpec, Padding, Tensor};
use crate::data::{read_file, write_atomic};
use crate::fs::{ActivationKind, FsParams};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
const FORMAT: &str = "fewspike-network";
const VERSION: u32 = 1;

/// Element type of `weights.bin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerEntry {
    kind: String,
    activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    padding: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tensors: Vec<TensorEntry>,
}

/// Fields a converted network adds to the manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub(crate) struct ManifestExtras {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs_table: Option<BTreeMap<ActivationKind, FsParams>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_by_kind: Option<BTreeMap<ActivationKind, usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    dtype: Dtype,
    input_shape: Vec<usize>,
    class_count: usize,
    layers: Vec<LayerEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fs_table: Option<BTreeMap<ActivationKind, FsParams>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k_by_kind: Option<BTreeMap<ActivationKind, usize>>,
}

fn encode(net: &NetworkSpec, dtype: Dtype) -> (Vec<LayerEntry>, Vec<u8>) {
    let mut blob = Vec::new();
    let entries = net
        .layers()
        .iter()
        .map(|layer| {
            let mut e = LayerEntry {
                kind: layer.kind.name().into(),
                activation: layer.activation.name().into(),
                stride: None,
                padding: None,
                size: None,
                source: None,
                eps: None,
                tensors: Vec::new(),
            };
            match &layer.kind {
                LayerKind::Conv2d { stride, padding, .. } => {
                    e.stride = Some(*stride);
                    e.padding = Some(
                        match padding {
                            Padding::Same => "same",
                            Padding::Valid => "valid",
                        }
                        .into(),
                    );
                }
                LayerKind::AvgPool2d { size } => e.size = Some(*size),
                LayerKind::ResidualAdd { source } => e.source = Some(*source),
                LayerKind::BatchNorm { eps, .. } => e.eps = Some(*eps),
                LayerKind::Dense { .. } | LayerKind::Flatten => {}
            }
            for (name, t) in layer.kind.tensors() {
                e.tensors.push(TensorEntry {
                    name: name.into(),
                    shape: t.shape().to_vec(),
                    offset: blob.len(),
                });
                for &v in t.data() {
                    match dtype {
                        Dtype::F32 => blob.extend_from_slice(&(v as f32).to_le_bytes()),
                        Dtype::F64 => blob.extend_from_slice(&v.to_le_bytes()),
                    }
                }
            }
            e
        })
        .collect();
    (entries, blob)
}

pub(crate) fn write_with_extras(
    net: &NetworkSpec,
    dir: &Path,
    dtype: Dtype,
    extras: ManifestExtras,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (layers, blob) = encode(net, dtype);
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        dtype,
        input_shape: net.input_shape().to_vec(),
        class_count: net.class_count(),
        layers,
        fs_table: extras.fs_table,
        alpha: extras.alpha,
        k_by_kind: extras.k_by_kind,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    write_atomic(&dir.join(WEIGHTS_FILE), &blob)?;
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
}

/// Writes `net` to directory `dir` with 64-bit weights.
pub fn save_network(net: &NetworkSpec, dir: impl AsRef<Path>) -> Result<()> {
    save_network_as(net, dir, Dtype::F64)
}

pub fn save_network_as(net: &NetworkSpec, dir: impl AsRef<Path>, dtype: Dtype) -> Result<()> {
    write_with_extras(net, dir.as_ref(), dtype, ManifestExtras::default())
}

/// Accepts either the container directory or the manifest file itself.
fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

struct Decoder<'a> {
    blob: &'a [u8],
    blob_path: PathBuf,
    dtype: Dtype,
}

impl Decoder<'_> {
    fn tensor(&self, layer: usize, entry: &TensorEntry) -> Result<Tensor> {
        let n: usize = entry.shape.iter().product();
        let end = entry.offset + n * self.dtype.size();
        let fail = |offset: usize, msg: String| Error::Format {
            path: self.blob_path.clone(),
            offset: offset as u64,
            msg: format!("layer {layer} tensor \"{}\": {msg}", entry.name),
        };
        if end > self.blob.len() {
            return Err(fail(
                self.blob.len(),
                format!(
                    "truncated: needs bytes {}..{end} but the file has {}",
                    entry.offset,
                    self.blob.len()
                ),
            ));
        }
        let bytes = &self.blob[entry.offset..end];
        let data: Vec<f64> = match self.dtype {
            Dtype::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F64 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(fail(
                entry.offset + i * self.dtype.size(),
                format!("entry {i} is not finite"),
            ));
        }
        Tensor::new(entry.shape.clone(), data)
    }
}

fn decode_layer(
    i: usize,
    e: &LayerEntry,
    dec: &Decoder,
    mpath: &Path,
) -> Result<LayerSpec> {
    let bad = |msg: String| Error::Manifest {
        path: mpath.to_path_buf(),
        msg: format!("layer {i} ({}): {msg}", e.kind),
    };
    let activation: ActivationKind = e.activation.parse().map_err(|err: Error| match err {
        Error::Validation { reason, .. } => bad(reason),
        other => other,
    })?;

    let expected: &[&str] = match e.kind.as_str() {
        "dense" | "conv2d" => &["weights", "bias"],
        "batchnorm" => &["gamma", "beta", "mean", "var"],
        "avgpool2d" | "flatten" | "residual_add" => &[],
        other => {
            return Err(bad(format!(
                "unknown layer kind \"{other}\"; supported kinds: {}",
                LayerKind::NAMES.join(", ")
            )))
        }
    };
    let names: Vec<&str> = e.tensors.iter().map(|t| t.name.as_str()).collect();
    if names != expected {
        return Err(bad(format!("expected tensors {expected:?}, found {names:?}")));
    }
    let mut tensors = e
        .tensors
        .iter()
        .map(|t| dec.tensor(i, t))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let mut next = || tensors.next().expect("count checked");

    let allowed: &[&str] = match e.kind.as_str() {
        "conv2d" => &["stride", "padding"],
        "avgpool2d" => &["size"],
        "residual_add" => &["source"],
        "batchnorm" => &["eps"],
        _ => &[],
    };
    let present = [
        ("stride", e.stride.is_some()),
        ("padding", e.padding.is_some()),
        ("size", e.size.is_some()),
        ("source", e.source.is_some()),
        ("eps", e.eps.is_some()),
    ];
    for (field, set) in present {
        if set && !allowed.contains(&field) {
            return Err(bad(format!("field \"{field}\" does not apply")));
        }
        if !set && allowed.contains(&field) {
            return Err(bad(format!("missing field \"{field}\"")));
        }
    }

    let kind = match e.kind.as_str() {
        "dense" => LayerKind::Dense {
            weights: next(),
            bias: next(),
        },
        "conv2d" => LayerKind::Conv2d {
            weights: next(),
            bias: next(),
            stride: e.stride.unwrap(),
            padding: match e.padding.as_deref().unwrap() {
                "same" => Padding::Same,
                "valid" => Padding::Valid,
                p => return Err(bad(format!("unknown padding \"{p}\"; expected same or valid"))),
            },
        },
        "avgpool2d" => LayerKind::AvgPool2d {
            size: e.size.unwrap(),
        },
        "flatten" => LayerKind::Flatten,
        "residual_add" => LayerKind::ResidualAdd {
            source: e.source.unwrap(),
        },
        _ => LayerKind::BatchNorm {
            gamma: next(),
            beta: next(),
            mean: next(),
            var: next(),
            eps: e.eps.unwrap(),
        },
    };
    Ok(LayerSpec::new(kind, activation))
}

fn read_manifest(path: &Path) -> Result<(PathBuf, Manifest)> {
    let mpath = manifest_path(path);
    let text = read_file(&mpath)?;
    let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| Error::Manifest {
        path: mpath.clone(),
        msg: e.to_string(),
    })?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::Manifest {
            path: mpath,
            msg: format!(
                "unsupported format {:?} version {} (expected {FORMAT:?} version {VERSION})",
                manifest.format, manifest.version
            ),
        });
    }
    Ok((mpath, manifest))
}

fn decode(mpath: &Path, manifest: &Manifest) -> Result<NetworkSpec> {
    let blob_path = mpath.with_file_name(WEIGHTS_FILE);
    let blob = read_file(&blob_path)?;
    let dec = Decoder {
        blob: &blob,
        blob_path: blob_path.clone(),
        dtype: manifest.dtype,
    };
    let layers = manifest
        .layers
        .iter()
        .enumerate()
        .map(|(i, e)| decode_layer(i, e, &dec, mpath))
        .collect::<Result<Vec<_>>>()?;
    NetworkSpec::new(layers, manifest.input_shape.clone(), manifest.class_count).map_err(|e| match e {
        Error::Shape(msg) => Error::Manifest {
            path: mpath.to_path_buf(),
            msg,
        },
        other => other,
    })
}

/// Reads a network from a container directory (or its `manifest.json`).
pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkSpec> {
    let (mpath, manifest) = read_manifest(path.as_ref())?;
    decode(&mpath, &manifest)
}

pub(crate) fn read_manifest_extras(path: &Path) -> Result<(NetworkSpec, ManifestExtras, PathBuf)> {
    let (mpath, manifest) = read_manifest(path)?;
    let net = decode(&mpath, &manifest)?;
    let extras = ManifestExtras {
        fs_table: manifest.fs_table,
        alpha: manifest.alpha,
        k_by_kind: manifest.k_by_kind,
    };
    Ok((net, extras, mpath))
}
