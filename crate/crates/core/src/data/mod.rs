//! Dataset loaders (MNIST IDX, CIFAR-10 binary), normalization and atomic
//! file output.

mod cifar;
mod mnist;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::Tensor;
use crate::{Error, Result};

pub use cifar::{load_cifar10, load_cifar10_dir, CIFAR_RECORD_BYTES};
pub use mnist::{load_mnist, load_mnist_dir};

/// Which half of a dataset to read from a standard directory layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Pixel transform applied on top of the loaders' `[0, 1]` scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Normalization {
    /// Pixels in `[0, 1]`.
    Unit,
    /// `(p - mean[c]) / std[c]` per channel; a single entry applies to all.
    PerChannel { mean: Vec<f64>, std: Vec<f64> },
}

/// Images `[N, C, H, W]` with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub normalization: Normalization,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        images: Tensor,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if images.batch_len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.batch_len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::invalid(
                "label",
                format!("{l} outside 0..{class_count}"),
            ));
        }
        Ok(Self {
            name: name.into(),
            images,
            labels,
            class_count,
            normalization: Normalization::Unit,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        self.images.sample_shape()
    }

    /// The first `n` samples (or all of them if there are fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            images: self.images.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            normalization: self.normalization.clone(),
        }
    }
}

fn channel_stats(scheme: &Normalization, channels: usize) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let Normalization::PerChannel { mean, std } = scheme else {
        return Ok(None);
    };
    let expand = |v: &[f64], what: &'static str| -> Result<Vec<f64>> {
        match v.len() {
            1 => Ok(vec![v[0]; channels]),
            n if n == channels => Ok(v.to_vec()),
            n => Err(Error::invalid(
                what,
                format!("{n} entries for {channels} channels"),
            )),
        }
    };
    let mean = expand(mean, "normalization mean")?;
    let std = expand(std, "normalization std")?;
    if let Some(c) = std.iter().position(|&s| s == 0.0 || !s.is_finite()) {
        return Err(Error::invalid(
            "normalization std",
            format!("channel {c} has std {}", std[c]),
        ));
    }
    Ok(Some((mean, std)))
}

fn map_channels(ds: &Dataset, f: impl Fn(usize, f64) -> f64) -> Result<Tensor> {
    let shape = ds.images.shape().to_vec();
    let channels = shape.get(1).copied().unwrap_or(1);
    let plane: usize = shape.iter().skip(2).product();
    let data = ds
        .images
        .data()
        .iter()
        .enumerate()
        .map(|(i, &p)| f((i / plane) % channels, p))
        .collect();
    Tensor::new(shape, data)
}

/// Applies `scheme` to a dataset still in `[0, 1]` pixel scale.
pub fn normalize(ds: &Dataset, scheme: &Normalization) -> Result<Dataset> {
    if ds.normalization != Normalization::Unit {
        return Err(Error::invalid("normalization", "dataset is already normalized"));
    }
    let channels = ds.images.shape().get(1).copied().unwrap_or(1);
    let images = match channel_stats(scheme, channels)? {
        None => ds.images.clone(),
        Some((mean, std)) => map_channels(ds, |c, p| (p - mean[c]) / std[c])?,
    };
    Ok(Dataset {
        images,
        normalization: scheme.clone(),
        ..ds.clone()
    })
}

/// Undoes [`normalize`], returning pixels to `[0, 1]` scale.
pub fn denormalize(ds: &Dataset) -> Result<Dataset> {
    let channels = ds.images.shape().get(1).copied().unwrap_or(1);
    let images = match channel_stats(&ds.normalization, channels)? {
        None => ds.images.clone(),
        Some((mean, std)) => map_channels(ds, |c, p| p * std[c] + mean[c])?,
    };
    Ok(Dataset {
        images,
        normalization: Normalization::Unit,
        ..ds.clone()
    })
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// followed by a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid("output path", format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn format_error(path: &Path, offset: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        msg: msg.into(),
    }
}
