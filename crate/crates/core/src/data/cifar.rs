use std::path::Path;

use super::{format_error, read_file, Dataset, Split};
use crate::nn::Tensor;
use crate::{Error, Result};

const SIDE: usize = 32;
const CHANNELS: usize = 3;
const PIXELS: usize = CHANNELS * SIDE * SIDE;

/// One label byte followed by 3072 channel-major pixels.
pub const CIFAR_RECORD_BYTES: usize = 1 + PIXELS;

/// Parses CIFAR-10 binary batch files in order. Images have shape
/// `[N, 3, 32, 32]` with pixels in `[0, 1]`.
pub fn load_cifar10<P: AsRef<Path>>(bin_paths: &[P]) -> Result<Dataset> {
    if bin_paths.is_empty() {
        return Err(Error::invalid("cifar-10 input", "no batch files given"));
    }
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in bin_paths {
        let path = path.as_ref();
        let bytes = read_file(path)?;
        if bytes.is_empty() {
            return Err(format_error(path, 0, "empty file"));
        }
        let rem = bytes.len() % CIFAR_RECORD_BYTES;
        if rem != 0 {
            return Err(format_error(
                path,
                bytes.len() - rem,
                format!(
                    "file length {} is not a multiple of the {CIFAR_RECORD_BYTES}-byte record",
                    bytes.len()
                ),
            ));
        }
        pixels.reserve(bytes.len());
        for (r, rec) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
            if rec[0] > 9 {
                return Err(format_error(
                    path,
                    r * CIFAR_RECORD_BYTES,
                    format!("label {} out of range 0..9 in record {r}", rec[0]),
                ));
            }
            labels.push(rec[0] as usize);
            pixels.extend(rec[1..].iter().map(|&b| b as f64 / 255.0));
        }
    }
    let images = Tensor::new(vec![labels.len(), CHANNELS, SIDE, SIDE], pixels)?;
    Dataset::new("cifar10", images, labels, 10)
}

/// Loads a split from the standard `cifar-10-batches-bin` directory layout.
pub fn load_cifar10_dir(dir: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let dir = dir.as_ref();
    let names: Vec<String> = match split {
        Split::Train => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
        Split::Test => vec!["test_batch.bin".into()],
    };
    let paths: Vec<_> = names.iter().map(|n| dir.join(n)).collect();
    load_cifar10(&paths)
}
