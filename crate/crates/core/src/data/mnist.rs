use std::path::Path;

use super::{format_error, read_file, Dataset, Split};
use crate::nn::Tensor;
use crate::Result;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Checks header length and magic, then returns the dimension fields.
fn parse_header(path: &Path, bytes: &[u8], magic: u32, what: &str) -> Result<Vec<usize>> {
    let ndim = (magic & 0xff) as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < 4 {
        return Err(format_error(path, bytes.len(), "truncated header"));
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(format_error(
            path,
            0,
            format!("expected {what} magic 0x{magic:08x}, found 0x{found:08x}"),
        ));
    }
    if bytes.len() < header {
        return Err(format_error(path, bytes.len(), "truncated header"));
    }
    Ok((0..ndim).map(|i| be_u32(bytes, 4 + 4 * i) as usize).collect())
}

fn check_payload(path: &Path, bytes: &[u8], header: usize, expected: usize) -> Result<()> {
    let got = bytes.len() - header;
    if got < expected {
        return Err(format_error(
            path,
            bytes.len(),
            format!("truncated payload: header promises {expected} bytes, found {got}"),
        ));
    }
    if got > expected {
        return Err(format_error(
            path,
            header + expected,
            format!("{} trailing bytes after payload", got - expected),
        ));
    }
    Ok(())
}

/// Parses a pair of MNIST IDX files. Pixels are scaled to `[0, 1]` and the
/// images have shape `[N, 1, rows, cols]`.
pub fn load_mnist(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ipath, lpath) = (images_path.as_ref(), labels_path.as_ref());

    let ibytes = read_file(ipath)?;
    let dims = parse_header(ipath, &ibytes, IMAGE_MAGIC, "image")?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    if rows == 0 || cols == 0 {
        return Err(format_error(ipath, 8, format!("degenerate image size {rows}x{cols}")));
    }
    check_payload(ipath, &ibytes, 16, n * rows * cols)?;

    let lbytes = read_file(lpath)?;
    let ldims = parse_header(lpath, &lbytes, LABEL_MAGIC, "label")?;
    if ldims[0] != n {
        return Err(format_error(
            lpath,
            4,
            format!("count mismatch: {} labels for {n} images", ldims[0]),
        ));
    }
    check_payload(lpath, &lbytes, 8, n)?;

    let mut labels = Vec::with_capacity(n);
    for (i, &b) in lbytes[8..].iter().enumerate() {
        if b > 9 {
            return Err(format_error(lpath, 8 + i, format!("label {b} out of range 0..9")));
        }
        labels.push(b as usize);
    }
    let pixels = ibytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    let images = Tensor::new(vec![n, 1, rows, cols], pixels)?;
    Dataset::new("mnist", images, labels, 10)
}

/// Loads a split from a directory holding the four standard MNIST file names.
pub fn load_mnist_dir(dir: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let dir = dir.as_ref();
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    load_mnist(
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}
