//! Flag value types shared by several subcommands.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fewspike::data::{load_cifar10_dir, load_mnist_dir, Dataset, Split};
use fewspike::nn::Tensor;

/// Raised for bad flag combinations; maps to exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// `mnist:<dir>`, `cifar10:<dir>` or `xor`.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Mnist(PathBuf),
    Cifar10(PathBuf),
    /// The four XOR corners, 64 copies each; both splits are the same.
    Xor,
}

impl DatasetSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            DatasetSpec::Mnist(_) => "mnist",
            DatasetSpec::Cifar10(_) => "cifar10",
            DatasetSpec::Xor => "xor",
        }
    }

    pub fn load(&self, split: Split) -> fewspike::Result<Dataset> {
        match self {
            DatasetSpec::Mnist(dir) => load_mnist_dir(dir, split),
            DatasetSpec::Cifar10(dir) => load_cifar10_dir(dir, split),
            DatasetSpec::Xor => {
                let (mut x, mut y) = (Vec::new(), Vec::new());
                for i in 0..256 {
                    let (a, b) = (i % 2, (i / 2) % 2);
                    x.extend([a as f64, b as f64]);
                    y.push(a ^ b);
                }
                Dataset::new("xor", Tensor::new(vec![256, 2], x)?, y, 2)
            }
        }
    }
}

impl FromStr for DatasetSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("mnist", dir)) if !dir.is_empty() => Ok(DatasetSpec::Mnist(dir.into())),
            Some(("cifar10", dir)) if !dir.is_empty() => Ok(DatasetSpec::Cifar10(dir.into())),
            None if s == "xor" => Ok(DatasetSpec::Xor),
            _ => Err(format!("expected mnist:<dir>, cifar10:<dir> or xor, got \"{s}\"")),
        }
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Mnist(d) | DatasetSpec::Cifar10(d) => write!(f, "{}:{}", self.kind(), d.display()),
            DatasetSpec::Xor => f.write_str("xor"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

/// `fixed:<v>` or `calibrate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSpec {
    Fixed(f64),
    Calibrate,
}

impl FromStr for AlphaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "calibrate" {
            return Ok(AlphaSpec::Calibrate);
        }
        let v = s
            .strip_prefix("fixed:")
            .ok_or_else(|| format!("expected fixed:<value> or calibrate, got \"{s}\""))?;
        match v.parse::<f64>() {
            Ok(a) if a > 0.0 && a.is_finite() => Ok(AlphaSpec::Fixed(a)),
            _ => Err(format!("alpha must be a positive number, got \"{v}\"")),
        }
    }
}

impl fmt::Display for AlphaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaSpec::Fixed(a) => write!(f, "fixed:{a}"),
            AlphaSpec::Calibrate => f.write_str("calibrate"),
        }
    }
}

/// `<dataset kind>:<count>`, e.g. `mnist:1000`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibSpec {
    pub kind: String,
    pub count: usize,
}

impl FromStr for CalibSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("expected <dataset>:<count>, got \"{s}\"");
        let (kind, n) = s.split_once(':').ok_or_else(bad)?;
        let count = n.parse().ok().filter(|&c| c > 0).ok_or_else(bad)?;
        Ok(CalibSpec {
            kind: kind.to_string(),
            count,
        })
    }
}

/// `lo:hi` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval(pub [f64; 2]);

impl FromStr for Interval {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("expected <lo>:<hi>, got \"{s}\"");
        let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
        let (lo, hi): (f64, f64) = (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
        if lo < hi && lo.is_finite() && hi.is_finite() {
            Ok(Interval([lo, hi]))
        } else {
            Err(format!("interval {s} must satisfy lo < hi"))
        }
    }
}

/// `<layer>:<neuron>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronRef(pub usize, pub usize);

impl FromStr for NeuronRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split_once(':')
            .and_then(|(l, n)| Some(NeuronRef(l.parse().ok()?, n.parse().ok()?)))
            .ok_or_else(|| format!("expected <layer>:<neuron>, got \"{s}\""))
    }
}

/// Writes `bytes` atomically to `out`, or to stdout without a path.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(p) => fewspike::data::write_atomic(p, bytes)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
        }
    }
    Ok(())
}

pub fn to_json(value: &impl serde::Serialize) -> anyhow::Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}
