use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Activation functions an ANN layer can use and an FS-neuron can emulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Identity,
    Relu,
    Silu,
    Sigmoid,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [
        ActivationKind::Identity,
        ActivationKind::Relu,
        ActivationKind::Silu,
        ActivationKind::Sigmoid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Identity => "identity",
            ActivationKind::Relu => "relu",
            ActivationKind::Silu => "silu",
            ActivationKind::Sigmoid => "sigmoid",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            ActivationKind::Identity => x,
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Silu => x * sigmoid(x),
            ActivationKind::Sigmoid => sigmoid(x),
        }
    }

    /// Identity layers carry values through unchanged and need no FS-neurons.
    pub fn is_linear(self) -> bool {
        self == ActivationKind::Identity
    }
}

fn sigmoid(x: f64) -> f64 {
    // split on sign so exp never overflows
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ActivationKind::ALL.iter().map(|k| k.name()).collect();
                Error::invalid(
                    "activation",
                    format!("unknown activation \"{s}\"; supported kinds: {}", names.join(", ")),
                )
            })
    }
}

/// A real-valued scalar function used as an approximation target.
///
/// Implemented for [`ActivationKind`] and for plain closures, so tests and
/// sweeps can target ad-hoc functions.
pub trait Activation: Sync {
    fn eval(&self, x: f64) -> f64;
}

impl Activation for ActivationKind {
    fn eval(&self, x: f64) -> f64 {
        ActivationKind::eval(*self, x)
    }
}

impl<F: Fn(f64) -> f64 + Sync> Activation for F {
    fn eval(&self, x: f64) -> f64 {
        self(x)
    }
}
