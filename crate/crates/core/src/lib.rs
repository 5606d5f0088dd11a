//! Few-spike (FS) neurons and ANN-to-SNN conversion.
//!
//! An FS-neuron emulates one ANN activation over `K` internal time steps. At
//! step `t` it fires when its membrane potential reaches the threshold `T(t)`,
//! subtracts `h(t)` on a spike, and contributes `d(t)` to its decoded output.
//! The crate covers the neuron model ([`fs`]), fitting its parameters to
//! arbitrary activations ([`fit`]), a small reference ANN ([`nn`]), network
//! conversion ([`convert`]), time-stepped SNN execution ([`sim`]) and the
//! dataset loaders used by the experiments ([`data`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convert;
pub mod data;
mod error;
pub mod fit;
pub mod fs;
pub mod nn;
pub mod sim;

pub use error::{Error, Result};
