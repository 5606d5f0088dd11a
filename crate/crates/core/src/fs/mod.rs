//! The FS-neuron model: dynamics, analytic ReLU parameters, quantization and
//! approximation metrics.

mod activation;
mod metrics;
mod neuron;
mod params;
mod quant;

pub use activation::{Activation, ActivationKind};
pub use metrics::{approximation_mse, linspace, spike_count_profile, union_mse};
pub use neuron::{fs_decode, fs_simulate, fs_step, relu_closed_form, FsNeuronState, FsOutput};
pub use params::{make_relu_params, FsParams};
pub use quant::{quantize_params, QuantizationSpec};
