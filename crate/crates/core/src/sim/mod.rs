//! Time-stepped execution of converted networks: layer-sequential and
//! pipelined runs, spike accounting and ANN parity reports.

mod parity;
mod pipeline;

use serde::{Deserialize, Serialize};

use crate::convert::SnnSpec;
use crate::fs::{fs_decode, fs_step, FsNeuronState, FsParams};
use crate::nn::Tensor;
use crate::{Error, Result};

pub use parity::{accuracy_vs_k, compare_with_ann, AccuracyRow, ParityReport};
pub use pipeline::{run_pipelined, PipelineOptions, PipelineOutput, PipelineRun, ThroughputReport};

/// How decoded values travel between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    /// Each neuron's decoded value `sum_t d(t) z(t)` is computed directly.
    #[default]
    Decoded,
    /// Explicit per-step spike lists; receivers add `d(t)` per event.
    EventExact,
}

/// Spike totals per layer. Layers without FS-neurons stay at zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SpikeAccounting {
    pub per_layer_spikes: Vec<u64>,
    /// FS-neurons per image in each layer.
    pub per_layer_neurons: Vec<u64>,
    /// ReLU neurons whose input reached `α`, summed over images.
    pub per_layer_saturated: Vec<u64>,
    pub images: u64,
}

/// Derived averages of a [`SpikeAccounting`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikeSummary {
    pub images: u64,
    pub total_spikes: u64,
    pub neurons: u64,
    pub spikes_per_image: f64,
    pub spikes_per_neuron: f64,
    pub per_layer_spikes_per_neuron: Vec<Option<f64>>,
    pub saturation_rate: f64,
}

impl SpikeAccounting {
    /// Zero counts laid out for `snn`.
    pub fn new(snn: &SnnSpec) -> Self {
        let net = snn.network();
        let per_layer_neurons = (0..net.layers().len())
            .map(|i| match snn.layer_params(i) {
                Some(_) => net.layer_shapes()[i].iter().product::<usize>() as u64,
                None => 0,
            })
            .collect::<Vec<_>>();
        let n = per_layer_neurons.len();
        Self {
            per_layer_spikes: vec![0; n],
            per_layer_neurons,
            per_layer_saturated: vec![0; n],
            images: 0,
        }
    }

    pub fn total_spikes(&self) -> u64 {
        self.per_layer_spikes.iter().sum()
    }

    /// FS-neurons per image.
    pub fn neurons(&self) -> u64 {
        self.per_layer_neurons.iter().sum()
    }

    /// Combines counts of two disjoint image sets. Associative, with
    /// `SpikeAccounting::default()` as identity.
    pub fn merge(mut self, other: SpikeAccounting) -> Result<SpikeAccounting> {
        if self.per_layer_neurons.is_empty() && self.images == 0 {
            return Ok(other);
        }
        if other.per_layer_neurons.is_empty() && other.images == 0 {
            return Ok(self);
        }
        if self.per_layer_neurons != other.per_layer_neurons {
            return Err(Error::Shape("cannot merge accounting of different networks".into()));
        }
        for (a, b) in self.per_layer_spikes.iter_mut().zip(&other.per_layer_spikes) {
            *a += b;
        }
        for (a, b) in self.per_layer_saturated.iter_mut().zip(&other.per_layer_saturated) {
            *a += b;
        }
        self.images += other.images;
        Ok(self)
    }

    pub fn summary(&self) -> SpikeSummary {
        let images = self.images.max(1) as f64;
        let neurons = self.neurons();
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        SpikeSummary {
            images: self.images,
            total_spikes: self.total_spikes(),
            neurons,
            spikes_per_image: self.total_spikes() as f64 / images,
            spikes_per_neuron: ratio(self.total_spikes(), neurons) / images,
            per_layer_spikes_per_neuron: self
                .per_layer_spikes
                .iter()
                .zip(&self.per_layer_neurons)
                .map(|(&s, &n)| (n > 0).then(|| s as f64 / n as f64 / images))
                .collect(),
            saturation_rate: ratio(self.per_layer_saturated.iter().sum(), neurons) / images,
        }
    }
}

/// Output of [`run_single`].
#[derive(Debug, Clone, PartialEq)]
pub struct SnnRun {
    pub logits: Tensor,
    pub accounting: SpikeAccounting,
    /// Decoded output of every layer.
    pub layer_outputs: Vec<Vec<f64>>,
}

/// One spike: layer, neuron and the step `t` within the layer's window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LocalSpike {
    pub t: usize,
    pub neuron: usize,
}

/// Runs one FS layer. Returns decoded outputs, spike count and the number of
/// saturated inputs; `events` receives the spikes in step order when given.
pub(crate) fn fs_layer(
    pre: &[f64],
    params: &FsParams,
    alpha: Option<f64>,
    transport: Transport,
    events: Option<&mut Vec<LocalSpike>>,
) -> (Vec<f64>, u64, u64) {
    let saturated = alpha.map_or(0, |a| pre.iter().filter(|&&x| x >= a).count() as u64);
    match (transport, events) {
        (Transport::Decoded, None) => {
            let mut spikes = 0u64;
            let out = pre
                .iter()
                .map(|&x| {
                    let (v, n) = fs_decode(x, params);
                    spikes += n as u64;
                    v
                })
                .collect();
            (out, spikes, saturated)
        }
        (_, events) => {
            let mut local = Vec::new();
            let events = events.unwrap_or(&mut local);
            let start = events.len();
            let mut states: Vec<FsNeuronState> = pre.iter().map(|&x| FsNeuronState::start(x)).collect();
            for t in 1..=params.num_steps() {
                for (j, s) in states.iter_mut().enumerate() {
                    let (next, spike) = fs_step(*s, params);
                    *s = next;
                    if spike {
                        events.push(LocalSpike { t, neuron: j });
                    }
                }
            }
            let mut out = vec![0.0; pre.len()];
            let d = params.output_weights();
            for e in &events[start..] {
                out[e.neuron] += d[e.t - 1];
            }
            (out, (events.len() - start) as u64, saturated)
        }
    }
}

fn run_layers(
    snn: &SnnSpec,
    input: &Tensor,
    transport: Transport,
    mut on_layer: impl FnMut(usize, &[f64], &[LocalSpike]),
) -> Result<SnnRun> {
    let net = snn.network();
    net.check_input(input)?;
    let mut accounting = SpikeAccounting::new(snn);
    accounting.images = 1;
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(net.layers().len());
    let mut events = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        let x = outputs.last().map_or(input.data(), Vec::as_slice);
        let pre = layer.pre_activation(x, net.layer_input_shape(i), &outputs);
        events.clear();
        let out = match snn.layer_params(i) {
            None => pre.clone(),
            Some(params) => {
                let sink = (transport == Transport::EventExact).then_some(&mut events);
                let (out, spikes, sat) = fs_layer(&pre, params, snn.alpha()[i], transport, sink);
                accounting.per_layer_spikes[i] += spikes;
                accounting.per_layer_saturated[i] += sat;
                out
            }
        };
        on_layer(i, &pre, &events);
        outputs.push(out);
    }
    let shape = net.layer_shapes().last().cloned().unwrap_or_else(|| net.input_shape().to_vec());
    let logits = Tensor::new(shape, outputs.last().cloned().unwrap_or_else(|| input.data().to_vec()))?;
    Ok(SnnRun {
        logits,
        accounting,
        layer_outputs: outputs,
    })
}

/// Runs one input through the converted network layer by layer.
pub fn run_single(snn: &SnnSpec, input: &Tensor, transport: Transport) -> Result<SnnRun> {
    run_layers(snn, input, transport, |_, _, _| {})
}

/// One spike on the global clock of a single-image run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SpikeEvent {
    pub global_step: u64,
    pub layer: usize,
    pub neuron: usize,
}

/// Step `t` of one traced neuron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStep {
    pub t: usize,
    pub potential: f64,
    pub threshold: f64,
    pub spike: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeuronTrace {
    pub layer: usize,
    pub neuron: usize,
    /// Gate input `x = v(1)`.
    pub input: f64,
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnTrace {
    pub run: SnnRun,
    /// All spikes, ordered by global step.
    pub events: Vec<SpikeEvent>,
    pub neurons: Vec<NeuronTrace>,
}

/// Event-exact run of one input that records every spike plus the per-step
/// dynamics of the `(layer, neuron)` pairs in `watch`.
///
/// Global steps follow the pipeline schedule of image 0: the `s`-th FS layer
/// fires step `t` at `2 K s + K + t - 1`, with `K` the largest window.
pub fn run_traced(snn: &SnnSpec, input: &Tensor, watch: &[(usize, usize)]) -> Result<SnnTrace> {
    let net = snn.network();
    for &(layer, neuron) in watch {
        if snn.layer_params(layer).is_none() || neuron >= net.layer_shapes()[layer].iter().product() {
            return Err(Error::invalid(
                "trace selection",
                format!("layer {layer} neuron {neuron} is not an FS-neuron"),
            ));
        }
    }
    let k = snn.max_k() as u64;
    let stage_of: Vec<Option<u64>> = {
        let mut s = 0;
        (0..net.layers().len())
            .map(|i| {
                snn.layer_params(i).map(|_| {
                    s += 1;
                    s - 1
                })
            })
            .collect()
    };
    let mut events = Vec::new();
    let mut neurons = Vec::new();
    let run = run_layers(snn, input, Transport::EventExact, |i, pre, spikes| {
        let Some(stage) = stage_of[i] else { return };
        let base = 2 * k * stage + k;
        events.extend(spikes.iter().map(|e| SpikeEvent {
            global_step: base + e.t as u64 - 1,
            layer: i,
            neuron: e.neuron,
        }));
        let params = snn.layer_params(i).expect("FS layer");
        for &(layer, neuron) in watch.iter().filter(|w| w.0 == i) {
            let mut state = FsNeuronState::start(pre[neuron]);
            let mut steps = Vec::with_capacity(params.num_steps());
            for t in 1..=params.num_steps() {
                let potential = state.potential;
                let (next, spike) = fs_step(state, params);
                steps.push(TraceStep {
                    t,
                    potential,
                    threshold: params.thresholds()[t - 1],
                    spike,
                });
                state = next;
            }
            neurons.push(NeuronTrace {
                layer,
                neuron,
                input: pre[neuron],
                steps,
            });
        }
    })?;
    Ok(SnnTrace { run, events, neurons })
}
