use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{run_single, SpikeAccounting, Transport};
use crate::convert::SnnSpec;
use crate::fs::{fs_step, FsNeuronState};
use crate::nn::{NetworkSpec, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Accept FS layers with different `K`; every stage then lasts the
    /// largest `K` and shorter neurons idle at the end of their window.
    pub allow_mixed_k: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub index: usize,
    /// Global step at which the logits became available.
    pub emitted_at: u64,
    pub logits: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputReport {
    pub images: usize,
    pub fs_stages: usize,
    /// Length of one collect or fire phase (the largest `K`).
    pub stage_steps: u64,
    /// Steps between consecutive inputs.
    pub cadence_steps: u64,
    /// Steps from an input entering to its logits.
    pub latency_steps: u64,
    pub first_output_step: Option<u64>,
    pub last_output_step: Option<u64>,
    pub total_steps: u64,
    /// Common gap between consecutive outputs, when all gaps agree.
    pub steady_state_interval: Option<u64>,
    pub mixed_k: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub outputs: Vec<PipelineOutput>,
    pub accounting: SpikeAccounting,
    pub report: ThroughputReport,
}

/// Layer values of one image moving through the pipeline.
struct InFlight {
    outputs: Vec<Vec<f64>>,
    /// Decoded output of the FS layer that fired last, filled by deliveries.
    acc: Vec<f64>,
}

struct Firing {
    image: usize,
    layer: usize,
    start: u64,
    states: Vec<FsNeuronState>,
}

struct Delivery {
    at: u64,
    image: usize,
    neuron: usize,
    value: f64,
}

/// Computes the identity-activation layers `outputs.len()..upto`.
fn advance(net: &NetworkSpec, input: &[f64], outputs: &mut Vec<Vec<f64>>, upto: usize) {
    for l in outputs.len()..upto {
        let x = outputs.last().map_or(input, Vec::as_slice);
        let pre = net.layers()[l].pre_activation(x, net.layer_input_shape(l), outputs);
        outputs.push(pre);
    }
}

/// Runs a stream of inputs on one global clock.
///
/// Input `i` enters at step `2K i`. The `s`-th FS layer collects input `i`
/// during `[2K(i+s), 2K(i+s)+K)` and fires during the following `K` steps;
/// spikes reach the next FS layer `K` steps after they are emitted, inside
/// its collect phase. Logits of input `i` are read out at `2K(i+L)` for `L`
/// FS layers. Outputs are bit-identical to [`run_single`].
pub fn run_pipelined(snn: &SnnSpec, inputs: &[Tensor], opts: &PipelineOptions) -> Result<PipelineRun> {
    let net = snn.network();
    for x in inputs {
        net.check_input(x)?;
    }
    let mixed_k = snn.is_mixed_k();
    if mixed_k && !opts.allow_mixed_k {
        return Err(Error::invalid(
            "pipeline",
            format!(
                "FS layers use different K ({:?}); enable mixed-K padding",
                snn.k_by_kind()
            ),
        ));
    }
    let fs = snn.fs_layers();
    let l_act = fs.len() as u64;
    let n = inputs.len();
    let mut accounting = SpikeAccounting::new(snn);
    accounting.images = n as u64;

    if l_act == 0 {
        let outputs = inputs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                Ok(PipelineOutput {
                    index: i,
                    emitted_at: i as u64,
                    logits: run_single(snn, x, Transport::Decoded)?.logits,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(PipelineRun {
            report: report(&outputs, 0, 1, 0, 0, mixed_k),
            outputs,
            accounting,
        });
    }

    let k = snn.max_k() as u64;
    let slot = 2 * k;
    let mut images: Vec<Option<InFlight>> = (0..n).map(|_| None).collect();
    let mut stages: Vec<Option<Firing>> = (0..fs.len()).map(|_| None).collect();
    let mut queue: VecDeque<Delivery> = VecDeque::new();
    let mut outputs = Vec::with_capacity(n);
    let end = if n == 0 { 0 } else { slot * (n as u64 - 1 + l_act) };
    let out_shape = net.layer_shapes().last().cloned().unwrap_or_default();

    for g in 0..=end {
        while queue.front().is_some_and(|d| d.at == g) {
            let d = queue.pop_front().unwrap();
            images[d.image].as_mut().expect("in flight").acc[d.neuron] += d.value;
        }

        // readout
        if g >= slot * l_act && (g - slot * l_act).is_multiple_of(slot) {
            let i = ((g - slot * l_act) / slot) as usize;
            if i < n {
                let mut img = images[i].take().expect("in flight");
                img.outputs.push(std::mem::take(&mut img.acc));
                advance(net, inputs[i].data(), &mut img.outputs, net.layers().len());
                let logits = Tensor::new(out_shape.clone(), img.outputs.pop().expect("non-empty"))?;
                outputs.push(PipelineOutput {
                    index: i,
                    emitted_at: g,
                    logits,
                });
            }
        }

        // entry
        if g % slot == 0 && ((g / slot) as usize) < n {
            images[(g / slot) as usize] = Some(InFlight {
                outputs: Vec::new(),
                acc: Vec::new(),
            });
        }

        // stages switching from collect to fire
        for (s, &layer) in fs.iter().enumerate() {
            let offset = k + slot * s as u64;
            if g < offset || !(g - offset).is_multiple_of(slot) {
                continue;
            }
            let i = ((g - offset) / slot) as usize;
            if i >= n {
                continue;
            }
            let img = images[i].as_mut().expect("in flight");
            if s > 0 {
                img.outputs.push(std::mem::take(&mut img.acc));
            }
            advance(net, inputs[i].data(), &mut img.outputs, layer);
            let x = img.outputs.last().map_or(inputs[i].data(), Vec::as_slice);
            let pre = net.layers()[layer].pre_activation(x, net.layer_input_shape(layer), &img.outputs);
            if let Some(a) = snn.alpha()[layer] {
                accounting.per_layer_saturated[layer] += pre.iter().filter(|&&v| v >= a).count() as u64;
            }
            img.acc = vec![0.0; pre.len()];
            stages[s] = Some(Firing {
                image: i,
                layer,
                start: g,
                states: pre.iter().map(|&v| FsNeuronState::start(v)).collect(),
            });
        }

        // firing
        for (s, stage) in stages.iter_mut().enumerate() {
            let Some(f) = stage.as_mut() else { continue };
            let t = (g - f.start + 1) as usize;
            let params = snn.layer_params(f.layer).expect("FS layer");
            if t <= params.num_steps() {
                let d = params.output_weights()[t - 1];
                let last_stage = s + 1 == fs.len();
                for (j, st) in f.states.iter_mut().enumerate() {
                    let (next, spike) = fs_step(*st, params);
                    *st = next;
                    if !spike {
                        continue;
                    }
                    accounting.per_layer_spikes[f.layer] += 1;
                    if last_stage {
                        images[f.image].as_mut().expect("in flight").acc[j] += d;
                    } else {
                        queue.push_back(Delivery {
                            at: g + k,
                            image: f.image,
                            neuron: j,
                            value: d,
                        });
                    }
                }
            }
            if t as u64 == k {
                *stage = None;
            }
        }
    }

    Ok(PipelineRun {
        report: report(&outputs, fs.len(), slot, k, slot * l_act, mixed_k),
        outputs,
        accounting,
    })
}

fn report(
    outputs: &[PipelineOutput],
    fs_stages: usize,
    cadence: u64,
    stage_steps: u64,
    latency: u64,
    mixed_k: bool,
) -> ThroughputReport {
    let gaps: Vec<u64> = outputs
        .windows(2)
        .map(|w| w[1].emitted_at - w[0].emitted_at)
        .collect();
    let steady = gaps.first().copied().filter(|g| gaps.iter().all(|x| x == g));
    let last = outputs.last().map(|o| o.emitted_at);
    ThroughputReport {
        images: outputs.len(),
        fs_stages,
        stage_steps,
        cadence_steps: cadence,
        latency_steps: latency,
        first_output_step: outputs.first().map(|o| o.emitted_at),
        last_output_step: last,
        total_steps: last.map_or(0, |l| l + 1),
        steady_state_interval: steady,
        mixed_k,
    }
}
