//! Trace CSV header: `record,layer,neuron,t,global_step,input,potential,threshold,spike`.
//! `step` rows hold the per-step dynamics of the selected neurons; `event`
//! rows list every spike of the run with its global step.

use std::path::PathBuf;

use clap::Args;
use fewspike::convert::SnnSpec;
use fewspike::nn::Tensor;
use fewspike::sim::run_traced;

use crate::args::{emit, usage, DatasetSpec, NeuronRef, SplitArg};

pub const DEFAULT_MAX_NEURONS: usize = 1024;

#[derive(Args)]
pub struct TraceArgs {
    #[arg(long)]
    snn: PathBuf,
    /// Sample index within --dataset.
    #[arg(long)]
    input_index: Option<usize>,
    #[arg(long)]
    dataset: Option<DatasetSpec>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Literal input values, comma separated, instead of a dataset sample.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    input: Vec<f64>,
    /// Neurons to record step by step as layer:neuron (default: all).
    #[arg(long, value_delimiter = ',')]
    neurons: Vec<NeuronRef>,
    /// Refuse networks with more FS-neurons than this unless --force.
    #[arg(long, default_value_t = DEFAULT_MAX_NEURONS)]
    max_neurons: usize,
    #[arg(long)]
    force: bool,
    /// CSV file; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(a: TraceArgs) -> anyhow::Result<()> {
    let snn = SnnSpec::load(&a.snn)?;
    let net = snn.network();
    if snn.neuron_count() > a.max_neurons && !a.force {
        return Err(usage(format!(
            "network has {} FS-neurons, above --max-neurons {}; pass --force to trace it anyway",
            snn.neuron_count(),
            a.max_neurons
        )));
    }
    let input = match (a.input_index, a.input.is_empty()) {
        (Some(i), true) => {
            let ds = a.dataset.as_ref().ok_or_else(|| usage("--input-index needs --dataset"))?.load(a.split.into())?;
            if i >= ds.len() {
                return Err(usage(format!("--input-index {i} outside 0..{}", ds.len())));
            }
            ds.images.sample_tensor(i)
        }
        (None, false) => Tensor::new(net.input_shape().to_vec(), a.input.clone())?,
        _ => return Err(usage("pass exactly one of --input-index or --input")),
    };
    let watch: Vec<(usize, usize)> = if a.neurons.is_empty() {
        snn.fs_layers()
            .into_iter()
            .flat_map(|l| (0..net.layer_shapes()[l].iter().product()).map(move |n| (l, n)))
            .collect()
    } else {
        a.neurons.iter().map(|r| (r.0, r.1)).collect()
    };
    let trace = run_traced(&snn, &input, &watch)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["record", "layer", "neuron", "t", "global_step", "input", "potential", "threshold", "spike"])?;
    for n in &trace.neurons {
        for s in &n.steps {
            w.write_record([
                "step".to_string(),
                n.layer.to_string(),
                n.neuron.to_string(),
                s.t.to_string(),
                String::new(),
                n.input.to_string(),
                s.potential.to_string(),
                s.threshold.to_string(),
                u8::from(s.spike).to_string(),
            ])?;
        }
    }
    for e in &trace.events {
        let (l, n, g) = (e.layer.to_string(), e.neuron.to_string(), e.global_step.to_string());
        w.write_record(["event", &l, &n, "", &g, "", "", "", "1"])?;
    }
    emit(a.out.as_deref(), &w.into_inner()?)?;
    if a.out.is_some() {
        println!(
            "{} spikes, {} neurons traced, logits {:?}",
            trace.events.len(),
            trace.neurons.len(),
            trace.run.logits.data()
        );
    }
    Ok(())
}
