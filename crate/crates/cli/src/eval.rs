use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use fewspike::convert::SnnSpec;
use fewspike::nn::predict;
use fewspike::sim::{compare_with_ann, run_pipelined, PipelineOptions, Transport};
use serde::Serialize;
use serde_json::json;

use crate::args::{emit, to_json, DatasetSpec, SplitArg};
use crate::convert::prepare_net;

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sequential,
    Pipelined,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Source network (the ANN).
    #[arg(long)]
    net: PathBuf,
    /// Converted network.
    #[arg(long)]
    snn: PathBuf,
    #[arg(long)]
    dataset: DatasetSpec,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Evaluate the first N samples only.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, value_enum, default_value = "sequential")]
    mode: Mode,
    /// Let the pipeline run FS layers with different K.
    #[arg(long)]
    allow_mixed_k: bool,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Throughput {
    /// Steps between consecutive images entering the network.
    cadence_steps: Option<u64>,
    /// Steps from an image entering to its logits.
    latency_steps: u64,
    /// Images finished per `2 K` steps (`K` the largest window).
    images_per_2k_steps: Option<f64>,
}

pub fn run(a: EvalArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let net = prepare_net(&a.net, false)?;
    let snn = SnnSpec::load(&a.snn)?;
    let mut ds = a.dataset.load(a.split.into())?;
    if let Some(n) = a.limit {
        ds = ds.head(n);
    }
    let window = 2 * snn.max_k() as u64;
    let stages = snn.fs_layers().len() as u64;
    let latency = window * stages;

    let (ann_accuracy, snn_accuracy, spikes, throughput) = match a.mode {
        Mode::Sequential => {
            let rep = compare_with_ann(&net, &snn, &ds.images, &ds.labels, f64::INFINITY, Transport::Decoded)?;
            let throughput = Throughput {
                cadence_steps: (latency > 0).then_some(latency),
                latency_steps: latency,
                images_per_2k_steps: (stages > 0).then(|| 1.0 / stages as f64),
            };
            (rep.ann_accuracy, rep.snn_accuracy, rep.spikes, throughput)
        }
        Mode::Pipelined => {
            let inputs: Vec<_> = (0..ds.len()).map(|i| ds.images.sample_tensor(i)).collect();
            let opts = PipelineOptions {
                allow_mixed_k: a.allow_mixed_k,
            };
            let run = run_pipelined(&snn, &inputs, &opts)?;
            let hits = run
                .outputs
                .iter()
                .filter(|o| predict(o.logits.data()) == ds.labels[o.index])
                .count();
            let r = &run.report;
            let cadence = r.steady_state_interval.unwrap_or(r.cadence_steps);
            let throughput = Throughput {
                cadence_steps: Some(cadence),
                latency_steps: r.latency_steps,
                images_per_2k_steps: (cadence > 0 && window > 0).then(|| window as f64 / cadence as f64),
            };
            let ann = net.accuracy(&ds.images, &ds.labels)?;
            (ann, hits as f64 / ds.len() as f64, run.accounting.summary(), throughput)
        }
    };

    let (spn, cadence) = (spikes.spikes_per_neuron, throughput.cadence_steps);
    let report = json!({
        "command": "eval",
        "config": {
            "net": a.net,
            "snn": a.snn,
            "dataset": a.dataset.to_string(),
            "split": format!("{:?}", a.split).to_lowercase(),
            "limit": a.limit,
            "mode": a.mode,
            "allow_mixed_k": a.allow_mixed_k,
        },
        "images": ds.len(),
        "ann_accuracy": ann_accuracy,
        "snn_accuracy": snn_accuracy,
        "accuracy_delta_pp": 100.0 * (snn_accuracy - ann_accuracy),
        "spikes_per_neuron": spikes.spikes_per_neuron,
        "total_spikes": spikes.total_spikes,
        "spikes": spikes,
        "k_by_kind": snn.k_by_kind(),
        "throughput": throughput,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    emit(a.out.as_deref(), &to_json(&report)?)?;
    if a.out.is_some() {
        println!(
            "ann {ann_accuracy:.4}, snn {snn_accuracy:.4}, {spn:.3} spikes/neuron, cadence {} steps",
            cadence.map_or("n/a".into(), |c| c.to_string())
        );
    }
    Ok(())
}
