use std::path::PathBuf;

use clap::Args;
use fewspike::data::Split;
use fewspike::fs::ActivationKind;
use fewspike::nn::{save_network, train_mlp, MlpArch, TrainConfig};
use serde_json::json;

use crate::args::{emit, to_json, usage, DatasetSpec};

pub const REPORT_FILE: &str = "train_report.json";

#[derive(Args)]
pub struct TrainArgs {
    /// mnist:<dir>, cifar10:<dir> or xor.
    #[arg(long)]
    dataset: DatasetSpec,
    /// Layer widths, input first, e.g. 784-128-128-10.
    #[arg(long)]
    arch: String,
    /// Hidden activation (relu or silu).
    #[arg(long, default_value = "relu")]
    activation: ActivationKind,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    /// Train on the first N training samples only.
    #[arg(long)]
    limit: Option<usize>,
    /// Output network directory.
    #[arg(long)]
    out: PathBuf,
}

fn parse_arch(s: &str) -> anyhow::Result<Vec<usize>> {
    s.split('-')
        .map(|w| w.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--arch expects widths like 784-128-10, got \"{s}\"")))
}

pub fn run(a: TrainArgs, seed: Option<u64>) -> anyhow::Result<()> {
    let arch = MlpArch {
        widths: parse_arch(&a.arch)?,
        activation: a.activation,
    };
    let cfg = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        momentum: a.momentum,
        seed: seed.unwrap_or(TrainConfig::default().seed),
    };
    let mut train = a.dataset.load(Split::Train)?;
    if let Some(n) = a.limit {
        train = train.head(n);
    }
    let test = a.dataset.load(Split::Test)?;
    let outcome = train_mlp(&train, Some(&test), &arch, &cfg)?;
    save_network(&outcome.net, &a.out)?;

    let report = json!({
        "command": "train",
        "dataset": a.dataset.to_string(),
        "train_samples": train.len(),
        "test_samples": test.len(),
        "report": outcome.report,
    });
    emit(Some(&a.out.join(REPORT_FILE)), &to_json(&report)?)?;
    for e in &outcome.report.epochs {
        println!("epoch {}: loss {:.4}, running accuracy {:.4}", e.epoch, e.mean_loss, e.running_accuracy);
    }
    println!(
        "train accuracy {:.4}, test accuracy {:.4}",
        outcome.report.train_accuracy,
        outcome.report.test_accuracy.unwrap_or(f64::NAN)
    );
    println!("network: {}", a.out.display());
    Ok(())
}
