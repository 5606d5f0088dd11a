use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use fewspike::fit::{fit, region_mses, FitConfig};
use fewspike::fs::{make_relu_params, ActivationKind};
use serde_json::json;

use crate::args::{emit, to_json, usage, AlphaSpec};

#[derive(Args)]
pub struct FitArgs {
    /// FitConfig JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output parameter file; the report goes next to it as `<stem>.report.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct ReluArgs {
    #[arg(long)]
    k: usize,
    /// `fixed:<v>`.
    #[arg(long)]
    alpha: AlphaSpec,
    #[arg(long)]
    out: PathBuf,
}

pub fn report_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or("params".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.report.json"))
}

pub fn run(a: FitArgs, seed: Option<u64>) -> anyhow::Result<()> {
    let mut cfg = FitConfig::load(&a.config)?;
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    if cfg.target == ActivationKind::Relu {
        eprintln!(
            "warning: relu has an exact analytic coder; `fewspike relu-params --k {} --alpha fixed:<alpha>` \
             gives error-free parameters without fitting",
            cfg.num_steps
        );
    }
    let outcome = fit(&cfg).context("fit failed")?;
    outcome.params.save(&a.out)?;
    let report = report_path(&a.out);
    emit(Some(&report), &to_json(&outcome.report)?)?;

    println!(
        "fitted {} with K={} (seed {}), best iteration {} of {}",
        cfg.target, cfg.num_steps, cfg.rng_seed, outcome.report.best_iteration, cfg.iterations
    );
    for (region, mse) in region_mses(&outcome.params, &cfg.target, &cfg.region_weights)? {
        println!("  mse {region}: {mse:.6}");
    }
    println!("params: {}\nreport: {}", a.out.display(), report.display());
    Ok(())
}

pub fn run_relu(a: ReluArgs) -> anyhow::Result<()> {
    let AlphaSpec::Fixed(alpha) = a.alpha else {
        return Err(usage("relu-params needs --alpha fixed:<value>"));
    };
    let params = make_relu_params(a.k, alpha)?;
    params.save(&a.out)?;
    let report = json!({ "command": "relu-params", "k": a.k, "alpha": alpha, "quantum": alpha / 2f64.powi(a.k as i32) });
    emit(Some(&report_path(&a.out)), &to_json(&report)?)?;
    println!("relu K={} alpha={alpha}: {}", a.k, a.out.display());
    Ok(())
}
