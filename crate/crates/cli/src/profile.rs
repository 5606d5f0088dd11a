//! CSV profiles. Headers per kind:
//!
//! - `spikes_vs_x`: `x,spikes,value`
//! - `mse_vs_k`: `k,region,mse`
//! - `mse_vs_q`: `q,region,mse` (first rows keyed `unquantized`)
//! - `accuracy_vs_k`: `k,ann_accuracy,snn_accuracy,spikes_per_neuron`

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use fewspike::data::Split;
use fewspike::fit::{sweep_k, sweep_q, FitConfig, Region};
use fewspike::fs::{fs_decode, linspace, make_relu_params, FsParams};
use fewspike::sim::accuracy_vs_k;

use crate::args::{emit, usage, AlphaSpec, CalibSpec, DatasetSpec, Interval};
use crate::convert::{load_table, prepare_net, resolve_alpha};

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
pub enum What {
    #[value(name = "spikes_vs_x")]
    SpikesVsX,
    #[value(name = "mse_vs_k")]
    MseVsK,
    #[value(name = "mse_vs_q")]
    MseVsQ,
    #[value(name = "accuracy_vs_k")]
    AccuracyVsK,
}

#[derive(Args)]
pub struct ProfileArgs {
    #[arg(value_enum)]
    what: What,
    /// FS parameter file(s).
    #[arg(long = "fs-params")]
    fs_params: Vec<PathBuf>,
    /// K value(s), comma separated for sweeps.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    /// Q value(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    q: Vec<u32>,
    /// fixed:<v> (or calibrate for accuracy_vs_k).
    #[arg(long)]
    alpha: Option<AlphaSpec>,
    /// Input range lo:hi.
    #[arg(long, allow_hyphen_values = true)]
    range: Option<Interval>,
    /// Grid points for spikes_vs_x.
    #[arg(long, default_value_t = 1001)]
    points: usize,
    /// FitConfig JSON: the fit template for mse_vs_k, the regions for mse_vs_q.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<DatasetSpec>,
    #[arg(long)]
    calib: Option<CalibSpec>,
    /// Evaluate the first N test samples only.
    #[arg(long)]
    limit: Option<usize>,
    /// CSV file; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn single_params(a: &ProfileArgs) -> anyhow::Result<FsParams> {
    match (a.fs_params.as_slice(), a.k.as_slice(), a.alpha) {
        ([p], [], _) => Ok(FsParams::load(p)?),
        ([], [k], Some(AlphaSpec::Fixed(alpha))) => Ok(make_relu_params(*k, alpha)?),
        _ => Err(usage("pass one --fs-params file, or a single --k with --alpha fixed:<v> for relu")),
    }
}

fn load_config(a: &ProfileArgs, seed: Option<u64>) -> anyhow::Result<Option<FitConfig>> {
    let Some(path) = &a.config else { return Ok(None) };
    let mut cfg = FitConfig::load(path)?;
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    Ok(Some(cfg))
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(w.into_inner()?)
}

pub fn run(a: ProfileArgs, seed: Option<u64>) -> anyhow::Result<()> {
    let bytes = match a.what {
        What::SpikesVsX => {
            let params = single_params(&a)?;
            let range = a.range.ok_or_else(|| usage("spikes_vs_x needs --range lo:hi"))?;
            if a.points < 2 {
                return Err(usage("--points must be at least 2"));
            }
            let rows = linspace(range.0[0], range.0[1], a.points).map(|x| {
                let (value, spikes) = fs_decode(x, &params);
                vec![x.to_string(), spikes.to_string(), value.to_string()]
            });
            csv_bytes(&["x", "spikes", "value"], rows)?
        }
        What::MseVsK => {
            let cfg = load_config(&a, seed)?.ok_or_else(|| usage("mse_vs_k needs --config"))?;
            if a.k.is_empty() {
                return Err(usage("mse_vs_k needs --k with the values to sweep"));
            }
            let table = sweep_k(&cfg.target, &a.k, &cfg);
            if table.is_partial() {
                emit(a.out.as_deref(), table.to_csv().as_bytes())?;
                let failed: Vec<String> = table.failures.iter().map(|(k, e)| format!("K={k}: {e}")).collect();
                anyhow::bail!("sweep incomplete: {}", failed.join("; "));
            }
            table.to_csv().into_bytes()
        }
        What::MseVsQ => {
            let params = single_params(&a)?;
            if a.q.is_empty() {
                return Err(usage("mse_vs_q needs --q with the values to sweep"));
            }
            let regions = match (load_config(&a, seed)?, a.range) {
                (Some(cfg), _) => {
                    let mut r = cfg.region_weights.clone();
                    if !r.iter().any(|r| r.name == "all") {
                        r.push(Region::new("all", vec![cfg.train_interval], 1.0));
                    }
                    r
                }
                (None, Some(range)) => vec![Region::new("all", vec![range.0], 1.0)],
                (None, None) => return Err(usage("mse_vs_q needs --config or --range")),
            };
            sweep_q(&params, &params.activation(), &a.q, &regions)?.to_csv().into_bytes()
        }
        What::AccuracyVsK => {
            let net_path = a.net.as_ref().ok_or_else(|| usage("accuracy_vs_k needs --net"))?;
            let ds_spec = a.dataset.as_ref().ok_or_else(|| usage("accuracy_vs_k needs --dataset"))?;
            if a.k.is_empty() {
                return Err(usage("accuracy_vs_k needs --k with the values to sweep"));
            }
            let net = prepare_net(net_path, false)?;
            let table = load_table(&a.fs_params, None, None)?;
            let alpha = resolve_alpha(&net, a.alpha, a.calib.as_ref(), Some(ds_spec))?;
            let mut ds = ds_spec.load(Split::Test)?;
            if let Some(n) = a.limit {
                ds = ds.head(n);
            }
            let rows = accuracy_vs_k(&net, &table, &alpha, &a.k, &ds.images, &ds.labels)?;
            let rows = rows.into_iter().map(|r| {
                vec![
                    r.k.to_string(),
                    r.ann_accuracy.to_string(),
                    r.snn_accuracy.to_string(),
                    r.spikes_per_neuron.to_string(),
                ]
            });
            csv_bytes(&["k", "ann_accuracy", "snn_accuracy", "spikes_per_neuron"], rows)?
        }
    };
    emit(a.out.as_deref(), &bytes)
}
