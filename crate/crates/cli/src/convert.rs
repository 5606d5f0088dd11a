use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use fewspike::convert::{calibrate_alpha, collapse_linear, convert, AlphaPolicy, DEFAULT_ALPHA_SAFETY};
use fewspike::data::Split;
use fewspike::fs::{make_relu_params, quantize_params, ActivationKind, FsParams, QuantizationSpec};
use fewspike::nn::{activation_stats, fold_batchnorm, load_network, HistogramSpec, LayerKind, NetworkSpec};
use serde_json::json;

use crate::args::{emit, to_json, usage, AlphaSpec, CalibSpec, DatasetSpec};

pub const REPORT_FILE: &str = "convert_report.json";

#[derive(Args)]
pub struct ConvertArgs {
    /// Trained network directory or manifest.
    #[arg(long)]
    net: PathBuf,
    /// FS parameter file for a non-ReLU activation; repeat for each kind.
    #[arg(long = "fs-params")]
    fs_params: Vec<PathBuf>,
    /// Time steps of the ReLU coder.
    #[arg(long)]
    k: Option<usize>,
    /// Quantize the fitted (non-ReLU) parameters to 2^Q levels.
    #[arg(long)]
    q: Option<u32>,
    /// ReLU input scale: fixed:<v> or calibrate.
    #[arg(long)]
    alpha: Option<AlphaSpec>,
    /// Calibration set for --alpha calibrate, e.g. mnist:1000 (taken from
    /// the training split of --dataset).
    #[arg(long)]
    calib: Option<CalibSpec>,
    #[arg(long)]
    dataset: Option<DatasetSpec>,
    /// Merge consecutive linear layers before converting.
    #[arg(long)]
    collapse: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Loaded network with batch-norm folded in and, optionally, linear runs
/// collapsed.
pub fn prepare_net(path: &PathBuf, collapse: bool) -> anyhow::Result<NetworkSpec> {
    let mut net = load_network(path)?;
    if net.layers().iter().any(|l| matches!(l.kind, LayerKind::BatchNorm { .. })) {
        net = fold_batchnorm(&net)?;
    }
    if collapse {
        net = collapse_linear(&net)?.0;
    }
    Ok(net)
}

/// Parameter table from `--fs-params` files, optionally quantized, plus a
/// ReLU entry when `k` is given.
pub fn load_table(
    paths: &[PathBuf],
    k: Option<usize>,
    q: Option<u32>,
) -> anyhow::Result<BTreeMap<ActivationKind, FsParams>> {
    let mut table = BTreeMap::new();
    for p in paths {
        let mut params = FsParams::load(p)?;
        let kind = params.activation();
        if kind == ActivationKind::Relu {
            return Err(usage(format!(
                "{}: relu parameters are derived from --k and --alpha, not read from files",
                p.display()
            )));
        }
        if let Some(bits) = q {
            params = quantize_params(&params, &QuantizationSpec::new(bits))?;
        }
        if table.insert(kind, params).is_some() {
            return Err(usage(format!("--fs-params given twice for {kind}")));
        }
    }
    if let Some(k) = k {
        table.insert(ActivationKind::Relu, make_relu_params(k, 1.0)?);
    }
    Ok(table)
}

/// Per-layer alpha for `net`.
pub fn resolve_alpha(
    net: &NetworkSpec,
    alpha: Option<AlphaSpec>,
    calib: Option<&CalibSpec>,
    dataset: Option<&DatasetSpec>,
) -> anyhow::Result<Vec<Option<f64>>> {
    if !net.layers().iter().any(|l| l.activation == ActivationKind::Relu) {
        return Ok(vec![None; net.layers().len()]);
    }
    match alpha {
        None => Err(usage("the network has relu layers: pass --alpha fixed:<v> or --alpha calibrate")),
        Some(AlphaSpec::Fixed(a)) => Ok(calibrate_alpha(net, &[], &AlphaPolicy::GlobalFixed { alpha: a })?),
        Some(AlphaSpec::Calibrate) => {
            let calib = calib.ok_or_else(|| usage("--alpha calibrate needs --calib <dataset>:<count>"))?;
            let ds = dataset.ok_or_else(|| usage(format!("--calib {}:.. needs --dataset", calib.kind)))?;
            if ds.kind() != calib.kind {
                return Err(usage(format!("--calib {} does not match --dataset {ds}", calib.kind)));
            }
            let samples = ds.load(Split::Train)?.head(calib.count);
            let stats = activation_stats(net, &samples.images, &HistogramSpec::default())?;
            let policy = AlphaPolicy::PerLayerMax {
                safety: DEFAULT_ALPHA_SAFETY,
            };
            Ok(calibrate_alpha(net, &stats, &policy)?)
        }
    }
}

pub fn run(a: ConvertArgs) -> anyhow::Result<()> {
    let net = prepare_net(&a.net, a.collapse)?;
    let has_relu = net.layers().iter().any(|l| l.activation == ActivationKind::Relu);
    if has_relu && a.k.is_none() {
        return Err(usage("the network has relu layers: pass --k"));
    }
    let table = load_table(&a.fs_params, a.k, a.q)?;
    let alpha = resolve_alpha(&net, a.alpha, a.calib.as_ref(), a.dataset.as_ref())?;
    let snn = convert(&net, &table, &alpha)?;
    snn.save(&a.out)?;

    let report = json!({
        "command": "convert",
        "net": a.net,
        "fs_params": a.fs_params,
        "k": a.k,
        "q": a.q,
        "alpha_flag": a.alpha.map(|x| x.to_string()),
        "calib": a.calib.as_ref().map(|c| format!("{}:{}", c.kind, c.count)),
        "dataset": a.dataset.as_ref().map(ToString::to_string),
        "collapse": a.collapse,
        "alpha": snn.alpha(),
        "k_by_kind": snn.k_by_kind(),
        "fs_neurons": snn.neuron_count(),
        "ann_activation_neurons": net.activation_neuron_count(),
        "parameters": snn.parameter_count(),
        "ann_parameters": net.parameter_count(),
    });
    emit(Some(&a.out.join(REPORT_FILE)), &to_json(&report)?)?;
    println!(
        "fs-neurons: {} (ann activation neurons: {})",
        snn.neuron_count(),
        net.activation_neuron_count()
    );
    println!("parameters: {} (ann: {})", snn.parameter_count(), net.parameter_count());
    for (kind, k) in snn.k_by_kind() {
        println!("{kind}: K={k}");
    }
    println!("snn: {}", a.out.display());
    Ok(())
}
