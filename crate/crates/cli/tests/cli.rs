use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fewspike::fs::{approximation_mse, fs_simulate, ActivationKind, FsParams};
use fewspike::nn::{save_network, LayerSpec, NetworkSpec, Tensor};
use serde_json::Value;

const CONFIGS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");

fn fewspike(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fewspike"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = fewspike(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

/// Dense 1 -> 1 with `act`, then a linear 1 -> 2 readout.
fn single_neuron_net(dir: &Path, act: ActivationKind) -> PathBuf {
    let gate = LayerSpec::dense(
        Tensor::new(vec![1, 1], vec![1.0]).unwrap(),
        Tensor::vector(vec![0.0]).unwrap(),
        act,
    );
    let readout = LayerSpec::dense(
        Tensor::new(vec![2, 1], vec![1.0, -1.0]).unwrap(),
        Tensor::vector(vec![0.0, 0.0]).unwrap(),
        ActivationKind::Identity,
    );
    let net = NetworkSpec::new(vec![gate, readout], vec![1], 2).unwrap();
    let path = dir.join(format!("{act}-net"));
    save_network(&net, &path).unwrap();
    path
}

fn write_idx(path: &Path, magic: u32, dims: &[u32], payload: &[u8]) {
    let mut v = magic.to_be_bytes().to_vec();
    for d in dims {
        v.extend(d.to_be_bytes());
    }
    v.extend(payload);
    std::fs::write(path, v).unwrap();
}

/// A small MNIST-format directory: 60 training and 30 test images.
fn tiny_mnist(dir: &Path) -> PathBuf {
    let root = dir.join("mnist");
    std::fs::create_dir(&root).unwrap();
    for (prefix, n) in [("train", 60u32), ("t10k", 30)] {
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        // each class lights up its own band of rows
        let mut pixels = vec![0u8; n as usize * 784];
        for (i, &l) in labels.iter().enumerate() {
            let start = i * 784 + l as usize * 56;
            pixels[start..start + 56].fill(255);
        }
        write_idx(&root.join(format!("{prefix}-images-idx3-ubyte")), 0x803, &[n, 28, 28], &pixels);
        write_idx(&root.join(format!("{prefix}-labels-idx1-ubyte")), 0x801, &[n], &labels);
    }
    root
}

#[test]
fn fit_silu_writes_params_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("silu.json");
    ok(&["fit", "--config", &format!("{CONFIGS}/silu.json"), "--out", s(&out)]);
    let params = FsParams::load(&out).unwrap();
    assert_eq!(params.num_steps(), 16);
    let mse = approximation_mse(&params, &ActivationKind::Silu, [-2.0, 2.0], 4001).unwrap();
    assert!(mse <= 0.005, "{mse}");
    let report = json(&tmp.path().join("silu.report.json"));
    assert_eq!(report["rng_seed"], 2021);
    assert_eq!(report["config"]["num_steps"], 16);
    assert!(report["region_mse"].as_array().unwrap().len() == 2);
}

#[test]
fn fit_is_deterministic_and_seed_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    let mut c = json(Path::new(&format!("{CONFIGS}/sigmoid.json")));
    c["iterations"] = 200.into();
    std::fs::write(&cfg, c.to_string()).unwrap();
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        ok(&["fit", "--config", s(&cfg), "--out", s(&out), "--seed", seed]);
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.json", "5"), run("b.json", "5"));
    assert_ne!(run("a.json", "5"), run("c.json", "6"));
    assert_eq!(json(&tmp.path().join("c.report.json"))["rng_seed"], 6);
}

#[test]
fn fit_missing_field_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    let mut c = json(Path::new(&format!("{CONFIGS}/silu.json")));
    c.as_object_mut().unwrap().remove("num_steps");
    std::fs::write(&cfg, c.to_string()).unwrap();
    let out = fewspike(&["fit", "--config", s(&cfg), "--out", s(&tmp.path().join("p.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("num_steps"), "{}", stderr(&out));
}

#[test]
fn fit_relu_warns_about_analytic_coder() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    let mut c = json(Path::new(&format!("{CONFIGS}/sigmoid.json")));
    c["target"] = "relu".into();
    c["num_steps"] = 4.into();
    c["iterations"] = 20.into();
    std::fs::write(&cfg, c.to_string()).unwrap();
    let out = ok(&["fit", "--config", s(&cfg), "--out", s(&tmp.path().join("p.json"))]);
    let err = stderr(&out);
    assert!(err.contains("warning") && err.contains("relu-params"), "{err}");
}

#[test]
fn missing_input_file_is_a_runtime_error() {
    let out = fewspike(&["fit", "--config", "/nonexistent/cfg.json", "--out", "/tmp/x.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn convert_records_fixed_alpha_and_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let net = single_neuron_net(tmp.path(), ActivationKind::Relu);
    let snn = tmp.path().join("snn");
    let out = ok(&["convert", "--net", s(&net), "--k", "10", "--alpha", "fixed:25", "--out", s(&snn)]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("fs-neurons: 1 (ann activation neurons: 1)"), "{text}");
    assert!(text.contains("parameters: 6 (ann: 6)"), "{text}");
    let report = json(&snn.join("convert_report.json"));
    assert_eq!(report["alpha"], serde_json::json!([25.0, null]));
    assert_eq!(report["alpha_flag"], "fixed:25");
}

#[test]
fn convert_without_silu_params_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let net = single_neuron_net(tmp.path(), ActivationKind::Silu);
    let out = fewspike(&["convert", "--net", s(&net), "--out", s(&tmp.path().join("snn"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("silu"), "{}", stderr(&out));
}

#[test]
fn convert_calibrates_alpha_from_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let mnist = tiny_mnist(tmp.path());
    let ds = format!("mnist:{}", s(&mnist));
    let net = tmp.path().join("net");
    ok(&["train", "--dataset", &ds, "--arch", "784-16-10", "--epochs", "2", "--out", s(&net)]);
    let snn = tmp.path().join("snn");
    ok(&[
        "convert", "--net", s(&net), "--k", "8", "--alpha", "calibrate", "--calib", "mnist:20", "--dataset", &ds,
        "--out", s(&snn),
    ]);
    let report = json(&snn.join("convert_report.json"));
    let alphas: Vec<f64> = report["alpha"].as_array().unwrap().iter().filter_map(Value::as_f64).collect();
    assert_eq!(alphas.len(), 1);
    assert!(alphas[0] > 0.0);

    let mismatch = fewspike(&[
        "convert", "--net", s(&net), "--k", "8", "--alpha", "calibrate", "--calib", "cifar10:20", "--dataset", &ds,
        "--out", s(&snn),
    ]);
    assert_eq!(mismatch.status.code(), Some(2));
}

#[test]
fn eval_identity_net_is_exact_without_spikes() {
    let tmp = tempfile::tempdir().unwrap();
    let layer = LayerSpec::dense(
        Tensor::new(vec![2, 2], vec![1.0, -1.0, -1.0, 1.0]).unwrap(),
        Tensor::vector(vec![0.0, 0.0]).unwrap(),
        ActivationKind::Identity,
    );
    let net_path = tmp.path().join("net");
    save_network(&NetworkSpec::new(vec![layer], vec![2], 2).unwrap(), &net_path).unwrap();
    let snn = tmp.path().join("snn");
    ok(&["convert", "--net", s(&net_path), "--out", s(&snn)]);
    for mode in ["sequential", "pipelined"] {
        let rep_path = tmp.path().join(format!("{mode}.json"));
        ok(&[
            "eval", "--net", s(&net_path), "--snn", s(&snn), "--dataset", "xor", "--mode", mode, "--out",
            s(&rep_path),
        ]);
        let rep = json(&rep_path);
        assert_eq!(rep["ann_accuracy"], rep["snn_accuracy"], "{mode}");
        assert_eq!(rep["total_spikes"], 0);
        assert_eq!(rep["images"], 256);
        assert!(rep["wall_time_s"].as_f64().unwrap() >= 0.0);
        assert_eq!(rep["config"]["mode"], mode);
    }
}

#[test]
fn eval_pipelined_reports_cadence_2k() {
    let tmp = tempfile::tempdir().unwrap();
    let net = tmp.path().join("net");
    ok(&["train", "--dataset", "xor", "--arch", "2-4-4-2", "--epochs", "5", "--out", s(&net)]);
    for (k, cadence) in [("10", 20), ("16", 32)] {
        let snn = tmp.path().join(format!("snn{k}"));
        ok(&["convert", "--net", s(&net), "--k", k, "--alpha", "fixed:4", "--out", s(&snn)]);
        let rep_path = tmp.path().join("rep.json");
        ok(&[
            "eval", "--net", s(&net), "--snn", s(&snn), "--dataset", "xor", "--mode", "pipelined", "--limit", "8",
            "--out", s(&rep_path),
        ]);
        let rep = json(&rep_path);
        assert_eq!(rep["throughput"]["cadence_steps"], cadence);
        assert_eq!(rep["throughput"]["latency_steps"], 2 * cadence);
        assert_eq!(rep["throughput"]["images_per_2k_steps"], 1.0);
    }
}

#[test]
fn profile_spikes_vs_x_follows_popcount() {
    let out = ok(&[
        "profile", "spikes_vs_x", "--k", "6", "--alpha", "fixed:10", "--range", "-2:10", "--points", "481",
    ]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows[0], ["x", "spikes", "value"]);
    assert_eq!(rows.len(), 482);
    let mut peak = 0;
    for r in &rows[1..] {
        let x: f64 = r[0].parse().unwrap();
        let spikes: u32 = r[1].parse().unwrap();
        let expected = if x <= 0.0 {
            0
        } else {
            ((x * 64.0 / 10.0).floor() as u64).min(63).count_ones()
        };
        assert_eq!(spikes, expected, "x = {x}");
        peak = peak.max(spikes);
    }
    assert_eq!(peak, 6);
    assert_eq!(rows.last().unwrap()[1], "6");
}

#[test]
fn profile_unknown_kind_is_a_usage_error() {
    assert_eq!(fewspike(&["profile", "latency_vs_q"]).status.code(), Some(2));
}

#[test]
fn profile_mse_sweeps() {
    let tmp = tempfile::tempdir().unwrap();
    let params = tmp.path().join("silu.json");
    ok(&["fit", "--config", &format!("{CONFIGS}/silu.json"), "--out", s(&params)]);
    let out = ok(&["profile", "mse_vs_q", "--fs-params", s(&params), "--q", "2,3,4,5,6,7,8", "--range", "-8:12"]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows[0], ["q", "region", "mse"]);
    assert_eq!(rows[1][0], "unquantized");
    let mse: Vec<f64> = rows[2..].iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(mse.len(), 7);
    assert!(mse.windows(2).all(|w| w[1] <= w[0]), "{mse:?}");

    let cfg = tmp.path().join("cfg.json");
    let mut c = json(Path::new(&format!("{CONFIGS}/silu.json")));
    c["iterations"] = 300.into();
    std::fs::write(&cfg, c.to_string()).unwrap();
    let csv_path = tmp.path().join("k.csv");
    ok(&["profile", "mse_vs_k", "--config", s(&cfg), "--k", "4,8", "--out", s(&csv_path)]);
    let rows = csv_rows(&std::fs::read_to_string(&csv_path).unwrap());
    assert_eq!(rows[0], ["k", "region", "mse"]);
    let all: Vec<f64> = rows[1..].iter().filter(|r| r[1] == "all").map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(all.len(), 2);
    assert!(all[1] < all[0], "{all:?}");
}

#[test]
fn profile_accuracy_vs_k_header() {
    let tmp = tempfile::tempdir().unwrap();
    let net = tmp.path().join("net");
    ok(&["train", "--dataset", "xor", "--arch", "2-4-1", "--epochs", "50", "--batch-size", "16", "--out", s(&net)]);
    let out = ok(&[
        "profile", "accuracy_vs_k", "--net", s(&net), "--dataset", "xor", "--k", "2,10", "--alpha", "fixed:4",
    ]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows[0], ["k", "ann_accuracy", "snn_accuracy", "spikes_per_neuron"]);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2][0], "10");
}

fn trace_rows(net: &Path, dir: &Path, convert: &[&str], x: &str) -> Vec<Vec<String>> {
    let snn = dir.join("snn");
    let mut args = vec!["convert", "--net", s(net), "--out", s(&snn)];
    args.extend(convert);
    ok(&args);
    let out = ok(&["trace", "--snn", s(&snn), "--input", x]);
    csv_rows(&String::from_utf8(out.stdout).unwrap())
}

#[test]
fn trace_relu_neuron_spells_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let net = single_neuron_net(tmp.path(), ActivationKind::Relu);
    let rows = trace_rows(&net, tmp.path(), &["--k", "3", "--alpha", "fixed:8"], "5");
    assert_eq!(
        rows[0],
        ["record", "layer", "neuron", "t", "global_step", "input", "potential", "threshold", "spike"]
    );
    let z: Vec<&str> = rows.iter().filter(|r| r[0] == "step").map(|r| r[8].as_str()).collect();
    assert_eq!(z, ["1", "0", "1"]);
    assert_eq!(rows.iter().filter(|r| r[0] == "event").count(), 2);
}

#[test]
fn trace_silu_neuron_matches_simulation() {
    let tmp = tempfile::tempdir().unwrap();
    let params = tmp.path().join("silu.json");
    ok(&["fit", "--config", &format!("{CONFIGS}/silu.json"), "--out", s(&params)]);
    let net = single_neuron_net(tmp.path(), ActivationKind::Silu);
    let rows = trace_rows(&net, tmp.path(), &["--fs-params", s(&params)], "-0.5");
    let steps: Vec<_> = rows.iter().filter(|r| r[0] == "step").collect();
    assert_eq!(steps.len(), 16);
    let expected = fs_simulate(-0.5, &FsParams::load(&params).unwrap());
    let z: Vec<bool> = steps.iter().map(|r| r[8] == "1").collect();
    assert_eq!(z, expected.spikes);
    let thresholds: Vec<f64> = steps.iter().map(|r| r[7].parse().unwrap()).collect();
    assert_eq!(thresholds, FsParams::load(&params).unwrap().thresholds());
    assert_eq!(rows.iter().filter(|r| r[0] == "event").count(), expected.spike_count);
}

#[test]
fn trace_below_thresholds_has_no_events() {
    let tmp = tempfile::tempdir().unwrap();
    let net = single_neuron_net(tmp.path(), ActivationKind::Relu);
    let rows = trace_rows(&net, tmp.path(), &["--k", "4", "--alpha", "fixed:8"], "-3");
    assert_eq!(rows.iter().filter(|r| r[0] == "event").count(), 0);
    assert_eq!(rows.iter().filter(|r| r[0] == "step").count(), 4);
}

#[test]
fn trace_size_limit_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let net = tmp.path().join("net");
    ok(&["train", "--dataset", "xor", "--arch", "2-8-2", "--epochs", "1", "--out", s(&net)]);
    let snn = tmp.path().join("snn");
    ok(&["convert", "--net", s(&net), "--k", "4", "--alpha", "fixed:4", "--out", s(&snn)]);
    let base = ["trace", "--snn", s(&snn), "--input", "1,0", "--max-neurons", "4"];
    let refused = fewspike(&base);
    assert_eq!(refused.status.code(), Some(2));
    assert!(stderr(&refused).contains("--force"));
    let mut forced = base.to_vec();
    forced.push("--force");
    ok(&forced);
}

#[test]
fn train_xor_and_zero_learning_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let net = tmp.path().join("xor");
    ok(&["train", "--dataset", "xor", "--arch", "2-4-1", "--epochs", "50", "--batch-size", "16", "--out", s(&net)]);
    let report = json(&net.join("train_report.json"));
    assert!(report["report"]["test_accuracy"].as_f64().unwrap() >= 0.99, "{report}");
    assert_eq!(report["report"]["config"]["seed"], 2021);

    let weights = |epochs: &str| {
        let dir = tmp.path().join(format!("lr0-{epochs}"));
        ok(&["train", "--dataset", "xor", "--arch", "2-4-2", "--lr", "0", "--epochs", epochs, "--out", s(&dir)]);
        std::fs::read(dir.join(fewspike::nn::WEIGHTS_FILE)).unwrap()
    };
    assert_eq!(weights("1"), weights("4"));
}

#[test]
fn bad_arch_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fewspike(&["train", "--dataset", "xor", "--arch", "2-x-2", "--out", s(&tmp.path().join("n"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = fewspike(&["train", "--dataset", "xor", "--arch", "3-4-2", "--out", s(&tmp.path().join("n"))]);
    assert_eq!(out.status.code(), Some(2));
}

/// Full MNIST pipeline through the binary; skipped when the files are absent.
#[test]
fn mnist_train_convert_eval() {
    let dir = std::env::var_os("FEWSPIKE_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    if !dir.join("t10k-labels-idx1-ubyte").exists() {
        eprintln!("MNIST not found at {}, skipping", dir.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let ds = format!("mnist:{}", s(&dir));
    let net = tmp.path().join("net");
    ok(&["train", "--dataset", &ds, "--arch", "784-128-128-10", "--out", s(&net)]);
    let ann = json(&net.join("train_report.json"))["report"]["test_accuracy"].as_f64().unwrap();
    assert!(ann >= 0.96, "{ann}");

    let snn = tmp.path().join("snn");
    ok(&["convert", "--net", s(&net), "--k", "10", "--alpha", "fixed:25", "--out", s(&snn)]);
    let rep_path = tmp.path().join("eval.json");
    ok(&["eval", "--net", s(&net), "--snn", s(&snn), "--dataset", &ds, "--out", s(&rep_path)]);
    let rep = json(&rep_path);
    assert_eq!(rep["images"], 10_000);
    assert!(rep["accuracy_delta_pp"].as_f64().unwrap().abs() <= 0.5, "{rep}");
    assert!(rep["spikes_per_neuron"].as_f64().unwrap() <= 3.0);
}

#[test]
fn shipped_configs_match_library_defaults() {
    use fewspike::fit::FitConfig;
    assert_eq!(FitConfig::load(format!("{CONFIGS}/silu.json")).unwrap(), FitConfig::silu_default());
    assert_eq!(FitConfig::load(format!("{CONFIGS}/sigmoid.json")).unwrap(), FitConfig::sigmoid_default());
}
