//! Fitting FS-neuron parameters to arbitrary activation functions.
//!
//! The neuron is unrolled over its `K` steps and trained by backpropagation
//! through time. Heaviside spikes have no useful derivative, so the backward
//! pass uses a triangle pseudo-derivative ([`pseudo_grad`]). Parts of the
//! input range can be emphasized with [`RegionWeights`].

mod grad;
mod sweep;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fs::{fs_decode, linspace, make_relu_params, Activation, ActivationKind, FsParams};
use crate::{Error, Result};

pub use grad::{forward_backward, pseudo_grad, smooth_step, LossGrad, SpikeRelaxation};
pub use sweep::{region_mses, sweep_k, sweep_q, SweepRow, SweepTable};

/// Points per region on the validation grid.
pub const VALIDATION_POINTS: usize = 2048;
/// Iterations between validation checkpoints.
const VALIDATE_EVERY: usize = 25;
/// Fraction of the budget after which the pseudo-derivative width is halved.
const ANNEAL_AT: f64 = 2.0 / 3.0;
/// A training loss this many times the initial loss counts as divergence.
const DIVERGENCE_FACTOR: f64 = 1e3;

/// A named part of the input range with its loss weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub name: String,
    pub intervals: Vec<[f64; 2]>,
    pub weight: f64,
}

impl Region {
    pub fn new(name: impl Into<String>, intervals: Vec<[f64; 2]>, weight: f64) -> Self {
        Region {
            name: name.into(),
            intervals,
            weight,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&[lo, hi]| lo <= x && x <= hi)
    }
}

/// Loss weighting over the training interval.
///
/// A point inside several regions takes the largest of their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionWeights {
    regions: Vec<Region>,
}

impl RegionWeights {
    pub fn new(regions: Vec<Region>) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::invalid("region weights", "at least one region required"));
        }
        for r in &regions {
            if !(r.weight > 0.0 && r.weight.is_finite()) {
                return Err(Error::invalid(
                    "region weights",
                    format!("region \"{}\" has non-positive weight {}", r.name, r.weight),
                ));
            }
            if r.intervals.is_empty() {
                return Err(Error::invalid(
                    "region weights",
                    format!("region \"{}\" has no intervals", r.name),
                ));
            }
            for &[lo, hi] in &r.intervals {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::invalid(
                        "region weights",
                        format!("region \"{}\" has bad interval [{lo}, {hi}]", r.name),
                    ));
                }
            }
        }
        Ok(RegionWeights { regions })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Weight at `x`; 0 outside every region.
    pub fn weight_at(&self, x: f64) -> f64 {
        self.regions
            .iter()
            .filter(|r| r.contains(x))
            .map(|r| r.weight)
            .fold(0.0, f64::max)
    }

    /// Checks that the regions cover `[lo, hi]` without gaps.
    pub fn check_covers(&self, lo: f64, hi: f64) -> Result<()> {
        let mut spans: Vec<[f64; 2]> = self
            .regions
            .iter()
            .flat_map(|r| r.intervals.iter().copied())
            .collect();
        spans.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut reached = lo;
        for [a, b] in spans {
            if a > reached {
                break;
            }
            reached = reached.max(b);
        }
        if reached < hi {
            return Err(Error::invalid(
                "region weights",
                format!("regions leave [{reached}, {hi}] of the training interval uncovered"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Gradient descent with heavy-ball momentum.
    Momentum,
    /// Adam; `momentum` is used as the first-moment decay.
    Adam,
}

/// Everything that determines a fit. Serialized form has no optional fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub target: ActivationKind,
    pub train_interval: [f64; 2],
    pub num_steps: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Initial half-width of the triangle pseudo-derivative; halved at two
    /// thirds of the budget.
    pub pseudo_derivative_width: f64,
    /// Relative uniform noise applied to the analytic initialization.
    pub init_noise: f64,
    /// Parameters are clamped to `[-param_bound, param_bound]` after each update.
    pub param_bound: f64,
    pub rng_seed: u64,
    pub region_weights: Vec<Region>,
}

impl FitConfig {
    /// The SiLU setup: `K = 16` on `[-8, 12]` with `[-2, 2]` weighted 10x.
    pub fn silu_default() -> Self {
        FitConfig {
            target: ActivationKind::Silu,
            train_interval: [-8.0, 12.0],
            num_steps: 16,
            batch_size: 1024,
            iterations: 3000,
            optimizer: Optimizer::Adam,
            learning_rate: 0.01,
            momentum: 0.9,
            pseudo_derivative_width: 1.0,
            init_noise: 0.01,
            param_bound: 8.0,
            rng_seed: 2021,
            region_weights: vec![
                Region::new("main", vec![[-2.0, 2.0]], 10.0),
                Region::new("outer", vec![[-8.0, -2.0], [2.0, 12.0]], 1.0),
            ],
        }
    }

    /// The sigmoid setup: `K = 12` on `[-10, 10]`, uniform weight.
    pub fn sigmoid_default() -> Self {
        FitConfig {
            target: ActivationKind::Sigmoid,
            train_interval: [-10.0, 10.0],
            num_steps: 12,
            region_weights: vec![Region::new("all", vec![[-10.0, 10.0]], 1.0)],
            ..FitConfig::silu_default()
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: FitConfig = serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        crate::data::write_atomic(path.as_ref(), text.as_bytes())
    }

    pub fn weights(&self) -> Result<RegionWeights> {
        RegionWeights::new(self.region_weights.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.train_interval;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid("fit config", format!("train_interval [{lo}, {hi}]")));
        }
        let positive = [
            ("num_steps", self.num_steps as f64),
            ("batch_size", self.batch_size as f64),
            ("iterations", self.iterations as f64),
            ("learning_rate", self.learning_rate),
            ("pseudo_derivative_width", self.pseudo_derivative_width),
            ("param_bound", self.param_bound),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid("fit config", format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("fit config", "momentum must be in [0, 1)"));
        }
        if !(self.init_noise >= 0.0 && self.init_noise < 1.0) {
            return Err(Error::invalid("fit config", "init_noise must be in [0, 1)"));
        }
        self.weights()?.check_covers(lo, hi)
    }
}

/// Summary of a finished fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub target: ActivationKind,
    pub num_steps: usize,
    pub rng_seed: u64,
    pub iterations: usize,
    /// Iteration whose parameters were kept (0 = initialization).
    pub best_iteration: usize,
    /// Weighted validation MSE of the kept parameters (hard spikes).
    pub best_validation: f64,
    pub initial_validation: f64,
    /// Surrogate loss of the first training batch.
    pub initial_training_loss: f64,
    /// Mean surrogate loss over the last tenth of training.
    pub final_training_loss: f64,
    /// Per-region MSE of the kept parameters.
    pub region_mse: Vec<(String, f64)>,
    pub config: FitConfig,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: FsParams,
    pub report: FitReport,
}

/// Fixed hard-spike validation grid, one block per region.
/// Region name, region weight and `(x, target, point weight)` samples.
type Block = (String, f64, Vec<(f64, f64, f64)>);

struct Validator {
    blocks: Vec<Block>,
    weight_sum: f64,
}

impl Validator {
    fn new(target: &dyn Activation, weights: &RegionWeights) -> Self {
        let blocks: Vec<_> = weights
            .regions()
            .iter()
            .map(|r| {
                let total: f64 = r.intervals.iter().map(|[a, b]| b - a).sum();
                let mut pts = Vec::new();
                for &[a, b] in &r.intervals {
                    let n = ((b - a) / total * VALIDATION_POINTS as f64).round().max(2.0) as usize;
                    // each interval contributes in proportion to its length
                    let w = (b - a) / total / n as f64;
                    pts.extend(linspace(a, b, n).map(|x| (x, target.eval(x), w)));
                }
                (r.name.clone(), r.weight, pts)
            })
            .collect();
        let weight_sum = blocks.iter().map(|b| b.1).sum();
        Validator { blocks, weight_sum }
    }

    fn region_mse(&self, params: &FsParams) -> Vec<(String, f64)> {
        self.blocks
            .iter()
            .map(|(name, _, pts)| {
                let mse = pts
                    .iter()
                    .map(|&(x, fx, w)| {
                        let e = fs_decode(x, params).0 - fx;
                        w * e * e
                    })
                    .sum();
                (name.clone(), mse)
            })
            .collect()
    }

    fn score(&self, params: &FsParams) -> f64 {
        self.region_mse(params)
            .iter()
            .zip(&self.blocks)
            .map(|((_, mse), b)| b.1 * mse)
            .sum::<f64>()
            / self.weight_sum
    }
}

/// Analytic ReLU coder stretched over the training interval plus seeded
/// relative noise.
fn initial_params(cfg: &FitConfig, rng: &mut ChaCha8Rng) -> Result<FsParams> {
    let [lo, hi] = cfg.train_interval;
    let alpha = if hi > 0.0 { hi } else { hi - lo };
    let base = make_relu_params(cfg.num_steps, alpha)?;
    let noise = cfg.init_noise;
    let flat: Vec<f64> = base
        .to_flat()
        .into_iter()
        .map(|v| {
            let r: f64 = rng.gen_range(-1.0..=1.0);
            (v * (1.0 + noise * r)).clamp(-cfg.param_bound, cfg.param_bound)
        })
        .collect();
    FsParams::from_flat(&flat, cfg.target)
}

/// Fits parameters for `cfg.target`.
pub fn fit(cfg: &FitConfig) -> Result<FitOutcome> {
    fit_function(&cfg.target, cfg)
}

/// Fits parameters for an arbitrary target function; the result is tagged
/// with `cfg.target`.
pub fn fit_function(target: &dyn Activation, cfg: &FitConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    let weights = cfg.weights()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let validator = Validator::new(target, &weights);

    let mut params = initial_params(cfg, &mut rng)?;
    let mut flat = params.to_flat();
    let n = flat.len();
    let initial_validation = validator.score(&params);
    let mut best = (initial_validation, 0usize, params.clone());

    let mut m = vec![0.0; n];
    let mut s = vec![0.0; n];
    let [lo, hi] = cfg.train_interval;
    let cell = (hi - lo) / cfg.batch_size as f64;
    let anneal_at = (cfg.iterations as f64 * ANNEAL_AT) as usize;
    let tail_from = cfg.iterations - (cfg.iterations / 10).max(1);
    let mut width = cfg.pseudo_derivative_width;
    let mut initial_loss = None;
    let mut tail_loss = 0.0;
    let mut xs = vec![0.0; cfg.batch_size];

    for it in 0..cfg.iterations {
        if it == anneal_at && it > 0 {
            width *= 0.5;
        }
        for (j, x) in xs.iter_mut().enumerate() {
            let jitter: f64 = rng.gen();
            *x = (lo + (j as f64 + jitter) * cell).min(hi);
        }
        let lg = forward_backward(&xs, &params, target, &weights, width, SpikeRelaxation::Hard)
            .map_err(|e| match e {
                Error::Divergence(msg) => Error::Divergence(format!("iteration {it}: {msg}")),
                e => e,
            })?;
        let first = *initial_loss.get_or_insert(lg.loss);
        if lg.loss > first * DIVERGENCE_FACTOR && lg.loss > 1e-12 {
            return Err(Error::Divergence(format!(
                "iteration {it}: loss {} exceeds {DIVERGENCE_FACTOR}x the initial loss {first}",
                lg.loss
            )));
        }
        if it >= tail_from {
            tail_loss += lg.loss;
        }

        let g = lg.to_flat();
        let step = it as i32 + 1;
        for i in 0..n {
            match cfg.optimizer {
                Optimizer::Momentum => {
                    m[i] = cfg.momentum * m[i] + g[i];
                    flat[i] -= cfg.learning_rate * m[i];
                }
                Optimizer::Adam => {
                    const BETA2: f64 = 0.999;
                    m[i] = cfg.momentum * m[i] + (1.0 - cfg.momentum) * g[i];
                    s[i] = BETA2 * s[i] + (1.0 - BETA2) * g[i] * g[i];
                    let m_hat = m[i] / (1.0 - cfg.momentum.powi(step));
                    let s_hat = s[i] / (1.0 - BETA2.powi(step));
                    flat[i] -= cfg.learning_rate * m_hat / (s_hat.sqrt() + 1e-8);
                }
            }
            flat[i] = flat[i].clamp(-cfg.param_bound, cfg.param_bound);
        }
        params = FsParams::from_flat(&flat, cfg.target)?;

        if (it + 1) % VALIDATE_EVERY == 0 || it + 1 == cfg.iterations {
            let score = validator.score(&params);
            if score < best.0 {
                best = (score, it + 1, params.clone());
            }
        }
    }

    let (best_validation, best_iteration, params) = best;
    let report = FitReport {
        target: cfg.target,
        num_steps: cfg.num_steps,
        rng_seed: cfg.rng_seed,
        iterations: cfg.iterations,
        best_iteration,
        best_validation,
        initial_validation,
        initial_training_loss: initial_loss.unwrap_or(f64::NAN),
        final_training_loss: tail_loss / (cfg.iterations - tail_from) as f64,
        region_mse: validator.region_mse(&params),
        config: cfg.clone(),
    };
    Ok(FitOutcome { params, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fs::approximation_mse;

    fn small_cfg() -> FitConfig {
        FitConfig {
            num_steps: 8,
            iterations: 300,
            batch_size: 256,
            ..FitConfig::silu_default()
        }
    }

    #[test]
    fn region_weight_lookup_takes_max() {
        let rw = RegionWeights::new(vec![
            Region::new("a", vec![[-1.0, 1.0]], 5.0),
            Region::new("b", vec![[-3.0, 3.0]], 1.0),
        ])
        .unwrap();
        assert_eq!(rw.weight_at(0.0), 5.0);
        assert_eq!(rw.weight_at(2.0), 1.0);
        assert_eq!(rw.weight_at(4.0), 0.0);
        assert!(rw.check_covers(-3.0, 3.0).is_ok());
        assert!(rw.check_covers(-3.0, 3.5).is_err());
    }

    #[test]
    fn region_weights_reject_bad_weights() {
        assert!(RegionWeights::new(vec![Region::new("a", vec![[0.0, 1.0]], 0.0)]).is_err());
        assert!(RegionWeights::new(vec![Region::new("a", vec![[1.0, 0.0]], 1.0)]).is_err());
        assert!(RegionWeights::new(vec![]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::silu_default().validate().is_ok());
        let mut cfg = FitConfig::silu_default();
        cfg.region_weights = vec![Region::new("main", vec![[-2.0, 2.0]], 1.0)];
        assert!(cfg.validate().is_err());
        let mut cfg = FitConfig::silu_default();
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn missing_config_field_is_named() {
        let mut v = serde_json::to_value(FitConfig::silu_default()).unwrap();
        v.as_object_mut().unwrap().remove("learning_rate");
        let err = serde_json::from_value::<FitConfig>(v).unwrap_err().to_string();
        assert!(err.contains("learning_rate"), "{err}");
    }

    #[test]
    fn fit_is_deterministic() {
        let a = fit(&small_cfg()).unwrap();
        let b = fit(&small_cfg()).unwrap();
        assert_eq!(a.params.to_flat(), b.params.to_flat());
        let mut other = small_cfg();
        other.rng_seed += 1;
        let c = fit(&other).unwrap();
        assert_ne!(a.params.to_flat(), c.params.to_flat());
    }

    #[test]
    fn fit_improves_and_respects_bound() {
        let out = fit(&small_cfg()).unwrap();
        let r = &out.report;
        assert!(r.best_validation <= r.initial_validation);
        assert!(r.final_training_loss <= r.initial_training_loss);
        assert!(out.params.to_flat().iter().all(|v| v.abs() <= 8.0));
        assert_eq!(out.params.activation(), ActivationKind::Silu);
    }

    #[test]
    fn relu_fit_stays_near_analytic_construction() {
        let cfg = FitConfig {
            target: ActivationKind::Relu,
            train_interval: [-5.0, 25.0],
            num_steps: 10,
            iterations: 200,
            init_noise: 0.0,
            param_bound: 25.0,
            region_weights: vec![Region::new("all", vec![[-5.0, 25.0]], 1.0)],
            ..FitConfig::silu_default()
        };
        let out = fit(&cfg).unwrap();
        let analytic = make_relu_params(10, 25.0).unwrap();
        let relu = ActivationKind::Relu;
        let base = approximation_mse(&analytic, &relu, [0.0, 25.0], 4001).unwrap();
        let fitted = approximation_mse(&out.params, &relu, [0.0, 25.0], 4001).unwrap();
        assert!(fitted <= 4.0 * base, "{fitted} vs {base}");
    }
}
