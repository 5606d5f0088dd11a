use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::{fit_function, FitConfig, Region};
use crate::fs::{quantize_params, union_mse, Activation, FsParams, QuantizationSpec};
use crate::Result;

/// Grid size used for table MSEs.
const TABLE_POINTS: usize = 8192;

/// One `(key, region, mse)` line of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub key: String,
    pub region: String,
    pub mse: f64,
}

/// Result of a K or Q sweep. Rows follow the order of the swept values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    /// Column name of the swept quantity (`k` or `q`).
    pub key_name: String,
    pub rows: Vec<SweepRow>,
    /// Swept values whose row could not be produced, with the error.
    pub failures: Vec<(String, String)>,
}

impl SweepTable {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    /// MSE for `key` in `region`, if present.
    pub fn get(&self, key: &str, region: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.key == key && r.region == region)
            .map(|r| r.mse)
    }

    /// CSV with header `<key_name>,region,mse`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},region,mse\n", self.key_name);
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:e}", r.key, r.region, r.mse);
        }
        out
    }
}

/// MSE of `params` against `target` in each region, in region order.
pub fn region_mses(
    params: &FsParams,
    target: &dyn Activation,
    regions: &[Region],
) -> Result<Vec<(String, f64)>> {
    regions
        .iter()
        .map(|r| Ok((r.name.clone(), union_mse(params, target, &r.intervals, TABLE_POINTS)?)))
        .collect()
}

/// Regions reported by sweeps: the configured ones plus `all` (the whole
/// training interval) unless a region already carries that name.
fn table_regions(cfg: &FitConfig) -> Vec<Region> {
    let mut regions = cfg.region_weights.clone();
    if !regions.iter().any(|r| r.name == "all") {
        regions.push(Region::new("all", vec![cfg.train_interval], 1.0));
    }
    regions
}

/// Seed for row `index` of a sweep; row 0 keeps the base seed.
pub(crate) fn row_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// One fit per `K`, rows in the order of `k_values`.
pub fn sweep_k(target: &dyn Activation, k_values: &[usize], template: &FitConfig) -> SweepTable {
    let regions = table_regions(template);
    let results: Vec<_> = k_values
        .par_iter()
        .enumerate()
        .map(|(i, &k)| {
            let cfg = FitConfig {
                num_steps: k,
                rng_seed: row_seed(template.rng_seed, i),
                ..template.clone()
            };
            fit_function(target, &cfg).and_then(|out| region_mses(&out.params, target, &regions))
        })
        .collect();

    let mut table = SweepTable {
        key_name: "k".into(),
        rows: Vec::new(),
        failures: Vec::new(),
    };
    for (&k, res) in k_values.iter().zip(results) {
        match res {
            Ok(mses) => table.rows.extend(mses.into_iter().map(|(region, mse)| SweepRow {
                key: k.to_string(),
                region,
                mse,
            })),
            Err(e) => table.failures.push((k.to_string(), e.to_string())),
        }
    }
    table
}

/// Quantizes `params` at each `Q` (no refitting) and measures the MSE.
///
/// The unquantized MSE is emitted first under the key `unquantized`.
pub fn sweep_q(
    params: &FsParams,
    target: &dyn Activation,
    q_values: &[u32],
    regions: &[Region],
) -> Result<SweepTable> {
    let mut rows = Vec::new();
    for (region, mse) in region_mses(params, target, regions)? {
        rows.push(SweepRow {
            key: "unquantized".into(),
            region,
            mse,
        });
    }
    for &q in q_values {
        let quantized = quantize_params(params, &QuantizationSpec::new(q))?;
        for (region, mse) in region_mses(&quantized, target, regions)? {
            rows.push(SweepRow {
                key: q.to_string(),
                region,
                mse,
            });
        }
    }
    Ok(SweepTable {
        key_name: "q".into(),
        rows,
        failures: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fs::{make_relu_params, relu_closed_form, ActivationKind};

    #[test]
    fn k_rows_follow_input_order() {
        let cfg = FitConfig {
            iterations: 50,
            batch_size: 128,
            ..FitConfig::silu_default()
        };
        let table = sweep_k(&ActivationKind::Silu, &[6, 2, 4], &cfg);
        let keys: Vec<&str> = table.rows.iter().map(|r| r.key.as_str()).collect();
        assert_eq!(keys, ["6", "6", "6", "2", "2", "2", "4", "4", "4"]);
        assert!(!table.is_partial());
        assert!(table.to_csv().starts_with("k,region,mse\n"));
    }

    #[test]
    fn identity_on_unit_interval_meets_grid_bound() {
        for k in [1, 3, 7, 12] {
            let cfg = FitConfig {
                target: ActivationKind::Identity,
                train_interval: [0.0, 1.0],
                iterations: 60,
                batch_size: 128,
                init_noise: 0.0,
                learning_rate: 1e-4,
                region_weights: vec![Region::new("all", vec![[0.0, 1.0]], 1.0)],
                ..FitConfig::silu_default()
            };
            let table = sweep_k(&ActivationKind::Identity, &[k], &cfg);
            assert!(!table.is_partial(), "{:?}", table.failures);
            let mse = table.get(&k.to_string(), "all").unwrap();
            assert!(mse <= 2f64.powi(-(k as i32)).powi(2), "K={k}: {mse}");
        }
    }

    #[test]
    fn q_sweep_lossless_limit() {
        let p = FsParams::new(
            vec![2.0, 0.5, -0.25],
            vec![1.0, 0.25, 0.5],
            vec![1.5, 0.75, -1.0],
            ActivationKind::Silu,
        )
        .unwrap();
        let regions = [Region::new("all", vec![[-4.0, 4.0]], 1.0)];
        let silu = ActivationKind::Silu;
        // spacing 16/(2^30-1) is far below any gap between parameters
        let table = sweep_q(&p, &silu, &[30], &regions).unwrap();
        let base = table.get("unquantized", "all").unwrap();
        let q30 = table.get("30", "all").unwrap();
        assert!((base - q30).abs() < 1e-6 * base, "{base} vs {q30}");
    }

    #[test]
    fn q_sweep_on_relu_against_closed_form() {
        let p = make_relu_params(4, 8.0).unwrap();
        let closed = |x: f64| relu_closed_form(x, 4, 8.0);
        let regions = [Region::new("all", vec![[-8.0, 8.0]], 1.0)];
        let table = sweep_q(&p, &closed, &[8], &regions).unwrap();
        assert_eq!(table.get("unquantized", "all").unwrap(), 0.0);

        // Oracle: snap by exhaustive search over the 256 levels, then run the
        // recurrence by hand on the same grid.
        let levels: Vec<f64> = (0..256).map(|i| -8.0 + i as f64 * 16.0 / 255.0).collect();
        let snap = |v: f64| {
            *levels
                .iter()
                .min_by(|a, b| (*a - v).abs().partial_cmp(&(*b - v).abs()).unwrap())
                .unwrap()
        };
        let s: Vec<f64> = [4.0, 2.0, 1.0, 0.5].iter().map(|&v| snap(v)).collect();
        let n = TABLE_POINTS;
        let mut acc = 0.0;
        for i in 0..n {
            let x = if i + 1 == n { 8.0 } else { -8.0 + i as f64 * 16.0 / (n - 1) as f64 };
            let (mut v, mut out) = (x, 0.0);
            for &st in &s {
                if v >= st {
                    v -= st;
                    out += st;
                }
            }
            acc += (out - closed(x)).powi(2);
        }
        let oracle = acc / n as f64;
        let got = table.get("8", "all").unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle.max(1.0), "{got} vs {oracle}");
        assert!(got > 0.0);
    }
}
