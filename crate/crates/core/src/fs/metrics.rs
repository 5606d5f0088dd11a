use super::{fs_decode, Activation, FsParams};
use crate::{Error, Result};

/// `n` evenly spaced points on `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| if i + 1 == n { hi } else { lo + i as f64 * step })
}

fn check_interval(lo: f64, hi: f64, n_samples: usize) -> Result<()> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(
            "interval",
            format!("[{lo}, {hi}] must be finite with lo < hi"),
        ));
    }
    if n_samples < 2 {
        return Err(Error::invalid("interval", "need at least 2 samples"));
    }
    Ok(())
}

/// Mean squared error between the FS-neuron output and `target` on an even grid.
pub fn approximation_mse(
    params: &FsParams,
    target: &dyn Activation,
    interval: [f64; 2],
    n_samples: usize,
) -> Result<f64> {
    let [lo, hi] = interval;
    check_interval(lo, hi, n_samples)?;
    let sum: f64 = linspace(lo, hi, n_samples)
        .map(|x| {
            let e = fs_decode(x, params).0 - target.eval(x);
            e * e
        })
        .sum();
    Ok(sum / n_samples as f64)
}

/// MSE over a union of intervals, each interval weighted by its length.
///
/// `n_total` points are split between the intervals in proportion to their
/// lengths (at least two per interval).
pub fn union_mse(
    params: &FsParams,
    target: &dyn Activation,
    intervals: &[[f64; 2]],
    n_total: usize,
) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::invalid("interval", "empty interval list"));
    }
    let total_len: f64 = intervals.iter().map(|[lo, hi]| hi - lo).sum();
    let mut acc = 0.0;
    for &[lo, hi] in intervals {
        let share = ((hi - lo) / total_len * n_total as f64).round() as usize;
        let mse = approximation_mse(params, target, [lo, hi], share.max(2))?;
        acc += mse * (hi - lo);
    }
    Ok(acc / total_len)
}

/// Spike count of the FS-neuron at each of `n_samples` ascending grid points.
pub fn spike_count_profile(
    params: &FsParams,
    interval: [f64; 2],
    n_samples: usize,
) -> Result<Vec<(f64, usize)>> {
    let [lo, hi] = interval;
    check_interval(lo, hi, n_samples)?;
    Ok(linspace(lo, hi, n_samples)
        .map(|x| (x, fs_decode(x, params).1 as usize))
        .collect())
}
