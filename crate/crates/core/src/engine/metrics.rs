use alloc::vec::Vec;

use crate::error::{bail, Result};

/// Nearest-rank 99th percentile: the `ceil(0.99 n)`-th smallest sample.
pub fn tbt_p99(samples: &[f64]) -> Result<f64> {
    percentile(samples, 99)
}

/// Nearest-rank percentile for integer `p` in 1..=100.
pub fn percentile(samples: &[f64], p: u32) -> Result<f64> {
    if samples.is_empty() {
        bail!(Metrics, "percentile of an empty sample set");
    }
    if p == 0 || p > 100 {
        bail!(Metrics, "percentile rank must be in 1..=100, got {p}");
    }
    let n = samples.len();
    let rank = (p as usize * n).div_ceil(100).max(1);
    let mut v: Vec<f64> = samples.to_vec();
    let (_, x, _) = v.select_nth_unstable_by(rank - 1, |a, b| a.total_cmp(b));
    Ok(*x)
}

/// Wall-time stretch needed to keep average power under `cap_w`. Energy is
/// unchanged, so one step reaches the fixpoint.
pub fn apply_throttle(energy_j: f64, walltime_s: f64, cap_w: f64) -> Result<f64> {
    if !(cap_w > 0.0) {
        bail!(Config, "power cap must be positive, got {cap_w}");
    }
    if !(walltime_s > 0.0) {
        return Ok(1.0);
    }
    Ok((energy_j / walltime_s / cap_w).max(1.0))
}
