//! Standard normal helpers and small descriptive statistics.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::SQRT_2;

/// Smallest probability handed to the normal quantile; keeps scores finite.
pub const PROB_FLOOR: f64 = 1e-15;

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// `Φ⁻¹(u)`, with `u` clamped into `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub fn std_normal_quantile(u: f64) -> f64 {
    let u = u.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    -SQRT_2 * erfc_inv(2.0 * u)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divides by `n`).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Linear-interpolation quantile of an ascending slice (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let p = p.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// One-sample Kolmogorov–Smirnov statistic against `N(0, 1)`.
pub fn ks_statistic_std_normal(sample: &[f64]) -> f64 {
    let sorted = sorted_copy(sample);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let f = std_normal_cdf(z);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 5% critical value of the one-sample KS statistic.
pub fn ks_critical_5pct(n: usize) -> f64 {
    1.3581 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_round_trip() {
        for &u in &[1e-10, 0.001, 0.2, 0.5, 0.7, 0.999, 1.0 - 1e-9] {
            let z = std_normal_quantile(u);
            assert!((std_normal_cdf(z) - u).abs() <= 1e-15_f64.max(u * 1e-12), "u={u}");
        }
        assert_eq!(std_normal_quantile(0.5), 0.0);
        assert!((std_normal_quantile(0.99) - 2.326_347_874_040_841).abs() < 1e-12);
    }

    #[test]
    fn type7_quantile() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert!((quantile_sorted(&s, 0.5) - 2.5).abs() < 1e-15);
    }
}
