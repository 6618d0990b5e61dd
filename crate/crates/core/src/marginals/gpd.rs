//! Generalized Pareto tails spliced onto an empirical body.

use serde::{Deserialize, Serialize};

use super::empirical::{plotting_knots, interpolate};
use super::MarginalError;
use crate::stats::PROB_FLOOR;

/// Below this |ξ| the survival function uses a series in ξ around the
/// exponential limit.
pub const XI_SERIES_CUTOFF: f64 = 1e-6;

/// Minimum exceedances needed to attempt a tail fit.
pub const MIN_EXCEEDANCES: usize = 10;

/// Shape `xi` and scale `beta` of a GPD for exceedances `z >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub xi: f64,
    pub beta: f64,
}

impl GpdParams {
    pub fn new(xi: f64, beta: f64) -> Self {
        assert!(beta > 0.0, "GPD scale must be positive");
        Self { xi, beta }
    }

    /// `ln P(Z > z)`; `-inf` beyond a finite upper endpoint.
    pub fn log_survival(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        let t = z / self.beta;
        if self.xi.abs() < XI_SERIES_CUTOFF {
            // (1/ξ)·ln(1 + ξt) = t − ξt²/2 + ξ²t³/3 − ξ³t⁴/4 + …
            let xt = self.xi * t;
            -t * (1.0 - xt * (0.5 - xt * (1.0 / 3.0 - xt / 4.0)))
        } else {
            let arg = self.xi * t;
            if arg <= -1.0 {
                f64::NEG_INFINITY
            } else {
                -arg.ln_1p() / self.xi
            }
        }
    }

    /// `P(Z > z) = (1 + ξ z / β)^(−1/ξ)`.
    pub fn survival(&self, z: f64) -> f64 {
        self.log_survival(z).exp()
    }

    pub fn cdf(&self, z: f64) -> f64 {
        -self.log_survival(z).exp_m1()
    }

    /// The exceedance `z` with `P(Z > z) = s`, for `s ∈ (0, 1]`.
    pub fn inverse_survival(&self, s: f64) -> f64 {
        let ls = s.ln();
        if self.xi.abs() < XI_SERIES_CUTOFF {
            // (e^{ξt} − 1)/ξ = t (1 + ξt/2 + (ξt)²/6 + (ξt)³/24 + …)
            let t0 = -ls;
            let xt = self.xi * t0;
            self.beta * t0 * (1.0 + xt * (0.5 + xt * (1.0 / 6.0 + xt / 24.0)))
        } else {
            self.beta * (-self.xi * ls).exp_m1() / self.xi
        }
    }

    /// Finite upper end of the support (`-β/ξ` for `ξ < 0`).
    pub fn upper_endpoint(&self) -> f64 {
        if self.xi < 0.0 {
            -self.beta / self.xi
        } else {
            f64::INFINITY
        }
    }

    pub fn log_pdf(&self, z: f64) -> f64 {
        if z < 0.0 {
            return f64::NEG_INFINITY;
        }
        if self.xi.abs() < XI_SERIES_CUTOFF {
            return -self.beta.ln() - z / self.beta;
        }
        let arg = self.xi * z / self.beta;
        if arg <= -1.0 {
            return f64::NEG_INFINITY;
        }
        -self.beta.ln() - (1.0 + 1.0 / self.xi) * arg.ln_1p()
    }

    pub fn log_likelihood(&self, exceedances: &[f64]) -> f64 {
        exceedances.iter().map(|&z| self.log_pdf(z)).sum()
    }

    /// Maximum likelihood over `ξ > −1`, profiling out `β`.
    ///
    /// With `θ = ξ/β` the likelihood equations give `ξ(θ) = mean ln(1 + θz)`,
    /// leaving a one-dimensional search over `θ`.
    pub fn fit_mle(exceedances: &[f64]) -> Result<GpdParams, MarginalError> {
        let n = exceedances.len();
        if n < MIN_EXCEEDANCES {
            return Err(MarginalError::TooFewExceedances(n));
        }
        if exceedances.iter().any(|z| !z.is_finite() || *z < 0.0) {
            return Err(MarginalError::MleFailed("invalid exceedance".into()));
        }
        let mean = exceedances.iter().sum::<f64>() / n as f64;
        let max = exceedances.iter().cloned().fold(0.0, f64::max);
        if mean <= 0.0 {
            return Err(MarginalError::MleFailed("all exceedances are zero".into()));
        }

        // Profile log-likelihood per exceedance as a function of t = θ·mean.
        let profile = |t: f64| -> Option<(f64, GpdParams)> {
            let theta = t / mean;
            if t.abs() < 1e-10 {
                let p = GpdParams { xi: 0.0, beta: mean };
                return Some((-mean.ln() - 1.0, p));
            }
            if 1.0 + theta * max <= 0.0 {
                return None;
            }
            let xi = exceedances.iter().map(|z| (theta * z).ln_1p()).sum::<f64>() / n as f64;
            if xi <= -1.0 || !xi.is_finite() {
                return None;
            }
            let beta = xi / theta;
            if !(beta > 0.0) || !beta.is_finite() {
                return None;
            }
            Some((-beta.ln() - xi - 1.0, GpdParams { xi, beta }))
        };

        let t_min = -mean / max;
        let mut grid: Vec<f64> = Vec::new();
        for k in 1..200 {
            let g = (k as f64 / 200.0).powi(2);
            grid.push(t_min * (1.0 - g));
        }
        grid.push(0.0);
        for k in 0..=300 {
            grid.push(10f64.powf(-5.0 + 8.0 * k as f64 / 300.0));
        }
        grid.sort_by(|a, b| a.total_cmp(b));

        let scored: Vec<(f64, Option<(f64, GpdParams)>)> =
            grid.iter().map(|&t| (t, profile(t))).collect();
        let (best_idx, _) = scored
            .iter()
            .enumerate()
            .filter_map(|(i, (_, v))| v.map(|(ll, _)| (i, ll)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| MarginalError::MleFailed("no feasible shape".into()))?;

        let lo = scored[best_idx.saturating_sub(1)].0;
        let hi = scored[(best_idx + 1).min(scored.len() - 1)].0;
        let score = |t: f64| profile(t).map_or(f64::NEG_INFINITY, |(ll, _)| ll);
        let t_best = golden_max(score, lo, hi, 200);
        let candidate = profile(t_best)
            .or(scored[best_idx].1)
            .ok_or_else(|| MarginalError::MleFailed("refinement left the domain".into()))?;
        let params = if candidate.0 >= scored[best_idx].1.unwrap().0 {
            candidate.1
        } else {
            scored[best_idx].1.unwrap().1
        };
        if params.xi.is_finite() && params.beta.is_finite() && params.beta > 0.0 {
            Ok(params)
        } else {
            Err(MarginalError::MleFailed("non-finite estimate".into()))
        }
    }

    /// Probability-weighted moment estimator (Hosking & Wallis).
    pub fn fit_pwm(exceedances: &[f64]) -> Result<GpdParams, MarginalError> {
        let n = exceedances.len();
        if n < MIN_EXCEEDANCES {
            return Err(MarginalError::TooFewExceedances(n));
        }
        let mut sorted = exceedances.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let a0 = sorted.iter().sum::<f64>() / n as f64;
        let a1 = sorted
            .iter()
            .enumerate()
            .map(|(i, z)| (1.0 - (i as f64 + 0.65) / n as f64) * z)
            .sum::<f64>()
            / n as f64;
        let denom = a0 - 2.0 * a1;
        if denom.abs() < f64::EPSILON * a0.abs() {
            return Err(MarginalError::MleFailed("degenerate PWM moments".into()));
        }
        let xi = 2.0 - a0 / denom;
        let beta = 2.0 * a0 * a1 / denom;
        if beta > 0.0 && xi.is_finite() {
            Ok(GpdParams { xi, beta })
        } else {
            Err(MarginalError::MleFailed("PWM scale not positive".into()))
        }
    }
}

/// Golden-section maximization on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if (hi - lo).abs() <= 1e-14 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Spliced distribution: GPD below `lower_threshold`, interpolated empirical
/// CDF between the thresholds, GPD above `upper_threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpdTailModel {
    pub lower_threshold: f64,
    pub upper_threshold: f64,
    pub lower: GpdParams,
    pub upper: GpdParams,
    /// `P(X < lower_threshold)`.
    pub lower_fraction: f64,
    /// `P(X > upper_threshold)`.
    pub upper_fraction: f64,
    /// Distinct sample values between (and including) the thresholds.
    pub body_x: Vec<f64>,
    /// CDF at each `body_x`.
    pub body_p: Vec<f64>,
}

/// How the tail parameters were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailEstimator {
    MaximumLikelihood,
    ProbabilityWeightedMoments,
}

impl GpdTailModel {
    /// Fit thresholds at the `tail_fraction` empirical quantiles and a GPD to
    /// each tail's exceedances. `sorted` must be ascending with a nonzero
    /// spread.
    pub(crate) fn fit_sorted(
        sorted: &[f64],
        tail_fraction: f64,
    ) -> Result<(GpdTailModel, [TailEstimator; 2]), MarginalError> {
        let n = sorted.len();
        let (knots_x, knots_p) = plotting_knots(sorted);
        let k_lo = ((tail_fraction * n as f64).round() as usize).clamp(1, n / 2 - 1);
        let k_hi = n - 1 - k_lo;
        let lower_threshold = sorted[k_lo];
        let upper_threshold = sorted[k_hi];
        if lower_threshold >= upper_threshold {
            return Err(MarginalError::MleFailed("thresholds coincide".into()));
        }
        let i_lo = knots_x.partition_point(|x| *x < lower_threshold);
        let i_hi = knots_x.partition_point(|x| *x <= upper_threshold);
        let body_x = knots_x[i_lo..i_hi].to_vec();
        let body_p = knots_p[i_lo..i_hi].to_vec();
        let lower_fraction = body_p[0];
        let upper_fraction = 1.0 - body_p[body_p.len() - 1];

        let lower_exc: Vec<f64> = sorted
            .iter()
            .filter(|x| **x < lower_threshold)
            .map(|x| lower_threshold - x)
            .collect();
        let upper_exc: Vec<f64> = sorted
            .iter()
            .filter(|x| **x > upper_threshold)
            .map(|x| x - upper_threshold)
            .collect();
        let (lower, est_lo) = fit_tail(&lower_exc)?;
        let (upper, est_hi) = fit_tail(&upper_exc)?;
        Ok((
            GpdTailModel {
                lower_threshold,
                upper_threshold,
                lower,
                upper,
                lower_fraction,
                upper_fraction,
                body_x,
                body_p,
            },
            [est_lo, est_hi],
        ))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let p = if x < self.lower_threshold {
            self.lower_fraction * self.lower.survival(self.lower_threshold - x)
        } else if x > self.upper_threshold {
            1.0 - self.upper_fraction * self.upper.survival(x - self.upper_threshold)
        } else {
            interpolate(&self.body_x, &self.body_p, x)
        };
        p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        if u < self.lower_fraction {
            self.lower_threshold - self.lower.inverse_survival(u / self.lower_fraction)
        } else if u > 1.0 - self.upper_fraction {
            self.upper_threshold + self.upper.inverse_survival((1.0 - u) / self.upper_fraction)
        } else {
            interpolate(&self.body_p, &self.body_x, u)
        }
    }
}

fn fit_tail(exceedances: &[f64]) -> Result<(GpdParams, TailEstimator), MarginalError> {
    match GpdParams::fit_mle(exceedances) {
        Ok(p) => Ok((p, TailEstimator::MaximumLikelihood)),
        Err(e) => {
            log::warn!("GPD maximum likelihood failed ({e}); using probability-weighted moments");
            let p = GpdParams::fit_pwm(exceedances)?;
            // The support must cover every observed exceedance.
            let max = exceedances.iter().cloned().fold(0.0, f64::max);
            if max >= p.upper_endpoint() {
                return Err(MarginalError::MleFailed(
                    "PWM support excludes observed exceedances".into(),
                ));
            }
            Ok((p, TailEstimator::ProbabilityWeightedMoments))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn draw_gpd(p: GpdParams, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let s: f64 = 1.0 - rng.random::<f64>();
                p.inverse_survival(s)
            })
            .collect()
    }

    #[test]
    fn survival_matches_closed_form() {
        for &(xi, beta) in &[(0.3, 2.0), (-0.2, 1.5), (1.2, 0.7)] {
            let p = GpdParams::new(xi, beta);
            for &z in &[0.0, 0.1, 1.0, 3.7, 2.0] {
                let closed: f64 = (1.0 + xi * z / beta).powf(-1.0 / xi);
                assert!((p.survival(z) - closed).abs() <= 1e-12, "xi={xi} z={z}");
            }
        }
    }

    #[test]
    fn exponential_limit() {
        let beta = 2.5;
        let expected = 1.0 - (-1.0f64).exp();
        let exact_zero = GpdParams::new(0.0, beta);
        let tiny = GpdParams::new(1e-9, beta);
        assert!((exact_zero.cdf(beta) - expected).abs() <= 1e-9);
        assert!((tiny.cdf(beta) - expected).abs() <= 1e-9);
        // Series branch agrees with the direct formula inside the cutoff.
        let xi: f64 = 0.9e-6;
        let direct = (-(3.0 * xi).ln_1p() / xi).exp();
        assert!((GpdParams::new(xi, 1.0).survival(3.0) - direct).abs() < 1e-14);
    }

    #[test]
    fn inverse_survival_round_trip() {
        for &xi in &[-0.4, -1e-7, 0.0, 2e-7, 0.25, 0.9] {
            let p = GpdParams::new(xi, 1.3);
            for &s in &[0.9, 0.5, 1e-3, 1e-8] {
                let z = p.inverse_survival(s);
                assert!((p.survival(z) - s).abs() <= 1e-12 * s.max(1e-3), "xi={xi} s={s}");
            }
        }
    }

    #[test]
    fn mle_recovers_shape_and_scale() {
        let truth = GpdParams::new(0.3, 2.0);
        let mut xi_err = Vec::new();
        let mut beta_err = Vec::new();
        for seed in 0..20 {
            let z = draw_gpd(truth, 10_000, seed);
            let fit = GpdParams::fit_mle(&z).unwrap();
            xi_err.push((fit.xi - truth.xi).abs());
            beta_err.push((fit.beta - truth.beta).abs() / truth.beta);
        }
        xi_err.sort_by(|a, b| a.total_cmp(b));
        beta_err.sort_by(|a, b| a.total_cmp(b));
        assert!(xi_err[10] <= 0.1, "median xi error {}", xi_err[10]);
        assert!(beta_err[10] <= 0.15, "median beta error {}", beta_err[10]);
    }

    #[test]
    fn mle_beats_pwm_likelihood() {
        let z = draw_gpd(GpdParams::new(0.1, 1.0), 2000, 7);
        let mle = GpdParams::fit_mle(&z).unwrap();
        let pwm = GpdParams::fit_pwm(&z).unwrap();
        assert!(mle.log_likelihood(&z) >= pwm.log_likelihood(&z) - 1e-9);
        assert!((mle.xi - pwm.xi).abs() < 0.1);
    }

    #[test]
    fn too_few_exceedances() {
        assert!(matches!(
            GpdParams::fit_mle(&[1.0, 2.0]),
            Err(MarginalError::TooFewExceedances(2))
        ));
    }
}
