//! Invertible per-(unit, lag) marginal distributions and the Gaussian
//! score transform built on them.

mod binned;
mod empirical;
mod gpd;

pub use binned::{
    conditional_sample_value, equal_count_edges, fit_conditional_bins, BinnedConditionalModel,
    DEFAULT_MIN_BIN_COUNT, DEFAULT_NUM_BINS,
};
pub use empirical::{EmpiricalModel, DEFAULT_TAIL_SPAN};
pub use gpd::{GpdParams, GpdTailModel, TailEstimator, MIN_EXCEEDANCES, XI_SERIES_CUTOFF};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{std_normal_cdf, std_normal_quantile, PROB_FLOOR};

/// Shapes at or above this value have infinite variance.
pub const HEAVY_TAIL_XI: f64 = 0.5;
/// Below this many observations GPD tails are not attempted.
pub const MIN_GPD_SAMPLE: usize = 100;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarginalError {
    #[error("sample has no spread")]
    DegenerateSample,
    #[error("sample contains non-finite values")]
    NonFinite,
    #[error("only {0} tail exceedances")]
    TooFewExceedances(usize),
    #[error("tail fit failed: {0}")]
    MleFailed(String),
    #[error("{have} samples, need {need}")]
    TooFewSamples { have: usize, need: usize },
    #[error("forecasts ({0}) and deviations ({1}) differ in length")]
    LengthMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Which family to fit for a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalKind {
    /// Empirical body with generalized Pareto tails.
    GpdTailed,
    Empirical,
    /// Moment-matched normal distribution.
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalConfig {
    pub tail_fraction: f64,
    pub tail_span: f64,
}

impl Default for MarginalConfig {
    fn default() -> Self {
        Self {
            tail_fraction: DEFAULT_TAIL_FRACTION,
            tail_span: DEFAULT_TAIL_SPAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalModel {
    pub mean: f64,
    pub std_dev: f64,
}

/// A fitted, invertible marginal distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarginalModel {
    GpdTailed(GpdTailModel),
    Empirical(EmpiricalModel),
    Normal(NormalModel),
    /// A series that never varied; it maps to score 0 and back to `value`.
    Constant { value: f64 },
}

impl MarginalModel {
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            MarginalModel::GpdTailed(m) => m.cdf(x),
            MarginalModel::Empirical(m) => m.cdf(x),
            MarginalModel::Normal(m) => {
                std_normal_cdf((x - m.mean) / m.std_dev).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
            }
            MarginalModel::Constant { value } => {
                if x < *value {
                    PROB_FLOOR
                } else if x > *value {
                    1.0 - PROB_FLOOR
                } else {
                    0.5
                }
            }
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            MarginalModel::GpdTailed(m) => m.quantile(u),
            MarginalModel::Empirical(m) => m.quantile(u),
            MarginalModel::Normal(m) => m.mean + m.std_dev * std_normal_quantile(u),
            MarginalModel::Constant { value } => *value,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MarginalModel::Constant { .. })
    }

    /// `Φ⁻¹(F(x))`; constant series map to 0.
    pub fn to_score(&self, x: f64) -> f64 {
        match self {
            MarginalModel::Constant { .. } => 0.0,
            MarginalModel::Normal(m) => (x - m.mean) / m.std_dev,
            _ => std_normal_quantile(self.cdf(x)),
        }
    }

    /// `F⁻¹(Φ(z))`.
    pub fn from_score(&self, z: f64) -> f64 {
        match self {
            MarginalModel::Constant { value } => *value,
            MarginalModel::Normal(m) => m.mean + m.std_dev * z,
            _ => self.quantile(std_normal_cdf(z)),
        }
    }
}

/// Map a series to standard normal scores through `model`.
pub fn to_gaussian(series: &[f64], model: &MarginalModel) -> Vec<f64> {
    series.iter().map(|&x| model.to_score(x)).collect()
}

/// Inverse of [`to_gaussian`].
pub fn from_gaussian(scores: &[f64], model: &MarginalModel) -> Vec<f64> {
    scores.iter().map(|&z| model.from_score(z)).collect()
}

/// Fit GPD tails spliced onto the empirical body.
///
/// Samples shorter than [`MIN_GPD_SAMPLE`], or whose tails cannot be fitted
/// by either maximum likelihood or probability-weighted moments, fall back
/// to an [`EmpiricalModel`] with a warning.
pub fn fit_gpd_tails(
    sample: &[f64],
    tail_fraction: f64,
    tail_span: f64,
) -> Result<MarginalModel, MarginalError> {
    if !(tail_fraction > 0.0 && tail_fraction < 0.5) {
        return Err(MarginalError::InvalidParameter(format!(
            "tail fraction {tail_fraction} outside (0, 0.5)"
        )));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(MarginalError::NonFinite);
    }
    let sorted = crate::stats::sorted_copy(sample);
    if sorted.is_empty() || sorted[0] == sorted[sorted.len() - 1] {
        return Err(MarginalError::DegenerateSample);
    }
    if sorted.len() < MIN_GPD_SAMPLE {
        log::warn!(
            "{} observations is too few for GPD tails; using the empirical distribution",
            sorted.len()
        );
        return EmpiricalModel::fit(&sorted, tail_span).map(MarginalModel::Empirical);
    }
    match GpdTailModel::fit_sorted(&sorted, tail_fraction) {
        Ok((model, _)) => {
            for (side, p) in [("lower", model.lower), ("upper", model.upper)] {
                if p.xi >= HEAVY_TAIL_XI {
                    log::warn!("{side} tail shape {:.3} implies infinite variance", p.xi);
                }
            }
            Ok(MarginalModel::GpdTailed(model))
        }
        Err(e) => {
            log::warn!("GPD tail fit failed ({e}); falling back to the empirical distribution");
            EmpiricalModel::fit(&sorted, tail_span).map(MarginalModel::Empirical)
        }
    }
}

/// Fit the requested family; a sample without spread becomes
/// [`MarginalModel::Constant`].
pub fn fit_marginal(
    kind: MarginalKind,
    sample: &[f64],
    config: &MarginalConfig,
) -> Result<MarginalModel, MarginalError> {
    if sample.is_empty() {
        return Err(MarginalError::TooFewSamples { have: 0, need: 1 });
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(MarginalError::NonFinite);
    }
    if sample.iter().all(|x| *x == sample[0]) {
        return Ok(MarginalModel::Constant { value: sample[0] });
    }
    match kind {
        MarginalKind::GpdTailed => fit_gpd_tails(sample, config.tail_fraction, config.tail_span),
        MarginalKind::Empirical => {
            EmpiricalModel::fit(sample, config.tail_span).map(MarginalModel::Empirical)
        }
        MarginalKind::Normal => {
            let mean = crate::stats::mean(sample);
            let std_dev = crate::stats::variance(sample).sqrt();
            Ok(MarginalModel::Normal(NormalModel { mean, std_dev }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_critical_5pct, ks_statistic_std_normal, mean, variance};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal, StudentT};

    fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn gpd_model(sample: &[f64]) -> GpdTailModel {
        match fit_gpd_tails(sample, DEFAULT_TAIL_FRACTION, DEFAULT_TAIL_SPAN).unwrap() {
            MarginalModel::GpdTailed(m) => m,
            other => panic!("expected GPD tails, got {other:?}"),
        }
    }

    #[test]
    fn normal_sample_has_light_tails() {
        // 10000 observations per tail: fraction 0.15 of 66667.
        let m = gpd_model(&normal_sample(66_667, 3));
        assert!(m.lower.xi <= 0.1, "lower xi {}", m.lower.xi);
        assert!(m.upper.xi <= 0.1, "upper xi {}", m.upper.xi);
    }

    #[test]
    fn splice_is_continuous() {
        let sample = normal_sample(2000, 4);
        let m = gpd_model(&sample);
        let model = MarginalModel::GpdTailed(m.clone());
        assert!((model.cdf(m.upper_threshold) - (1.0 - m.upper_fraction)).abs() < 1e-15);
        assert!((model.cdf(m.lower_threshold) - m.lower_fraction).abs() < 1e-15);
        let eps = 1e-9;
        assert!((model.cdf(m.upper_threshold + eps) - model.cdf(m.upper_threshold)).abs() < 1e-8);
        assert!((model.cdf(m.lower_threshold - eps) - model.cdf(m.lower_threshold)).abs() < 1e-8);
    }

    #[test]
    fn median_and_symmetry() {
        let mut sample = normal_sample(1001, 5);
        let n = sample.len() as f64;
        let model = fit_gpd_tails(&sample, 0.15, DEFAULT_TAIL_SPAN).unwrap();
        sample.sort_by(|a, b| a.total_cmp(b));
        let median = sample[500];
        assert!((model.cdf(median) - 0.5).abs() <= 1.0 / n);
        // Symmetric fixture: x and −x.
        let half = normal_sample(500, 6);
        let sym: Vec<f64> = half.iter().flat_map(|x| [*x, -*x]).collect();
        let m = fit_gpd_tails(&sym, 0.15, DEFAULT_TAIL_SPAN).unwrap();
        assert!(m.quantile(0.5).abs() < 1e-12);
        assert_eq!(m.to_score(m.quantile(0.5)), 0.0);
    }

    #[test]
    fn mid_tail_quantile_is_above_threshold() {
        let m = gpd_model(&normal_sample(3000, 8));
        let model = MarginalModel::GpdTailed(m.clone());
        assert!(model.quantile(1.0 - m.upper_fraction / 2.0) > m.upper_threshold);
        assert!(model.quantile(m.lower_fraction / 2.0) < m.lower_threshold);
    }

    #[test]
    fn constant_and_short_samples() {
        assert_eq!(
            fit_gpd_tails(&[1.5; 200], 0.15, DEFAULT_TAIL_SPAN),
            Err(MarginalError::DegenerateSample)
        );
        let short = normal_sample(50, 1);
        assert!(matches!(
            fit_gpd_tails(&short, 0.15, DEFAULT_TAIL_SPAN).unwrap(),
            MarginalModel::Empirical(_)
        ));
        assert!(fit_gpd_tails(&short, 0.6, DEFAULT_TAIL_SPAN).is_err());
        let c = fit_marginal(MarginalKind::Empirical, &[0.0; 5], &MarginalConfig::default());
        assert_eq!(c, Ok(MarginalModel::Constant { value: 0.0 }));
    }

    #[test]
    fn gaussianized_sample_moments_and_ks() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let t = StudentT::new(3.0).unwrap();
        let sample: Vec<f64> = (0..800).map(|_| 40.0 * t.sample(&mut rng)).collect();
        for kind in [MarginalKind::GpdTailed, MarginalKind::Empirical] {
            let model = fit_marginal(kind, &sample, &MarginalConfig::default()).unwrap();
            let z = to_gaussian(&sample, &model);
            assert!(mean(&z).abs() <= 0.05);
            assert!((variance(&z) - 1.0).abs() <= 0.1);
            assert!(ks_statistic_std_normal(&z) < ks_critical_5pct(z.len()));
            let back = from_gaussian(&z, &model);
            for (x, y) in sample.iter().zip(&back) {
                assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn model_json_round_trip() {
        let model = fit_gpd_tails(&normal_sample(500, 12), 0.1, DEFAULT_TAIL_SPAN).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        assert!(json.contains("\"kind\":\"gpd_tailed\""));
        let back: MarginalModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn gpd_tailed_quantile_inverts_cdf(seed in 0u64..10_000, scale in 0.1f64..500.0) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let t = StudentT::new(4.0).unwrap();
            let sample: Vec<f64> = (0..300).map(|_| scale * t.sample(&mut rng)).collect();
            let model = fit_gpd_tails(&sample, 0.15, DEFAULT_TAIL_SPAN).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for &x in &crate::stats::sorted_copy(&sample) {
                let u = model.cdf(x);
                prop_assert!(u >= prev);
                prev = u;
                let back = model.quantile(u);
                prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(scale * 1e-3));
            }
        }
    }
}
