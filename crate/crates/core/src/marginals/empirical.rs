//! Interpolated empirical CDF with exponential extrapolation past the
//! sample extremes.

use serde::{Deserialize, Serialize};

use super::MarginalError;
use crate::stats::PROB_FLOOR;

/// Default extrapolation scale as a fraction of the sample range.
pub const DEFAULT_TAIL_SPAN: f64 = 0.1;

/// Distinct values of an ascending sample and their plotting positions
/// `(mid-rank + 0.5) / n`, so the minimum and maximum of a tie-free sample
/// sit at `1/(2n)` and `1 − 1/(2n)`.
pub(crate) fn plotting_knots(sorted: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = sorted.len() as f64;
    let mut xs = Vec::with_capacity(sorted.len());
    let mut ps = Vec::with_capacity(sorted.len());
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        xs.push(sorted[i]);
        ps.push(((i + j) as f64 / 2.0 + 0.5) / n);
        i = j + 1;
    }
    (xs, ps)
}

/// Piecewise-linear interpolation through increasing knots, clamped at the
/// ends.
pub(crate) fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|v| *v <= x);
    if k == 0 {
        return ys[0];
    }
    if k >= xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[k - 1], xs[k]);
    let (y0, y1) = (ys[k - 1], ys[k]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EmpiricalRaw {
    sorted: Vec<f64>,
    tail_span: f64,
}

/// Empirical distribution of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EmpiricalRaw", into = "EmpiricalRaw")]
pub struct EmpiricalModel {
    sorted: Vec<f64>,
    tail_span: f64,
    knots_x: Vec<f64>,
    knots_p: Vec<f64>,
    tail_scale: f64,
}

impl TryFrom<EmpiricalRaw> for EmpiricalModel {
    type Error = MarginalError;

    fn try_from(raw: EmpiricalRaw) -> Result<Self, Self::Error> {
        EmpiricalModel::fit(&raw.sorted, raw.tail_span)
    }
}

impl From<EmpiricalModel> for EmpiricalRaw {
    fn from(m: EmpiricalModel) -> Self {
        EmpiricalRaw {
            sorted: m.sorted,
            tail_span: m.tail_span,
        }
    }
}

impl EmpiricalModel {
    /// Fit from a sample with at least two distinct finite values.
    pub fn fit(sample: &[f64], tail_span: f64) -> Result<Self, MarginalError> {
        if sample.iter().any(|x| !x.is_finite()) {
            return Err(MarginalError::NonFinite);
        }
        if !(tail_span > 0.0) {
            return Err(MarginalError::InvalidParameter(format!(
                "tail_span must be positive, got {tail_span}"
            )));
        }
        let sorted = crate::stats::sorted_copy(sample);
        let (knots_x, knots_p) = plotting_knots(&sorted);
        if knots_x.len() < 2 {
            return Err(MarginalError::DegenerateSample);
        }
        let range = knots_x[knots_x.len() - 1] - knots_x[0];
        Ok(Self {
            sorted,
            tail_span,
            knots_x,
            knots_p,
            tail_scale: tail_span * range,
        })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_sample(&self) -> &[f64] {
        &self.sorted
    }

    /// `1/(2n)`, the CDF value at a tie-free sample minimum.
    pub fn epsilon(&self) -> f64 {
        0.5 / self.sorted.len() as f64
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let last = self.knots_x.len() - 1;
        let p = if x < self.knots_x[0] {
            self.knots_p[0] * ((x - self.knots_x[0]) / self.tail_scale).exp()
        } else if x > self.knots_x[last] {
            1.0 - (1.0 - self.knots_p[last]) * (-(x - self.knots_x[last]) / self.tail_scale).exp()
        } else {
            interpolate(&self.knots_x, &self.knots_p, x)
        };
        p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        let last = self.knots_x.len() - 1;
        if u < self.knots_p[0] {
            self.knots_x[0] + self.tail_scale * (u / self.knots_p[0]).ln()
        } else if u > self.knots_p[last] {
            self.knots_x[last] - self.tail_scale * ((1.0 - u) / (1.0 - self.knots_p[last])).ln()
        } else {
            interpolate(&self.knots_p, &self.knots_x, u)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extremes_map_to_half_step() {
        let m = EmpiricalModel::fit(&[3.0, 1.0, 2.0, 5.0], DEFAULT_TAIL_SPAN).unwrap();
        assert_eq!(m.cdf(1.0), 1.0 / 8.0);
        assert_eq!(m.cdf(5.0), 1.0 - 1.0 / 8.0);
        assert_eq!(m.epsilon(), 1.0 / 8.0);
    }

    #[test]
    fn median_of_odd_sample() {
        let m = EmpiricalModel::fit(&[4.0, -1.0, 0.0, 7.0, 2.0], DEFAULT_TAIL_SPAN).unwrap();
        assert!((m.cdf(2.0) - 0.5).abs() < 1e-15);
        assert_eq!(m.quantile(0.5), 2.0);
    }

    #[test]
    fn ties_collapse_to_mid_rank() {
        let m = EmpiricalModel::fit(&[0.0, 1.0, 1.0, 1.0, 2.0], DEFAULT_TAIL_SPAN).unwrap();
        assert!((m.cdf(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_sample_is_degenerate() {
        assert!(matches!(
            EmpiricalModel::fit(&[2.0; 10], DEFAULT_TAIL_SPAN),
            Err(MarginalError::DegenerateSample)
        ));
    }

    #[test]
    fn serde_rebuilds_knots() {
        let m = EmpiricalModel::fit(&[0.5, -2.0, 3.0, 3.0, 1.0], 0.2).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: EmpiricalModel = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf(sample in prop::collection::vec(-1e3f64..1e3, 2..200), probe in 0.0f64..1.0) {
            prop_assume!(sample.iter().any(|x| *x != sample[0]));
            let m = EmpiricalModel::fit(&sample, DEFAULT_TAIL_SPAN).unwrap();
            for &x in &sample {
                let back = m.quantile(m.cdf(x));
                prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0));
            }
            // Monotone on and beyond the sample range.
            let lo = m.sorted_sample()[0] - 10.0;
            let hi = m.sorted_sample()[m.len() - 1] + 10.0;
            let a = lo + probe * (hi - lo);
            let b = a + 1e-3 * (hi - lo);
            prop_assert!(m.cdf(b) >= m.cdf(a));
        }
    }
}
