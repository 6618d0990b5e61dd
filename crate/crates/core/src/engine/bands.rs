//! Scenario bands and error summaries.

use super::ScenarioSet;
use crate::linalg::Matrix;
use crate::stats::quantile_sorted;
use crate::NUM_LAGS;

pub const DEFAULT_TRIM: f64 = 0.01;
/// Denominator floor for percentage errors.
pub const MAPE_FLOOR_MW: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BandStatistics {
    /// `units × 24` lower and upper band; `NaN` when there are no scenarios.
    pub lower: Matrix,
    pub upper: Matrix,
    /// Per-scenario mean of `|s − a| / max(|a|, 1 MW)` over units and lags.
    pub mape: Option<Vec<f64>>,
}

impl BandStatistics {
    /// Fraction of cells of `actuals` inside `[lower, upper]`.
    pub fn coverage(&self, actuals: &Matrix) -> f64 {
        let inside = self
            .lower
            .iter()
            .zip(self.upper.iter())
            .zip(actuals.iter())
            .filter(|((lo, hi), a)| *lo <= *a && *a <= *hi)
            .count();
        inside as f64 / actuals.len() as f64
    }
}

/// Per-cell `[trim, 1 − trim]` quantiles across scenarios (type 7).
pub fn band_statistics(set: &ScenarioSet, trim: f64, actuals: Option<&Matrix>) -> BandStatistics {
    assert!((0.0..0.5).contains(&trim), "trim must lie in [0, 0.5)");
    let p = set.units.len();
    let mut lower = Matrix::from_element(p, NUM_LAGS, f64::NAN);
    let mut upper = lower.clone();
    if !set.scenarios.is_empty() {
        let mut cell = Vec::with_capacity(set.scenarios.len());
        for u in 0..p {
            for l in 0..NUM_LAGS {
                cell.clear();
                cell.extend(set.scenarios.iter().map(|s| s[(u, l)]));
                cell.sort_by(f64::total_cmp);
                lower[(u, l)] = quantile_sorted(&cell, trim);
                upper[(u, l)] = quantile_sorted(&cell, 1.0 - trim);
            }
        }
    }
    let mape = actuals.map(|a| {
        set.scenarios
            .iter()
            .map(|s| {
                let total: f64 = s
                    .iter()
                    .zip(a.iter())
                    .map(|(x, y)| (x - y).abs() / y.abs().max(MAPE_FLOOR_MW))
                    .sum();
                total / s.len() as f64
            })
            .collect()
    });
    BandStatistics { lower, upper, mape }
}
