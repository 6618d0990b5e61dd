//! Deviation distributions conditional on the forecast, estimated by
//! grouping forecasts into equal-count bins.

use serde::{Deserialize, Serialize};

use super::{fit_marginal, MarginalConfig, MarginalError, MarginalKind, MarginalModel};

pub const DEFAULT_NUM_BINS: usize = 10;
pub const DEFAULT_MIN_BIN_COUNT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedConditionalModel {
    /// Interior bin edges, strictly increasing. A forecast `f` falls in bin
    /// `#{e : e <= f}`.
    pub edges: Vec<f64>,
    pub bins: Vec<MarginalModel>,
    pub counts: Vec<usize>,
}

impl BinnedConditionalModel {
    pub fn num_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn bin_index(&self, forecast: f64) -> usize {
        self.edges.partition_point(|e| *e <= forecast)
    }

    pub fn bin_for(&self, forecast: f64) -> &MarginalModel {
        &self.bins[self.bin_index(forecast)]
    }
}

/// Equal-count bin edges over `forecasts`; a split falls midway between
/// the neighbouring order statistics.
pub fn equal_count_edges(forecasts: &[f64], num_bins: usize) -> Vec<f64> {
    let sorted = crate::stats::sorted_copy(forecasts);
    let n = sorted.len();
    let mut edges = Vec::new();
    for b in 1..num_bins {
        let split = b * n / num_bins;
        if split == 0 || split >= n {
            continue;
        }
        let e = 0.5 * (sorted[split - 1] + sorted[split]);
        if edges.last().is_none_or(|last| e > *last) {
            edges.push(e);
        }
    }
    edges
}

fn assign(edges: &[f64], forecasts: &[f64]) -> Vec<usize> {
    forecasts
        .iter()
        .map(|f| edges.partition_point(|e| *e <= *f))
        .collect()
}

/// Fit per-bin empirical deviation distributions.
///
/// When there are fewer than `num_bins × min_bin_count` pairs the bin count
/// drops to what the data supports (at least one). Bins left with fewer than
/// `min_bin_count` members after tie handling are merged into a neighbour.
pub fn fit_conditional_bins(
    forecasts: &[f64],
    deviations: &[f64],
    num_bins: usize,
    min_bin_count: usize,
    config: &MarginalConfig,
) -> Result<BinnedConditionalModel, MarginalError> {
    if forecasts.len() != deviations.len() {
        return Err(MarginalError::LengthMismatch(forecasts.len(), deviations.len()));
    }
    let n = forecasts.len();
    if n == 0 {
        return Err(MarginalError::TooFewSamples { have: 0, need: 1 });
    }
    let min_bin_count = min_bin_count.max(1);
    let mut bins_wanted = num_bins.max(1);
    if n < bins_wanted * min_bin_count {
        let reduced = (n / min_bin_count).max(1);
        log::debug!(
            "{n} forecast/deviation pairs cannot fill {bins_wanted} bins of {min_bin_count}; using {reduced}"
        );
        bins_wanted = reduced;
    }
    let mut edges = equal_count_edges(forecasts, bins_wanted);
    loop {
        let membership = assign(&edges, forecasts);
        let mut counts = vec![0usize; edges.len() + 1];
        for b in &membership {
            counts[*b] += 1;
        }
        let small = counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c < min_bin_count)
            .min_by_key(|(_, c)| **c)
            .map(|(i, _)| i);
        match small {
            Some(i) if !edges.is_empty() => {
                // Merge with the smaller neighbour by removing the shared edge.
                let left = if i > 0 { Some(counts[i - 1]) } else { None };
                let right = counts.get(i + 1).copied();
                let edge = match (left, right) {
                    (Some(l), Some(r)) if l <= r => i - 1,
                    (Some(_), None) => i - 1,
                    _ => i,
                };
                edges.remove(edge);
            }
            _ => {
                let mut grouped: Vec<Vec<f64>> = vec![Vec::new(); counts.len()];
                for (b, d) in membership.iter().zip(deviations) {
                    grouped[*b].push(*d);
                }
                let bins = grouped
                    .iter()
                    .map(|g| fit_marginal(MarginalKind::Empirical, g, config))
                    .collect::<Result<Vec<_>, _>>()?;
                return Ok(BinnedConditionalModel {
                    edges,
                    bins,
                    counts,
                });
            }
        }
    }
}

/// Deviation at probability `u` for the bin holding `forecast`; forecasts
/// outside the fitted range use the nearest edge bin.
pub fn conditional_sample_value(model: &BinnedConditionalModel, forecast: f64, u: f64) -> f64 {
    model.bin_for(forecast).quantile(u)
}
