//! Fitting the marginal, separable and joint models for one window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{lag_labels, AssetCatalog, EngineConfig, EngineError, Quantity};
use crate::ingest::{DayWindow, DeviationPanel};
use crate::linalg::{Matrix, Vector};
use crate::marginals::{
    fit_conditional_bins, fit_marginal, BinnedConditionalModel, MarginalKind, MarginalModel,
};
use crate::precision::{
    dependency_graph, distance_penalty, gemini, sample_correlation, select_penalty, DependencyGraph,
    GeminiOptions, PenaltySpec, PrecisionEstimate, SeparableGaussianModel,
};
use crate::solarpca::{fit_solar_model, SolarPcaModel};
use crate::stats::{mean, variance};
use crate::NUM_LAGS;

/// A lag is daylight when pooled solar output is positive on at least this
/// share of days.
pub const DAYLIGHT_MIN_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadModel {
    pub units: Vec<String>,
    /// Indexed `unit · 24 + lag`.
    pub marginals: Vec<MarginalModel>,
    pub separable: SeparableGaussianModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindModel {
    pub units: Vec<String>,
    pub zone_index: Vec<usize>,
    pub capacity: Vec<Option<f64>>,
    /// Unconditional marginals used to Gaussianize history, `unit · 24 + lag`.
    pub marginals: Vec<MarginalModel>,
    /// Forecast-binned deviation distributions, `unit · 24 + lag`.
    pub conditional: Vec<BinnedConditionalModel>,
    pub separable: SeparableGaussianModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolarModel {
    pub units: Vec<String>,
    pub zone_index: Vec<usize>,
    pub capacity: Vec<Option<f64>>,
    pub marginals: Vec<MarginalModel>,
    pub pca: SolarPcaModel,
}

/// A zonal daylight aggregate in the joint model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointVariable {
    pub quantity: Quantity,
    pub zone: usize,
    pub label: String,
    /// Mean and standard deviation of the aggregate over the window.
    pub mean: f64,
    pub std_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointModel {
    pub variables: Vec<JointVariable>,
    /// Fitted on the correlation matrix of the aggregates.
    pub estimate: PrecisionEstimate,
    pub lambda: f64,
    pub graph: DependencyGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedSystem {
    pub window: DayWindow,
    pub zones: Vec<String>,
    pub sunrise_lag: usize,
    pub sunset_lag: usize,
    pub load: LoadModel,
    pub wind: WindModel,
    pub solar: SolarModel,
    pub joint: JointModel,
    pub wind_independent: bool,
    pub config: EngineConfig,
}

impl FittedSystem {
    pub fn daylight(&self) -> std::ops::RangeInclusive<usize> {
        self.sunrise_lag..=self.sunset_lag
    }

    /// SHA-256 of the JSON serialization.
    pub fn model_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("system serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// First and last lag at which the summed solar actuals are positive on at
/// least [`DAYLIGHT_MIN_FRACTION`] of the days.
pub fn detect_diurnal_range(solar: &DeviationPanel) -> Result<(usize, usize), EngineError> {
    let n = solar.num_days();
    if n == 0 || solar.num_units() == 0 {
        return Err(EngineError::NoDaylight);
    }
    let lit: Vec<usize> = (0..NUM_LAGS)
        .filter(|&l| {
            let sunny = (0..n)
                .filter(|&d| (0..solar.num_units()).map(|u| solar.actual(u, l, d)).sum::<f64>() > 0.0)
                .count();
            sunny as f64 >= DAYLIGHT_MIN_FRACTION * n as f64
        })
        .collect();
    match (lit.first(), lit.last()) {
        (Some(&a), Some(&b)) => Ok((a, b)),
        _ => Err(EngineError::NoDaylight),
    }
}

fn fit_marginals(
    quantity: Quantity,
    panel: &DeviationPanel,
    kind: MarginalKind,
    config: &EngineConfig,
) -> Result<Vec<MarginalModel>, EngineError> {
    let cfg = config.marginal_config();
    (0..panel.num_units() * NUM_LAGS)
        .into_par_iter()
        .map(|i| {
            let (u, l) = (i / NUM_LAGS, i % NUM_LAGS);
            fit_marginal(kind, &panel.series(u, l), &cfg).map_err(|source| EngineError::Marginal {
                quantity,
                unit: panel.units[u].clone(),
                lag: l,
                source,
            })
        })
        .collect()
}

/// Per-day `units × 24` score matrices.
fn gaussianize(panel: &DeviationPanel, marginals: &[MarginalModel]) -> Vec<Matrix> {
    (0..panel.num_days())
        .into_par_iter()
        .map(|d| {
            Matrix::from_fn(panel.num_units(), NUM_LAGS, |u, l| {
                marginals[u * NUM_LAGS + l].to_score(panel.deviation(u, l, d))
            })
        })
        .collect()
}

fn check_units(panel: &DeviationPanel, expected: &[String], q: Quantity) -> Result<(), EngineError> {
    if panel.units != expected {
        return Err(EngineError::Data(format!(
            "{q} panel units differ from the catalog order"
        )));
    }
    if expected.is_empty() {
        return Err(EngineError::Catalog(format!("no {q} units")));
    }
    Ok(())
}

fn gemini_options(config: &EngineConfig) -> GeminiOptions {
    let mut grid = PenaltySpec::grid(&config.lambda_grid);
    grid.gamma = config.ebic_gamma;
    GeminiOptions {
        row_penalty: grid.clone(),
        col_penalty: grid,
        tol: config.tol,
        max_iter: config.max_iter,
        ..Default::default()
    }
}

fn require_converged(model: &SeparableGaussianModel, what: &str) -> Result<(), EngineError> {
    for (side, est) in [("spatial", &model.spatial), ("temporal", &model.temporal)] {
        if !est.converged {
            return Err(EngineError::precision(
                format!("{what} {side} factor"),
                crate::precision::PrecisionError::NotConverged(est.iterations),
            ));
        }
    }
    Ok(())
}

fn fit_load(
    panel: &DeviationPanel,
    config: &EngineConfig,
) -> Result<(LoadModel, Vec<Matrix>), EngineError> {
    let kind = if config.force_empirical {
        MarginalKind::Normal
    } else {
        MarginalKind::GpdTailed
    };
    let marginals = fit_marginals(Quantity::Load, panel, kind, config)?;
    let days = gaussianize(panel, &marginals);
    let separable = gemini(&days, &gemini_options(config))
        .map_err(|e| EngineError::precision("load separable model", e))?
        .with_labels(panel.units.clone(), lag_labels());
    require_converged(&separable, "load")?;
    Ok((
        LoadModel {
            units: panel.units.clone(),
            marginals,
            separable,
        },
        days,
    ))
}

fn fit_wind(
    panel: &DeviationPanel,
    catalog: &AssetCatalog,
    config: &EngineConfig,
) -> Result<(WindModel, Vec<Matrix>), EngineError> {
    let marginals = fit_marginals(Quantity::Wind, panel, MarginalKind::Empirical, config)?;
    let cfg = config.marginal_config();
    let conditional = (0..panel.num_units() * NUM_LAGS)
        .into_par_iter()
        .map(|i| {
            let (u, l) = (i / NUM_LAGS, i % NUM_LAGS);
            fit_conditional_bins(
                &panel.forecast_series(u, l),
                &panel.series(u, l),
                config.bins,
                config.min_bin_count,
                &cfg,
            )
            .map_err(|source| EngineError::Marginal {
                quantity: Quantity::Wind,
                unit: panel.units[u].clone(),
                lag: l,
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let reduced = conditional.iter().filter(|m| m.num_bins() < config.bins).count();
    if reduced > 0 {
        log::warn!(
            "{reduced} of {} wind conditional models use fewer than {} forecast bins",
            conditional.len(),
            config.bins
        );
    }
    let days = gaussianize(panel, &marginals);
    let mut options = gemini_options(config);
    if config.distance_base > 0.0 && panel.num_units() > 1 {
        let shape = distance_penalty(&panel.units, &catalog.locations(Quantity::Wind), config.distance_base)
            .map_err(|e| EngineError::precision("wind distance penalty", e))?;
        options.row_penalty.shape = Some(shape);
    }
    let separable = gemini(&days, &options)
        .map_err(|e| EngineError::precision("wind separable model", e))?
        .with_labels(panel.units.clone(), lag_labels());
    require_converged(&separable, "wind")?;
    Ok((
        WindModel {
            units: panel.units.clone(),
            zone_index: catalog.zone_indices(Quantity::Wind),
            capacity: catalog.capacities(Quantity::Wind),
            marginals,
            conditional,
            separable,
        },
        days,
    ))
}

fn fit_solar(
    panel: &DeviationPanel,
    catalog: &AssetCatalog,
    config: &EngineConfig,
) -> Result<(SolarModel, Vec<Matrix>), EngineError> {
    let marginals = fit_marginals(Quantity::Solar, panel, MarginalKind::Empirical, config)?;
    let days = gaussianize(panel, &marginals);
    let pca = fit_solar_model(&days, &panel.units, config.pca_threshold, &gemini_options(config))?;
    require_converged(&pca.separable, "solar")?;
    Ok((
        SolarModel {
            units: panel.units.clone(),
            zone_index: catalog.zone_indices(Quantity::Solar),
            capacity: catalog.capacities(Quantity::Solar),
            marginals,
            pca,
        },
        days,
    ))
}

/// Per-day sums over `lags` of the units in each zone; `None` for zones
/// without units.
fn zonal_daylight_sums(
    days: &[Matrix],
    zone_index: &[usize],
    num_zones: usize,
    lags: std::ops::RangeInclusive<usize>,
) -> Vec<Option<Vec<f64>>> {
    (0..num_zones)
        .map(|z| {
            let members: Vec<usize> = (0..zone_index.len()).filter(|&u| zone_index[u] == z).collect();
            if members.is_empty() {
                return None;
            }
            Some(
                days.iter()
                    .map(|m| {
                        members
                            .iter()
                            .map(|&u| lags.clone().map(|l| m[(u, l)]).sum::<f64>())
                            .sum()
                    })
                    .collect(),
            )
        })
        .collect()
}

fn fit_joint(
    zones: &[String],
    series: Vec<(Quantity, Vec<Option<Vec<f64>>>)>,
    config: &EngineConfig,
) -> Result<JointModel, EngineError> {
    let mut variables = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (q, per_zone) in series {
        for (z, s) in per_zone.into_iter().enumerate() {
            let Some(s) = s else { continue };
            let (mu, sd) = (mean(&s), variance(&s).sqrt());
            if !(sd > 1e-12 * (1.0 + mu.abs())) {
                log::warn!("{q} aggregate of zone {} has no variance; left out of the joint model", zones[z]);
                continue;
            }
            variables.push(JointVariable {
                quantity: q,
                zone: z,
                label: format!("{q}:{}", zones[z]),
                mean: mu,
                std_dev: sd,
            });
            columns.push(s);
        }
    }
    let labels: Vec<String> = variables.iter().map(|v| v.label.clone()).collect();
    let v = columns.len();
    let (estimate, lambda) = if v == 0 {
        (
            PrecisionEstimate {
                theta: Matrix::zeros(0, 0),
                sigma: Matrix::zeros(0, 0),
                objective_trace: Vec::new(),
                converged: true,
                iterations: 0,
                jitter_added: false,
            },
            0.0,
        )
    } else {
        let n = columns[0].len();
        let data = Matrix::from_fn(n, v, |d, j| columns[j][d]);
        let s = sample_correlation(&data).map_err(|e| EngineError::precision("joint aggregates", e))?;
        let mut spec = PenaltySpec::grid(&config.lambda_grid);
        spec.gamma = config.ebic_gamma;
        let sel = select_penalty(&s, n, &spec, config.tol, config.max_iter)
            .map_err(|e| EngineError::precision("joint model", e))?;
        let est = sel
            .estimate
            .require_converged()
            .map_err(|e| EngineError::precision("joint model", e))?;
        (est, sel.lambda)
    };
    let graph = dependency_graph(&estimate, &labels, config.edge_threshold);
    Ok(JointModel {
        variables,
        estimate,
        lambda,
        graph,
    })
}

/// True when no edge joins a wind aggregate to a load or solar aggregate.
fn wind_is_independent(joint: &JointModel) -> bool {
    !joint.graph.edges.iter().any(|e| {
        let (a, b) = (joint.variables[e.a].quantity, joint.variables[e.b].quantity);
        (a == Quantity::Wind) != (b == Quantity::Wind)
    })
}

/// Fit every model for `window` from panels restricted to its history days.
pub fn fit_system(
    load: &DeviationPanel,
    wind: &DeviationPanel,
    solar: &DeviationPanel,
    catalog: &AssetCatalog,
    window: &DayWindow,
    config: &EngineConfig,
) -> Result<FittedSystem, EngineError> {
    let zones = catalog.zones();
    check_units(load, &zones, Quantity::Load)?;
    check_units(wind, &catalog.units(Quantity::Wind), Quantity::Wind)?;
    check_units(solar, &catalog.units(Quantity::Solar), Quantity::Solar)?;
    for (q, p) in [(Quantity::Load, load), (Quantity::Wind, wind), (Quantity::Solar, solar)] {
        if p.days != window.history_days {
            return Err(EngineError::Data(format!("{q} panel days differ from the window")));
        }
    }
    let (sunrise_lag, sunset_lag) = detect_diurnal_range(solar)?;
    let (load_fit, (wind_fit, solar_fit)) = rayon::join(
        || fit_load(load, config),
        || rayon::join(|| fit_wind(wind, catalog, config), || fit_solar(solar, catalog, config)),
    );
    let (load_model, load_days) = load_fit?;
    let (wind_model, wind_days) = wind_fit?;
    let (solar_model, solar_days) = solar_fit?;

    let daylight = sunrise_lag..=sunset_lag;
    let load_zone: Vec<usize> = (0..zones.len()).collect();
    let series = vec![
        (Quantity::Load, zonal_daylight_sums(&load_days, &load_zone, zones.len(), daylight.clone())),
        (
            Quantity::Wind,
            zonal_daylight_sums(&wind_days, &wind_model.zone_index, zones.len(), daylight.clone()),
        ),
        (
            Quantity::Solar,
            zonal_daylight_sums(&solar_days, &solar_model.zone_index, zones.len(), daylight),
        ),
    ];
    let joint = fit_joint(&zones, series, config)?;
    let wind_independent = wind_is_independent(&joint);
    if !wind_independent {
        log::warn!("wind aggregates are linked to load or solar; wind will be sampled conditionally");
    }
    log::info!(
        "fitted {} days, daylight lags {sunrise_lag}..={sunset_lag}, joint lambda {}, solar k {}",
        window.history_days.len(),
        joint.lambda,
        solar_model.pca.basis.k
    );
    Ok(FittedSystem {
        window: window.clone(),
        zones,
        sunrise_lag,
        sunset_lag,
        load: load_model,
        wind: wind_model,
        solar: solar_model,
        joint,
        wind_independent,
        config: config.clone(),
    })
}

/// Rows of the zone-membership matrix for the given zones.
pub(crate) fn membership(zone_index: &[usize], zones: &[usize]) -> Matrix {
    Matrix::from_fn(zones.len(), zone_index.len(), |r, u| {
        if zone_index[u] == zones[r] {
            1.0
        } else {
            0.0
        }
    })
}

pub(crate) fn daylight_indicator(lags: std::ops::RangeInclusive<usize>) -> Vector {
    Vector::from_fn(NUM_LAGS, |l, _| if lags.contains(&l) { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn solar_panel(lit: &[usize]) -> DeviationPanel {
        let days: Vec<NaiveDate> = (0..40)
            .map(|d| NaiveDate::from_ymd_opt(2018, 3, 1).unwrap() + chrono::Duration::days(d))
            .collect();
        let fc: Vec<Matrix> = days
            .iter()
            .map(|_| Matrix::from_fn(2, NUM_LAGS, |_, l| if lit.contains(&l) { 5.0 } else { 0.0 }))
            .collect();
        let dev = vec![Matrix::zeros(2, NUM_LAGS); days.len()];
        DeviationPanel::from_day_matrices(vec!["s1".into(), "s2".into()], days, &dev, &fc)
    }

    #[test]
    fn diurnal_range_cases() {
        let lit: Vec<usize> = (7..=19).collect();
        assert_eq!(detect_diurnal_range(&solar_panel(&lit)).unwrap(), (7, 19));
        let all: Vec<usize> = (0..24).collect();
        assert_eq!(detect_diurnal_range(&solar_panel(&all)).unwrap(), (0, 23));
        assert_eq!(detect_diurnal_range(&solar_panel(&[12])).unwrap(), (12, 12));
        assert!(matches!(detect_diurnal_range(&solar_panel(&[])), Err(EngineError::NoDaylight)));
    }

    #[test]
    fn membership_rows() {
        let m = membership(&[0, 1, 1, 2], &[1, 2]);
        assert_eq!(m, Matrix::from_row_slice(2, 4, &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]));
        let v = daylight_indicator(7..=9);
        assert_eq!(v.sum(), 3.0);
        assert_eq!(v[7], 1.0);
    }
}
