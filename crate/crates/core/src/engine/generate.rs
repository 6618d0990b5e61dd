//! Scenario generation for one target day.
//!
//! Draw `i` uses stream `i` of four independent generators (joint, load,
//! wind, solar), so wind scenarios depend only on the wind model when wind
//! is independent of the rest.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{daylight_indicator, membership};
use super::{EngineError, FittedSystem, Quantity};
use crate::linalg::{Matrix, Vector};
use crate::marginals::conditional_sample_value;
use crate::sampler::{
    covariance_factor, standard_normals, KroneckerConditioner, KroneckerConstraint, KroneckerFactor,
    SeedStream,
};
use crate::stats::std_normal_cdf;
use crate::NUM_LAGS;

/// Point forecasts for the target day, `units × 24` per quantity in the
/// system's unit order.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetForecasts {
    pub load: Matrix,
    pub wind: Matrix,
    pub solar: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub target_day: NaiveDate,
    pub quantity: Quantity,
    pub units: Vec<String>,
    /// One `units × 24` matrix of simulated actuals per scenario.
    #[serde(skip)]
    pub scenarios: Vec<Matrix>,
    #[serde(skip)]
    pub forecasts: Matrix,
    pub seed: u64,
    pub model_hash: String,
    pub in_sample: bool,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

/// Gaussian-domain intermediates, kept for consistency checks.
#[derive(Debug, Clone, Default)]
pub struct GenerationTrace {
    /// Step-one aggregates per scenario, one entry per joint variable
    /// (`NaN` for variables that were not sampled).
    pub aggregates: Vec<Vector>,
    pub load_scores: Vec<Matrix>,
    pub wind_scores: Vec<Matrix>,
    /// Reconstructed Gaussian solar curves.
    pub solar_curves: Vec<Matrix>,
}

#[derive(Debug, Clone)]
pub struct ScenarioBundle {
    pub load: ScenarioSet,
    pub wind: ScenarioSet,
    pub solar: ScenarioSet,
    pub trace: Option<GenerationTrace>,
}

impl ScenarioBundle {
    pub fn get(&self, q: Quantity) -> &ScenarioSet {
        match q {
            Quantity::Load => &self.load,
            Quantity::Wind => &self.wind,
            Quantity::Solar => &self.solar,
        }
    }
}

/// Conditioner for one quantity plus the joint variables feeding it:
/// `b_r = agg[var_r] − offset_r`.
struct Coupling {
    conditioner: KroneckerConditioner,
    vars: Vec<usize>,
    offsets: Vec<f64>,
}

impl Coupling {
    fn targets(&self, aggregates: &Vector) -> Vector {
        Vector::from_fn(self.vars.len(), |r, _| aggregates[self.vars[r]] - self.offsets[r])
    }
}

struct Plan {
    /// Joint variables drawn in step one.
    sampled: Vec<usize>,
    joint_factor: Matrix,
    load: Coupling,
    solar: Coupling,
    wind: Option<Coupling>,
    wind_factor: KroneckerFactor,
}

fn vars_of(system: &FittedSystem, q: Quantity) -> Vec<usize> {
    (0..system.joint.variables.len())
        .filter(|&i| system.joint.variables[i].quantity == q)
        .collect()
}

fn plan(system: &FittedSystem) -> Result<Plan, EngineError> {
    let repair = system.config.psd_repair();
    let joint = &system.joint;
    let sampled: Vec<usize> = (0..joint.variables.len())
        .filter(|&i| !(system.wind_independent && joint.variables[i].quantity == Quantity::Wind))
        .collect();
    let sub = Matrix::from_fn(sampled.len(), sampled.len(), |i, j| {
        joint.estimate.sigma[(sampled[i], sampled[j])]
    });
    let joint_factor = covariance_factor(&sub, repair)?;
    let daylight = daylight_indicator(system.daylight());

    let load_vars = vars_of(system, Quantity::Load);
    let load_zones: Vec<usize> = load_vars.iter().map(|&v| joint.variables[v].zone).collect();
    let load_sep = &system.load.separable;
    let load = Coupling {
        conditioner: KroneckerConditioner::new(
            load_sep.spatial_cov(),
            load_sep.temporal_cov(),
            KroneckerConstraint {
                rows: membership(&(0..system.zones.len()).collect::<Vec<_>>(), &load_zones),
                col_weights: daylight.clone(),
            },
            repair,
            true,
        )?,
        offsets: vec![0.0; load_vars.len()],
        vars: load_vars,
    };

    let solar_vars = vars_of(system, Quantity::Solar);
    let solar_zones: Vec<usize> = solar_vars.iter().map(|&v| joint.variables[v].zone).collect();
    let basis = &system.solar.pca.basis;
    let (weights, offset) = basis.lag_sum_weights(system.daylight());
    let rows = membership(&system.solar.zone_index, &solar_zones);
    let offsets = (0..rows.nrows()).map(|r| rows.row(r).sum() * offset).collect();
    let solar_sep = &system.solar.pca.separable;
    let solar = Coupling {
        conditioner: KroneckerConditioner::new(
            solar_sep.spatial_cov(),
            solar_sep.temporal_cov(),
            KroneckerConstraint {
                rows,
                col_weights: weights,
            },
            repair,
            true,
        )?,
        offsets,
        vars: solar_vars,
    };

    let wind_sep = &system.wind.separable;
    let wind_factor = KroneckerFactor::new(wind_sep.spatial_cov(), wind_sep.temporal_cov(), repair)?;
    let wind = if system.wind_independent {
        None
    } else {
        let wind_vars = vars_of(system, Quantity::Wind);
        let wind_zones: Vec<usize> = wind_vars.iter().map(|&v| joint.variables[v].zone).collect();
        Some(Coupling {
            conditioner: KroneckerConditioner::new(
                wind_sep.spatial_cov(),
                wind_sep.temporal_cov(),
                KroneckerConstraint {
                    rows: membership(&system.wind.zone_index, &wind_zones),
                    col_weights: daylight,
                },
                repair,
                true,
            )?,
            offsets: vec![0.0; wind_vars.len()],
            vars: wind_vars,
        })
    };
    Ok(Plan {
        sampled,
        joint_factor,
        load,
        solar,
        wind,
        wind_factor,
    })
}

fn clip(x: f64, capacity: Option<f64>) -> f64 {
    let x = x.max(0.0);
    match capacity {
        Some(c) => x.min(c),
        None => x,
    }
}

fn check_shape(m: &Matrix, rows: usize, q: Quantity) -> Result<(), EngineError> {
    if m.shape() != (rows, NUM_LAGS) {
        return Err(EngineError::Data(format!(
            "{q} forecasts are {}x{}, expected {rows}x{NUM_LAGS}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(EngineError::Data(format!("{q} forecasts contain non-finite values")));
    }
    Ok(())
}

struct Draw {
    load: Matrix,
    wind: Matrix,
    solar: Matrix,
    aggregates: Vector,
    load_scores: Matrix,
    wind_scores: Matrix,
    solar_curves: Matrix,
}

fn draw_one(system: &FittedSystem, plan: &Plan, fc: &TargetForecasts, seed: u64, i: u64) -> Draw {
    let joint = &system.joint;
    // Step 1: zonal daylight aggregates.
    let g = standard_normals(&mut SeedStream::new(seed, "joint").rng(i), plan.sampled.len());
    let x = &plan.joint_factor * g;
    let mut aggregates = Vector::from_element(joint.variables.len(), f64::NAN);
    for (k, &v) in plan.sampled.iter().enumerate() {
        let var = &joint.variables[v];
        aggregates[v] = var.mean + var.std_dev * x[k];
    }

    // Step 2: load given its aggregates.
    let load_scores = plan.load.conditioner.draw(
        &mut SeedStream::new(seed, "load").rng(i),
        &plan.load.targets(&aggregates),
    );
    // Step 3: solar scores given its aggregates, then curves.
    let solar_scores = plan.solar.conditioner.draw(
        &mut SeedStream::new(seed, "solar").rng(i),
        &plan.solar.targets(&aggregates),
    );
    let solar_curves = system.solar.pca.basis.reconstruct(&solar_scores);
    let mut wind_rng = SeedStream::new(seed, "wind").rng(i);
    let wind_scores = match &plan.wind {
        None => plan.wind_factor.draw(&mut wind_rng),
        Some(c) => c.conditioner.draw(&mut wind_rng, &c.targets(&aggregates)),
    };

    // Step 4: back to MW.
    let load = Matrix::from_fn(fc.load.nrows(), NUM_LAGS, |u, l| {
        fc.load[(u, l)] + system.load.marginals[u * NUM_LAGS + l].from_score(load_scores[(u, l)])
    });
    let solar = Matrix::from_fn(fc.solar.nrows(), NUM_LAGS, |u, l| {
        let dev = system.solar.marginals[u * NUM_LAGS + l].from_score(solar_curves[(u, l)]);
        clip(fc.solar[(u, l)] + dev, system.solar.capacity[u])
    });
    let wind = Matrix::from_fn(fc.wind.nrows(), NUM_LAGS, |u, l| {
        let f = fc.wind[(u, l)];
        let dev = conditional_sample_value(
            &system.wind.conditional[u * NUM_LAGS + l],
            f,
            std_normal_cdf(wind_scores[(u, l)]),
        );
        clip(f + dev, system.wind.capacity[u])
    });
    Draw {
        load,
        wind,
        solar,
        aggregates,
        load_scores,
        wind_scores,
        solar_curves,
    }
}

/// `m` scenarios for `target_day`.
pub fn generate_scenarios(
    system: &FittedSystem,
    target_day: NaiveDate,
    forecasts: &TargetForecasts,
    m: usize,
    seed: u64,
) -> Result<ScenarioBundle, EngineError> {
    generate(system, target_day, forecasts, m, seed, false)
}

/// As [`generate_scenarios`], also returning the Gaussian intermediates.
pub fn generate_scenarios_traced(
    system: &FittedSystem,
    target_day: NaiveDate,
    forecasts: &TargetForecasts,
    m: usize,
    seed: u64,
) -> Result<ScenarioBundle, EngineError> {
    generate(system, target_day, forecasts, m, seed, true)
}

fn generate(
    system: &FittedSystem,
    target_day: NaiveDate,
    forecasts: &TargetForecasts,
    m: usize,
    seed: u64,
    keep_trace: bool,
) -> Result<ScenarioBundle, EngineError> {
    check_shape(&forecasts.load, system.load.units.len(), Quantity::Load)?;
    check_shape(&forecasts.wind, system.wind.units.len(), Quantity::Wind)?;
    check_shape(&forecasts.solar, system.solar.units.len(), Quantity::Solar)?;
    let plan = plan(system)?;
    let draws: Vec<Draw> = (0..m as u64)
        .into_par_iter()
        .map(|i| draw_one(system, &plan, forecasts, seed, i))
        .collect();
    for (i, d) in draws.iter().enumerate() {
        if [&d.load, &d.wind, &d.solar].iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(EngineError::Data(format!("scenario {i} has non-finite values")));
        }
    }
    let hash = system.model_hash();
    let in_sample = system.window.in_sample;
    let set = |quantity, units: &Vec<String>, fc: &Matrix, pick: &dyn Fn(&Draw) -> Matrix| ScenarioSet {
        target_day,
        quantity,
        units: units.clone(),
        scenarios: draws.iter().map(pick).collect(),
        forecasts: fc.clone(),
        seed,
        model_hash: hash.clone(),
        in_sample,
    };
    let load = set(Quantity::Load, &system.load.units, &forecasts.load, &|d| d.load.clone());
    let wind = set(Quantity::Wind, &system.wind.units, &forecasts.wind, &|d| d.wind.clone());
    let solar = set(Quantity::Solar, &system.solar.units, &forecasts.solar, &|d| d.solar.clone());
    let trace = keep_trace.then(|| GenerationTrace {
        aggregates: draws.iter().map(|d| d.aggregates.clone()).collect(),
        load_scores: draws.iter().map(|d| d.load_scores.clone()).collect(),
        wind_scores: draws.iter().map(|d| d.wind_scores.clone()).collect(),
        solar_curves: draws.iter().map(|d| d.solar_curves.clone()).collect(),
    });
    Ok(ScenarioBundle {
        load,
        wind,
        solar,
        trace,
    })
}
