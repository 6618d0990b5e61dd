//! Synthetic desk-scale data with known structure.
//!
//! Load deviations are Student-t marginals over a Kronecker Gaussian. Wind
//! deviations are independent of everything else, with spread that depends
//! on the forecast. Solar deviations are rank-k daylight curves. One zone
//! carries a common daily factor shared by its load and its solar assets.

use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::engine::{Asset, AssetCatalog, Quantity};
use crate::ingest::{write_series_csv, IngestError, SeriesRecord};
use crate::linalg::{cholesky_lower, matrix_serde, Matrix};
use crate::stats::std_normal_cdf;
use crate::NUM_LAGS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    pub zones: usize,
    pub wind_assets: usize,
    pub solar_assets: usize,
    pub days: usize,
    pub start: NaiveDate,
    pub seed: u64,
    /// Degrees of freedom of the Student-t load marginals.
    pub load_tail_df: f64,
    /// Load deviation standard deviation as a share of mean zonal load.
    pub load_noise: f64,
    pub load_spatial_rho: f64,
    pub load_temporal_rho: f64,
    pub wind_temporal_rho: f64,
    /// Correlation length of wind errors in catalog coordinates; zero makes
    /// assets independent.
    pub wind_range: f64,
    pub solar_rank: usize,
    pub solar_within_zone_rho: f64,
    /// Zone index sharing a daily factor between load and solar.
    pub planted_zone: usize,
    pub planted_strength: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            zones: 8,
            wind_assets: 20,
            solar_assets: 30,
            days: 730,
            start: NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(),
            seed: 7,
            load_tail_df: 5.0,
            load_noise: 0.03,
            load_spatial_rho: 0.4,
            load_temporal_rho: 0.8,
            wind_temporal_rho: 0.7,
            wind_range: 0.1,
            solar_rank: 4,
            solar_within_zone_rho: 0.6,
            planted_zone: 0,
            planted_strength: 0.6,
        }
    }
}

/// Daylight lags of every generated fixture.
pub const FIXTURE_SUNRISE: usize = 7;
pub const FIXTURE_SUNSET: usize = 19;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureTruth {
    pub spec: FixtureSpec,
    pub zones: Vec<String>,
    #[serde(with = "matrix_serde")]
    pub load_spatial: Matrix,
    #[serde(with = "matrix_serde")]
    pub load_temporal: Matrix,
    /// Tail index of the load marginals (`1/ν`).
    pub load_tail_xi: f64,
    pub solar_rank: usize,
    pub daylight: (usize, usize),
    pub wind_independent: bool,
    /// The planted load–solar pair, as joint-model labels.
    pub planted_edge: (String, String),
    /// Edges the joint model of zonal aggregates should contain.
    pub expected_edges: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub catalog: AssetCatalog,
    pub actuals: Vec<SeriesRecord>,
    pub forecasts: Vec<SeriesRecord>,
    pub truth: FixtureTruth,
}

fn ar1(n: usize, rho: f64) -> Matrix {
    Matrix::from_fn(n, n, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

fn normals(rng: &mut ChaCha20Rng, r: usize, c: usize) -> Matrix {
    let mut m = Matrix::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

fn clear_sky(l: usize) -> f64 {
    if !(FIXTURE_SUNRISE..=FIXTURE_SUNSET).contains(&l) {
        return 0.0;
    }
    (std::f64::consts::PI * (l as f64 - 6.0) / 14.0).sin()
}

/// Smooth daylight shapes, exactly zero outside the daylight lags.
fn solar_shape(j: usize, l: usize) -> f64 {
    if !(FIXTURE_SUNRISE..=FIXTURE_SUNSET).contains(&l) {
        return 0.0;
    }
    let x = (l as f64 - 6.0) / 14.0;
    ((j + 1) as f64 * std::f64::consts::PI * x).sin()
}

pub fn generate_fixture(spec: &FixtureSpec) -> Fixture {
    assert!(spec.zones >= 1 && spec.planted_zone < spec.zones, "planted zone out of range");
    assert!(spec.load_tail_df > 2.0, "load marginals need finite variance");
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let zones: Vec<String> = (1..=spec.zones).map(|z| format!("Z{z}")).collect();
    let mut assets = Vec::new();
    for (z, id) in zones.iter().enumerate() {
        assets.push(Asset {
            id: id.clone(),
            quantity: Quantity::Load,
            zone: id.clone(),
            x: (z % 4) as f64 / 4.0 + 0.125,
            y: (z / 4) as f64 / 4.0 + 0.125,
            capacity: None,
        });
    }
    let mut wind_cap = Vec::new();
    let mut wind_xy = Vec::new();
    for w in 0..spec.wind_assets {
        let cap = 100.0 + 100.0 * rng.random::<f64>();
        let xy = (rng.random::<f64>(), rng.random::<f64>());
        assets.push(Asset {
            id: format!("W{:02}", w + 1),
            quantity: Quantity::Wind,
            zone: zones[w % spec.zones].clone(),
            x: xy.0,
            y: xy.1,
            capacity: Some(cap),
        });
        wind_cap.push(cap);
        wind_xy.push(xy);
    }
    let mut solar_cap = Vec::new();
    let mut solar_zone = Vec::new();
    for s in 0..spec.solar_assets {
        let cap = 50.0 + 100.0 * rng.random::<f64>();
        let z = s % spec.zones;
        assets.push(Asset {
            id: format!("S{:02}", s + 1),
            quantity: Quantity::Solar,
            zone: zones[z].clone(),
            x: rng.random(),
            y: rng.random(),
            capacity: Some(cap),
        });
        solar_cap.push(cap);
        solar_zone.push(z);
    }
    let catalog = AssetCatalog::new(assets).expect("fixture catalog is valid");

    let load_spatial = ar1(spec.zones, spec.load_spatial_rho);
    let load_temporal = ar1(NUM_LAGS, spec.load_temporal_rho);
    let ls = cholesky_lower(&load_spatial).unwrap();
    let lt = cholesky_lower(&load_temporal).unwrap();
    let wind_spatial = Matrix::from_fn(spec.wind_assets, spec.wind_assets, |i, j| {
        let (a, b) = (wind_xy[i], wind_xy[j]);
        if i == j {
            1.0
        } else if spec.wind_range > 0.0 {
            (-(a.0 - b.0).hypot(a.1 - b.1) / spec.wind_range).exp()
        } else {
            0.0
        }
    });
    let ws = cholesky_lower(&wind_spatial).unwrap();
    let wt = cholesky_lower(&ar1(NUM_LAGS, spec.wind_temporal_rho)).unwrap();
    let solar_spatial = Matrix::from_fn(spec.solar_assets, spec.solar_assets, |i, j| {
        if i == j {
            1.0
        } else if solar_zone[i] == solar_zone[j] {
            spec.solar_within_zone_rho
        } else {
            0.0
        }
    });
    let ss = cholesky_lower(&solar_spatial).unwrap();
    let component_sd: Vec<f64> = (0..spec.solar_rank).map(|j| 0.7f64.powi(j as i32)).collect();

    let t = StudentsT::new(0.0, 1.0, spec.load_tail_df).unwrap();
    let t_sd = (spec.load_tail_df / (spec.load_tail_df - 2.0)).sqrt();
    let base_load: Vec<f64> = (0..spec.zones).map(|z| 1500.0 + 250.0 * z as f64).collect();
    let a = spec.planted_strength;
    let keep = (1.0 - a * a).sqrt();

    let mut actuals = Vec::new();
    let mut forecasts = Vec::new();
    for d in 0..spec.days {
        let date = spec.start + Duration::days(d as i64);
        let season = (2.0 * std::f64::consts::PI * (date.ordinal() as f64 - 172.0) / 365.25).cos();
        let common: f64 = rng.sample(StandardNormal);
        let hour = |l: usize| date.and_hms_opt(l as u32, 0, 0).unwrap();

        // Load.
        let mut g = &ls * normals(&mut rng, spec.zones, NUM_LAGS) * lt.transpose();
        for l in 0..NUM_LAGS {
            g[(spec.planted_zone, l)] = keep * g[(spec.planted_zone, l)] + a * common;
        }
        let day_level = 1.0 + 0.05 * rng.sample::<f64, _>(StandardNormal);
        for (z, id) in zones.iter().enumerate() {
            for l in 0..NUM_LAGS {
                let shape = 1.0 + 0.25 * ((l as f64 - 17.0) * std::f64::consts::PI / 12.0).cos();
                let f = base_load[z] * shape * (1.0 + 0.1 * season) * day_level;
                let u = std_normal_cdf(g[(z, l)]).clamp(1e-12, 1.0 - 1e-12);
                let dev = spec.load_noise * base_load[z] * t.inverse_cdf(u) / t_sd;
                forecasts.push(SeriesRecord::new(id.clone(), hour(l), f));
                actuals.push(SeriesRecord::new(id.clone(), hour(l), f + dev));
            }
        }

        // Wind: independent of load and solar.
        let e = &ws * normals(&mut rng, spec.wind_assets, NUM_LAGS) * wt.transpose();
        for w in 0..spec.wind_assets {
            let id = format!("W{:02}", w + 1);
            let cap = wind_cap[w];
            let mut level: f64 = rng.sample(StandardNormal);
            for l in 0..NUM_LAGS {
                level = 0.9 * level + (1.0f64 - 0.81).sqrt() * rng.sample::<f64, _>(StandardNormal);
                let p = 0.05 + 0.85 * std_normal_cdf(level);
                let f = cap * p;
                let sd = cap * (0.03 + 0.3 * p * (1.0 - p));
                let actual = (f + sd * e[(w, l)]).clamp(0.0, cap);
                forecasts.push(SeriesRecord::new(id.clone(), hour(l), f));
                actuals.push(SeriesRecord::new(id.clone(), hour(l), actual));
            }
        }

        // Solar: rank-k daylight curves.
        let mut scores = &ss * normals(&mut rng, spec.solar_assets, spec.solar_rank);
        for s in 0..spec.solar_assets {
            if solar_zone[s] == spec.planted_zone {
                scores[(s, 0)] = keep * scores[(s, 0)] + a * common;
            }
        }
        for s in 0..spec.solar_assets {
            let id = format!("S{:02}", s + 1);
            let cap = solar_cap[s];
            let cloud = 0.6 + 0.4 * rng.random::<f64>();
            for l in 0..NUM_LAGS {
                let f = cap * 0.7 * clear_sky(l) * (0.8 + 0.2 * season) * cloud;
                let y: f64 = (0..spec.solar_rank)
                    .map(|j| component_sd[j] * scores[(s, j)] * solar_shape(j, l))
                    .sum();
                let actual = (f * (0.3 * y).exp()).clamp(0.0, cap);
                forecasts.push(SeriesRecord::new(id.clone(), hour(l), f));
                actuals.push(SeriesRecord::new(id.clone(), hour(l), actual));
            }
        }
    }

    let mut expected_edges: Vec<(String, String)> = (1..spec.zones)
        .map(|z| (format!("load:{}", zones[z - 1]), format!("load:{}", zones[z])))
        .collect();
    let planted_edge = (
        format!("load:{}", zones[spec.planted_zone]),
        format!("solar:{}", zones[spec.planted_zone]),
    );
    expected_edges.push(planted_edge.clone());
    let truth = FixtureTruth {
        spec: spec.clone(),
        zones,
        load_spatial,
        load_temporal,
        load_tail_xi: 1.0 / spec.load_tail_df,
        solar_rank: spec.solar_rank,
        daylight: (FIXTURE_SUNRISE, FIXTURE_SUNSET),
        wind_independent: true,
        planted_edge,
        expected_edges,
    };
    Fixture {
        catalog,
        actuals,
        forecasts,
        truth,
    }
}

/// Write `actuals.csv`, `forecasts.csv`, `catalog.csv` and `truth.json`.
pub fn write_fixture(fixture: &Fixture, dir: &Path) -> Result<(), IngestError> {
    std::fs::create_dir_all(dir)?;
    write_series_csv(&dir.join("actuals.csv"), &fixture.actuals)?;
    write_series_csv(&dir.join("forecasts.csv"), &fixture.forecasts)?;
    fixture
        .catalog
        .write_csv(&dir.join("catalog.csv"))
        .map_err(|e| IngestError::Io(std::io::Error::other(e.to_string())))?;
    let truth = serde_json::to_string_pretty(&fixture.truth).expect("truth serializes");
    std::fs::write(dir.join("truth.json"), truth)?;
    Ok(())
}
