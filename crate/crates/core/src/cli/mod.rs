//! Command implementations behind the `gridscen` binary.

pub mod fixture;
mod output;

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use output::{bands_csv, scenarios_csv};

use crate::engine::{
    band_statistics, generate_scenarios, AssetCatalog, Dataset, EngineConfig, EngineError, FittedSystem,
    Quantity, DEFAULT_TRIM,
};
use crate::ingest::{check_capacity, read_series_csv, resample_hourly, GapPolicy, HistoryPolicy};
use crate::precision::{dependency_graph, PrecisionError, DEFAULT_LAMBDA_GRID};
use fixture::{generate_fixture, write_fixture, FixtureSpec};

/// Environment variable that overrides the default output directory.
pub const OUT_DIR_ENV: &str = "GRIDSCEN_OUT_DIR";
pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "fit_report.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("convergence: {0}")]
    Convergence(String),
    #[error("sampler: {0}")]
    Sampler(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Convergence(_) => 4,
            CliError::Sampler(_) => 5,
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match &e {
            EngineError::Precision {
                source: PrecisionError::NotConverged(_),
                ..
            } => CliError::Convergence(e.to_string()),
            EngineError::Sampler(_) => CliError::Sampler(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// One run: inputs, target day and every tuning knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub actuals: PathBuf,
    pub forecasts: PathBuf,
    pub catalog: PathBuf,
    pub target_day: Option<NaiveDate>,
    /// Half width `n` of the history window, in days.
    pub window: u32,
    pub min_history_days: usize,
    pub allow_in_sample: bool,
    pub scenarios: usize,
    pub seed: u64,
    /// A single penalty; overrides `lambda_grid` when set.
    pub lambda: Option<f64>,
    pub lambda_grid: Vec<f64>,
    pub distance_base: f64,
    pub tail_fraction: f64,
    pub bins: usize,
    pub pca_threshold: f64,
    pub trim: f64,
    pub force_empirical: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let engine = EngineConfig::default();
        Self {
            actuals: "actuals.csv".into(),
            forecasts: "forecasts.csv".into(),
            catalog: "catalog.csv".into(),
            target_day: None,
            window: 50,
            min_history_days: HistoryPolicy::default().min_days,
            allow_in_sample: true,
            scenarios: 1000,
            seed: 0,
            lambda: None,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            distance_base: engine.distance_base,
            tail_fraction: engine.tail_fraction,
            bins: engine.bins,
            pca_threshold: engine.pca_threshold,
            trim: DEFAULT_TRIM,
            force_empirical: false,
        }
    }
}

impl RunConfig {
    /// Parse TOML and resolve relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for p in [&mut cfg.actuals, &mut cfg.forecasts, &mut cfg.catalog] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("lambda {l} must be a non-negative number"));
            }
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("lambda_grid must be non-empty and non-negative".into());
        }
        if !(self.distance_base >= 0.0 && self.distance_base.is_finite()) {
            return bad(format!("distance_base {} must be non-negative", self.distance_base));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction < 0.5) {
            return bad(format!("tail_fraction {} outside (0, 0.5)", self.tail_fraction));
        }
        if self.bins == 0 {
            return bad("bins must be at least 1".into());
        }
        if !(self.pca_threshold > 0.0 && self.pca_threshold <= 1.0) {
            return bad(format!("pca_threshold {} outside (0, 1]", self.pca_threshold));
        }
        if !(0.0..0.5).contains(&self.trim) {
            return bad(format!("trim {} outside [0, 0.5)", self.trim));
        }
        if self.min_history_days == 0 {
            return bad("min_history_days must be at least 1".into());
        }
        Ok(())
    }

    pub fn target(&self) -> Result<NaiveDate, CliError> {
        self.target_day
            .ok_or_else(|| CliError::Config("target_day is required".into()))
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            tail_fraction: self.tail_fraction,
            bins: self.bins,
            pca_threshold: self.pca_threshold,
            lambda_grid: match self.lambda {
                Some(l) => vec![l],
                None => self.lambda_grid.clone(),
            },
            distance_base: self.distance_base,
            force_empirical: self.force_empirical,
            ..EngineConfig::default()
        }
    }

    pub fn history_policy(&self) -> HistoryPolicy {
        HistoryPolicy {
            min_days: self.min_history_days,
            allow_in_sample: self.allow_in_sample,
        }
    }
}

/// `--out`, else the environment override, else `./out`.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Read, resample and validate the inputs named in `cfg`.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let catalog = AssetCatalog::read_csv(&cfg.catalog).map_err(|e| CliError::Data(e.to_string()))?;
    let read = |p: &Path| -> Result<_, CliError> {
        let raw = read_series_csv(p).map_err(|e| io_err(p, e))?;
        resample_hourly(&raw, GapPolicy::Reject).map_err(|e| io_err(p, e))
    };
    let actuals = read(&cfg.actuals)?;
    let forecasts = read(&cfg.forecasts)?;
    let caps = catalog
        .assets
        .iter()
        .filter_map(|a| a.capacity.map(|c| (a.id.clone(), c)))
        .collect();
    check_capacity(&actuals, &caps).map_err(|e| io_err(&cfg.actuals, e))?;
    Ok(Dataset::from_records(catalog, &actuals, &forecasts)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub half_width: u32,
    pub days: usize,
    pub first: Option<NaiveDate>,
    pub last: Option<NaiveDate>,
    pub in_sample: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySummary {
    pub joint: f64,
    pub load_spatial: f64,
    pub load_temporal: f64,
    pub wind_spatial: f64,
    pub wind_temporal: f64,
    pub solar_spatial: f64,
    pub solar_temporal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub target_day: NaiveDate,
    pub window: WindowSummary,
    pub dropped_days: Vec<NaiveDate>,
    pub wind_independent: bool,
    pub daylight: (usize, usize),
    pub lambda: PenaltySummary,
    pub solar_k: usize,
    pub joint_edges: usize,
    pub model_hash: String,
}

impl FitReport {
    pub fn new(system: &FittedSystem, dropped_days: Vec<NaiveDate>) -> Self {
        let w = &system.window;
        Self {
            target_day: w.target_day,
            window: WindowSummary {
                half_width: w.half_width,
                days: w.history_days.len(),
                first: w.history_days.first().cloned(),
                last: w.history_days.last().cloned(),
                in_sample: w.in_sample,
            },
            dropped_days,
            wind_independent: system.wind_independent,
            daylight: (system.sunrise_lag, system.sunset_lag),
            lambda: PenaltySummary {
                joint: system.joint.lambda,
                load_spatial: system.load.separable.spatial_lambda,
                load_temporal: system.load.separable.temporal_lambda,
                wind_spatial: system.wind.separable.spatial_lambda,
                wind_temporal: system.wind.separable.temporal_lambda,
                solar_spatial: system.solar.pca.separable.spatial_lambda,
                solar_temporal: system.solar.pca.separable.temporal_lambda,
            },
            solar_k: system.solar.pca.basis.k,
            joint_edges: system.joint.graph.edges.len(),
            model_hash: system.model_hash(),
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Joint graph plus the spatial and temporal graphs of each separable model.
pub fn export_graphs(system: &FittedSystem, dir: &Path) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let threshold = system.config.edge_threshold;
    let mut graphs = vec![("joint_graph".to_string(), system.joint.graph.clone())];
    let separable = [
        ("load", &system.load.separable),
        ("wind", &system.wind.separable),
        ("solar", &system.solar.pca.separable),
    ];
    for (name, model) in separable {
        graphs.push((
            format!("{name}_spatial_graph"),
            dependency_graph(&model.spatial, &model.unit_order, threshold),
        ));
        graphs.push((
            format!("{name}_temporal_graph"),
            dependency_graph(&model.temporal, &model.lag_order, threshold),
        ));
    }
    for (name, g) in &graphs {
        output::write_graph(dir, name, g).map_err(|e| io_err(dir, e))?;
    }
    Ok(())
}

/// Fit for the configured target day; writes the model bundle, graphs and
/// report into `out`.
pub fn cmd_fit(cfg: &RunConfig, out: &Path) -> Result<FitReport, CliError> {
    let target = cfg.target()?;
    let data = load_dataset(cfg)?;
    let system = data.fit_for(target, cfg.window, cfg.history_policy(), &cfg.engine_config())?;
    ensure_dir(out)?;
    let bundle = serde_json::to_vec(&system).map_err(|e| CliError::Data(e.to_string()))?;
    write(&out.join(MODEL_FILE), bundle)?;
    export_graphs(&system, out)?;
    let report = FitReport::new(&system, data.dropped_days().into_iter().collect());
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?;
    write(&out.join(REPORT_FILE), text + "\n")?;
    Ok(report)
}

pub fn read_model(path: &Path) -> Result<FittedSystem, CliError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulateSummary {
    pub rows: usize,
    pub files: Vec<PathBuf>,
}

/// Generate scenarios from a model bundle and write scenario and band CSVs.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path, model: Option<&Path>) -> Result<SimulateSummary, CliError> {
    let model_path = model.map(Path::to_path_buf).unwrap_or_else(|| out.join(MODEL_FILE));
    let system = read_model(&model_path)?;
    let target = cfg.target_day.unwrap_or(system.window.target_day);
    if target != system.window.target_day {
        return Err(CliError::Config(format!(
            "model was fitted for {}, config asks for {target}",
            system.window.target_day
        )));
    }
    let data = load_dataset(cfg)?;
    let forecasts = data.target_forecasts(target)?;
    let bundle = generate_scenarios(&system, target, &forecasts, cfg.scenarios, cfg.seed)?;
    ensure_dir(out)?;
    let mut files = Vec::new();
    let mut rows = 0;
    let mut band_rows = Vec::new();
    for q in Quantity::ALL {
        let set = bundle.get(q);
        let path = out.join(format!("scenarios_{q}.csv"));
        write(&path, scenarios_csv(set))?;
        rows += set.len() * set.units.len();
        files.push(path);
        // Actuals are optional: the target day may not be realized yet.
        let actual = data.actual(q, target).ok();
        let bands = band_statistics(set, cfg.trim, actual.as_ref());
        band_rows.push((set, bands, actual));
    }
    let refs: Vec<_> = band_rows.iter().map(|(s, b, a)| (*s, b, a.as_ref())).collect();
    let path = out.join("bands.csv");
    write(&path, bands_csv(&refs))?;
    files.push(path);
    Ok(SimulateSummary { rows, files })
}

/// Re-export graphs from an existing model bundle.
pub fn cmd_graph_export(out: &Path, model: Option<&Path>) -> Result<(), CliError> {
    let model_path = model.map(Path::to_path_buf).unwrap_or_else(|| out.join(MODEL_FILE));
    export_graphs(&read_model(&model_path)?, out)
}

/// Write a synthetic fixture plus a `run.toml` targeting a day near its end.
pub fn cmd_fixture(spec: &FixtureSpec, out: &Path) -> Result<(), CliError> {
    if spec.zones == 0 || spec.wind_assets == 0 || spec.solar_assets == 0 || spec.days == 0 {
        return Err(CliError::Config("fixture needs at least one zone, asset of each kind and day".into()));
    }
    if spec.planted_zone >= spec.zones || spec.load_tail_df <= 2.0 {
        return Err(CliError::Config("planted_zone must be a zone and load_tail_df above 2".into()));
    }
    let fixture = generate_fixture(spec);
    write_fixture(&fixture, out).map_err(|e| io_err(out, e))?;
    let target = spec.start + chrono::Duration::days(spec.days as i64 - 30);
    // Two years of data support a wider window than the default; the extra
    // days keep chance wind/load correlations below the default penalties.
    let run = RunConfig {
        target_day: Some(target),
        window: 100,
        seed: spec.seed,
        ..RunConfig::default()
    };
    write(&out.join("run.toml"), run.to_toml())
}
