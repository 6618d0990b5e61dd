//! Input data for a run, with a log of which days each step reads.

use std::collections::BTreeSet;
use std::sync::Mutex;

use chrono::NaiveDate;

use super::{fit_system, generate_scenarios, AssetCatalog, EngineConfig, EngineError, FittedSystem, Quantity};
use super::{ScenarioBundle, TargetForecasts};
use crate::ingest::{compute_deviations, select_history, DeviationPanel, HistoryPolicy, HourlyTable, SeriesRecord};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Access {
    /// Deviations and forecasts of a history day.
    History(Quantity, NaiveDate),
    /// Point forecasts of a day.
    Forecast(Quantity, NaiveDate),
    /// Realized actuals of a day (evaluation only).
    Actual(Quantity, NaiveDate),
}

#[derive(Debug)]
pub struct Dataset {
    pub catalog: AssetCatalog,
    panels: [DeviationPanel; 3],
    actuals: HourlyTable,
    forecasts: HourlyTable,
    log: Mutex<Vec<Access>>,
}

fn slot(q: Quantity) -> usize {
    match q {
        Quantity::Load => 0,
        Quantity::Wind => 1,
        Quantity::Solar => 2,
    }
}

impl Dataset {
    /// Build from hourly records covering every catalog unit.
    pub fn from_records(
        catalog: AssetCatalog,
        actuals: &[SeriesRecord],
        forecasts: &[SeriesRecord],
    ) -> Result<Self, EngineError> {
        let panel = |q| compute_deviations(actuals, forecasts, &catalog.units(q));
        let panels = [panel(Quantity::Load)?, panel(Quantity::Wind)?, panel(Quantity::Solar)?];
        Ok(Self {
            panels,
            actuals: HourlyTable::from_records(actuals),
            forecasts: HourlyTable::from_records(forecasts),
            catalog,
            log: Mutex::new(Vec::new()),
        })
    }

    /// Days with complete data for every quantity.
    pub fn complete_days(&self) -> BTreeSet<NaiveDate> {
        let sets: Vec<BTreeSet<NaiveDate>> = self
            .panels
            .iter()
            .map(|p| p.days.iter().cloned().collect())
            .collect();
        sets[0]
            .iter()
            .filter(|d| sets[1].contains(d) && sets[2].contains(d))
            .cloned()
            .collect()
    }

    /// Days dropped from any quantity for missing cells.
    pub fn dropped_days(&self) -> BTreeSet<NaiveDate> {
        self.panels.iter().flat_map(|p| p.dropped_days.iter().cloned()).collect()
    }

    fn record(&self, a: Access) {
        self.log.lock().expect("access log").push(a);
    }

    pub fn history(&self, q: Quantity, days: &[NaiveDate]) -> Result<DeviationPanel, EngineError> {
        for d in days {
            self.record(Access::History(q, *d));
        }
        Ok(self.panels[slot(q)].restrict_days(days)?)
    }

    pub fn forecast(&self, q: Quantity, day: NaiveDate) -> Result<Matrix, EngineError> {
        self.record(Access::Forecast(q, day));
        self.forecasts
            .day_matrix(&self.catalog.units(q), day)
            .ok_or_else(|| EngineError::Data(format!("no complete {q} forecasts for {day}")))
    }

    pub fn actual(&self, q: Quantity, day: NaiveDate) -> Result<Matrix, EngineError> {
        self.record(Access::Actual(q, day));
        self.actuals
            .day_matrix(&self.catalog.units(q), day)
            .ok_or_else(|| EngineError::Data(format!("no complete {q} actuals for {day}")))
    }

    pub fn target_forecasts(&self, day: NaiveDate) -> Result<TargetForecasts, EngineError> {
        Ok(TargetForecasts {
            load: self.forecast(Quantity::Load, day)?,
            wind: self.forecast(Quantity::Wind, day)?,
            solar: self.forecast(Quantity::Solar, day)?,
        })
    }

    pub fn accesses(&self) -> Vec<Access> {
        self.log.lock().expect("access log").clone()
    }

    pub fn clear_log(&self) {
        self.log.lock().expect("access log").clear();
    }

    /// Select the window for `target`, fit on it, and return the system.
    pub fn fit_for(
        &self,
        target: NaiveDate,
        half_width: u32,
        policy: HistoryPolicy,
        config: &EngineConfig,
    ) -> Result<FittedSystem, EngineError> {
        let window = select_history(target, &self.complete_days(), half_width, policy)?;
        let load = self.history(Quantity::Load, &window.history_days)?;
        let wind = self.history(Quantity::Wind, &window.history_days)?;
        let solar = self.history(Quantity::Solar, &window.history_days)?;
        fit_system(&load, &wind, &solar, &self.catalog, &window, config)
    }

    /// Fit for `target` and draw `m` scenarios.
    pub fn run_day(
        &self,
        target: NaiveDate,
        half_width: u32,
        policy: HistoryPolicy,
        config: &EngineConfig,
        m: usize,
        seed: u64,
    ) -> Result<(FittedSystem, ScenarioBundle), EngineError> {
        let system = self.fit_for(target, half_width, policy, config)?;
        let forecasts = self.target_forecasts(target)?;
        let bundle = generate_scenarios(&system, target, &forecasts, m, seed)?;
        Ok((system, bundle))
    }
}
