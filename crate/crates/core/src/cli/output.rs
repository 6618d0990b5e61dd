//! CSV and graph writers.

use std::fmt::Write as _;
use std::path::Path;

use crate::engine::{BandStatistics, ScenarioSet};
use crate::linalg::Matrix;
use crate::precision::DependencyGraph;
use crate::NUM_LAGS;

fn header() -> String {
    let mut h = String::from("scenario_id,quantity,unit_id,target_day");
    for l in 0..NUM_LAGS {
        write!(h, ",h{l:02}").unwrap();
    }
    h.push('\n');
    h
}

fn push_row(out: &mut String, id: &str, set: &ScenarioSet, unit: usize, m: &Matrix) {
    write!(out, "{id},{},{},{}", set.quantity, set.units[unit], set.target_day).unwrap();
    for l in 0..NUM_LAGS {
        write!(out, ",{:.6}", m[(unit, l)]).unwrap();
    }
    out.push('\n');
}

/// `scenario_id,quantity,unit_id,target_day,h00..h23`, one row per
/// scenario and unit.
pub fn scenarios_csv(set: &ScenarioSet) -> String {
    let mut out = header();
    for (i, s) in set.scenarios.iter().enumerate() {
        for u in 0..set.units.len() {
            push_row(&mut out, &i.to_string(), set, u, s);
        }
    }
    out
}

/// Same schema with `lower`, `upper`, `forecast` and (when known) `actual`
/// rows.
pub fn bands_csv(sets: &[(&ScenarioSet, &BandStatistics, Option<&Matrix>)]) -> String {
    let mut out = header();
    for (set, bands, actual) in sets {
        for u in 0..set.units.len() {
            push_row(&mut out, "lower", set, u, &bands.lower);
            push_row(&mut out, "upper", set, u, &bands.upper);
            push_row(&mut out, "forecast", set, u, &set.forecasts);
            if let Some(a) = actual {
                push_row(&mut out, "actual", set, u, a);
            }
        }
    }
    out
}

pub fn write_graph(dir: &Path, name: &str, graph: &DependencyGraph) -> std::io::Result<()> {
    std::fs::write(dir.join(format!("{name}.csv")), graph.to_csv())?;
    std::fs::write(dir.join(format!("{name}.dot")), graph.to_dot(name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Quantity;
    use chrono::NaiveDate;

    #[test]
    fn scenario_rows() {
        let set = ScenarioSet {
            target_day: NaiveDate::from_ymd_opt(2018, 7, 1).unwrap(),
            quantity: Quantity::Wind,
            units: vec!["W01".into(), "W02".into()],
            scenarios: vec![Matrix::from_element(2, NUM_LAGS, 1.0 / 3.0)],
            forecasts: Matrix::zeros(2, NUM_LAGS),
            seed: 1,
            model_hash: String::new(),
            in_sample: false,
        };
        let csv = scenarios_csv(&set);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].ends_with(",h22,h23"));
        assert!(lines[1].starts_with("0,wind,W01,2018-07-01,0.333333,"));
        let empty = ScenarioSet { scenarios: vec![], ..set };
        assert_eq!(scenarios_csv(&empty).lines().count(), 1);
    }
}
