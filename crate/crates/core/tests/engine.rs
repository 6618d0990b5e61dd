mod common;

use std::sync::OnceLock;

use chrono::Datelike;
use gridscen::cli::fixture::{Fixture, FIXTURE_SUNRISE, FIXTURE_SUNSET};
use gridscen::engine::{
    generate_scenarios, generate_scenarios_traced, Access, Dataset, FittedSystem, Quantity, TargetForecasts,
};
use gridscen::ingest::anniversary;
use gridscen::NUM_LAGS;

struct Setup {
    data: Dataset,
    fixture: Fixture,
    system: FittedSystem,
    forecasts: TargetForecasts,
}

const TARGET_OFFSET: i64 = 380;
const HALF_WIDTH: u32 = 100;

fn setup() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| {
        let spec = common::small_spec();
        let (data, fixture) = common::dataset(&spec);
        let target = common::day(&spec, TARGET_OFFSET);
        let system = data
            .fit_for(target, HALF_WIDTH, common::out_of_sample(), &common::config())
            .unwrap();
        let forecasts = data.target_forecasts(target).unwrap();
        Setup {
            data,
            fixture,
            system,
            forecasts,
        }
    })
}

fn target() -> chrono::NaiveDate {
    setup().system.window.target_day
}

#[test]
fn scenario_shapes_and_metadata() {
    let s = setup();
    let b = generate_scenarios(&s.system, target(), &s.forecasts, 40, 3).unwrap();
    for (q, units) in [(Quantity::Load, 3), (Quantity::Wind, 4), (Quantity::Solar, 6)] {
        let set = b.get(q);
        assert_eq!(set.quantity, q);
        assert_eq!(set.len(), 40);
        assert_eq!(set.units, s.fixture.catalog.units(q));
        assert!(set.scenarios.iter().all(|m| m.shape() == (units, NUM_LAGS)));
        assert_eq!(set.model_hash, s.system.model_hash());
        assert_eq!(set.seed, 3);
        assert!(!set.in_sample);
    }
    assert!(b.trace.is_none());
}

#[test]
fn zero_scenarios() {
    let s = setup();
    let b = generate_scenarios(&s.system, target(), &s.forecasts, 0, 3).unwrap();
    assert!(b.load.is_empty() && b.wind.is_empty() && b.solar.is_empty());
}

#[test]
fn wrong_forecast_shape_is_rejected() {
    let s = setup();
    let mut fc = s.forecasts.clone();
    fc.wind = fc.wind.remove_row(0);
    assert!(generate_scenarios(&s.system, target(), &fc, 5, 3).is_err());
}

#[test]
fn fitted_structure() {
    let sys = &setup().system;
    assert_eq!((sys.sunrise_lag, sys.sunset_lag), (FIXTURE_SUNRISE, FIXTURE_SUNSET));
    assert!(sys.joint.graph.has_edge("load:Z1", "solar:Z1"));
    assert!(sys.solar.pca.basis.k <= common::small_spec().solar_rank);
    assert_eq!(sys.load.marginals.len(), 3 * NUM_LAGS);
    assert_eq!(sys.wind.conditional.len(), 4 * NUM_LAGS);
}

fn check_aggregates(sys: &FittedSystem, forecasts: &TargetForecasts) {
    let b = generate_scenarios_traced(sys, target(), forecasts, 30, 11).unwrap();
    let trace = b.trace.unwrap();
    let (a, z) = (sys.sunrise_lag, sys.sunset_lag);
    let zone_sum = |m: &gridscen::linalg::Matrix, zone_index: &[usize], zone: usize| -> f64 {
        (0..m.nrows())
            .filter(|&u| zone_index[u] == zone)
            .flat_map(|u| (a..=z).map(move |l| m[(u, l)]))
            .sum()
    };
    for (i, agg) in trace.aggregates.iter().enumerate() {
        for (v, var) in sys.joint.variables.iter().enumerate() {
            let sum = match var.quantity {
                Quantity::Load => (a..=z).map(|l| trace.load_scores[i][(var.zone, l)]).sum::<f64>(),
                Quantity::Solar => zone_sum(&trace.solar_curves[i], &sys.solar.zone_index, var.zone),
                Quantity::Wind if sys.wind_independent => {
                    assert!(agg[v].is_nan(), "independent wind is not sampled in step one");
                    continue;
                }
                Quantity::Wind => zone_sum(&trace.wind_scores[i], &sys.wind.zone_index, var.zone),
            };
            assert!((sum - agg[v]).abs() < 1e-6, "{} scenario {i}: {sum} vs {}", var.label, agg[v]);
        }
    }
}

#[test]
fn aggregates_are_honoured() {
    let s = setup();
    for independent in [true, false] {
        let mut sys = s.system.clone();
        sys.wind_independent = independent;
        check_aggregates(&sys, &s.forecasts);
    }
}

#[test]
fn wind_ignores_other_forecasts_when_independent() {
    let s = setup();
    let mut sys = s.system.clone();
    sys.wind_independent = true;
    let a = generate_scenarios(&sys, target(), &s.forecasts, 25, 5).unwrap();
    let mut fc = s.forecasts.clone();
    fc.load *= 1.1;
    fc.solar *= 0.5;
    let b = generate_scenarios(&sys, target(), &fc, 25, 5).unwrap();
    assert_eq!(a.wind.scenarios, b.wind.scenarios);
    assert_ne!(a.load.scenarios, b.load.scenarios);
}

#[test]
fn capacity_and_darkness() {
    let s = setup();
    let b = generate_scenarios(&s.system, target(), &s.forecasts, 200, 9).unwrap();
    for q in [Quantity::Wind, Quantity::Solar] {
        let caps = s.fixture.catalog.capacities(q);
        for m in &b.get(q).scenarios {
            for u in 0..m.nrows() {
                let cap = caps[u].unwrap();
                for l in 0..NUM_LAGS {
                    assert!((0.0..=cap).contains(&m[(u, l)]), "{q} {u} {l}: {}", m[(u, l)]);
                }
            }
        }
    }
    for m in &b.solar.scenarios {
        for l in (0..FIXTURE_SUNRISE).chain(FIXTURE_SUNSET + 1..NUM_LAGS) {
            assert!(m.column(l).iter().all(|x| *x == 0.0));
        }
    }
}

#[test]
fn seeded_and_prefix_stable() {
    let s = setup();
    let a = generate_scenarios(&s.system, target(), &s.forecasts, 30, 21).unwrap();
    let b = generate_scenarios(&s.system, target(), &s.forecasts, 30, 21).unwrap();
    let c = generate_scenarios(&s.system, target(), &s.forecasts, 30, 22).unwrap();
    let short = generate_scenarios(&s.system, target(), &s.forecasts, 10, 21).unwrap();
    for q in Quantity::ALL {
        assert_eq!(a.get(q).scenarios, b.get(q).scenarios);
        assert_ne!(a.get(q).scenarios, c.get(q).scenarios);
        assert_eq!(a.get(q).scenarios[..10], short.get(q).scenarios[..]);
    }
}

#[test]
fn fit_is_non_anticipative() {
    let spec = common::small_spec();
    let (data, _) = common::dataset(&spec);
    let target = common::day(&spec, TARGET_OFFSET);
    data.clear_log();
    data.run_day(target, HALF_WIDTH, common::out_of_sample(), &common::config(), 10, 1)
        .unwrap();
    let anniversary = anniversary(target);
    let n = HALF_WIDTH as i64;
    let log = data.accesses();
    assert!(!log.is_empty());
    for a in log {
        match a {
            Access::History(_, d) => {
                let preceding = d < target && (target - d).num_days() <= n;
                let prior_year = d.year() < target.year() && (d - anniversary).num_days().abs() <= n;
                assert!(preceding || prior_year, "history day {d}");
            }
            Access::Forecast(_, d) => assert_eq!(d, target),
            Access::Actual(..) => panic!("fitting read actuals"),
        }
    }
}

#[test]
fn model_round_trips_through_json() {
    let sys = &setup().system;
    let json = serde_json::to_string(sys).unwrap();
    let back: FittedSystem = serde_json::from_str(&json).unwrap();
    assert_eq!(back.model_hash(), sys.model_hash());
    let a = generate_scenarios(sys, target(), &setup().forecasts, 5, 1).unwrap();
    let b = generate_scenarios(&back, target(), &setup().forecasts, 5, 1).unwrap();
    assert_eq!(a.load.scenarios, b.load.scenarios);
    assert_eq!(a.solar.scenarios, b.solar.scenarios);
}

#[test]
fn access_log_records_actual_reads() {
    let s = setup();
    s.data.clear_log();
    let _ = s.data.actual(Quantity::Load, target());
    assert!(s.data.accesses().contains(&Access::Actual(Quantity::Load, target())));
}
