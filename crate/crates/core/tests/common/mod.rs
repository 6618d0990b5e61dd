#![allow(dead_code)]

use chrono::{Duration, NaiveDate};
use gridscen::cli::fixture::{generate_fixture, Fixture, FixtureSpec};
use gridscen::engine::{Dataset, EngineConfig};
use gridscen::ingest::HistoryPolicy;

pub fn small_spec() -> FixtureSpec {
    FixtureSpec {
        zones: 3,
        wind_assets: 4,
        solar_assets: 6,
        days: 400,
        ..FixtureSpec::default()
    }
}

pub fn dataset(spec: &FixtureSpec) -> (Dataset, Fixture) {
    let fixture = generate_fixture(spec);
    let data = Dataset::from_records(fixture.catalog.clone(), &fixture.actuals, &fixture.forecasts).unwrap();
    (data, fixture)
}

/// Day `offset` of the fixture.
pub fn day(spec: &FixtureSpec, offset: i64) -> NaiveDate {
    spec.start + Duration::days(offset)
}

pub fn out_of_sample() -> HistoryPolicy {
    HistoryPolicy {
        allow_in_sample: false,
        ..HistoryPolicy::default()
    }
}

pub fn config() -> EngineConfig {
    EngineConfig::default()
}
