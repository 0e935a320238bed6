#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use seaird::data_io::{write_daily_csv, CountryWindow, DailyRecord};
use seaird::synthetic::{generate, reference_parameters, to_daily_records, with_increment_noise};
use seaird::{DemographicConstants, ObservationSeries, StateVector};
use serde_json::Value;

pub const BRAZIL_POPULATION: f64 = 211_049_527.0;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_seaird"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn brazil_fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/ecdc_brazil_snapshot.csv")
}

pub fn day(m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, m, d).unwrap()
}

/// Initial state used for every synthetic country: 1000 symptomatic
/// infectives, 50 deaths, and unobserved compartments inside the default
/// search box.
pub fn synthetic_x0(population: f64) -> StateVector {
    let (e, i, a, r, d) = (20_000.0, 1_000.0, 5_000.0, 2_000.0, 50.0);
    StateVector::new(population - e - i - a - r - d, e, i, a, r, d)
}

/// Noise-free (or noisy) observables of the reference parameters for
/// `window.country_id`, starting on the first window day.
pub fn synthetic_series(window: &CountryWindow, population: f64, noise: Option<(f64, u64)>) -> ObservationSeries {
    let phi = reference_parameters(&window.country_id).expect("reference parameters");
    let d = DemographicConstants::new(population);
    let horizon = (window.test_end - window.train_start).num_days() as usize;
    let clean = generate(&phi, &synthetic_x0(population), &d, horizon, window.train_start).unwrap();
    match noise {
        Some((sigma, seed)) => with_increment_noise(&clean, sigma, seed).unwrap(),
        None => clean,
    }
}

/// ECDC-style file holding synthetic records for every window.
pub fn write_synthetic_csv(path: &Path, windows: &[CountryWindow], population: f64) {
    let records: Vec<DailyRecord> = windows
        .iter()
        .flat_map(|w| to_daily_records(&synthetic_series(w, population, None), &w.country_id, population as u64))
        .collect();
    std::fs::write(path, write_daily_csv(&records).unwrap()).unwrap();
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

struct SchemaDir;

impl jsonschema::Retrieve for SchemaDir {
    fn retrieve(
        &self,
        uri: &jsonschema::Uri<String>,
    ) -> Result<Value, Box<dyn std::error::Error + Send + Sync>> {
        let name = uri.path().as_str().rsplit('/').next().unwrap_or_default().to_string();
        let text = std::fs::read_to_string(schema_dir().join(&name))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

/// Validates `instance` against one of the shipped schemas.
pub fn assert_schema(schema: &str, instance: &Value) {
    let schema_value: Value = serde_json::from_str(&std::fs::read_to_string(schema_dir().join(schema)).unwrap()).unwrap();
    let validator = jsonschema::options()
        .with_base_uri("https://seaird.invalid/schemas/")
        .with_retriever(SchemaDir)
        .build(&schema_value)
        .unwrap_or_else(|e| panic!("schema {schema}: {e}"));
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{schema}: {errors:#?}");
}
