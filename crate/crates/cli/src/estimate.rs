use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use seaird::data_io::{build_series, parse_daily_csv, window_registry, CountryWindow, DailyRecord};
use seaird::sensitivity::{sensitivity_table, SensitivityReport, DEFAULT_FACTORS, REPORTED_PARAMETERS};
use seaird::{fit, DemographicConstants, FitConfig, FitResult, ObservationSeries, WeightSpec};

use crate::config::RunConfig;
use crate::failure::{Failure, EXIT_BELOW_THRESHOLD, EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK};
use crate::output::{csv_bytes, Artifact};

pub const FIT_FILE: &str = "fit_result.json";
pub const PREDICTED_FILE: &str = "predicted.csv";
pub const SENSITIVITY_CSV: &str = "sensitivity.csv";
pub const SENSITIVITY_JSON: &str = "sensitivity.json";
pub const COUNTRIES_CSV: &str = "countries.csv";
pub const COUNTRIES_JSON: &str = "countries.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub country: String,
    pub window: CountryWindow,
    pub population: f64,
    /// Days raised to the running maximum while building the series.
    pub data_repairs: usize,
    pub duplicate_rows: usize,
    #[serde(flatten)]
    pub result: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityOutput {
    pub country: String,
    pub window: CountryWindow,
    pub population: f64,
    #[serde(flatten)]
    pub report: SensitivityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryOutcome {
    pub country: String,
    pub window: CountryWindow,
    pub fit: Option<FitReport>,
    pub error: Option<String>,
}

/// Result of a command: files to write and the exit code.
pub struct Completed {
    pub artifacts: Vec<Artifact>,
    pub code: u8,
}

fn read_records(path: &Path) -> Result<Vec<DailyRecord>, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::io(path, e))?;
    parse_daily_csv(&bytes).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

struct Prepared {
    series: ObservationSeries,
    demographics: DemographicConstants,
    repairs: usize,
    duplicates: usize,
}

fn prepare(records: &[DailyRecord], window: &CountryWindow, cfg: &RunConfig) -> Result<Prepared, Failure> {
    let built = build_series(records, window, cfg.baseline.unwrap_or_default())?;
    let population = built.population.ok_or_else(|| {
        Failure::input(format!(
            "population of {} is unknown: add a popData column or set population",
            window.country_id
        ))
    })?;
    let demographics = DemographicConstants::new(population).with_eta(cfg.eta.unwrap_or(0.0));
    demographics.validate()?;
    Ok(Prepared {
        series: built.series,
        demographics,
        repairs: built.repairs,
        duplicates: built.duplicates,
    })
}

fn fit_window(records: &[DailyRecord], window: &CountryWindow, cfg: &RunConfig) -> Result<FitReport, Failure> {
    let fit_cfg = cfg.fit_config(window)?;
    let p = prepare(records, window, cfg)?;
    let result = fit(&p.series, &p.demographics, &fit_cfg)?;
    Ok(FitReport {
        country: window.country_id.clone(),
        window: window.clone(),
        population: p.demographics.population,
        data_repairs: p.repairs,
        duplicate_rows: p.duplicates,
        result,
    })
}

fn country_of(cfg: &RunConfig) -> Result<&str, Failure> {
    cfg.country
        .as_deref()
        .ok_or_else(|| Failure::input("no country: pass --country"))
}

fn weights_string(w: &WeightSpec) -> String {
    match w {
        WeightSpec::ReciprocalFinalTraining => "reciprocal".into(),
        WeightSpec::Fixed { infected, deaths } => format!("{infected},{deaths}"),
    }
}

/// Copy of `cfg` with every default made explicit, so that the manifest
/// alone reproduces the run.
pub fn resolve(cfg: &RunConfig, with_window: bool) -> Result<RunConfig, Failure> {
    let mut r = cfg.clone();
    r.data = Some(cfg.data_path()?);
    let probe = if with_window {
        let w = cfg.window(country_of(cfg)?)?;
        r.train_start = Some(w.train_start);
        r.train_end = Some(w.train_end);
        r.test_end = Some(w.test_end);
        r.population = w.population;
        w
    } else {
        let registry = cfg.registry.clone().unwrap_or_else(window_registry);
        r.registry = Some(registry.clone());
        match registry.first() {
            Some(w) => w.clone(),
            None => return Ok(r),
        }
    };
    let f: FitConfig = cfg.fit_config(&probe)?;
    r.tau = Some(f.tau);
    r.weights = Some(weights_string(&f.weights));
    r.seed = Some(f.seed);
    r.starts = Some(f.n_starts);
    r.max_retries = Some(f.max_retries);
    r.weighting_mode = Some(f.weighting_mode);
    r.bounds = Some(f.bounds);
    r.optimizer = Some(f.optimizer);
    r.integration = Some(f.integration);
    r.initial_state = Some(f.initial_state);
    r.baseline = Some(cfg.baseline.unwrap_or_default());
    r.eta = Some(cfg.eta.unwrap_or(0.0));
    Ok(r)
}

pub fn run_fit(cfg: &RunConfig) -> Result<Completed, Failure> {
    let data = cfg.data_path()?;
    let records = read_records(&data)?;
    let window = cfg.window(country_of(cfg)?)?;
    let report = fit_window(&records, &window, cfg)?;
    let predicted = predicted_csv(&records, &window, cfg, &report)?;
    let code = if report.result.accepted { EXIT_OK } else { EXIT_BELOW_THRESHOLD };
    Ok(Completed {
        artifacts: vec![Artifact::json(FIT_FILE, &report)?, Artifact::new(PREDICTED_FILE, predicted)],
        code,
    })
}

fn predicted_csv(records: &[DailyRecord], window: &CountryWindow, cfg: &RunConfig, report: &FitReport) -> Result<Vec<u8>, Failure> {
    let observed = prepare(records, window, cfg)?.series;
    let per_1000 = 1000.0 / report.population;
    let train_days = (window.train_end - window.train_start).num_days() as usize;
    let header: Vec<String> = [
        "date",
        "day",
        "set",
        "observed_cum_infected",
        "predicted_cum_infected",
        "observed_cum_deaths",
        "predicted_cum_deaths",
        "observed_cum_infected_per_1000",
        "predicted_cum_infected_per_1000",
        "observed_cum_deaths_per_1000",
        "predicted_cum_deaths_per_1000",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows = observed
        .values
        .iter()
        .zip(&report.result.predicted.values)
        .enumerate()
        .map(|(k, (y, yh))| {
            let set = if k <= train_days { "train" } else { "test" };
            vec![
                observed.date(k).to_string(),
                k.to_string(),
                set.to_string(),
                y.cum_infected.to_string(),
                yh.cum_infected.to_string(),
                y.cum_deaths.to_string(),
                yh.cum_deaths.to_string(),
                (y.cum_infected * per_1000).to_string(),
                (yh.cum_infected * per_1000).to_string(),
                (y.cum_deaths * per_1000).to_string(),
                (yh.cum_deaths * per_1000).to_string(),
            ]
        });
    csv_bytes(&header, rows)
}

pub fn run_sensitivity(cfg: &RunConfig) -> Result<Completed, Failure> {
    let data = cfg.data_path()?;
    let records = read_records(&data)?;
    let window = cfg.window(country_of(cfg)?)?;
    let fit_cfg = cfg.fit_config(&window)?;
    let p = prepare(&records, &window, cfg)?;
    let factors = cfg.factors.clone().unwrap_or_else(|| DEFAULT_FACTORS.to_vec());
    let report = sensitivity_table(&p.series, &p.demographics, &fit_cfg, &factors)?;
    let out = SensitivityOutput {
        country: window.country_id.clone(),
        window,
        population: p.demographics.population,
        report,
    };
    Ok(Completed {
        artifacts: vec![
            Artifact::new(SENSITIVITY_CSV, out.report.to_csv()?.into_bytes()),
            Artifact::json(SENSITIVITY_JSON, &out)?,
        ],
        code: EXIT_OK,
    })
}

pub fn run_countries(cfg: &RunConfig) -> Result<Completed, Failure> {
    let registry = cfg.registry.clone().unwrap_or_else(window_registry);
    if registry.is_empty() {
        return Err(Failure::input("country registry is empty"));
    }
    for w in &registry {
        w.validate()?;
    }
    let data = cfg.data_path()?;
    let records = read_records(&data)?;
    let results: Vec<Result<FitReport, Failure>> = registry
        .par_iter()
        .map(|w| fit_window(&records, w, cfg))
        .collect();

    if results.iter().all(Result::is_err) {
        let numerical = results.iter().all(|r| matches!(r, Err(f) if f.code == EXIT_NUMERICAL));
        let detail: Vec<String> = registry
            .iter()
            .zip(&results)
            .filter_map(|(w, r)| r.as_ref().err().map(|e| format!("{}: {e}", w.country_id)))
            .collect();
        return Err(Failure {
            code: if numerical { EXIT_NUMERICAL } else { EXIT_INPUT },
            message: format!("no country could be fitted; {}", detail.join("; ")),
        });
    }

    let outcomes: Vec<CountryOutcome> = registry
        .iter()
        .zip(results)
        .map(|(w, r)| {
            let (fit, error) = match r {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.message)),
            };
            CountryOutcome {
                country: w.country_id.clone(),
                window: w.clone(),
                fit,
                error,
            }
        })
        .collect();
    Ok(Completed {
        artifacts: vec![
            Artifact::new(COUNTRIES_CSV, countries_csv(&outcomes)?),
            Artifact::json(COUNTRIES_JSON, &outcomes)?,
        ],
        code: EXIT_OK,
    })
}

/// One column per country, one row per parameter, plus the estimation
/// period, both R² values and a status row.
fn countries_csv(outcomes: &[CountryOutcome]) -> Result<Vec<u8>, Failure> {
    let mut header = vec!["parameter".to_string()];
    header.extend(outcomes.iter().map(|o| o.country.clone()));
    let fmt = seaird::data_io::DATE_FORMAT;
    let row = |name: &str, cell: &dyn Fn(&CountryOutcome) -> String| {
        let mut r = vec![name.to_string()];
        r.extend(outcomes.iter().map(cell));
        r
    };
    let fitted = |o: &CountryOutcome, f: &dyn Fn(&FitReport) -> String| o.fit.as_ref().map(f).unwrap_or_default();

    let mut rows = vec![row("period", &|o| {
        format!("{} to {}", o.window.train_start.format(fmt), o.window.train_end.format(fmt))
    })];
    for name in REPORTED_PARAMETERS {
        rows.push(row(name, &|o| {
            fitted(o, &|f| f.result.phi_hat.get(name).expect("known parameter").to_string())
        }));
    }
    rows.push(row("alpha", &|o| fitted(o, &|f| f.result.phi_hat.alpha.to_string())));
    rows.push(row("r2_train", &|o| fitted(o, &|f| f.result.r2_train.min.to_string())));
    rows.push(row("r2_test", &|o| fitted(o, &|f| f.result.r2_test.min.to_string())));
    rows.push(row("status", &|o| match (&o.fit, &o.error) {
        (Some(f), _) if f.result.accepted => "accepted".into(),
        (Some(_), _) => "below_threshold".into(),
        (None, Some(e)) => format!("error: {e}"),
        (None, None) => String::new(),
    }));
    csv_bytes(&header, rows)
}
