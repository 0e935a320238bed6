//! ECDC-style daily case/death files and the per-country estimation windows.
//!
//! Expected input: a comma-separated file with a header row containing at
//! least `dateRep` (DD/MM/YYYY), `cases`, `deaths`, `countriesAndTerritories`
//! and a population column (`popData2019` or `popData2020`). Other columns
//! are ignored and rows may come in any order.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::{ObservationPoint, ObservationSeries};

pub const DATE_FORMAT: &str = "%d/%m/%Y";

const COL_DATE: &str = "dateRep";
const COL_CASES: &str = "cases";
const COL_DEATHS: &str = "deaths";
const COL_COUNTRY: &str = "countriesAndTerritories";
const POPULATION_COLUMNS: [&str; 2] = ["popData2019", "popData2020"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    /// New cases reported that day; negative values are corrections.
    pub cases: i64,
    pub deaths: i64,
    pub country_id: String,
    pub population: Option<u64>,
}

fn column(headers: &csv::StringRecord, name: &'static str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or(Error::MissingColumn(name))
}

/// Parses an ECDC-style daily CSV. Malformed rows fail the whole parse with
/// the offending line number.
pub fn parse_daily_csv(bytes: &[u8]) -> Result<Vec<DailyRecord>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Csv(format!("input is not UTF-8: {e}")))?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    if text.trim().is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    let date_col = column(&headers, COL_DATE)?;
    let cases_col = column(&headers, COL_CASES)?;
    let deaths_col = column(&headers, COL_DEATHS)?;
    let country_col = column(&headers, COL_COUNTRY)?;
    let pop_col = POPULATION_COLUMNS
        .iter()
        .find_map(|name| column(&headers, name).ok())
        .ok_or(Error::MissingColumn(POPULATION_COLUMNS[0]))?;

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Csv(e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let malformed = |reason: String| Error::MalformedRow { line, reason };
        let field = |k: usize, name: &str| {
            row.get(k)
                .map(str::trim)
                .ok_or_else(|| malformed(format!("missing field {name}")))
        };

        let raw_date = field(date_col, COL_DATE)?;
        let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT)
            .map_err(|_| malformed(format!("unparseable date {raw_date:?}")))?;
        let int = |k: usize, name: &str| -> Result<i64> {
            let raw = field(k, name)?;
            if raw.is_empty() {
                return Ok(0);
            }
            raw.parse::<i64>()
                .map_err(|_| malformed(format!("{name} is not an integer: {raw:?}")))
        };
        let cases = int(cases_col, COL_CASES)?;
        let deaths = int(deaths_col, COL_DEATHS)?;
        let country_id = field(country_col, COL_COUNTRY)?.to_string();
        if country_id.is_empty() {
            return Err(malformed("empty country".into()));
        }
        let raw_pop = field(pop_col, "population")?;
        let population = if raw_pop.is_empty() {
            None
        } else {
            Some(
                raw_pop
                    .parse::<u64>()
                    .map_err(|_| malformed(format!("population is not an integer: {raw_pop:?}")))?,
            )
        };
        records.push(DailyRecord {
            date,
            cases,
            deaths,
            country_id,
            population,
        });
    }
    Ok(records)
}

/// Writes records with exactly the required columns, in input order.
pub fn write_daily_csv(records: &[DailyRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record([COL_DATE, COL_CASES, COL_DEATHS, COL_COUNTRY, POPULATION_COLUMNS[0]])
        .map_err(err)?;
    for r in records {
        w.write_record([
            r.date.format(DATE_FORMAT).to_string(),
            r.cases.to_string(),
            r.deaths.to_string(),
            r.country_id.clone(),
            r.population.map(|p| p.to_string()).unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Csv(e.to_string()))
}

/// Estimation window for one country.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryWindow {
    pub country_id: String,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_end: NaiveDate,
    /// Overrides the population column of the data when set.
    #[serde(default)]
    pub population: Option<f64>,
}

impl CountryWindow {
    pub fn new(country_id: impl Into<String>, train_start: NaiveDate, train_end: NaiveDate, test_end: NaiveDate) -> Self {
        Self {
            country_id: country_id.into(),
            train_start,
            train_end,
            test_end,
            population: None,
        }
    }

    /// Test window of the same length as the training window.
    pub fn symmetric(country_id: impl Into<String>, train_start: NaiveDate, train_end: NaiveDate) -> Self {
        let test_end = train_end + (train_end - train_start);
        Self::new(country_id, train_start, train_end, test_end)
    }

    pub fn validate(&self) -> Result<()> {
        if self.country_id.trim().is_empty() {
            return Err(Error::invalid("country", "must not be empty"));
        }
        if !(self.train_start < self.train_end && self.train_end < self.test_end) {
            return Err(Error::invalid(
                "window",
                format!(
                    "need train_start < train_end < test_end, got {} / {} / {}",
                    self.train_start, self.train_end, self.test_end
                ),
            ));
        }
        Ok(())
    }

    pub fn days(&self) -> usize {
        (self.test_end - self.train_start).num_days() as usize + 1
    }
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

/// Built-in stable-phase windows. Brazil carries an explicit validation
/// window; the others validate on a window as long as the training one.
pub fn window_registry() -> Vec<CountryWindow> {
    vec![
        CountryWindow::new("Brazil", ymd(2020, 4, 4), ymd(2020, 4, 25), ymd(2020, 5, 16)),
        CountryWindow::symmetric("France", ymd(2020, 3, 26), ymd(2020, 4, 16)),
        CountryWindow::symmetric("India", ymd(2020, 4, 4), ymd(2020, 4, 25)),
        CountryWindow::symmetric("Russia", ymd(2020, 4, 15), ymd(2020, 5, 5)),
        CountryWindow::symmetric("South_Africa", ymd(2020, 4, 4), ymd(2020, 4, 25)),
        CountryWindow::symmetric("United_States_of_America", ymd(2020, 4, 4), ymd(2020, 4, 25)),
    ]
}

fn normalize_country(s: &str) -> String {
    s.trim().replace(' ', "_").to_lowercase()
}

/// True when two country identifiers name the same country, ignoring case
/// and the space/underscore distinction.
pub fn same_country(a: &str, b: &str) -> bool {
    normalize_country(a) == normalize_country(b)
}

pub fn find_window(country: &str) -> Option<CountryWindow> {
    window_registry()
        .into_iter()
        .find(|w| same_country(&w.country_id, country))
}

/// Whether days before the window contribute to the cumulative counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    #[default]
    IncludePriorHistory,
    WindowOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltSeries {
    pub series: ObservationSeries,
    /// Days whose cumulative value was raised to the running maximum.
    pub repairs: usize,
    /// Same-date duplicate rows that were dropped (first one kept).
    pub duplicates: usize,
    pub population: Option<f64>,
}

/// Cumulative series for `window` from daily records.
pub fn build_series(records: &[DailyRecord], window: &CountryWindow, baseline: BaselineMode) -> Result<BuiltSeries> {
    window.validate()?;
    let mut by_date: BTreeMap<NaiveDate, &DailyRecord> = BTreeMap::new();
    let mut duplicates = 0;
    let mut seen_country = false;
    for r in records.iter().filter(|r| same_country(&r.country_id, &window.country_id)) {
        seen_country = true;
        if by_date.contains_key(&r.date) {
            duplicates += 1;
        } else {
            by_date.insert(r.date, r);
        }
    }
    if !seen_country {
        return Err(Error::UnknownCountry(window.country_id.clone()));
    }

    let days = window.days();
    let missing: Vec<NaiveDate> = (0..days)
        .map(|k| window.train_start + Duration::days(k as i64))
        .filter(|d| !by_date.contains_key(d))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingDays { missing });
    }

    let (base_cases, base_deaths) = match baseline {
        BaselineMode::WindowOnly => (0, 0),
        BaselineMode::IncludePriorHistory => by_date
            .range(..window.train_start)
            .fold((0i64, 0i64), |(c, d), (_, r)| (c + r.cases, d + r.deaths)),
    };
    let base_cases = base_cases.max(0);
    let base_deaths = base_deaths.max(0);

    let mut raw_cases = base_cases;
    let mut raw_deaths = base_deaths;
    let mut floor_cases = base_cases;
    let mut floor_deaths = base_deaths;
    let mut repairs = 0;
    let mut values = Vec::with_capacity(days);
    for k in 0..days {
        let r = by_date[&(window.train_start + Duration::days(k as i64))];
        raw_cases += r.cases;
        raw_deaths += r.deaths;
        let mut repaired = false;
        if raw_cases < floor_cases {
            repaired = true;
        } else {
            floor_cases = raw_cases;
        }
        if raw_deaths < floor_deaths {
            repaired = true;
        } else {
            floor_deaths = raw_deaths;
        }
        repairs += usize::from(repaired);
        values.push(ObservationPoint::new(floor_cases as f64, floor_deaths as f64));
    }

    let population = window.population.or_else(|| {
        by_date
            .range(window.train_start..=window.test_end)
            .find_map(|(_, r)| r.population)
            .or_else(|| by_date.values().find_map(|r| r.population))
            .map(|p| p as f64)
    });

    Ok(BuiltSeries {
        series: ObservationSeries::new(window.train_start, values)
            .with_baseline(ObservationPoint::new(base_cases as f64, base_deaths as f64)),
        repairs,
        duplicates,
        population,
    })
}
