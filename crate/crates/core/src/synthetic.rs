//! Synthetic observation series driven by the model itself, with optional
//! multiplicative noise on the daily increments. Used to check that the
//! estimator recovers what generated the data.

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data_io::{same_country, DailyRecord};
use crate::error::{Error, Result};
use crate::model::{DemographicConstants, ParameterVector, StateVector};
use crate::observation::{predict_observables, ObservationPoint, ObservationSeries};
use crate::ode::IntegrationConfig;

/// Reference estimates `(mu, beta, delta, gamma1, gamma2, theta)` for the
/// registry countries. `alpha` was not reported alongside them; generators
/// use [`REFERENCE_ALPHA`].
const REFERENCE: [(&str, [f64; 6]); 6] = [
    ("Brazil", [0.0006, 0.7567, 42.3, 0.9980, 0.0682, 0.0698]),
    ("France", [0.0007, 0.9126, 13.9, 0.9977, 0.1002, 0.1644]),
    ("India", [0.0016, 0.8840, 5.3, 0.9962, 0.1034, 0.0330]),
    ("Russia", [0.0010, 0.9084, 5.1, 0.9976, 0.0404, 0.0097]),
    ("South_Africa", [0.0001, 0.8551, 16.6, 0.9998, 0.0001, 0.0232]),
    ("United_States_of_America", [0.0014, 0.7492, 8.5, 0.9993, 0.0012, 0.0640]),
];

pub const REFERENCE_ALPHA: f64 = 0.5;

pub fn reference_parameters(country: &str) -> Option<ParameterVector> {
    REFERENCE
        .iter()
        .find(|(name, _)| same_country(name, country))
        .map(|(_, [mu, beta, delta, gamma1, gamma2, theta])| ParameterVector {
            alpha: REFERENCE_ALPHA,
            beta: *beta,
            delta: *delta,
            gamma1: *gamma1,
            gamma2: *gamma2,
            mu: *mu,
            theta: *theta,
        })
}

/// Noise-free observables of the model over `0..=horizon` days.
pub fn generate(
    phi: &ParameterVector,
    x0: &StateVector,
    d: &DemographicConstants,
    horizon: usize,
    start: NaiveDate,
) -> Result<ObservationSeries> {
    predict_observables(phi, x0, d, horizon, &IntegrationConfig::default(), start)
}

/// Multiplies every daily increment (day 1 onwards, both channels) by
/// `1 + sigma * z` with `z ~ N(0, 1)`, floored at zero so the cumulative
/// channels stay non-decreasing. Day 0 is kept.
pub fn with_increment_noise(series: &ObservationSeries, sigma: f64, seed: u64) -> Result<ObservationSeries> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid("sigma", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = series.clone();
    for k in 1..series.values.len() {
        let prev = series.values[k - 1];
        let cur = series.values[k];
        let di = (cur.cum_infected - prev.cum_infected) * (1.0 + normal.sample(&mut rng));
        let dd = (cur.cum_deaths - prev.cum_deaths) * (1.0 + normal.sample(&mut rng));
        let last = out.values[k - 1];
        out.values[k] = ObservationPoint::new(last.cum_infected + di.max(0.0), last.cum_deaths + dd.max(0.0));
    }
    Ok(out)
}

/// Daily records (rounded increments) reproducing `series`, for writing
/// synthetic input files. The first day's value becomes that day's count.
pub fn to_daily_records(series: &ObservationSeries, country: &str, population: u64) -> Vec<DailyRecord> {
    let mut prev = (0i64, 0i64);
    series
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let cum = (v.cum_infected.round() as i64, v.cum_deaths.round() as i64);
            let rec = DailyRecord {
                date: series.start_date + Duration::days(k as i64),
                cases: cum.0 - prev.0,
                deaths: cum.1 - prev.1,
                country_id: country.to_string(),
                population: Some(population),
            };
            prev = cum;
            rec
        })
        .collect()
}
