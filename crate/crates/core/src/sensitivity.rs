//! Under-reporting sensitivity: inflate reported cases by fixed fractions,
//! re-fit with the same configuration and seed, and tabulate how far each
//! parameter moves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit, FitConfig, FitResult};
use crate::model::{DemographicConstants, ParameterVector};
use crate::observation::ObservationSeries;

pub const DEFAULT_FACTORS: [f64; 3] = [0.05, 0.10, 0.20];

/// Parameters reported in the table, in row order.
pub const REPORTED_PARAMETERS: [&str; 6] = ["mu", "beta", "delta", "gamma1", "gamma2", "theta"];

/// Multiplies the cumulative-cases channel (and its baseline) by
/// `1 + factor`. Deaths are left as reported.
pub fn inflate_cases(data: &ObservationSeries, factor: f64) -> ObservationSeries {
    let scale = 1.0 + factor;
    let mut out = data.clone();
    out.baseline.cum_infected *= scale;
    for v in &mut out.values {
        v.cum_infected *= scale;
    }
    out
}

/// Signed relative change in percent.
pub fn deviation(raw: f64, perturbed: f64) -> Result<f64> {
    if raw == 0.0 {
        return Err(Error::ZeroRawValue);
    }
    Ok(100.0 * (perturbed - raw) / raw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub factor: f64,
    pub value: Option<f64>,
    pub deviation_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub parameter: String,
    pub raw_estimate: f64,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub factor: f64,
    pub phi_hat: Option<ParameterVector>,
    pub r2_test_min: Option<f64>,
    pub accepted: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub factors: Vec<f64>,
    pub raw: FitResult,
    pub rows: Vec<ParameterRow>,
    pub scenarios: Vec<Scenario>,
}

impl SensitivityReport {
    /// Table with one row per parameter: raw estimate, then a value and
    /// deviation column per factor. Failed scenarios leave empty cells.
    pub fn to_csv(&self) -> Result<String> {
        let err = |e: csv::Error| Error::Csv(e.to_string());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["parameter".to_string(), "raw_estimate".to_string()];
        for f in &self.factors {
            header.push(format!("value_{f}"));
            header.push(format!("deviation_pct_{f}"));
        }
        w.write_record(&header).map_err(err)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            let mut record = vec![row.parameter.clone(), row.raw_estimate.to_string()];
            for c in &row.cells {
                record.push(opt(c.value));
                record.push(opt(c.deviation_percent));
            }
            w.write_record(&record).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Csv(e.to_string()))
    }
}

/// Fits the raw data, then every inflated copy with the same configuration.
/// A failing scenario is recorded in its cells instead of aborting.
pub fn sensitivity_table(
    data: &ObservationSeries,
    d: &DemographicConstants,
    cfg: &FitConfig,
    factors: &[f64],
) -> Result<SensitivityReport> {
    if let Some(f) = factors.iter().find(|f| !(f.is_finite() && **f > -1.0)) {
        return Err(Error::invalid("factors", format!("{f} must be finite and > -1")));
    }
    let raw = fit(data, d, cfg)?;
    let fits: Vec<Result<FitResult>> = factors
        .par_iter()
        .map(|&f| fit(&inflate_cases(data, f), d, cfg))
        .collect();

    let scenarios: Vec<Scenario> = factors
        .iter()
        .zip(&fits)
        .map(|(&factor, r)| match r {
            Ok(r) => Scenario {
                factor,
                phi_hat: Some(r.phi_hat),
                r2_test_min: Some(r.r2_test.min),
                accepted: Some(r.accepted),
                error: None,
            },
            Err(e) => Scenario {
                factor,
                phi_hat: None,
                r2_test_min: None,
                accepted: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let rows = REPORTED_PARAMETERS
        .iter()
        .map(|&name| {
            let raw_estimate = raw.phi_hat.get(name).expect("known parameter");
            let cells = scenarios
                .iter()
                .map(|s| {
                    let value = s.phi_hat.and_then(|p| p.get(name));
                    Cell {
                        factor: s.factor,
                        value,
                        deviation_percent: value.and_then(|v| deviation(raw_estimate, v).ok()),
                    }
                })
                .collect();
            ParameterRow {
                parameter: name.to_string(),
                raw_estimate,
                cells,
            }
        })
        .collect();

    Ok(SensitivityReport {
        factors: factors.to_vec(),
        raw,
        rows,
        scenarios,
    })
}
