use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use seaird::data_io::{find_window, BaselineMode, CountryWindow};
use seaird::estimator::InitialStateConfig;
use seaird::optimize::NelderMeadOptions;
use seaird::{FitConfig, IntegrationConfig, ParameterBounds, WeightSpec, WeightingMode};

use crate::failure::Failure;

pub const DATA_DIR_VAR: &str = "SEAIRD_DATA_DIR";
pub const DEFAULT_DATA_FILE: &str = "ecdc.csv";

/// Settings shared by `fit`, `sensitivity` and `countries`. Every field is
/// optional in the JSON file; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub country: Option<String>,
    pub train_start: Option<NaiveDate>,
    pub train_end: Option<NaiveDate>,
    pub test_end: Option<NaiveDate>,
    pub tau: Option<f64>,
    /// `"reciprocal"` or `"<w_infected>,<w_deaths>"`.
    pub weights: Option<String>,
    pub seed: Option<u64>,
    pub starts: Option<usize>,
    pub factors: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub max_retries: Option<usize>,
    pub weighting_mode: Option<WeightingMode>,
    pub baseline: Option<BaselineMode>,
    pub bounds: Option<ParameterBounds>,
    pub optimizer: Option<NelderMeadOptions>,
    pub integration: Option<IntegrationConfig>,
    pub initial_state: Option<InitialStateConfig>,
    pub eta: Option<f64>,
    pub population: Option<f64>,
    pub registry: Option<Vec<CountryWindow>>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("config {}: {e}", path.display())))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: RunConfig) -> Self {
        overlay!(self, top; data, country, train_start, train_end, test_end, tau, weights, seed,
            starts, factors, out, max_retries, weighting_mode, baseline, bounds, optimizer,
            integration, initial_state, eta, population, registry);
        self
    }

    /// Window for `country`: the registry entry, with any date overrides
    /// applied. Unknown countries need explicit dates.
    pub fn window(&self, country: &str) -> Result<CountryWindow, Failure> {
        let mut w = match find_window(country) {
            Some(w) => w,
            None => match (self.train_start, self.train_end) {
                (Some(a), Some(b)) => CountryWindow::symmetric(country, a, b),
                _ => {
                    return Err(Failure::input(format!(
                        "country {country:?} is not in the registry; pass --train-start and --train-end"
                    )))
                }
            },
        };
        let explicit_train = self.train_start.is_some() || self.train_end.is_some();
        if let Some(d) = self.train_start {
            w.train_start = d;
        }
        if let Some(d) = self.train_end {
            w.train_end = d;
        }
        match self.test_end {
            Some(d) => w.test_end = d,
            None if explicit_train => w.test_end = w.train_end + (w.train_end - w.train_start),
            None => {}
        }
        w.population = self.population.or(w.population);
        w.validate()?;
        Ok(w)
    }

    /// Estimator settings for one window.
    pub fn fit_config(&self, w: &CountryWindow) -> Result<FitConfig, Failure> {
        let mut cfg = FitConfig::new(w.train_start, w.train_end, w.test_end);
        if let Some(t) = self.tau {
            cfg.tau = t;
        }
        if let Some(s) = &self.weights {
            cfg.weights = parse_weights(s)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.starts {
            cfg.n_starts = n;
        }
        if let Some(n) = self.max_retries {
            cfg.max_retries = n;
        }
        if let Some(m) = self.weighting_mode {
            cfg.weighting_mode = m;
        }
        if let Some(b) = self.bounds {
            cfg.bounds = b;
        }
        if let Some(o) = self.optimizer {
            cfg.optimizer = o;
        }
        if let Some(i) = self.integration {
            cfg.integration = i;
        }
        if let Some(i) = self.initial_state {
            cfg.initial_state = i;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Data file: explicit path if it exists, otherwise looked up under
    /// `$SEAIRD_DATA_DIR`.
    pub fn data_path(&self) -> Result<PathBuf, Failure> {
        let dir = std::env::var_os(DATA_DIR_VAR).map(PathBuf::from);
        let path = match (&self.data, &dir) {
            (Some(p), Some(dir)) if p.is_relative() && !p.exists() => dir.join(p),
            (Some(p), _) => p.clone(),
            (None, Some(dir)) => dir.join(DEFAULT_DATA_FILE),
            (None, None) => {
                return Err(Failure::input(format!(
                    "no data file: pass --data or set {DATA_DIR_VAR}"
                )))
            }
        };
        path.canonicalize()
            .map_err(|e| Failure::input(format!("data file {}: {e}", path.display())))
    }
}

pub fn parse_weights(s: &str) -> Result<WeightSpec, Failure> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("reciprocal") || s.eq_ignore_ascii_case("auto") {
        return Ok(WeightSpec::ReciprocalFinalTraining);
    }
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || Failure::input(format!("weights: expected \"reciprocal\" or \"<infected>,<deaths>\", got {s:?}"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let infected: f64 = parts[0].parse().map_err(|_| bad())?;
    let deaths: f64 = parts[1].parse().map_err(|_| bad())?;
    Ok(WeightSpec::Fixed { infected, deaths })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, m, d).unwrap()
    }

    #[test]
    fn flags_win_over_file() {
        let file = RunConfig {
            tau: Some(0.5),
            seed: Some(1),
            ..Default::default()
        };
        let flags = RunConfig {
            seed: Some(9),
            ..Default::default()
        };
        let merged = file.overlay(flags);
        assert_eq!(merged.tau, Some(0.5));
        assert_eq!(merged.seed, Some(9));
    }

    #[test]
    fn registry_window_with_overrides() {
        let cfg = RunConfig::default();
        let w = cfg.window("brazil").unwrap();
        assert_eq!((w.train_start, w.train_end, w.test_end), (date(4, 4), date(4, 25), date(5, 16)));

        let cfg = RunConfig {
            train_end: Some(date(4, 20)),
            ..Default::default()
        };
        assert_eq!(cfg.window("Brazil").unwrap().test_end, date(5, 6));
        assert!(RunConfig::default().window("Atlantis").is_err());
    }

    #[test]
    fn weights_syntax() {
        assert_eq!(parse_weights("reciprocal").unwrap(), WeightSpec::ReciprocalFinalTraining);
        assert_eq!(
            parse_weights("0.5, 2").unwrap(),
            WeightSpec::Fixed {
                infected: 0.5,
                deaths: 2.0
            }
        );
        assert!(parse_weights("1").is_err());
        assert!(parse_weights("a,b").is_err());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 3}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"seed": 3, "weights": "1,1"}"#).unwrap();
        assert_eq!(c.seed, Some(3));
    }
}
