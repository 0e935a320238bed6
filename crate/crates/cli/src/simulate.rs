use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seaird::{cumulative_infected, integrate, DemographicConstants, IntegrationConfig, ParameterVector, StateVector};

use crate::failure::Failure;
use crate::output::Artifact;

pub const SIMULATION_FILE: &str = "simulation.csv";

/// Parameter file accepted by `simulate`: the seven parameters plus
/// optional `eta`, `population` and `x0`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterFile {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub mu: f64,
    pub theta: f64,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub population: Option<f64>,
    #[serde(default)]
    pub x0: Option<StateVector>,
}

impl ParameterFile {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("parameters {}: {e}", path.display())))
    }

    pub fn params(&self) -> ParameterVector {
        ParameterVector {
            alpha: self.alpha,
            beta: self.beta,
            delta: self.delta,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            mu: self.mu,
            theta: self.theta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub params_file: Option<PathBuf>,
    pub params: ParameterVector,
    pub x0: StateVector,
    pub horizon: usize,
    pub eta: f64,
    pub population: f64,
    #[serde(default)]
    pub integration: IntegrationConfig,
}

/// `x0` as `S,E,I,A,R,D` or as the path of a JSON state.
pub fn parse_state(s: &str) -> Result<StateVector, Failure> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() == 6 {
        let mut x = [0.0; 6];
        for (slot, p) in x.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Failure::input(format!("x0: cannot parse {p:?} as a number")))?;
        }
        return Ok(StateVector::from_array(x));
    }
    let path = Path::new(s);
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("x0 {}: {e}", path.display())))
}

pub fn run(cfg: &SimulationConfig) -> Result<Vec<Artifact>, Failure> {
    cfg.params.validate()?;
    let d = DemographicConstants::new(cfg.population).with_eta(cfg.eta);
    d.validate()?;
    let traj = integrate(&cfg.x0, &cfg.params, &d, cfg.horizon, &cfg.integration)?;
    let cum = cumulative_infected(&traj);

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["day", "S", "E", "I", "A", "R", "D", "cum_infected"])?;
    for (k, (x, c)) in traj.states.iter().zip(&cum).enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(x.to_array().iter().map(|v| v.to_string()));
        row.push(c.to_string());
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::input(e.to_string()))?;
    Ok(vec![Artifact::new(SIMULATION_FILE, bytes)])
}
