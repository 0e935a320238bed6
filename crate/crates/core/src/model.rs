//! SEAIRD state, parameters and right-hand side.
//!
//! Compartments: susceptible `S`, exposed `E`, symptomatic infective `I`,
//! asymptomatic infective `A`, removed `R` and cumulative dead `D`.
//!
//! ```text
//! dS/dt = -F - eta*S + eta*N
//! dE/dt =  F - (mu + eta)*E
//! dI/dt =  alpha*mu*E - (gamma1 + theta + eta)*I
//! dA/dt = (1 - alpha)*mu*E - (gamma2 + eta)*A
//! dR/dt =  gamma1*I + gamma2*A - eta*R
//! dD/dt =  theta*I
//! ```
//!
//! with force of infection `F = beta*S*(I + delta*A)/(S + E + I + A + R)`.
//! Dead individuals do not enter the mixing denominator, and `dD/dt` carries
//! no `eta*I` term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Populations of the six compartments at one instant. Also used for the
/// time derivative of the state (persons per day).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub a: f64,
    pub r: f64,
    pub d: f64,
}

impl StateVector {
    pub const DIM: usize = 6;

    pub const fn new(s: f64, e: f64, i: f64, a: f64, r: f64, d: f64) -> Self {
        Self { s, e, i, a, r, d }
    }

    pub fn from_array(x: [f64; 6]) -> Self {
        Self::new(x[0], x[1], x[2], x[3], x[4], x[5])
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.s, self.e, self.i, self.a, self.r, self.d]
    }

    /// S + E + I + A + R, the mixing population.
    pub fn living(&self) -> f64 {
        self.s + self.e + self.i + self.a + self.r
    }

    /// Sum over all six compartments, dead included.
    pub fn total(&self) -> f64 {
        self.living() + self.d
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.to_array().iter().all(|&v| v >= 0.0)
    }

    pub fn scaled(self, c: f64) -> Self {
        Self::from_array(self.to_array().map(|v| v * c))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::invalid("state", "all compartments must be finite"));
        }
        if !self.is_nonnegative() {
            return Err(Error::invalid("state", "all compartments must be >= 0"));
        }
        Ok(())
    }
}

/// The seven estimated model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    /// Fraction of exposed individuals progressing to the symptomatic class.
    pub alpha: f64,
    /// Transmission probability per unit time.
    pub beta: f64,
    /// Infective force of asymptomatic relative to symptomatic individuals.
    pub delta: f64,
    /// Recovery probability of symptomatic individuals, per day.
    pub gamma1: f64,
    /// Recovery probability of asymptomatic individuals, per day.
    pub gamma2: f64,
    /// Progression rate out of the exposed class, per day.
    pub mu: f64,
    /// Fatality rate, per day.
    pub theta: f64,
}

impl ParameterVector {
    pub const DIM: usize = 7;
    pub const NAMES: [&'static str; 7] =
        ["alpha", "beta", "delta", "gamma1", "gamma2", "mu", "theta"];

    pub fn from_array(p: [f64; 7]) -> Self {
        Self {
            alpha: p[0],
            beta: p[1],
            delta: p[2],
            gamma1: p[3],
            gamma2: p[4],
            mu: p[5],
            theta: p[6],
        }
    }

    pub fn to_array(self) -> [f64; 7] {
        [
            self.alpha,
            self.beta,
            self.delta,
            self.gamma1,
            self.gamma2,
            self.mu,
            self.theta,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES
            .iter()
            .position(|n| *n == name)
            .map(|k| self.to_array()[k])
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &'static str, v: f64| {
            if v.is_finite() && (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{v} is outside [0, 1]")))
            }
        };
        let nonneg = |name: &'static str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{v} must be finite and >= 0")))
            }
        };
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(
                "alpha",
                format!("{} is outside (0, 1)", self.alpha),
            ));
        }
        unit("beta", self.beta)?;
        nonneg("delta", self.delta)?;
        unit("gamma1", self.gamma1)?;
        unit("gamma2", self.gamma2)?;
        nonneg("mu", self.mu)?;
        unit("theta", self.theta)
    }
}

/// Fixed demographic inputs: vital-dynamics rate and population size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemographicConstants {
    /// Birth rate, equal to the natural death rate, per day.
    #[serde(default)]
    pub eta: f64,
    /// Total population N.
    pub population: f64,
}

impl DemographicConstants {
    pub fn new(population: f64) -> Self {
        Self {
            eta: 0.0,
            population,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.population.is_finite() && self.population > 0.0) {
            return Err(Error::invalid(
                "population",
                format!("{} must be > 0", self.population),
            ));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::invalid("eta", format!("{} must be >= 0", self.eta)));
        }
        Ok(())
    }
}

/// Flow from S to E per day: `beta*S*(I + delta*A)/(S + E + I + A + R)`.
pub fn force_of_infection(x: &StateVector, p: &ParameterVector) -> Result<f64> {
    let living = x.living();
    if !(living > 0.0) {
        return Err(Error::DegenerateDenominator { living });
    }
    Ok(p.beta * x.s * (x.i + p.delta * x.a) / living)
}

/// Time derivative of the state. The system is autonomous, `_t` is ignored.
pub fn rhs(
    _t: f64,
    x: &StateVector,
    p: &ParameterVector,
    d: &DemographicConstants,
) -> Result<StateVector> {
    let force = force_of_infection(x, p)?;
    let eta = d.eta;
    Ok(StateVector {
        s: -force - eta * x.s + eta * d.population,
        e: force - (p.mu + eta) * x.e,
        i: p.alpha * p.mu * x.e - (p.gamma1 + p.theta + eta) * x.i,
        a: (1.0 - p.alpha) * p.mu * x.e - (p.gamma2 + eta) * x.a,
        r: p.gamma1 * x.i + p.gamma2 * x.a - eta * x.r,
        d: p.theta * x.i,
    })
}
