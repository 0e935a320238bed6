//! Dormand–Prince 5(4) integration sampled on an integer-day grid.
//!
//! Steps are shortened so that every day boundary is hit exactly; no dense
//! interpolant is used. The propagated solution is the fifth-order one
//! (local extrapolation), the fourth-order solution only feeds the error
//! estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{rhs, DemographicConstants, ParameterVector, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrationConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-8,
            initial_step: 0.1,
            max_step: 1.0,
            max_steps: 100_000,
        }
    }
}

impl IntegrationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{v} must be > 0")))
            }
        };
        positive("rel_tol", self.rel_tol)?;
        positive("abs_tol", self.abs_tol)?;
        positive("initial_step", self.initial_step)?;
        positive("max_step", self.max_step)?;
        if self.max_step < self.initial_step {
            return Err(Error::invalid(
                "max_step",
                format!(
                    "{} is smaller than initial_step {}",
                    self.max_step, self.initial_step
                ),
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps", "must be >= 1"));
        }
        Ok(())
    }
}

/// Counters collected during one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

// Dormand & Prince (1980) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

// Fifth-order weights (also the last row of A, which gives FSAL).
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// Fifth minus fourth order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

#[inline]
fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for (c, k) in terms {
        for j in 0..D {
            out[j] += h * c * k[j];
        }
    }
    out
}

struct StepOutcome<const D: usize> {
    y: [f64; D],
    k7: [f64; D],
    err: [f64; D],
}

/// One Dormand–Prince step from `(t, y)` with stage-one slope `k1`.
fn dopri_step<const D: usize, F>(
    f: &mut F,
    t: f64,
    y: &[f64; D],
    k1: &[f64; D],
    h: f64,
    stats: &mut StepStats,
) -> Result<StepOutcome<D>>
where
    F: FnMut(f64, &[f64; D]) -> Result<[f64; D]>,
{
    let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, k1)]))?;
    let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(
        t + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    )?;
    let k6 = f(
        t + h,
        &axpy(
            y,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ),
    )?;
    let y_new = axpy(
        y,
        h,
        &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
    );
    let k7 = f(t + h, &y_new)?;
    stats.rhs_evals += 6;
    let mut err = [0.0; D];
    for j in 0..D {
        err[j] = h
            * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j] + E5 * k5[j] + E6 * k6[j] + E7 * k7[j]);
    }
    Ok(StepOutcome { y: y_new, k7, err })
}

fn error_norm<const D: usize>(
    y: &[f64; D],
    y_new: &[f64; D],
    err: &[f64; D],
    cfg: &IntegrationConfig,
) -> f64 {
    let sum: f64 = (0..D)
        .map(|j| {
            let scale = cfg.abs_tol + cfg.rel_tol * y[j].abs().max(y_new[j].abs());
            (err[j] / scale).powi(2)
        })
        .sum();
    (sum / D as f64).sqrt()
}

/// Integrates a `D`-dimensional autonomous-or-not system and returns the
/// state at `t = 0, 1, ..., horizon`.
pub fn integrate_daily<const D: usize, F>(
    mut f: F,
    y0: [f64; D],
    horizon: usize,
    cfg: &IntegrationConfig,
) -> Result<(Vec<[f64; D]>, StepStats)>
where
    F: FnMut(f64, &[f64; D]) -> Result<[f64; D]>,
{
    cfg.validate()?;
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial state", "must be finite"));
    }
    let mut stats = StepStats::default();
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(y0);

    let mut t = 0.0_f64;
    let mut y = y0;
    let mut k1 = f(t, &y)?;
    stats.rhs_evals += 1;
    let mut h = cfg.initial_step.min(cfg.max_step);
    let mut attempts = 0usize;

    for day in 1..=horizon {
        let target = day as f64;
        loop {
            let remaining = target - t;
            if remaining <= 0.0 {
                break;
            }
            attempts += 1;
            if attempts > cfg.max_steps {
                return Err(Error::StepLimit {
                    max_steps: cfg.max_steps,
                    t,
                });
            }
            // Shorten to land on the boundary; absorb a sliver that would
            // leave a uselessly small final step.
            let lands = h >= remaining || remaining - h < 1e-10 * target.max(1.0);
            let step = if lands { remaining } else { h };

            let outcome = dopri_step(&mut f, t, &y, &k1, step, &mut stats)?;
            let finite = outcome.y.iter().all(|v| v.is_finite());
            let norm = if finite {
                error_norm(&y, &outcome.y, &outcome.err, cfg)
            } else {
                f64::INFINITY
            };

            if norm <= 1.0 {
                stats.accepted += 1;
                t = if lands { target } else { t + step };
                y = outcome.y;
                k1 = outcome.k7;
                let factor = if norm == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * norm.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                // A step cut short by the day boundary does not shrink the
                // proposal for the next one.
                let proposal = step * factor;
                h = if lands && step < h {
                    h.max(proposal)
                } else {
                    proposal
                }
                .min(cfg.max_step);
            } else {
                stats.rejected += 1;
                let factor = if norm.is_finite() {
                    (SAFETY * norm.powf(-0.2)).clamp(MIN_FACTOR, 1.0)
                } else {
                    MIN_FACTOR
                };
                h = step * factor;
                if h < 1e-12 * target.max(1.0) {
                    return Err(if finite {
                        Error::StepUnderflow { t }
                    } else {
                        Error::NonFiniteState { t }
                    });
                }
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t });
        }
        out.push(y);
    }
    Ok((out, stats))
}

/// Classical fixed-step Dormand–Prince (fifth-order solution) over
/// `[0, t_end]` with `n` equal steps. Used for convergence-order checks.
pub fn integrate_fixed<const D: usize, F>(mut f: F, y0: [f64; D], t_end: f64, n: usize) -> Result<[f64; D]>
where
    F: FnMut(f64, &[f64; D]) -> Result<[f64; D]>,
{
    if n == 0 {
        return Err(Error::invalid("n", "at least one step is required"));
    }
    let h = t_end / n as f64;
    let mut stats = StepStats::default();
    let mut y = y0;
    let mut k1 = f(0.0, &y)?;
    for step in 0..n {
        let t = step as f64 * h;
        let outcome = dopri_step(&mut f, t, &y, &k1, h, &mut stats)?;
        y = outcome.y;
        k1 = outcome.k7;
    }
    Ok(y)
}

/// States of the SEAIRD system sampled once per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    /// Largest magnitude of a negative component seen before clamping.
    pub max_undershoot: f64,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn infected(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|x| x.i)
    }

    pub fn deaths(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|x| x.d)
    }
}

/// Integrates the SEAIRD model from `x0` and samples days `0..=horizon`.
/// Components in `(-abs_tol, 0)` are clamped to zero in the emitted samples.
pub fn integrate(
    x0: &StateVector,
    p: &ParameterVector,
    d: &DemographicConstants,
    horizon: usize,
    cfg: &IntegrationConfig,
) -> Result<Trajectory> {
    x0.validate()?;
    d.validate()?;
    if horizon == 0 {
        return Err(Error::invalid("horizon", "must be >= 1 day"));
    }
    let (raw, stats) = integrate_daily(
        |t, y: &[f64; 6]| rhs(t, &StateVector::from_array(*y), p, d).map(StateVector::to_array),
        x0.to_array(),
        horizon,
        cfg,
    )?;

    let mut max_undershoot = 0.0_f64;
    let states = raw
        .into_iter()
        .enumerate()
        .map(|(day, y)| {
            let clamped = y.map(|v| {
                if v < 0.0 {
                    max_undershoot = max_undershoot.max(-v);
                    if v > -cfg.abs_tol {
                        0.0
                    } else {
                        v
                    }
                } else {
                    v
                }
            });
            if day == 0 {
                *x0
            } else {
                StateVector::from_array(clamped)
            }
        })
        .collect();

    Ok(Trajectory {
        times: (0..=horizon).map(|t| t as f64).collect(),
        states,
        max_undershoot,
        stats,
    })
}
