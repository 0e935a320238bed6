//! Joint estimation of the parameter vector and the unobserved part of the
//! initial state, validated on a held-out window.
//!
//! The procedure:
//! 1. split the data into a training window `[T0, T1]` and a test window
//!    `(T1, Tf]`;
//! 2. minimize the weighted least-squares criterion on the training window
//!    over `(phi, E(0), A(0), R(0))` from several starts;
//! 3. forecast continuously from `T0` to `Tf` and compute R² on the test
//!    window;
//! 4. accept if the smaller per-channel R² reaches `tau`, otherwise redraw
//!    the initial-state starts and go back to 2, up to `max_retries` times.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DemographicConstants, ParameterVector, StateVector};
use crate::observation::{
    observables_of, r_squared, weighted_sse, ObservationPoint, ObservationSeries, RSquared,
    WeightVector, WeightingMode,
};
use crate::ode::{integrate, IntegrationConfig};
use crate::optimize::{latin_hypercube, minimize, Bounds, NelderMeadOptions};

/// Box constraints on the seven parameters, as `[lo, hi]` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParameterBounds {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub delta: [f64; 2],
    pub gamma1: [f64; 2],
    pub gamma2: [f64; 2],
    pub mu: [f64; 2],
    pub theta: [f64; 2],
}

impl Default for ParameterBounds {
    fn default() -> Self {
        Self {
            alpha: [0.01, 0.99],
            beta: [0.0, 1.0],
            delta: [0.0, 100.0],
            gamma1: [0.0, 1.0],
            gamma2: [0.0, 1.0],
            mu: [0.0, 1.0],
            theta: [0.0, 1.0],
        }
    }
}

impl ParameterBounds {
    pub fn as_array(&self) -> [[f64; 2]; 7] {
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

    pub fn lower(&self) -> ParameterVector {
        ParameterVector::from_array(self.as_array().map(|b| b[0]))
    }

    pub fn upper(&self) -> ParameterVector {
        ParameterVector::from_array(self.as_array().map(|b| b[1]))
    }

    pub fn midpoint(&self) -> ParameterVector {
        ParameterVector::from_array(self.as_array().map(|b| 0.5 * (b[0] + b[1])))
    }

    pub fn contains(&self, p: &ParameterVector) -> bool {
        self.as_array()
            .iter()
            .zip(p.to_array())
            .all(|(b, v)| b[0] <= v && v <= b[1])
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in ParameterVector::NAMES.iter().zip(self.as_array()) {
            let infeasible = || Error::InfeasibleBounds {
                field: name.to_string(),
                lo,
                hi,
            };
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
                return Err(infeasible());
            }
            let ok = match *name {
                "alpha" => lo > 0.0 && hi < 1.0,
                "delta" | "mu" => true,
                _ => hi <= 1.0,
            };
            if !ok {
                return Err(infeasible());
            }
        }
        Ok(())
    }
}

/// How the criterion weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WeightSpec {
    /// Each channel scaled by the reciprocal of its last training value.
    ReciprocalFinalTraining,
    Fixed { infected: f64, deaths: f64 },
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::ReciprocalFinalTraining
    }
}

impl WeightSpec {
    fn resolve(&self, last_training: &ObservationPoint) -> Result<WeightVector> {
        let w = match *self {
            WeightSpec::Fixed { infected, deaths } => WeightVector::new(infected, deaths),
            WeightSpec::ReciprocalFinalTraining => {
                let recip = |v: f64| if v > 0.0 { 1.0 / v } else { 0.0 };
                WeightVector::new(
                    recip(last_training.cum_infected),
                    recip(last_training.cum_deaths),
                )
            }
        };
        w.validate()?;
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialStateConfig {
    /// Upper bound of each free component (E, A, R) as a multiple of I(0).
    pub free_multiple: f64,
}

impl Default for InitialStateConfig {
    fn default() -> Self {
        Self {
            free_multiple: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_end: NaiveDate,
    #[serde(default)]
    pub weights: WeightSpec,
    #[serde(default)]
    pub weighting_mode: WeightingMode,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub bounds: ParameterBounds,
    #[serde(default)]
    pub initial_state: InitialStateConfig,
    #[serde(default = "default_starts")]
    pub n_starts: usize,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_optimizer")]
    pub optimizer: NelderMeadOptions,
    #[serde(default)]
    pub integration: IntegrationConfig,
}

fn default_tau() -> f64 {
    0.90
}
fn default_starts() -> usize {
    16
}
fn default_retries() -> usize {
    4
}
fn default_optimizer() -> NelderMeadOptions {
    NelderMeadOptions {
        max_evals: 20_000,
        ..Default::default()
    }
}

impl FitConfig {
    pub fn new(train_start: NaiveDate, train_end: NaiveDate, test_end: NaiveDate) -> Self {
        Self {
            train_start,
            train_end,
            test_end,
            weights: WeightSpec::default(),
            weighting_mode: WeightingMode::default(),
            tau: default_tau(),
            bounds: ParameterBounds::default(),
            initial_state: InitialStateConfig::default(),
            n_starts: default_starts(),
            max_retries: default_retries(),
            seed: 0,
            optimizer: default_optimizer(),
            integration: IntegrationConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_start < self.train_end && self.train_end < self.test_end) {
            return Err(Error::invalid(
                "window",
                format!(
                    "need train_start < train_end < test_end, got {} / {} / {}",
                    self.train_start, self.train_end, self.test_end
                ),
            ));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid("tau", format!("{} is outside (0, 1)", self.tau)));
        }
        if self.n_starts == 0 {
            return Err(Error::invalid("n_starts", "must be >= 1"));
        }
        if !(self.initial_state.free_multiple.is_finite() && self.initial_state.free_multiple >= 0.0) {
            return Err(Error::invalid("free_multiple", "must be finite and >= 0"));
        }
        if let WeightSpec::Fixed { infected, deaths } = self.weights {
            WeightVector::new(infected, deaths).validate()?;
        }
        self.bounds.validate()?;
        self.integration.validate()
    }

    pub fn train_days(&self) -> usize {
        (self.train_end - self.train_start).num_days() as usize
    }

    pub fn horizon(&self) -> usize {
        (self.test_end - self.train_start).num_days() as usize
    }
}

/// Initial state with `I(0)` and `D(0)` anchored to the data and
/// `E(0), A(0), R(0)` left to the optimizer. `S(0)` closes the population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialStateSpec {
    pub infected: f64,
    pub deaths: f64,
    /// Upper bounds of E(0), A(0), R(0).
    pub free_upper: [f64; 3],
    pub population: f64,
}

impl InitialStateSpec {
    /// Anchors `I(0)` on the first daily case increment of the window and
    /// `D(0)` on the cumulative deaths at its first day.
    pub fn from_data(data: &ObservationSeries, population: f64, cfg: &InitialStateConfig) -> Result<Self> {
        let first = data
            .values
            .first()
            .ok_or_else(|| Error::invalid("data", "empty series"))?;
        let infected = (first.cum_infected - data.baseline.cum_infected).max(0.0);
        let deaths = first.cum_deaths;
        let room = population - infected - deaths;
        if !(room > 0.0) {
            return Err(Error::invalid(
                "population",
                "anchored compartments exhaust the population",
            ));
        }
        // An empty first day would pin every free component to zero.
        let upper = (cfg.free_multiple * infected.max(1.0)).min(room / 4.0);
        Ok(Self {
            infected,
            deaths,
            free_upper: [upper; 3],
            population,
        })
    }

    pub fn state(&self, free: [f64; 3]) -> StateVector {
        let [e, a, r] = free;
        let s = self.population - (e + self.infected + a + r + self.deaths);
        StateVector::new(s, e, self.infected, a, r, self.deaths)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartLog {
    pub start: usize,
    pub objective: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub attempt: usize,
    pub best_start: usize,
    pub objective: f64,
    pub r2_test_min: f64,
    pub starts: Vec<StartLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub phi_hat: ParameterVector,
    pub x0_hat: StateVector,
    pub r2_train: RSquared,
    pub r2_test: RSquared,
    pub objective_value: f64,
    pub weights: WeightVector,
    /// Whether the test gate `r2_test.min >= tau` was met.
    pub accepted: bool,
    /// Initial-state redraws performed after the first attempt.
    pub n_restarts_used: usize,
    /// Prediction over `[T0, Tf]`.
    pub predicted: ObservationSeries,
    pub diagnostics: Vec<AttemptLog>,
}

/// Best point found by [`multi_start`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStartOutcome {
    pub phi: ParameterVector,
    pub x0: StateVector,
    pub objective: f64,
    pub best_start: usize,
    pub starts: Vec<StartLog>,
}

/// Training problem shared by every start.
struct Problem<'a> {
    train: &'a [ObservationPoint],
    offset: f64,
    init: InitialStateSpec,
    demographics: DemographicConstants,
    weights: WeightVector,
    mode: WeightingMode,
    integration: IntegrationConfig,
    train_days: usize,
}

impl Problem<'_> {
    fn unpack(&self, z: &[f64]) -> (ParameterVector, StateVector) {
        let phi = ParameterVector::from_array(z[..7].try_into().expect("seven parameters"));
        let x0 = self.init.state([z[7], z[8], z[9]]);
        (phi, x0)
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let (phi, x0) = self.unpack(z);
        if !(x0.s > 0.0) {
            return f64::INFINITY;
        }
        match integrate(&x0, &phi, &self.demographics, self.train_days, &self.integration) {
            Ok(traj) => {
                let mut cum = self.offset;
                let predicted: Vec<ObservationPoint> = traj
                    .states
                    .iter()
                    .map(|x| {
                        cum += x.i;
                        ObservationPoint::new(cum, x.d)
                    })
                    .collect();
                weighted_sse(self.train, &predicted, &self.weights, self.mode)
            }
            Err(_) => f64::INFINITY,
        }
    }
}

fn search_bounds(cfg: &FitConfig, init: &InitialStateSpec) -> Bounds {
    let pb = cfg.bounds.as_array();
    let mut lo: Vec<f64> = pb.iter().map(|b| b[0]).collect();
    let mut hi: Vec<f64> = pb.iter().map(|b| b[1]).collect();
    for u in init.free_upper {
        lo.push(0.0);
        hi.push(u);
    }
    Bounds { lo, hi }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Starting points for one attempt. Start 0 pairs the box midpoint of `phi`
/// with the centre of the initial-state box on the first attempt, so a
/// larger `n_starts` only ever adds points. The remaining `phi` starts come
/// from one Latin hypercube that is reused across attempts; the
/// initial-state part is redrawn on every attempt.
fn starting_points(cfg: &FitConfig, bounds: &Bounds, attempt: usize) -> Vec<Vec<f64>> {
    let n = cfg.n_starts;
    let phi_box = Bounds {
        lo: bounds.lo[..7].to_vec(),
        hi: bounds.hi[..7].to_vec(),
    };
    let free_box = Bounds {
        lo: bounds.lo[7..].to_vec(),
        hi: bounds.hi[7..].to_vec(),
    };
    let mut phi_starts = vec![cfg.bounds.midpoint().to_array().to_vec()];
    phi_starts.extend(latin_hypercube(n - 1, &phi_box, &mut stream_rng(cfg.seed, 0)));

    let free_starts: Vec<Vec<f64>> = if attempt == 0 {
        let centre: Vec<f64> = free_box.lo.iter().zip(&free_box.hi).map(|(l, h)| 0.5 * (l + h)).collect();
        let mut v = vec![centre];
        v.extend(latin_hypercube(n - 1, &free_box, &mut stream_rng(cfg.seed, 1)));
        v
    } else {
        latin_hypercube(n, &free_box, &mut stream_rng(cfg.seed, 1 + attempt as u64))
    };

    phi_starts
        .into_iter()
        .zip(free_starts)
        .map(|(mut p, f)| {
            p.extend(f);
            p
        })
        .collect()
}

fn window(data: &ObservationSeries, cfg: &FitConfig) -> Result<ObservationSeries> {
    let missing = |date: NaiveDate| Error::MissingDays {
        missing: vec![date],
    };
    let from = data.index_of(cfg.train_start).ok_or_else(|| missing(cfg.train_start))?;
    let to = data.index_of(cfg.test_end).ok_or_else(|| missing(cfg.test_end))?;
    let mut w = data.slice(from, to);
    if from > 0 {
        // Days before the window become part of the baseline.
        w.baseline.cum_infected = data.values[from - 1].cum_infected;
        w.baseline.cum_deaths = data.values[from - 1].cum_deaths;
    }
    Ok(w)
}

fn prepare<'a>(
    windowed: &'a ObservationSeries,
    d: &DemographicConstants,
    cfg: &FitConfig,
) -> Result<(Problem<'a>, Bounds)> {
    let t1 = cfg.train_days();
    let init = InitialStateSpec::from_data(windowed, d.population, &cfg.initial_state)?;
    let weights = cfg.weights.resolve(&windowed.values[t1])?;
    let problem = Problem {
        train: &windowed.values[..=t1],
        offset: windowed.baseline.cum_infected,
        init,
        demographics: *d,
        weights,
        mode: cfg.weighting_mode,
        integration: cfg.integration,
        train_days: t1,
    };
    let bounds = search_bounds(cfg, &init);
    bounds.validate()?;
    Ok((problem, bounds))
}

fn validate_inputs(data: &ObservationSeries, d: &DemographicConstants, cfg: &FitConfig) -> Result<ObservationSeries> {
    cfg.validate()?;
    d.validate()?;
    data.validate()?;
    let windowed = window(data, cfg)?;
    let max_cases = windowed
        .values
        .iter()
        .map(|v| v.cum_infected)
        .fold(0.0, f64::max);
    if !(d.population > max_cases) {
        return Err(Error::invalid(
            "population",
            format!("{} does not exceed the cumulative case count {max_cases}", d.population),
        ));
    }
    Ok(windowed)
}

fn run_starts(problem: &Problem<'_>, bounds: &Bounds, starts: Vec<Vec<f64>>, opts: &NelderMeadOptions) -> Result<MultiStartOutcome> {
    let runs: Vec<(usize, Option<(Vec<f64>, StartLog)>)> = starts
        .into_par_iter()
        .enumerate()
        .map(|(k, x0)| {
            let run = minimize(|z| problem.objective(z), &x0, bounds, opts).ok().map(|m| {
                let log = StartLog {
                    start: k,
                    objective: m.value,
                    evaluations: m.evaluations,
                    converged: m.converged,
                };
                (m.x, log)
            });
            (k, run)
        })
        .collect();

    let mut logs = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    for (k, run) in runs {
        match run {
            Some((x, log)) => {
                let better = match &best {
                    None => log.objective.is_finite(),
                    Some((_, _, f)) => log.objective < *f,
                };
                if better {
                    best = Some((k, x, log.objective));
                }
                logs.push(log);
            }
            None => logs.push(StartLog {
                start: k,
                objective: f64::INFINITY,
                evaluations: 0,
                converged: false,
            }),
        }
    }
    let (best_start, z, objective) = best.ok_or(Error::AllStartsDiverged)?;
    let (phi, x0) = problem.unpack(&z);
    Ok(MultiStartOutcome {
        phi,
        x0,
        objective,
        best_start,
        starts: logs,
    })
}

/// Minimizes the training criterion from `cfg.n_starts` seeded starts and
/// returns the lowest one (ties go to the lower start index).
pub fn multi_start(data: &ObservationSeries, d: &DemographicConstants, cfg: &FitConfig) -> Result<MultiStartOutcome> {
    let windowed = validate_inputs(data, d, cfg)?;
    let (problem, bounds) = prepare(&windowed, d, cfg)?;
    let starts = starting_points(cfg, &bounds, 0);
    run_starts(&problem, &bounds, starts, &cfg.optimizer)
}

/// Training criterion of a given `(phi, E(0), A(0), R(0))` on `data`, with
/// the same anchoring and weights that [`fit`] uses.
pub fn training_objective(
    data: &ObservationSeries,
    d: &DemographicConstants,
    cfg: &FitConfig,
    phi: &ParameterVector,
    free: [f64; 3],
) -> Result<f64> {
    let windowed = validate_inputs(data, d, cfg)?;
    let (problem, _) = prepare(&windowed, d, cfg)?;
    let mut z = phi.to_array().to_vec();
    z.extend(free);
    Ok(problem.objective(&z))
}

/// Runs the full estimate–validate–retry procedure.
pub fn fit(data: &ObservationSeries, d: &DemographicConstants, cfg: &FitConfig) -> Result<FitResult> {
    let windowed = validate_inputs(data, d, cfg)?;
    let (problem, bounds) = prepare(&windowed, d, cfg)?;
    let t1 = cfg.train_days();
    let horizon = cfg.horizon();
    let train_obs = windowed.slice(0, t1);
    let test_obs = windowed.slice(t1 + 1, horizon);

    let mut diagnostics = Vec::new();
    let mut best: Option<FitResult> = None;
    for attempt in 0..=cfg.max_retries {
        let starts = starting_points(cfg, &bounds, attempt);
        let outcome = match run_starts(&problem, &bounds, starts, &cfg.optimizer) {
            Ok(o) => o,
            Err(Error::AllStartsDiverged) => {
                diagnostics.push(AttemptLog {
                    attempt,
                    best_start: 0,
                    objective: f64::INFINITY,
                    r2_test_min: f64::NEG_INFINITY,
                    starts: Vec::new(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };

        let traj = integrate(&outcome.x0, &outcome.phi, d, horizon, &cfg.integration)?;
        let predicted = observables_of(&traj, cfg.train_start, windowed.baseline.cum_infected);
        let r2_train = r_squared(&train_obs, &predicted.slice(0, t1))?;
        let r2_test = r_squared(&test_obs, &predicted.slice(t1 + 1, horizon))?;
        diagnostics.push(AttemptLog {
            attempt,
            best_start: outcome.best_start,
            objective: outcome.objective,
            r2_test_min: r2_test.min,
            starts: outcome.starts,
        });

        let candidate = FitResult {
            phi_hat: outcome.phi,
            x0_hat: outcome.x0,
            r2_train,
            r2_test,
            objective_value: outcome.objective,
            weights: problem.weights,
            accepted: r2_test.min >= cfg.tau,
            n_restarts_used: attempt,
            predicted,
            diagnostics: Vec::new(),
        };
        let improves = best
            .as_ref()
            .map_or(true, |b| candidate.r2_test.min > b.r2_test.min);
        let accepted = candidate.accepted;
        if improves {
            best = Some(candidate);
        }
        if accepted {
            break;
        }
    }

    let mut result = best.ok_or(Error::AllStartsDiverged)?;
    result.n_restarts_used = diagnostics.len() - 1;
    result.diagnostics = diagnostics;
    Ok(result)
}
