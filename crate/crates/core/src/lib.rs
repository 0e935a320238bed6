//! SEAIRD compartmental epidemic model with grey-box parameter estimation.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: state and parameter types, right-hand side of the ODE system;
//! - [`ode`]: adaptive Dormand–Prince integration sampled on whole days;
//! - [`observation`]: cumulative observables, least-squares criterion, R²;
//! - [`optimize`]: bounded Nelder–Mead and Latin-hypercube sampling;
//! - [`estimator`]: multi-start estimation with hold-out validation and retry;
//! - [`sensitivity`]: re-estimation under inflated case counts;
//! - [`data_io`]: ECDC-style CSV ingestion and per-country windows;
//! - [`synthetic`]: model-generated data for recovery checks.

pub mod data_io;
pub mod error;
pub mod estimator;
pub mod model;
pub mod observation;
pub mod ode;
pub mod optimize;
pub mod sensitivity;
pub mod synthetic;

pub use error::{Error, Result};
pub use estimator::{fit, multi_start, FitConfig, FitResult, ParameterBounds, WeightSpec};
pub use model::{force_of_infection, rhs, DemographicConstants, ParameterVector, StateVector};
pub use observation::{
    cumulative_infected, objective, predict_observables, r_squared, ObservationPoint, ObservationSeries,
    RSquared, WeightVector, WeightingMode,
};
pub use ode::{integrate, IntegrationConfig, Trajectory};
