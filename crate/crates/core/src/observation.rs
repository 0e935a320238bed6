//! Observable channels (cumulative infected, cumulative deaths), the weighted
//! least-squares criterion and the coefficient of determination.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DemographicConstants, ParameterVector, StateVector};
use crate::ode::{integrate, IntegrationConfig, Trajectory};

/// One day of the observable: cumulative infected and cumulative deaths.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservationPoint {
    pub cum_infected: f64,
    pub cum_deaths: f64,
}

impl ObservationPoint {
    pub const fn new(cum_infected: f64, cum_deaths: f64) -> Self {
        Self {
            cum_infected,
            cum_deaths,
        }
    }
}

/// Dated daily series of observables, reported or predicted.
///
/// `baseline` holds the counts accumulated before `start_date` that are
/// already included in `values` (zero when the series starts from nothing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    pub start_date: NaiveDate,
    #[serde(default)]
    pub baseline: ObservationPoint,
    pub values: Vec<ObservationPoint>,
}

impl ObservationSeries {
    pub fn new(start_date: NaiveDate, values: Vec<ObservationPoint>) -> Self {
        Self {
            start_date,
            baseline: ObservationPoint::default(),
            values,
        }
    }

    pub fn with_baseline(mut self, baseline: ObservationPoint) -> Self {
        self.baseline = baseline;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        self.start_date + Duration::days(index as i64)
    }

    pub fn end_date(&self) -> Option<NaiveDate> {
        self.values.len().checked_sub(1).map(|k| self.date(k))
    }

    /// Index of `date`, if it falls inside the series.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let k = (date - self.start_date).num_days();
        (k >= 0 && (k as usize) < self.values.len()).then_some(k as usize)
    }

    pub fn infected(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.cum_infected).collect()
    }

    pub fn deaths(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.cum_deaths).collect()
    }

    /// Inclusive sub-range `[from, to]` by index; the baseline of the slice
    /// is left untouched since it is defined relative to the first day of
    /// the original window.
    pub fn slice(&self, from: usize, to: usize) -> Self {
        Self {
            start_date: self.date(from),
            baseline: self.baseline,
            values: self.values[from..=to].to_vec(),
        }
    }

    /// Finite, nonnegative, non-decreasing in both channels.
    pub fn validate(&self) -> Result<()> {
        let mut previous = ObservationPoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (k, v) in self.values.iter().enumerate() {
            if !(v.cum_infected.is_finite() && v.cum_deaths.is_finite()) {
                return Err(Error::invalid(
                    "observations",
                    format!("non-finite value on {}", self.date(k)),
                ));
            }
            if v.cum_infected < 0.0 || v.cum_deaths < 0.0 {
                return Err(Error::invalid(
                    "observations",
                    format!("negative value on {}", self.date(k)),
                ));
            }
            if v.cum_infected < previous.cum_infected || v.cum_deaths < previous.cum_deaths {
                return Err(Error::invalid(
                    "observations",
                    format!("cumulative counts decrease on {}", self.date(k)),
                ));
            }
            previous = *v;
        }
        Ok(())
    }
}

/// Per-channel weights of the least-squares criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub infected: f64,
    pub deaths: f64,
}

impl WeightVector {
    pub const UNIT: WeightVector = WeightVector {
        infected: 1.0,
        deaths: 1.0,
    };

    pub fn new(infected: f64, deaths: f64) -> Self {
        Self { infected, deaths }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.infected) || !ok(self.deaths) {
            return Err(Error::invalid("weights", "weights must be finite and >= 0"));
        }
        if self.infected == 0.0 && self.deaths == 0.0 {
            return Err(Error::invalid("weights", "weights must not both be zero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// `sum_t wI^2 (I - I_hat)^2 + wD^2 (D - D_hat)^2`
    #[default]
    Diagonal,
    /// `sum_t (wI (I - I_hat) + wD (D - D_hat))^2`; residuals of opposite
    /// sign can cancel.
    Literal,
}

/// Running sum of the `I` compartment over the daily samples.
pub fn cumulative_infected(traj: &Trajectory) -> Vec<f64> {
    prefix_sum(traj.infected())
}

pub(crate) fn prefix_sum(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    values
        .into_iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Simulates from `x0` and reports `(cumulative I, D)` for days
/// `0..=horizon`, dated from `start_date`.
pub fn predict_observables(
    phi: &ParameterVector,
    x0: &StateVector,
    d: &DemographicConstants,
    horizon: usize,
    cfg: &IntegrationConfig,
    start_date: NaiveDate,
) -> Result<ObservationSeries> {
    let traj = integrate(x0, phi, d, horizon, cfg)?;
    Ok(observables_of(&traj, start_date, 0.0))
}

/// Observables of an existing trajectory. `infected_offset` is added to the
/// cumulative infected channel (pre-window cases already in the data).
pub fn observables_of(traj: &Trajectory, start_date: NaiveDate, infected_offset: f64) -> ObservationSeries {
    let values = cumulative_infected(traj)
        .into_iter()
        .zip(traj.deaths())
        .map(|(c, dd)| ObservationPoint::new(c + infected_offset, dd))
        .collect();
    ObservationSeries::new(start_date, values)
}

fn check_aligned(y: &ObservationSeries, y_hat: &ObservationSeries) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.start_date != y_hat.start_date {
        return Err(Error::DateMismatch {
            left: y.start_date,
            right: y_hat.start_date,
        });
    }
    Ok(())
}

pub(crate) fn weighted_sse(
    y: &[ObservationPoint],
    y_hat: &[ObservationPoint],
    w: &WeightVector,
    mode: WeightingMode,
) -> f64 {
    y.iter()
        .zip(y_hat)
        .map(|(a, b)| {
            let ri = w.infected * (a.cum_infected - b.cum_infected);
            let rd = w.deaths * (a.cum_deaths - b.cum_deaths);
            match mode {
                WeightingMode::Diagonal => ri * ri + rd * rd,
                WeightingMode::Literal => (ri + rd) * (ri + rd),
            }
        })
        .sum()
}

/// Weighted least-squares criterion between observed and predicted series.
pub fn objective(
    y: &ObservationSeries,
    y_hat: &ObservationSeries,
    w: &WeightVector,
    mode: WeightingMode,
) -> Result<f64> {
    check_aligned(y, y_hat)?;
    Ok(weighted_sse(&y.values, &y_hat.values, w, mode))
}

/// Coefficients of determination on one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RSquared {
    pub infected: f64,
    pub deaths: f64,
    /// `min(infected, deaths)`, the acceptance gate.
    pub min: f64,
    /// Residual and total sums pooled over both channels, each channel
    /// centred on its own mean.
    pub pooled: f64,
}

fn sums(y: &[f64], y_hat: &[f64]) -> (f64, f64) {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    let ss_tot = y.iter().map(|a| (a - mean).powi(2)).sum();
    (ss_res, ss_tot)
}

/// `1 - SS_res/SS_tot` for a single channel.
pub fn r_squared_channel(y: &[f64], y_hat: &[f64], channel: &'static str) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::DegenerateTestSet { channel });
    }
    let (ss_res, ss_tot) = sums(y, y_hat);
    if !(ss_tot > 0.0) {
        return Err(Error::DegenerateTestSet { channel });
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Per-channel and pooled R² of `y_hat` against `y`. Fails if either channel
/// of `y` is constant.
pub fn r_squared(y: &ObservationSeries, y_hat: &ObservationSeries) -> Result<RSquared> {
    check_aligned(y, y_hat)?;
    let (yi, yd) = (y.infected(), y.deaths());
    let (hi, hd) = (y_hat.infected(), y_hat.deaths());
    let infected = r_squared_channel(&yi, &hi, "infected")?;
    let deaths = r_squared_channel(&yd, &hd, "deaths")?;
    let (ri, ti) = sums(&yi, &hi);
    let (rd, td) = sums(&yd, &hd);
    Ok(RSquared {
        infected,
        deaths,
        min: infected.min(deaths),
        pooled: 1.0 - (ri + rd) / (ti + td),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 4, 4).unwrap()
    }

    fn series(points: &[(f64, f64)]) -> ObservationSeries {
        ObservationSeries::new(
            date(),
            points.iter().map(|&(a, b)| ObservationPoint::new(a, b)).collect(),
        )
    }

    fn trajectory_with_infected(i: &[f64]) -> Trajectory {
        Trajectory {
            times: (0..i.len()).map(|t| t as f64).collect(),
            states: i
                .iter()
                .map(|&v| StateVector::new(100.0, 0.0, v, 0.0, 0.0, 0.0))
                .collect(),
            max_undershoot: 0.0,
            stats: Default::default(),
        }
    }

    #[test]
    fn cumulative_infected_examples() {
        assert_eq!(cumulative_infected(&trajectory_with_infected(&[0.0, 0.0, 0.0])), vec![0.0; 3]);
        assert_eq!(
            cumulative_infected(&trajectory_with_infected(&[1.0, 2.0, 3.0])),
            vec![1.0, 3.0, 6.0]
        );
        assert_eq!(cumulative_infected(&trajectory_with_infected(&[5.0])), vec![5.0]);
    }

    #[test]
    fn objective_examples() {
        let y = series(&[(10.0, 4.0)]);
        assert_eq!(objective(&y, &y, &WeightVector::UNIT, WeightingMode::Diagonal).unwrap(), 0.0);

        let y_hat = series(&[(7.0, 0.0)]);
        assert_abs_diff_eq!(
            objective(&y, &y_hat, &WeightVector::UNIT, WeightingMode::Diagonal).unwrap(),
            25.0
        );

        // residuals (3, -3)
        let y_hat = series(&[(7.0, 7.0)]);
        assert_abs_diff_eq!(
            objective(&y, &y_hat, &WeightVector::UNIT, WeightingMode::Literal).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            objective(&y, &y_hat, &WeightVector::UNIT, WeightingMode::Diagonal).unwrap(),
            18.0
        );
    }

    #[test]
    fn objective_rejects_misaligned_series() {
        let y = series(&[(1.0, 1.0), (2.0, 2.0)]);
        let short = series(&[(1.0, 1.0)]);
        assert!(matches!(
            objective(&y, &short, &WeightVector::UNIT, WeightingMode::Diagonal),
            Err(Error::LengthMismatch { .. })
        ));
        let mut shifted = y.clone();
        shifted.start_date = date().succ_opt().unwrap();
        assert!(matches!(
            objective(&y, &shifted, &WeightVector::UNIT, WeightingMode::Diagonal),
            Err(Error::DateMismatch { .. })
        ));
    }

    #[test]
    fn r_squared_examples() {
        assert_abs_diff_eq!(
            r_squared_channel(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0], "infected").unwrap(),
            0.5
        );
        let y = series(&[(1.0, 10.0), (2.0, 12.0), (4.0, 15.0)]);
        let perfect = r_squared(&y, &y).unwrap();
        assert_eq!(perfect.infected, 1.0);
        assert_eq!(perfect.deaths, 1.0);
        assert_eq!(perfect.min, 1.0);
        assert_eq!(perfect.pooled, 1.0);

        let mi = 7.0 / 3.0;
        let md = 37.0 / 3.0;
        let mean = series(&[(mi, md); 3]);
        let r = r_squared(&y, &mean).unwrap();
        assert_abs_diff_eq!(r.infected, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.deaths, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.pooled, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn r_squared_rejects_constant_channel() {
        let y = series(&[(1.0, 5.0), (2.0, 5.0)]);
        assert!(matches!(
            r_squared(&y, &y),
            Err(Error::DegenerateTestSet { channel: "deaths" })
        ));
    }

    #[test]
    fn weights_must_not_both_vanish() {
        assert!(WeightVector::new(0.0, 0.0).validate().is_err());
        assert!(WeightVector::new(0.0, 1.0).validate().is_ok());
        assert!(WeightVector::new(-1.0, 1.0).validate().is_err());
    }

    #[test]
    fn validate_detects_decrease() {
        assert!(series(&[(1.0, 0.0), (2.0, 0.0)]).validate().is_ok());
        assert!(series(&[(2.0, 0.0), (1.0, 0.0)]).validate().is_err());
        assert!(series(&[(-1.0, 0.0)]).validate().is_err());
    }

    fn arb_series(len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.0..1e5f64, 0.0..1e3f64), len)
    }

    proptest! {
        #[test]
        fn objective_of_identical_series_is_zero(v in arb_series(8), wi in 0.0..10.0f64, wd in 0.0..10.0f64) {
            let y = series(&v);
            let w = WeightVector::new(wi, wd);
            prop_assert_eq!(objective(&y, &y, &w, WeightingMode::Diagonal).unwrap(), 0.0);
            prop_assert_eq!(objective(&y, &y, &w, WeightingMode::Literal).unwrap(), 0.0);
        }

        #[test]
        fn diagonal_objective_symmetric_under_channel_swap(
            a in arb_series(6), b in arb_series(6), wi in 0.0..10.0f64, wd in 0.0..10.0f64,
        ) {
            let swap = |v: &[(f64, f64)]| v.iter().map(|&(x, y)| (y, x)).collect::<Vec<_>>();
            let lhs = objective(&series(&a), &series(&b), &WeightVector::new(wi, wd), WeightingMode::Diagonal).unwrap();
            let rhs = objective(&series(&swap(&a)), &series(&swap(&b)), &WeightVector::new(wd, wi), WeightingMode::Diagonal).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
        }

        #[test]
        fn r_squared_affine_invariant(
            y in prop::collection::vec(0.0..100.0f64, 5),
            noise in prop::collection::vec(-5.0..5.0f64, 5),
            scale in prop_oneof![-10.0..-0.1f64, 0.1..10.0f64],
            shift in -100.0..100.0f64,
        ) {
            let spread = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - y.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-3);
            let y_hat: Vec<f64> = y.iter().zip(&noise).map(|(a, n)| a + n).collect();
            let t = |v: &[f64]| v.iter().map(|x| scale * x + shift).collect::<Vec<_>>();
            let r1 = r_squared_channel(&y, &y_hat, "infected").unwrap();
            let r2 = r_squared_channel(&t(&y), &t(&y_hat), "infected").unwrap();
            prop_assert!((r1 - r2).abs() <= 1e-8 * r1.abs().max(1.0));
        }

        #[test]
        fn cumulative_infected_is_linear(
            a in prop::collection::vec(0.0..1e4f64, 10),
            b in prop::collection::vec(0.0..1e4f64, 10),
        ) {
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let lhs = cumulative_infected(&trajectory_with_infected(&sum));
            let ca = cumulative_infected(&trajectory_with_infected(&a));
            let cb = cumulative_infected(&trajectory_with_infected(&b));
            for k in 0..10 {
                prop_assert!((lhs[k] - (ca[k] + cb[k])).abs() <= 1e-9 * lhs[k].max(1.0));
            }
        }
    }
}
