use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The living population S+E+I+A+R was not positive when evaluating the
    /// force of infection.
    #[error("degenerate force-of-infection denominator: living population {living} <= 0")]
    DegenerateDenominator { living: f64 },

    #[error("invalid {field}: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("integration exceeded {max_steps} steps before t = {t}")]
    StepLimit { max_steps: usize, t: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("series length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("series dates are not aligned: {left} vs {right}")]
    DateMismatch { left: NaiveDate, right: NaiveDate },

    #[error("degenerate test set: zero total variance in the {channel} channel")]
    DegenerateTestSet { channel: &'static str },

    #[error("data does not cover the requested window; missing dates: {}", format_dates(.missing))]
    MissingDays { missing: Vec<NaiveDate> },

    #[error("no records for country {0:?}")]
    UnknownCountry(String),

    #[error("infeasible bounds for {field}: [{lo}, {hi}]")]
    InfeasibleBounds { field: String, lo: f64, hi: f64 },

    #[error("every optimizer start produced a non-finite objective")]
    AllStartsDiverged,

    #[error("deviation is undefined for a zero raw estimate")]
    ZeroRawValue,

    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("missing required column {0:?}")]
    MissingColumn(&'static str),

    #[error("empty input: no header row")]
    EmptyInput,

    #[error("csv: {0}")]
    Csv(String),
}

fn format_dates(dates: &[NaiveDate]) -> String {
    const SHOWN: usize = 10;
    let mut out = dates
        .iter()
        .take(SHOWN)
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if dates.len() > SHOWN {
        out.push_str(&format!(" (and {} more)", dates.len() - SHOWN));
    }
    out
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepLimit { .. }
                | Error::NonFiniteState { .. }
                | Error::StepUnderflow { .. }
                | Error::AllStartsDiverged
                | Error::DegenerateDenominator { .. }
        )
    }
}
