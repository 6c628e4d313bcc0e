use thiserror::Error;

/// A rejected parameter, named by its field path.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid `{field}`: {reason}")]
pub struct ParamError {
    pub field: String,
    pub reason: String,
}

impl ParamError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { field: field.into(), reason: reason.into() }
    }

    /// Prefix the field path, e.g. `gamma_ac` → `params.gamma_ac`.
    pub fn within(mut self, parent: &str) -> Self {
        self.field = format!("{parent}.{}", self.field);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t} (h = {step:e})")]
    StepUnderflow { t: f64, step: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("unphysical state at t = {t}: {what} = {value:e}")]
    InvariantViolation { t: f64, what: &'static str, value: f64 },
    #[error(transparent)]
    Param(#[from] ParamError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("analysis window [{start}, {end}] is shorter than {required} (5 repetition periods)")]
    WindowTooShort { start: f64, end: f64, required: f64 },
    #[error("analysis window [{start}, {end}] contains no samples")]
    EmptyWindow { start: f64, end: f64 },
}
