use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FgError {
    /// A physical parameter is outside its allowed domain.
    #[error("parameter `{name}` out of domain: {reason} (got {value:e})")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// Geometry is degenerate or unphysical (FG at or below the SC plane,
    /// overlapping bodies, pickup loop cutting the sphere, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// The adaptive step size collapsed.
    #[error("step size underflow at t = {t:e} s (h = {h:e} s)")]
    Stiffness { t: f64, h: f64 },

    /// The step budget was exhausted before reaching the end time.
    #[error("step budget of {max_steps} exhausted at t = {t:e} s")]
    MaxSteps { t: f64, max_steps: usize },

    /// The right-hand side failed during integration.
    #[error("integration aborted at t = {t:e} s: {source}")]
    Aborted { t: f64, source: Box<FgError> },

    /// No vertical force balance exists in the search interval.
    #[error("levitation infeasible: {0}")]
    LevitationInfeasible(String),

    /// Initial state violates the model's constraints.
    #[error("invalid initial state: {0}")]
    InvalidState(String),
}

impl FgError {
    /// Simulation time at which a numerical failure happened, if any.
    pub fn failure_time(&self) -> Option<f64> {
        match self {
            FgError::Stiffness { t, .. }
            | FgError::MaxSteps { t, .. }
            | FgError::Aborted { t, .. } => Some(*t),
            _ => None,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            FgError::Stiffness { .. }
                | FgError::MaxSteps { .. }
                | FgError::Aborted { .. }
                | FgError::Geometry(_)
                | FgError::LevitationInfeasible(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, FgError>;

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(FgError::ParameterDomain {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

pub(crate) fn require_non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(FgError::ParameterDomain {
            name,
            value,
            reason: "must be finite and >= 0",
        })
    }
}
