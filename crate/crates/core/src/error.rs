use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("step size underflow at t = {t:.3e} s (h = {h:.3e} s); stiffest rate scale {rate_scale:.3e} s⁻¹")]
    Stiffness { t: f64, h: f64, rate_scale: f64 },

    #[error("steady state did not converge: {0}")]
    NoConvergence(String),

    #[error("unsupported modulation: {0}")]
    Unsupported(String),

    #[error("singular expression: {0}")]
    Singular(String),

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("sample rate {sample_rate} Hz too low for reference {f_ref} Hz (mixing products alias)")]
    Aliasing { sample_rate: f64, f_ref: f64 },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("mismatched traces: {0}")]
    Mismatch(String),

    #[error("empty band [{lo} Hz, {hi} Hz]")]
    EmptyBand { lo: f64, hi: f64 },

    #[error("tone at {freq} Hz not resolvable with {resolution} Hz bins")]
    Unresolvable { freq: f64, resolution: f64 },

    #[error("sensitivity diverges: {0}")]
    InfiniteSensitivity(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
