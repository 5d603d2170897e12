use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar argument lies outside the domain of the formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// An intermediate state sits within the minimum detuning of the
    /// one-photon resonance, so the perturbative virtual-state picture fails.
    #[error(
        "virtual-state violation: intermediate state {index} has detuning {delta:.6} eV \
         (minimum {min:.6} eV)"
    )]
    VirtualStateViolation { index: usize, delta: f64, min: f64 },

    #[error("two-photon resonance violated: epsilon_f - epsilon_i = {gap:.6} eV, omega_p = {omega_p:.6} eV")]
    OffResonance { gap: f64, omega_p: f64 },

    #[error("off-shell frequencies: omega_s + omega_i = {sum:.6} eV, omega_p = {omega_p:.6} eV")]
    OffShell { sum: f64, omega_p: f64 },

    #[error("invalid level system: {0}")]
    InvalidLevelSystem(String),

    #[error("insufficient scan range: {samples} samples (minimum 16)")]
    InsufficientScanRange { samples: usize },

    #[error("delay grid is not uniform: {0}")]
    NonUniformGrid(String),

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("combinatorial budget exceeded: C({peaks}, {n}) = {subsets} subsets > cap {cap}; use pair matching across pump wavelengths instead")]
    BudgetExceeded {
        peaks: usize,
        n: usize,
        subsets: u128,
        cap: u128,
    },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user-supplied configuration rather than by
    /// the run itself.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::ConfigParse { .. }
                | Error::InvalidLevelSystem(_)
                | Error::DegenerateConfiguration(_)
        )
    }
}
