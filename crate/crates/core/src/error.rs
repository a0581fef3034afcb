use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Variants are grouped by the CLI exit code they map to, see
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported schema_version {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{quantity} = {value} outside supported range [{min}, {max}]")]
    Range {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("phonon occupation diverges at zero frequency offset")]
    Divergence,

    #[error("quantum wavelength {quantum_nm} nm is not shorter than classical {classical_nm} nm; only anti-Stokes noise is modeled")]
    UnsupportedRegime { quantum_nm: f64, classical_nm: f64 },

    #[error("calibration is underdetermined: {0}")]
    Underdetermined(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("visibility undefined: no coincidences of any kind")]
    UndefinedVisibility,

    #[error("state invariant violated: {0}")]
    Invariant(String),

    #[error("measurement settings are not informationally complete (rank {rank} < {required})")]
    RankDeficient { rank: usize, required: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("arity error: {0}")]
    Arity(String),

    #[error("no feasible plan; binding constraints: {}", binding.join(", "))]
    Infeasible { binding: Vec<String> },

    #[error("maximum-likelihood reconstruction did not converge after {iterations} iterations (last log-likelihood step {last_step:e})")]
    NonConvergence {
        iterations: usize,
        last_step: f64,
        /// Row-major real/imag parts of the last iterate.
        last_iterate: Vec<(f64, f64)>,
    },
}

impl Error {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::SchemaVersion { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Topology(_) => 2,
            Error::Infeasible { .. } => 4,
            Error::NonConvergence { .. } => 5,
            _ => 3,
        }
    }
}
