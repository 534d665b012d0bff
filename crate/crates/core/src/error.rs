use thiserror::Error;

/// Errors produced by the toolkit.
///
/// Variants are grouped by the exit code the command-line tool maps them to:
/// configuration and input problems versus numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid clipping threshold {eps} (max density value {max})")]
    InvalidThreshold { eps: f64, max: f64 },
    #[error("density is not normalized: integral = {0}")]
    Normalization(f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("relative entropy diverges: reference density is zero at x = {x} where p = {p}; apply clip_normalize first")]
    Divergence { x: f64, p: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular matrix: {0}")]
    SingularMatrix(String),
    #[error("matrix is not positive semi-definite: {0}")]
    NotPositiveSemiDefinite(String),
    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),
    #[error("state blew up at step {step} (|x| = {magnitude}); reduce dt")]
    BlowUp { step: usize, magnitude: f64 },
    #[error("invalid flow configuration: {0}")]
    FlowConfig(String),
    #[error("reality condition violated: max |Im u| = {0}")]
    Symmetry(f64),
    #[error("filter covariance lost positive semi-definiteness at step {step} (min eigenvalue {min_eig}); reduce dt")]
    Instability { step: usize, min_eig: f64 },
    #[error("rank deficient normal equations: {0}")]
    Rank(String),
    #[error("averaging window too short: {0} steps (need at least 10)")]
    Window(usize),
    #[error("series is not stationary: half-series means {first} and {second} differ by more than half a standard deviation")]
    Stationarity { first: f64, second: f64 },
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. }
                | Error::Instability { .. }
                | Error::SingularMatrix(_)
                | Error::NotPositiveSemiDefinite(_)
                | Error::Divergence { .. }
                | Error::Symmetry(_)
                | Error::Rank(_)
                | Error::Calibration(_)
                | Error::Stationarity { .. }
                | Error::DegenerateSample(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
