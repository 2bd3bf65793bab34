use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Variants map onto the failure modes of each operation; the CLI turns
/// [`Error::is_validation`] errors into exit code 2 and everything else into
/// exit code 3.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("derivative order {order} exceeds supported maximum {max}")]
    UnsupportedOrder { order: usize, max: usize },
    #[error("integral did not converge: {0}")]
    Divergent(String),
    #[error("grid covers mass {covered:.3e} short of threshold {threshold:.3e}")]
    MassNotCovered { covered: f64, threshold: f64 },
    #[error("evaluation point {re} + {im}i lies outside the closed lower half-plane")]
    DomainError { re: f64, im: f64 },
    #[error("boundary evaluations disagree by {discrepancy:.3e} at omega = {omega}")]
    CrossCheckFailure { omega: f64, discrepancy: f64 },
    #[error("dispersion curve passes within {min_abs:.3e} of the origin")]
    MarginalError { min_abs: f64 },
    #[error("no zero of the Hilbert integral found")]
    NoZeroFound,
    #[error("root iteration did not converge (|D| = {residual:.3e})")]
    RootNotConverged { residual: f64 },
    #[error("no unstable root: kernel is stable at this coupling")]
    NoUnstableRoot,
    #[error("implicit step singular at t = {t}")]
    StepSolveFailure { t: f64 },
    #[error("fit window residual {residual:.3} exceeds 0.5")]
    WindowTooNoisy { residual: f64, exponent: f64 },
    #[error("weighted ratios grow by {growth:.3e} across horizons")]
    UnstableKernel { growth: f64 },
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
    #[error("time step {dt} exceeds stability bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("coefficient magnitude {magnitude:.3e} at t = {t}")]
    BlowupDetected { t: f64, magnitude: f64 },
    #[error("finite-difference stencil spans gap ratio {ratio:.2}")]
    GridTooCoarse { ratio: f64 },
    #[error("runs are not comparable: {0}")]
    MismatchedConfigs(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidDistribution(_)
                | Error::InvalidParameter(_)
                | Error::UnsupportedOrder { .. }
                | Error::InvalidPerturbation(_)
                | Error::StepTooLarge { .. }
                | Error::MismatchedConfigs(_)
                | Error::Config(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
