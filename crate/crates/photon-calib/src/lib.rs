//! Calibration of photon-number statistics from a multi-detector threshold
//! ("click") setup.
//!
//! A light pulse is split onto `D` threshold detectors with known
//! efficiencies.  Averaged `r`-fold coincidence rates are linear in the
//! photon-number distribution of the source, and inverting a triangular
//! response system yields rigorous upper and lower bounds on each `p_n`
//! (`n < D`) and on the tail probability of `D` or more photons.  The
//! [`decoy`] module feeds those bounds into an asymptotic decoy-state BB84
//! key-rate estimate.
//!
//! Entry points:
//! - [`coincidence`]: detector setups, photon sources, exact fold statistics
//! - [`simulate`]: seeded Monte Carlo click generation
//! - [`bounds`]: reciprocal bases and the photon-number bounds
//! - [`closedform`]: explicit bound formulas for `D = 2, 3, 4`
//! - [`uncertainty`]: confidence intervals and worst-case widening
//! - [`decoy`]: key-rate formulas and intensity optimization
//! - [`io`] / [`cli`]: file formats and the command-line front end

pub mod bounds;
pub mod cli;
pub mod closedform;
pub mod coincidence;
pub mod decoy;
pub mod io;
pub mod math;
pub mod simulate;
pub mod uncertainty;

use thiserror::Error as ThisError;

/// Crate-wide error type.
#[derive(Debug, ThisError)]
pub enum Error {
    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Detector efficiencies failed validation.
    #[error("invalid detector setup: {0}")]
    InvalidSetup(coincidence::ValidationReport),

    /// A reciprocal basis failed its biorthogonality residual check.
    #[error("ill-conditioned response system: row {row} residual {residual:.3e} exceeds {tolerance:.1e}")]
    Conditioning {
        row: usize,
        residual: f64,
        tolerance: f64,
    },

    /// The requested operation only exists for certain detector counts.
    #[error("unsupported detector count {0} for this operation")]
    UnsupportedDimension(usize),

    /// A documented mathematical precondition does not hold for the inputs.
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    /// The photon source cannot supply what the operation needs.
    #[error("unsupported source: {0}")]
    UnsupportedSource(String),

    /// A diagnostic quantity is undefined for these inputs.
    #[error("diagnostic unavailable: {0}")]
    DiagnosticUnavailable(String),

    /// Channel observations are degenerate (e.g. zero total detection rate).
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    /// A sampled photon count exceeded the safety cap.
    #[error("photon-count draw exceeded the cap of {cap}")]
    PhotonCountOverflow { cap: usize },

    /// Internal consistency check failed (results disagree with inputs).
    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    /// A file had the right syntax but the wrong content.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code class: 2 for I/O and parse failures, 1 for
    /// validation and precondition failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Io(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
