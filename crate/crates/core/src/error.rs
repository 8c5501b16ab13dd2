use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the numerical core can report.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not fit the operation.
    Dimension(String),
    /// An argument lies outside the operation's domain.
    Domain(String),
    /// A schedule produced an unusable coefficient (negative radicand, zero noise level).
    Schedule(String),
    /// A node id was not recorded on the tape.
    Lookup(usize),
    /// A state went non-finite while integrating forward or backward in time.
    Integration { step: usize, detail: String },
    /// Training produced a non-finite loss.
    Training { epoch: usize, detail: String },
    /// The verifier cannot provide a signed margin for smoothing.
    Capability(String),
    /// Constrained step removed all probability mass.
    Infeasible,
    /// KL divergence is infinite because of a support mismatch.
    InfiniteDivergence,
    /// Iterative linear algebra did not converge.
    Numerical { sweeps: usize, detail: String },
    /// Geometry of a synthetic dataset makes rejection sampling hopeless.
    Geometry(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(s) => write!(f, "dimension error: {s}"),
            Error::Domain(s) => write!(f, "domain error: {s}"),
            Error::Schedule(s) => write!(f, "schedule error: {s}"),
            Error::Lookup(id) => write!(f, "node {id} is not on the tape"),
            Error::Integration { step, detail } => {
                write!(f, "integration failed at step {step}: {detail}")
            }
            Error::Training { epoch, detail } => {
                write!(f, "training diverged at epoch {epoch}: {detail}")
            }
            Error::Capability(s) => write!(f, "unsupported: {s}"),
            Error::Infeasible => write!(f, "constraint mask removes all probability mass"),
            Error::InfiniteDivergence => write!(f, "KL divergence is +inf (support mismatch)"),
            Error::Numerical { sweeps, detail } => {
                write!(f, "no convergence after {sweeps} sweeps: {detail}")
            }
            Error::Geometry(s) => write!(f, "geometry error: {s}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
