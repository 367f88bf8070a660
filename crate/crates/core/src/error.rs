use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    DimensionMismatch {
        expected: usize,
        found: usize,
    },
    /// Input violates a structural invariant (negative weight, non-finite entry, ...).
    InvalidInput(&'static str),
    /// `mu(x) > 0` where `nu(x) = 0`.
    AbsoluteContinuityViolation {
        index: usize,
    },
    /// Base point of a Fisher-Rao inner product touches the boundary.
    SingularBase {
        index: usize,
    },
    InfeasibleConstraints,
    /// The feasible set has no strictly positive point.
    NoInteriorPoint,
    NonConvergence {
        iterations: usize,
        residual: f64,
        time_index: Option<usize>,
    },
    SizeLimitExceeded {
        required: u128,
        budget: u128,
    },
    /// The optimal face is the whole feasible region.
    TrivialProgram,
    BoundNotApplicable(&'static str),
    SingularSystem,
    ExplorationViolation {
        state: usize,
    },
    EscortSingularity {
        index: usize,
    },
    NumericalBlowup {
        iteration: usize,
    },
    NotFactorizable {
        residual: f64,
    },
    InvariantViolation(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::AbsoluteContinuityViolation { index } => {
                write!(f, "absolute continuity violated at index {index}")
            }
            Error::SingularBase { index } => {
                write!(f, "base measure vanishes at index {index}")
            }
            Error::InfeasibleConstraints => write!(f, "constraints are infeasible"),
            Error::NoInteriorPoint => {
                write!(f, "feasible region contains no strictly positive point")
            }
            Error::NonConvergence {
                iterations,
                residual,
                time_index,
            } => {
                write!(
                    f,
                    "dual Newton iteration did not converge after {iterations} iterations (residual {residual:e})"
                )?;
                if let Some(i) = time_index {
                    write!(f, " at time index {i}")?;
                }
                Ok(())
            }
            Error::SizeLimitExceeded { required, budget } => {
                write!(f, "enumeration needs {required} candidates, budget is {budget}")
            }
            Error::TrivialProgram => write!(f, "every feasible point is optimal"),
            Error::BoundNotApplicable(why) => write!(f, "bound not applicable: {why}"),
            Error::SingularSystem => write!(f, "linear system is singular"),
            Error::ExplorationViolation { state } => {
                write!(f, "state {state} has zero discounted visitation")
            }
            Error::EscortSingularity { index } => {
                write!(f, "escort parameter {index} is too close to zero")
            }
            Error::NumericalBlowup { iteration } => {
                write!(f, "parameters diverged at iteration {iteration}")
            }
            Error::NotFactorizable { residual } => {
                write!(f, "cost is not factorizable (residual {residual:e})")
            }
            Error::InvariantViolation(what) => write!(f, "invariant violated: {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
