use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0}; only n = 2 and n = 3 are implemented")]
    UnsupportedDimension(usize),
    #[error("spinor is zero")]
    ZeroSpinor,
    #[error("unsupported Bessel order {0}")]
    UnsupportedOrder(String),
    #[error("argument must be positive and finite, got {0}")]
    NonPositiveArgument(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("grade (k={k}, m={m}, i={i}) is outside the admissible range")]
    InadmissibleGrade { k: String, m: usize, i: u8 },
    #[error("point is the pole of the kernel")]
    AtPole,
    #[error("quadrature did not converge: last two values {previous:e}, {last:e}")]
    QuadratureDiverged { previous: f64, last: f64 },
    #[error("lambda = {lambda} lies within {distance:e} of the spectrum")]
    NearSpectrum { lambda: f64, distance: f64 },
    #[error("point lies outside the fundamental domain")]
    OutsideDomain,
    #[error("geometry mismatch between fields")]
    GeometryMismatch,
    #[error("conformal factor 1 + t f = {value} is not positive")]
    Positivity { value: f64 },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("eigensolver did not converge; worst residual {worst_residual:e}")]
    NoConvergence { worst_residual: f64 },
    #[error("branch tracking is ambiguous: overlap {overlap}")]
    BranchTracking { overlap: f64 },
    #[error("field format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
