use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid surface: {0}")]
    InvalidSpec(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("profile integration stopped at r = {r} (c2 = {c2}) before reaching c2 = {target}")]
    EventNotReached { r: f64, c2: f64, target: f64 },
    #[error("profile invariant `{invariant}` drifted by {drift:e} (limit {limit:e})")]
    ToleranceFailure {
        invariant: &'static str,
        drift: f64,
        limit: f64,
    },
    #[error("quadrature error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    QuadratureFailure { estimate: f64, tolerance: f64 },
    #[error("epsilon radicand {value:e} at r = {r} is negative")]
    NegativeRadicand { r: f64, value: f64 },
    #[error("denominator {value:e} at r = {r} is too close to zero")]
    DivisionNearZero { r: f64, value: f64 },
    #[error("r = {r} lies outside [-{r_b}, {r_b}]")]
    OutOfDomain { r: f64, r_b: f64 },
    #[error("eigensolver did not converge: {0}")]
    ConvergenceFailure(String),
    #[error("h(±r_b) = {value:e} violates the boundary condition")]
    BoundaryViolation { value: f64 },
    #[error("field is not tangent to the boundary: W¹ = {value:e} at r = {r}, θ = {theta}")]
    TangencyViolation { r: f64, theta: f64, value: f64 },
    #[error("field is not divergence-free: div = {value:e} at r = {r}, θ = {theta}")]
    NotDivergenceFree { r: f64, theta: f64, value: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
