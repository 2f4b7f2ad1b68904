use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmcError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {what} at coordinate {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("matrix violates the group constraints by {violation:e}")]
    NotInGroup { violation: f64 },

    #[error("basis expansion residual {residual:e} exceeds {tol:e}")]
    BasisExpansion { residual: f64, tol: f64 },

    #[error("invalid Lie group definition: {0}")]
    InvalidGroup(String),

    #[error("invariance failure at {sample}: violation {violation:e} exceeds {tol:e}")]
    InvarianceFailure { sample: String, violation: f64, tol: f64 },

    #[error(
        "algebra inner product is not invariant under the isotropy group of z_e \
         (violation {violation:e}); supply an Ad(G_z)-invariant inner product"
    )]
    NonInvariantInnerProduct { violation: f64 },

    #[error("structure check failed: {0}")]
    StructureFailure(String),

    #[error("solver did not converge after {iterations} iterations (best residual {best_residual:e})")]
    NonConvergence { iterations: usize, best_residual: f64 },

    #[error("not a relative equilibrium: residual {residual:e} exceeds {tol:e}")]
    NotRelativeEquilibrium { residual: f64, tol: f64 },

    #[error(
        "orbit tangent leaves the constraint space K (residual {residual:e}); \
         the momentum map or the isotropy algebra is inconsistent"
    )]
    OrbitNotInConstraintSpace { residual: f64 },

    #[error("point is outside the tubular neighbourhood: orbit distance {distance:e} > radius {radius:e}")]
    OutOfNeighborhood { distance: f64, radius: f64 },

    #[error("nearest-orbit-point search failed: gradient norm {gradient:e} at distance {distance:e}")]
    OrbitProjection { gradient: f64, distance: f64 },

    #[error("integration blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("implicit midpoint stage equation did not converge at t = {time}")]
    StepFailure { time: f64 },

    #[error("unknown {kind} {name:?}; available: {available}")]
    UnknownName {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, EmcError>;

pub(crate) fn ensure_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(EmcError::DimensionMismatch { expected, got })
    }
}

pub(crate) fn ensure_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(EmcError::NonFinite { what, index }),
        None => Ok(()),
    }
}
