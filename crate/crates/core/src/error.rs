//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid layer count: N = {0}, need N >= 2")]
    InvalidLayerCount(usize),
    #[error("mesh too coarse: NH = {0}, need NH >= 2")]
    MeshTooCoarse(usize),
    #[error("invalid domain height: L = {0}, need L > 0")]
    InvalidHeight(f64),
    #[error("invalid horizontal dimension: d = {0}, need 1 or 2")]
    InvalidDimension(usize),
}

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("unsupported layer count for the Neumann layout: N = {0}, need N >= 3")]
    UnsupportedLayerCount(usize),
    #[error(
        "surface condition violated: min eta = {min_eta:.6e}, max |grad eta| = {max_slope:.6e} \
         (need eta > 0 and |grad eta| < 1 at every quadrature point)"
    )]
    EtaConditionViolated { min_eta: f64, max_slope: f64 },
    #[error("surface flux data does not vanish on the lateral boundary: max |g| = {0:.3e}")]
    GNotZeroOnBoundary(f64),
    #[error("grid and moment table use different vertical layouts")]
    LayoutMismatch,
}

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("wrong space tag: expected {expected}, got {got}")]
    WrongSpaceTag { expected: &'static str, got: &'static str },
    #[error("field shape {layers}x{ndof} does not match the space {want_layers}x{want_ndof}")]
    ShapeMismatch { layers: usize, ndof: usize, want_layers: usize, want_ndof: usize },
    #[error("test-function layout does not match the requested form")]
    LayoutMismatch,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("singular diagonal block in layer {layer} (pivot {pivot:.3e})")]
    SingularDiagonalBlock { layer: usize, pivot: f64 },
    #[error("system too large for a direct solve: {reason}")]
    TooLarge { reason: String },
    #[error("singular matrix in direct solve (pivot {0:.3e})")]
    SingularMatrix(f64),
}
