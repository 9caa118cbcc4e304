//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("{what} is not symmetric: max relative asymmetry {asym:.3e} exceeds {tol:.1e}")]
    NotSymmetric { what: String, asym: f64, tol: f64 },

    #[error("{what} is not positive definite: smallest eigenvalue {min_eig:.6e}")]
    NotPositiveDefinite { what: String, min_eig: f64 },

    #[error("(0,4) tensor violates curvature symmetries: max violation {violation:.3e}")]
    TensorSymmetry { violation: f64 },

    #[error("point {point:?} too close to the chart edge for the difference stencil (axis {axis})")]
    StencilClearance { point: Vec<f64>, axis: usize },

    #[error("metric is not in boundary-normal form: |g_{{in}} - delta_{{in}}| = {violation:.3e} at {point:?}")]
    FermiViolation { point: Vec<f64>, violation: f64 },

    #[error("boundary metrics disagree on the interface: max |g0 - g1| = {violation:.3e}")]
    BoundaryMismatch { violation: f64 },

    #[error("declared second-fundamental-form spectrum {declared:?} does not match recomputation {computed:?}")]
    SpectrumMismatch { declared: Vec<f64>, computed: Vec<f64> },

    #[error("delta = {delta} is infeasible: profile needs area {need:.6e} but the well can hold at most {capacity:.6e} under the slope and depth bounds")]
    InfeasibleDelta { delta: f64, need: f64, capacity: f64 },

    #[error("delta = {delta} out of range (0, 0.5]")]
    DeltaOutOfRange { delta: f64 },

    #[error("smoothing radius h = {h} too large: must be below min(delta/4, width/4) = {limit}")]
    MollifierRadius { h: f64, limit: f64 },

    #[error("smoothed metric lost positive definiteness at {point:?} (min eigenvalue {min_eig:.3e})")]
    SpdLoss { point: Vec<f64>, min_eig: f64 },

    #[error("functional {functional} requires {requirement}, got n = {n}")]
    DimensionPrerequisite {
        functional: String,
        requirement: String,
        n: usize,
    },

    #[error("hypothesis violated for functional {functional}: {detail} (offending value {value:.6e})")]
    Hypothesis {
        functional: String,
        detail: String,
        value: f64,
    },

    #[error("mean-curvature perturbation slope must be negative, got {slope}")]
    SlopeSign { slope: f64 },

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("no kappa declared for functional {0}; pass an explicit bound")]
    MissingKappa(String),

    #[error("normal geodesic flow degenerated (Jacobian determinant {det:.3e} at depth {depth}); usable width shrunk to {width}")]
    FocalPoint { det: f64, depth: f64, width: f64 },

    #[error("{0}")]
    Invalid(String),
}
