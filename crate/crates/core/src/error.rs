//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("even point count required, got {0}")]
    OddPointCount(usize),

    #[error("grid parameter out of range: {0}")]
    InvalidGrid(String),

    #[error("non-finite sample at node (x = {x}, xi = {xi})")]
    NonFiniteSample { x: f64, xi: f64 },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("star product order {0} exceeds supported depth 6")]
    StarOrderTooLarge(usize),

    #[error("gamma must be >= 0, got {0}")]
    NegativeGamma(f64),

    #[error("hamiltonian symbol is not real: hermiticity defect {0:.3e}")]
    NonRealHamiltonian(f64),

    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("final time must be at least one step, got T = {t}, dt = {dt}")]
    BadTimeSpan { t: f64, dt: f64 },

    #[error("evolution unstable at t = {t:.6}: norm {norm:.3e} exceeds envelope {limit:.3e}")]
    Unstable { t: f64, norm: f64, limit: f64 },

    #[error("coherent state center ({x}, {xi}) too close to the box boundary (tail {tail:.3e} above floor)")]
    CenterNearBoundary { x: f64, xi: f64, tail: f64 },

    #[error("isometry cross-check failed: matrix-side {matrix:.12e} vs symbol-side {symbol:.12e}")]
    IsometryCrossCheck { matrix: f64, symbol: f64 },

    #[error("unknown preset '{name}'; available: {available}")]
    UnknownPreset { name: String, available: String },

    #[error("grid box [{have:.3}] does not cover the preset's recommended domain [{need:.3}]")]
    UndersizedBox { have: f64, need: f64 },

    #[error("preset certification mismatch for {constant}: certified {certified:.12e}, recomputed {recomputed:.12e}")]
    CertificationMismatch {
        constant: &'static str,
        certified: f64,
        recomputed: f64,
    },

    #[error("sweep needs at least 3 points per axis, got {0}")]
    SweepTooSmall(usize),

    #[error("envelope undefined: {0}")]
    EnvelopeUndefined(String),

    #[error("flow trajectory left the box at t = {0:.4}")]
    FlowLeftBox(f64),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
