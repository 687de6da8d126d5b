//! Sparse Fourier calculus on tori and a modified-frequency linearization engine.
//!
//! The crate works with trigonometric polynomials `u(x) = Σ_k û(k) e^{i k·x}` whose
//! mode indices live on a finite window of coordinate labels. On top of the field
//! algebra (products, directional derivatives, compositions with near-identity
//! shifts, Neumann inversion, pullbacks) it builds:
//!
//! * weighted majorant norms and approximation-function machinery ([`norms`]),
//! * small-divisor scans, Diophantine verification and lattice censuses ([`nonres`]),
//! * one quadratic linearization step and the full iteration that conjugates
//!   `ω + P` to a modified constant field `ω − ω̃` ([`step`], [`iterate`]),
//! * ready-made truncation/width/weight schedules and their admissibility
//!   diagnostics ([`schemes`]),
//! * deterministic JSON/CSV serialization with manifest digests ([`io`]),
//! * seeded random instance generators and an inequality test harness
//!   ([`sample`], [`lemmas`]).
//!
//! Everything is deterministic: sparse data lives in ordered maps, random suites
//! take explicit seeds, and parallel lattice scans (capped by the `KAM_THREADS`
//! environment variable) merge stripe results in a fixed order.

// Parameter guards are written `!(x > 0.0)` on purpose: unlike `x <= 0.0`
// they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod field;
pub mod io;
pub mod iterate;
pub mod lemmas;
pub mod nonres;
pub mod norms;
pub mod sample;
pub mod schemes;
pub mod step;
pub mod window;

pub use field::{Field, MatrixField};
pub use norms::{ApproxFn, IndexNorm, NormKind, Weight};
pub use window::{Frequency, Mode, Window};

/// Stored coefficient vectors whose largest component modulus falls below this
/// are removed after every algebra operation.
pub const DROP_THRESHOLD: f64 = 1e-300;

/// Hard cap on the number of stored modes any single operation may produce.
pub const MODE_BUDGET: usize = 1_000_000;

/// Composition series are refused when the shift argument bound `x_k` exceeds this.
pub const SERIES_RADIUS: f64 = 20.0;

/// Lattice scans refuse windows whose analytic node-count estimate exceeds this.
pub const ENUM_BUDGET: f64 = 5e8;

/// Error type shared by the whole crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("window mismatch: {0}")]
    WindowMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("exact resonance at k = {k:?}: |k . omega| = {value:e}")]
    Resonance { k: Vec<i64>, value: f64 },
    #[error("resource budget exceeded: {0}")]
    Resource(String),
    #[error("series precondition failed: {0}")]
    NonInvertible(String),
    #[error("fixed point iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("smallness hypothesis violated: {0}")]
    Smallness(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Worker count for lattice scans: `KAM_THREADS` if set, available parallelism
/// otherwise, always at least 1.
pub fn worker_count() -> usize {
    let from_env = std::env::var("KAM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok());
    let n = from_env.unwrap_or_else(|| {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    });
    n.clamp(1, 64)
}
