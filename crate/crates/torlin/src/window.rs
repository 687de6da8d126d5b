//! Coordinate windows, mode indices and frequency vectors.
//!
//! A window is a finite list of distinct integer coordinate labels `j`; a mode
//! index is a vector of integers aligned with the window. The bracket size
//! `⟨j⟩ := max(1, |j|)` enters every label-weighted norm.

use std::sync::Arc;

use crate::{Error, Result};

/// A mode index aligned with some [`Window`]; plain boxed integers so that the
/// natural lexicographic `Ord` can key ordered maps.
pub type Mode = Box<[i64]>;

/// Finite list of distinct coordinate labels with their bracket sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    labels: Vec<i64>,
    sizes: Vec<f64>,
}

impl Window {
    pub fn new(labels: Vec<i64>) -> Result<Arc<Self>> {
        if labels.is_empty() {
            return Err(Error::Parameter("window needs at least one label".into()));
        }
        let mut seen = labels.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != labels.len() {
            return Err(Error::Parameter(format!("window labels must be distinct: {labels:?}")));
        }
        let sizes = labels.iter().map(|&j| (j.abs().max(1)) as f64).collect();
        Ok(Arc::new(Window { labels, sizes }))
    }

    /// Number of coordinates (the torus dimension the window spans).
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    /// Bracket sizes `⟨j⟩ = max(1, |j|)` in label order.
    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn zero_mode(&self) -> Mode {
        vec![0i64; self.len()].into_boxed_slice()
    }
}

/// Check that two windows agree (by content, not pointer).
pub fn same_window(a: &Window, b: &Window) -> Result<()> {
    if a.labels == b.labels {
        Ok(())
    } else {
        Err(Error::WindowMismatch(format!("{:?} vs {:?}", a.labels, b.labels)))
    }
}

pub fn mode_is_zero(k: &[i64]) -> bool {
    k.iter().all(|&v| v == 0)
}

pub fn mode_l1(k: &[i64]) -> f64 {
    k.iter().map(|&v| v.unsigned_abs() as f64).sum()
}

pub fn mode_sup(k: &[i64]) -> f64 {
    k.iter().map(|&v| v.unsigned_abs()).max().unwrap_or(0) as f64
}

/// Euclidean pairing `k · v`, accumulated in window order.
pub fn mode_dot(k: &[i64], v: &[f64]) -> f64 {
    debug_assert_eq!(k.len(), v.len());
    let mut acc = 0.0;
    for (kj, vj) in k.iter().zip(v) {
        acc += *kj as f64 * vj;
    }
    acc
}

pub fn mode_neg(k: &[i64]) -> Mode {
    k.iter().map(|&v| -v).collect()
}

pub fn mode_add(a: &[i64], b: &[i64]) -> Mode {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Graded-lexicographic comparison used for deterministic tie-breaking in
/// lattice scans: smaller norm value first, then lexicographic on entries.
pub fn graded_lex_less(av: f64, ak: &[i64], bv: f64, bk: &[i64]) -> bool {
    if av != bv {
        return av < bv;
    }
    ak < bk
}

/// A frequency vector bound to a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Frequency {
    window: Arc<Window>,
    values: Vec<f64>,
}

impl Frequency {
    pub fn new(window: Arc<Window>, values: Vec<f64>) -> Result<Self> {
        if values.len() != window.len() {
            return Err(Error::ShapeMismatch(format!(
                "frequency has {} entries for a {}-coordinate window",
                values.len(),
                window.len()
            )));
        }
        if !values.iter().any(|v| *v != 0.0) {
            return Err(Error::Parameter("frequency must have at least one nonzero entry".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("frequency entries must be finite".into()));
        }
        Ok(Frequency { window, values })
    }

    pub fn window(&self) -> &Arc<Window> {
        &self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, k: &[i64]) -> f64 {
        mode_dot(k, &self.values)
    }
}
