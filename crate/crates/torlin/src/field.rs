//! Sparse Fourier fields with vector coefficients and their algebra: products,
//! directional derivatives, Jacobians, composition with near-identity shifts,
//! Neumann inversion and pullbacks.
//!
//! Coefficients are stored in ordered maps keyed by the mode index, so every
//! operation visits modes in the same order on every run. Coefficient vectors
//! whose largest component modulus drops below [`crate::DROP_THRESHOLD`] are
//! removed after each operation.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::norms::{matrix_sigma_norm, IndexNorm};
use crate::window::{mode_add, mode_is_zero, mode_neg, same_window, Mode, Window};
use crate::{Error, Result, DROP_THRESHOLD, MODE_BUDGET, SERIES_RADIUS};

/// Component-sup magnitude of a coefficient vector.
pub fn coeff_sup(c: &[C64]) -> f64 {
    c.iter().fold(0.0f64, |m, v| m.max(v.norm()))
}

/// A finitely supported Fourier series `u(x) = Σ_k û(k) e^{i k·x}` with
/// `components` many coefficient entries per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    window: Arc<Window>,
    components: usize,
    real: bool,
    coeffs: BTreeMap<Mode, Box<[C64]>>,
}

impl Field {
    pub fn zeros(window: Arc<Window>, components: usize, real: bool) -> Self {
        assert!(components >= 1, "a field needs at least one component");
        Field { window, components, real, coeffs: BTreeMap::new() }
    }

    /// Constant field with the given coefficient vector at mode zero.
    pub fn constant(window: Arc<Window>, value: Vec<C64>, real: bool) -> Self {
        let mut f = Field::zeros(window.clone(), value.len(), real);
        f.set(window.zero_mode(), value);
        f
    }

    pub fn from_modes(
        window: Arc<Window>,
        components: usize,
        real: bool,
        modes: Vec<(Vec<i64>, Vec<C64>)>,
    ) -> Result<Self> {
        let mut f = Field::zeros(window.clone(), components, real);
        for (k, c) in modes {
            if k.len() != window.len() {
                return Err(Error::ShapeMismatch(format!(
                    "mode {k:?} does not fit a {}-coordinate window",
                    window.len()
                )));
            }
            if c.len() != components {
                return Err(Error::ShapeMismatch(format!(
                    "coefficient with {} entries in a {components}-component field",
                    c.len()
                )));
            }
            f.set(k.into_boxed_slice(), c);
        }
        Ok(f)
    }

    pub fn window(&self) -> &Arc<Window> {
        &self.window
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Whether the field is declared real-valued (coefficients conjugate-symmetric).
    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn set_real(&mut self, real: bool) {
        self.real = real;
    }

    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Mode, &[C64])> {
        self.coeffs.iter().map(|(k, c)| (k, c.as_ref()))
    }

    pub fn get(&self, k: &[i64]) -> Option<&[C64]> {
        self.coeffs.get(k).map(|c| c.as_ref())
    }

    pub fn constant_coeff(&self) -> Option<&[C64]> {
        self.get(&self.window.zero_mode())
    }

    /// Insert or replace one coefficient vector, applying the drop rule.
    pub fn set(&mut self, k: Mode, c: Vec<C64>) {
        debug_assert_eq!(k.len(), self.window.len());
        debug_assert_eq!(c.len(), self.components);
        if coeff_sup(&c) < DROP_THRESHOLD {
            self.coeffs.remove(&k);
        } else {
            self.coeffs.insert(k, c.into_boxed_slice());
        }
    }

    fn entry_mut(&mut self, k: Mode) -> &mut [C64] {
        let comps = self.components;
        self.coeffs.entry(k).or_insert_with(|| vec![C64::ZERO; comps].into_boxed_slice())
    }

    /// `self[target] += scale * coeff` componentwise.
    fn accumulate(&mut self, target: Mode, coeff: &[C64], scale: C64) {
        let slot = self.entry_mut(target);
        for (s, c) in slot.iter_mut().zip(coeff) {
            *s += scale * c;
        }
    }

    pub fn drop_small(&mut self) {
        self.coeffs.retain(|_, c| coeff_sup(c) >= DROP_THRESHOLD);
    }

    /// Drop a set of modes whose total σ-weighted mass stays within `budget`.
    ///
    /// Masses are `coeff_sup · e^{σ‖k‖}`, removed smallest first; entries with
    /// non-finite mass are kept. A non-positive or non-finite budget is a
    /// no-op, so callers can pass a share of an operation tolerance directly.
    /// Kept coefficients are untouched, so the trimmed field differs from the
    /// original by at most `budget` in the σ-norm.
    pub fn trim_mass(&mut self, sigma: f64, norm: &IndexNorm, budget: f64) -> Result<()> {
        same_window(&self.window, norm.window())?;
        if !budget.is_finite() || !(budget > 0.0) || self.coeffs.is_empty() {
            return Ok(());
        }
        let mut masses: Vec<(f64, Mode)> = self
            .coeffs
            .iter()
            .map(|(k, c)| (coeff_sup(c) * (sigma * norm.value(k)).exp(), k.clone()))
            .collect();
        masses.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut spent = 0.0f64;
        for (mass, k) in masses {
            if !mass.is_finite() || spent + mass > budget {
                break;
            }
            spent += mass;
            self.coeffs.remove(&k);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: C64) {
        for c in self.coeffs.values_mut() {
            for v in c.iter_mut() {
                *v *= factor;
            }
        }
        if factor.im != 0.0 {
            self.real = false;
        }
        self.drop_small();
    }

    pub fn add_scaled(&mut self, other: &Field, factor: C64) -> Result<()> {
        same_window(&self.window, &other.window)?;
        if self.components != other.components {
            return Err(Error::ShapeMismatch(format!(
                "{} vs {} components",
                self.components, other.components
            )));
        }
        for (k, c) in other.iter() {
            self.accumulate(k.clone(), c, factor);
        }
        self.real = self.real && (other.real && factor.im == 0.0);
        self.drop_small();
        Ok(())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        let mut out = self.clone();
        out.add_scaled(other, C64::ONE)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        let mut out = self.clone();
        out.add_scaled(other, -C64::ONE)?;
        Ok(out)
    }

    /// Remove and return the constant coefficient (zeros if absent).
    pub fn take_constant(&mut self) -> Vec<C64> {
        match self.coeffs.remove(&self.window.zero_mode()) {
            Some(c) => c.into_vec(),
            None => vec![C64::ZERO; self.components],
        }
    }

    /// Evaluate at a point of the torus.
    pub fn eval_at(&self, x: &[f64]) -> Vec<C64> {
        debug_assert_eq!(x.len(), self.window.len());
        let mut out = vec![C64::ZERO; self.components];
        for (k, c) in self.iter() {
            let phase = crate::window::mode_dot(k, x);
            let e = C64::new(0.0, phase).exp();
            for (o, v) in out.iter_mut().zip(c) {
                *o += e * v;
            }
        }
        out
    }

    /// Largest violation of the conjugate-symmetry implied by the real flag.
    pub fn realness_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (k, c) in self.iter() {
            let neg = mode_neg(k);
            match self.get(&neg) {
                None => worst = worst.max(coeff_sup(c)),
                Some(d) => {
                    for (a, b) in c.iter().zip(d) {
                        worst = worst.max((a.conj() - b).norm());
                    }
                }
            }
        }
        worst
    }
}

/// Pointwise product of two scalar fields by full coefficient convolution.
pub fn product(f: &Field, g: &Field) -> Result<Field> {
    same_window(f.window(), g.window())?;
    if f.components() != 1 || g.components() != 1 {
        return Err(Error::ShapeMismatch("product expects scalar fields".into()));
    }
    let mut out = Field::zeros(f.window.clone(), 1, f.real && g.real);
    for (k, a) in f.iter() {
        for (m, b) in g.iter() {
            out.accumulate(mode_add(k, m), b, a[0]);
            if out.coeffs.len() > MODE_BUDGET {
                return Err(Error::Resource("product support exceeds the mode budget".into()));
            }
        }
    }
    out.drop_small();
    Ok(out)
}

/// Directional derivative `Df · φ`, coefficientwise
/// `(Df·φ)^(k+m) += i (k·φ̂(m)) f̂(k)`. `f` may have any number of components;
/// `φ` must have one per window coordinate.
pub fn derivative_dot(f: &Field, phi: &Field) -> Result<Field> {
    same_window(f.window(), phi.window())?;
    let d = f.window.len();
    if phi.components() != d {
        return Err(Error::ShapeMismatch(format!(
            "direction field has {} components on a {d}-coordinate window",
            phi.components()
        )));
    }
    let mut out = Field::zeros(f.window.clone(), f.components, f.real && phi.real);
    for (k, fk) in f.iter() {
        if mode_is_zero(k) {
            continue;
        }
        for (m, pm) in phi.iter() {
            let mut pair = C64::ZERO;
            for j in 0..d {
                if k[j] != 0 {
                    pair += C64::new(k[j] as f64, 0.0) * pm[j];
                }
            }
            if pair == C64::ZERO {
                continue;
            }
            out.accumulate(mode_add(k, m), fk, C64::I * pair);
            if out.coeffs.len() > MODE_BUDGET {
                return Err(Error::Resource("derivative support exceeds the mode budget".into()));
            }
        }
    }
    out.drop_small();
    Ok(out)
}

/// Split into the part with `|k| ≤ cap` and the residual with `|k| > cap`.
/// The partition is exact: coefficients are moved, never altered.
pub fn truncate_residual(f: &Field, cap: f64, norm: &IndexNorm) -> Result<(Field, Field)> {
    same_window(f.window(), norm.window())?;
    let mut head = Field::zeros(f.window.clone(), f.components, f.real);
    let mut tail = Field::zeros(f.window.clone(), f.components, f.real);
    for (k, c) in f.iter() {
        if norm.value(k) <= cap {
            head.coeffs.insert(k.clone(), c.into());
        } else {
            tail.coeffs.insert(k.clone(), c.into());
        }
    }
    Ok((head, tail))
}

/// Smallest series order `J ≥ 1` with `x^J / J! ≤ tol`.
fn series_order(x: f64, tol: f64) -> Result<usize> {
    let mut term = x;
    let mut j = 1usize;
    while term > tol {
        j += 1;
        term *= x / j as f64;
        if j > 400 {
            return Err(Error::Domain(format!(
                "composition series does not reach tolerance {tol:e} (argument bound {x})"
            )));
        }
    }
    Ok(j)
}

fn conv_scalar(
    a: &BTreeMap<Mode, C64>,
    b: &BTreeMap<Mode, C64>,
    factor: C64,
) -> Result<BTreeMap<Mode, C64>> {
    let mut out: BTreeMap<Mode, C64> = BTreeMap::new();
    for (k, x) in a {
        for (m, y) in b {
            *out.entry(mode_add(k, m)).or_insert(C64::ZERO) += factor * x * y;
            if out.len() > MODE_BUDGET {
                return Err(Error::Resource("series support exceeds the mode budget".into()));
            }
        }
    }
    Ok(out)
}

/// Composition `f ∘ (id + φ̂)` by the per-mode exponential series
/// `f̂(k) e^{i k·x} Σ_{j=0}^{J_k} (i k·φ̂(x))^j / j!`.
///
/// The order `J_k` is the smallest with `x_k^{J_k}/J_k! ≤ tol` where
/// `x_k = Σ_j |k_j| ‖φ̂_j‖_σ`, so the dropped tail of each mode has σ-weighted
/// mass at most `tol · |f̂(k)| e^{σ|k|} / (1 - x_k/(J_k+2))`. Within the same
/// per-mode budget, series terms of negligible σ-weighted mass are pruned
/// between orders, and the assembled output is trimmed by at most
/// `tol/2 · ‖f‖_σ`; the total error stays `O(tol · ‖f‖_σ)` while the support
/// never carries modes below the tolerance floor. A zero shift term
/// short-circuits to an exact copy of the coefficient. Arguments with
/// `x_k >` [`SERIES_RADIUS`] are refused.
pub fn compose_shift(f: &Field, phi: &Field, sigma: f64, norm: &IndexNorm, tol: f64) -> Result<Field> {
    same_window(f.window(), phi.window())?;
    same_window(f.window(), norm.window())?;
    let d = f.window.len();
    if phi.components() != d {
        return Err(Error::ShapeMismatch(format!(
            "shift field has {} components on a {d}-coordinate window",
            phi.components()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter("composition tolerance must be positive".into()));
    }
    let mut comp_norms = vec![0.0f64; d];
    for (m, c) in phi.iter() {
        let w = (sigma * norm.value(m)).exp();
        for j in 0..d {
            comp_norms[j] += c[j].norm() * w;
        }
    }

    let mut out = Field::zeros(f.window.clone(), f.components, f.real && phi.real);
    let mut f_mass = 0.0f64;
    for (k, fk) in f.iter() {
        let mut x = 0.0;
        for (kj, aj) in k.iter().zip(&comp_norms) {
            x += kj.unsigned_abs() as f64 * aj;
        }
        if x > SERIES_RADIUS {
            return Err(Error::Domain(format!(
                "composition series argument {x:.3} exceeds the radius {SERIES_RADIUS}"
            )));
        }
        let fk_mass = coeff_sup(fk) * (sigma * norm.value(k)).exp();
        f_mass += fk_mass;

        let mut shift: BTreeMap<Mode, C64> = BTreeMap::new();
        if x > 0.0 {
            for (m, pm) in phi.iter() {
                let mut v = C64::ZERO;
                for j in 0..d {
                    if k[j] != 0 {
                        v += C64::new(k[j] as f64, 0.0) * pm[j];
                    }
                }
                if v != C64::ZERO {
                    shift.insert(m.clone(), v);
                }
            }
        }

        if shift.is_empty() {
            out.accumulate(k.clone(), fk, C64::ONE);
            continue;
        }
        let order = series_order(x, tol)?;
        // Entries pruned before order j spawn descendants of σ-mass at most
        // e^x times their own, so this budget keeps the per-mode pruning
        // error within tol/2 · |f̂(k)| e^{σ|k|} across all orders.
        let prune_budget = 0.5 * tol * fk_mass * (-x).exp() / (order as f64 + 1.0);
        let mut cur: BTreeMap<Mode, C64> = BTreeMap::new();
        cur.insert(f.window.zero_mode(), C64::ONE);
        for j in 0..=order {
            for (m, c) in &cur {
                out.accumulate(mode_add(k, m), fk, *c);
            }
            if out.coeffs.len() > MODE_BUDGET {
                return Err(Error::Resource("composition support exceeds the mode budget".into()));
            }
            if j < order {
                prune_scalar(&mut cur, sigma, norm, prune_budget);
                cur = conv_scalar(&cur, &shift, C64::I / (j as f64 + 1.0))?;
            }
        }
    }
    out.drop_small();
    out.trim_mass(sigma, norm, 0.5 * tol * f_mass)?;
    Ok(out)
}

/// Drop scalar-map entries whose total σ-weighted mass stays within `budget`,
/// smallest first; non-finite budgets and masses are left untouched.
fn prune_scalar(map: &mut BTreeMap<Mode, C64>, sigma: f64, norm: &IndexNorm, budget: f64) {
    if !budget.is_finite() || !(budget > 0.0) || map.is_empty() {
        return;
    }
    let mut masses: Vec<(f64, Mode)> = map
        .iter()
        .map(|(m, c)| (c.norm() * (sigma * norm.value(m)).exp(), m.clone()))
        .collect();
    masses.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut spent = 0.0f64;
    for (mass, m) in masses {
        if !mass.is_finite() || spent + mass > budget {
            break;
        }
        spent += mass;
        map.remove(&m);
    }
}

/// A matrix-valued Fourier series; entries stored row-major per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    window: Arc<Window>,
    rows: usize,
    cols: usize,
    real: bool,
    coeffs: BTreeMap<Mode, Box<[C64]>>,
}

impl MatrixField {
    pub fn zeros(window: Arc<Window>, rows: usize, cols: usize, real: bool) -> Self {
        assert!(rows >= 1 && cols >= 1);
        MatrixField { window, rows, cols, real, coeffs: BTreeMap::new() }
    }

    pub fn identity(window: Arc<Window>, d: usize) -> Self {
        let mut m = MatrixField::zeros(window.clone(), d, d, true);
        let mut eye = vec![C64::ZERO; d * d];
        for i in 0..d {
            eye[i * d + i] = C64::ONE;
        }
        m.coeffs.insert(window.zero_mode(), eye.into_boxed_slice());
        m
    }

    pub fn window(&self) -> &Arc<Window> {
        &self.window
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Mode, &[C64])> {
        self.coeffs.iter().map(|(k, c)| (k, c.as_ref()))
    }

    pub fn get(&self, k: &[i64]) -> Option<&[C64]> {
        self.coeffs.get(k).map(|c| c.as_ref())
    }

    pub fn set(&mut self, k: Mode, entries: Vec<C64>) {
        debug_assert_eq!(entries.len(), self.rows * self.cols);
        if coeff_sup(&entries) < DROP_THRESHOLD {
            self.coeffs.remove(&k);
        } else {
            self.coeffs.insert(k, entries.into_boxed_slice());
        }
    }

    pub fn drop_small(&mut self) {
        self.coeffs.retain(|_, c| coeff_sup(c) >= DROP_THRESHOLD);
    }

    /// Drop a set of modes whose total σ-weighted operator mass stays within
    /// `budget`; the mass of one mode is its maximal row sum times `e^{σ‖k‖}`,
    /// matching the matrix norm. Semantics follow [`Field::trim_mass`].
    pub fn trim_mass(&mut self, sigma: f64, norm: &IndexNorm, budget: f64) -> Result<()> {
        same_window(&self.window, norm.window())?;
        if !budget.is_finite() || !(budget > 0.0) || self.coeffs.is_empty() {
            return Ok(());
        }
        let cols = self.cols;
        let mut masses: Vec<(f64, Mode)> = self
            .coeffs
            .iter()
            .map(|(k, entries)| {
                let mut op = 0.0f64;
                for row in entries.chunks(cols) {
                    op = op.max(row.iter().map(|v| v.norm()).sum());
                }
                (op * (sigma * norm.value(k)).exp(), k.clone())
            })
            .collect();
        masses.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut spent = 0.0f64;
        for (mass, k) in masses {
            if !mass.is_finite() || spent + mass > budget {
                break;
            }
            spent += mass;
            self.coeffs.remove(&k);
        }
        Ok(())
    }

    pub fn add_scaled(&mut self, other: &MatrixField, factor: C64) -> Result<()> {
        same_window(&self.window, &other.window)?;
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch("matrix shapes differ".into()));
        }
        let n = self.rows * self.cols;
        for (k, c) in other.iter() {
            let slot = self
                .coeffs
                .entry(k.clone())
                .or_insert_with(|| vec![C64::ZERO; n].into_boxed_slice());
            for (s, v) in slot.iter_mut().zip(c) {
                *s += factor * v;
            }
        }
        self.real = self.real && (other.real && factor.im == 0.0);
        self.drop_small();
        Ok(())
    }

    pub fn sub(&self, other: &MatrixField) -> Result<MatrixField> {
        let mut out = self.clone();
        out.add_scaled(other, -C64::ONE)?;
        Ok(out)
    }

    pub fn add(&self, other: &MatrixField) -> Result<MatrixField> {
        let mut out = self.clone();
        out.add_scaled(other, C64::ONE)?;
        Ok(out)
    }

    /// Matrix product by coefficient convolution.
    pub fn mat_mul(&self, other: &MatrixField) -> Result<MatrixField> {
        same_window(&self.window, &other.window)?;
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch("matrix product shapes differ".into()));
        }
        let (r, inner, c) = (self.rows, self.cols, other.cols);
        let mut out = MatrixField::zeros(self.window.clone(), r, c, self.real && other.real);
        for (k, a) in self.iter() {
            for (m, b) in other.iter() {
                let slot = out
                    .coeffs
                    .entry(mode_add(k, m))
                    .or_insert_with(|| vec![C64::ZERO; r * c].into_boxed_slice());
                for i in 0..r {
                    for j in 0..c {
                        let mut acc = C64::ZERO;
                        for t in 0..inner {
                            acc += a[i * inner + t] * b[t * c + j];
                        }
                        slot[i * c + j] += acc;
                    }
                }
                if out.coeffs.len() > MODE_BUDGET {
                    return Err(Error::Resource("matrix product exceeds the mode budget".into()));
                }
            }
        }
        out.drop_small();
        Ok(out)
    }

    /// Apply to a vector field: `(M v)^(k+m) += M̂(k) v̂(m)`.
    pub fn mat_vec(&self, v: &Field) -> Result<Field> {
        same_window(&self.window, v.window())?;
        if self.cols != v.components() {
            return Err(Error::ShapeMismatch(format!(
                "matrix with {} columns applied to a {}-component field",
                self.cols,
                v.components()
            )));
        }
        let (r, c) = (self.rows, self.cols);
        let mut out = Field::zeros(self.window.clone(), r, self.real && v.is_real());
        for (k, a) in self.iter() {
            for (m, b) in v.iter() {
                let slot = out.entry_mut(mode_add(k, m));
                for i in 0..r {
                    let mut acc = C64::ZERO;
                    for t in 0..c {
                        acc += a[i * c + t] * b[t];
                    }
                    slot[i] += acc;
                }
                if out.coeffs.len() > MODE_BUDGET {
                    return Err(Error::Resource("matrix apply exceeds the mode budget".into()));
                }
            }
        }
        out.drop_small();
        Ok(out)
    }

    /// Apply to a constant complex vector.
    pub fn mat_vec_const(&self, v: &[C64]) -> Result<Field> {
        if self.cols != v.len() {
            return Err(Error::ShapeMismatch("constant vector length differs from matrix columns".into()));
        }
        let real = self.real && v.iter().all(|z| z.im == 0.0);
        let mut out = Field::zeros(self.window.clone(), self.rows, real);
        for (k, a) in self.iter() {
            let mut col = vec![C64::ZERO; self.rows];
            for i in 0..self.rows {
                for t in 0..self.cols {
                    col[i] += a[i * self.cols + t] * v[t];
                }
            }
            out.set(k.clone(), col);
        }
        Ok(out)
    }

    pub fn eval_at(&self, x: &[f64]) -> Vec<C64> {
        let mut out = vec![C64::ZERO; self.rows * self.cols];
        for (k, c) in self.iter() {
            let e = C64::new(0.0, crate::window::mode_dot(k, x)).exp();
            for (o, v) in out.iter_mut().zip(c) {
                *o += e * v;
            }
        }
        out
    }
}

/// Jacobian of a shift field: `M̂_ij(k) = i k_j φ̂_i(k)`.
pub fn jacobian(phi: &Field) -> MatrixField {
    let d = phi.window().len();
    let rows = phi.components();
    let mut out = MatrixField::zeros(phi.window().clone(), rows, d, phi.is_real());
    for (k, c) in phi.iter() {
        if mode_is_zero(k) {
            continue;
        }
        let mut entries = vec![C64::ZERO; rows * d];
        for i in 0..rows {
            for j in 0..d {
                entries[i * d + j] = C64::I * C64::new(k[j] as f64, 0.0) * c[i];
            }
        }
        out.set(k.clone(), entries);
    }
    out
}

/// Invert `M = I - E` by the Neumann series `Σ_j E^j`, stopping at the smallest
/// `J` with `μ^{J+1}/(1-μ) ≤ tol` for `μ = ‖E‖_σ`. Requires `μ < 1`. Each
/// power is trimmed of σ-mass at most `tol/4 · μ^j` so the series support does
/// not accumulate modes below the tolerance floor.
pub fn neumann_inverse(m: &MatrixField, sigma: f64, norm: &IndexNorm, tol: f64) -> Result<MatrixField> {
    if m.rows != m.cols {
        return Err(Error::ShapeMismatch("only square matrices can be inverted".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter("inversion tolerance must be positive".into()));
    }
    let d = m.rows;
    let eye = MatrixField::identity(m.window.clone(), d);
    let dev = eye.sub(m)?;
    let mu = matrix_sigma_norm(&dev, sigma, norm)?;
    if !(mu < 1.0) {
        return Err(Error::NonInvertible(format!(
            "deviation norm {mu:.6e} is not below 1 at width {sigma}"
        )));
    }
    let mut sum = eye;
    if mu == 0.0 {
        return Ok(sum);
    }
    let mut power = dev.clone();
    let mut head = mu;
    let mut j = 1usize;
    loop {
        sum.add_scaled(&power, C64::ONE)?;
        if head * mu / (1.0 - mu) <= tol {
            break;
        }
        j += 1;
        if j > 20_000 {
            return Err(Error::NonConvergence("neumann series needs more than 20000 terms".into()));
        }
        power = power.mat_mul(&dev)?;
        head *= mu;
        power.trim_mass(sigma, norm, 0.25 * tol * head)?;
    }
    sum.drop_small();
    Ok(sum)
}

/// Pullback of a vector field through `Ψ = id + ψ̂`:
/// `Ψ*v = (DΨ)^{-1} (v ∘ Ψ)`.
pub fn pullback(v: &Field, psi_hat: &Field, sigma: f64, norm: &IndexNorm, tol: f64) -> Result<Field> {
    let d = v.window().len();
    if psi_hat.components() != d || v.components() != d {
        return Err(Error::ShapeMismatch("pullback needs d-component fields".into()));
    }
    let dpsi = MatrixField::identity(v.window().clone(), d).add(&jacobian(psi_hat))?;
    let inv = neumann_inverse(&dpsi, sigma, norm, tol)?;
    let moved = compose_shift(v, psi_hat, sigma, norm, tol)?;
    inv.mat_vec(&moved)
}
