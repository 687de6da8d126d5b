//! Index norms on mode lattices, majorant norms on fields, approximation
//! functions and weights.
//!
//! Three index-norm kinds are supported: `eta` (`Σ_j ⟨j⟩^η |k_j|`), `w`
//! (`Σ_j w(⟨j⟩) |k_j|` for an approximation function w) and `sup`
//! (`max_j |k_j|`). A σ-norm of a field is `Σ_k |û(k)| e^{σ |k|}` with the
//! chosen index norm and the component-sup coefficient magnitude; a weighted
//! m-norm is `Σ_{k≠0} |û(k)| m(|k|)`.

use std::sync::Arc;

use serde::Serialize;

use crate::field::{coeff_sup, Field, MatrixField};
use crate::window::{mode_sup, same_window, Window};
use crate::{Error, Result};

/// Non-decreasing, unbounded, ≥ 1 on `[1, ∞)`; used as per-label norm costs and
/// as Diophantine loss profiles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ApproxFn {
    /// `t^power`
    Poly { power: f64 },
    /// `exp(t^exponent)`
    ExpPow { exponent: f64 },
    /// `exp(kappa (ln t)^a)`
    LogPow { kappa: f64, a: f64 },
    /// Piecewise-linear through `(xs[i], ys[i])`, extrapolated with the last slope.
    Table { xs: Vec<f64>, ys: Vec<f64> },
}

impl ApproxFn {
    pub fn poly(power: f64) -> Result<Self> {
        if !(power > 0.0) || !power.is_finite() {
            return Err(Error::Parameter(format!("poly power must be positive, got {power}")));
        }
        Ok(ApproxFn::Poly { power })
    }

    pub fn exppow(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0) || !exponent.is_finite() {
            return Err(Error::Parameter(format!("exppow exponent must be positive, got {exponent}")));
        }
        Ok(ApproxFn::ExpPow { exponent })
    }

    pub fn logpow(kappa: f64, a: f64) -> Result<Self> {
        if !(kappa > 0.0) || !(a > 0.0) || !kappa.is_finite() || !a.is_finite() {
            return Err(Error::Parameter(format!("logpow needs kappa > 0 and a > 0, got {kappa}, {a}")));
        }
        Ok(ApproxFn::LogPow { kappa, a })
    }

    pub fn table(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::Parameter("table needs at least two aligned points".into()));
        }
        if xs[0] < 1.0 || ys[0] < 1.0 {
            return Err(Error::Parameter("table must start at x >= 1 with value >= 1".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || ys.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("table points must be strictly increasing".into()));
        }
        Ok(ApproxFn::Table { xs, ys })
    }

    /// Evaluate at `x`; arguments below 1 are clamped to 1.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.max(1.0);
        match self {
            ApproxFn::Poly { power } => x.powf(*power),
            ApproxFn::ExpPow { exponent } => x.powf(*exponent).exp(),
            ApproxFn::LogPow { kappa, a } => (kappa * x.ln().powf(*a)).exp(),
            ApproxFn::Table { xs, ys } => table_interp(xs, ys, x),
        }
    }

    /// Inverse on `[1, ∞)`; values below the range start map to 1.
    pub fn inverse(&self, y: f64) -> f64 {
        if y <= self.eval(1.0) {
            return 1.0;
        }
        match self {
            ApproxFn::Poly { power } => y.powf(1.0 / power),
            ApproxFn::ExpPow { exponent } => y.ln().powf(1.0 / exponent),
            ApproxFn::LogPow { kappa, a } => ((y.ln() / kappa).powf(1.0 / a)).exp(),
            ApproxFn::Table { xs, ys } => table_interp(ys, xs, y),
        }
        .max(1.0)
    }

    /// Parse `poly:L`, `exppow:z`, `logpow:a`, `logpow:kappa:a`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| -> Result<f64> {
            t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{t}` in `{s}`")))
        };
        match parts.as_slice() {
            ["poly", p] => ApproxFn::poly(num(p)?),
            ["exppow", z] => ApproxFn::exppow(num(z)?),
            ["logpow", a] => ApproxFn::logpow(1.0, num(a)?),
            ["logpow", k, a] => ApproxFn::logpow(num(k)?, num(a)?),
            _ => Err(Error::Parse(format!("unknown approximation function `{s}`"))),
        }
    }

    /// Check strict growth and unboundedness on a sample grid; table kinds are
    /// validated at construction, closed forms here.
    pub fn validate_grid(&self) -> Result<()> {
        let mut prev = self.eval(1.0);
        if prev < 1.0 {
            return Err(Error::Parameter("approximation function must be >= 1 at 1".into()));
        }
        let mut x = 1.0f64;
        for _ in 0..60 {
            x *= 1.5;
            let v = self.eval(x);
            if v.is_infinite() {
                // overflow past f64 range: unbounded growth is established
                return Ok(());
            }
            if v <= prev || v.is_nan() {
                return Err(Error::Parameter(format!("approximation function not increasing near {x}")));
            }
            prev = v;
        }
        Ok(())
    }
}

fn table_interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        let slope = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
        return ys[n - 1] + slope * (x - xs[n - 1]);
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

/// Non-decreasing weight on `t ≥ 0` used by m-norms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Weight {
    /// `t^power`
    Poly { power: f64 },
    /// `exp(t^exponent)`
    ExpPow { exponent: f64 },
    /// `exp(kappa max(ln t, 0)^a)`
    LogPow { kappa: f64, a: f64 },
}

impl Weight {
    pub fn poly(power: f64) -> Result<Self> {
        if !(power > 0.0) || !power.is_finite() {
            return Err(Error::Parameter(format!("weight poly power must be positive, got {power}")));
        }
        Ok(Weight::Poly { power })
    }

    /// `exp(t^{1/(1+eta_prime)})`.
    pub fn gevrey(eta_prime: f64) -> Result<Self> {
        if !(eta_prime > 0.0) || !eta_prime.is_finite() {
            return Err(Error::Parameter(format!("gevrey weight needs eta' > 0, got {eta_prime}")));
        }
        Weight::exppow(1.0 / (1.0 + eta_prime))
    }

    pub fn exppow(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0) || !exponent.is_finite() {
            return Err(Error::Parameter(format!("weight exppow exponent must be positive, got {exponent}")));
        }
        Ok(Weight::ExpPow { exponent })
    }

    pub fn logpow(kappa: f64, a: f64) -> Result<Self> {
        if !(kappa > 0.0) || !(a > 1.0) || !kappa.is_finite() || !a.is_finite() {
            return Err(Error::Parameter(format!("weight logpow needs kappa > 0 and a > 1, got {kappa}, {a}")));
        }
        Ok(Weight::LogPow { kappa, a })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match self {
            Weight::Poly { power } => t.powf(*power),
            Weight::ExpPow { exponent } => t.powf(*exponent).exp(),
            Weight::LogPow { kappa, a } => {
                let l = t.ln().max(0.0);
                (kappa * l.powf(*a)).exp()
            }
        }
    }

    /// Parse `gevrey:e`, `poly:p`, `logpow:k:a`, `exppow:s`; a leading
    /// `weight:` prefix is accepted and stripped.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.strip_prefix("weight:").unwrap_or(s);
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| -> Result<f64> {
            t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{t}` in `{s}`")))
        };
        match parts.as_slice() {
            ["gevrey", e] => Weight::gevrey(num(e)?),
            ["poly", p] => Weight::poly(num(p)?),
            ["exppow", z] => Weight::exppow(num(z)?),
            ["logpow", k, a] => Weight::logpow(num(k)?, num(a)?),
            _ => Err(Error::Parse(format!("unknown weight `{s}`"))),
        }
    }
}

/// Which index norm to put on a window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum NormKind {
    /// `Σ_j ⟨j⟩^eta |k_j|`
    Eta(f64),
    /// `Σ_j w(⟨j⟩) |k_j|`
    Weighted(ApproxFn),
    /// `max_j |k_j|`
    Sup,
}

/// An index norm bound to a window, with per-label costs precomputed.
#[derive(Debug, Clone)]
pub struct IndexNorm {
    kind: NormKind,
    window: Arc<Window>,
    costs: Option<Vec<f64>>,
}

impl IndexNorm {
    pub fn new(kind: NormKind, window: Arc<Window>) -> Result<Self> {
        let costs = match &kind {
            NormKind::Eta(eta) => {
                if !(*eta >= 0.0) || !eta.is_finite() {
                    return Err(Error::Parameter(format!("eta must be >= 0, got {eta}")));
                }
                Some(window.sizes().iter().map(|s| s.powf(*eta)).collect())
            }
            NormKind::Weighted(w) => {
                w.validate_grid()?;
                Some(window.sizes().iter().map(|s| w.eval(*s)).collect())
            }
            NormKind::Sup => None,
        };
        Ok(IndexNorm { kind, window, costs })
    }

    pub fn eta(window: Arc<Window>, eta: f64) -> Result<Self> {
        Self::new(NormKind::Eta(eta), window)
    }

    pub fn weighted(window: Arc<Window>, w: ApproxFn) -> Result<Self> {
        Self::new(NormKind::Weighted(w), window)
    }

    pub fn sup(window: Arc<Window>) -> Self {
        IndexNorm { kind: NormKind::Sup, window, costs: None }
    }

    /// Parse `eta:1.0`, `w:<approx fn>`, `sup`.
    pub fn parse(s: &str, window: Arc<Window>) -> Result<Self> {
        if s == "sup" {
            return Ok(Self::sup(window));
        }
        if let Some(rest) = s.strip_prefix("eta:") {
            let eta = rest
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad eta value in `{s}`")))?;
            return Self::eta(window, eta);
        }
        if let Some(rest) = s.strip_prefix("w:") {
            return Self::weighted(window, ApproxFn::parse(rest)?);
        }
        Err(Error::Parse(format!("unknown index norm `{s}`")))
    }

    pub fn kind(&self) -> &NormKind {
        &self.kind
    }

    pub fn window(&self) -> &Arc<Window> {
        &self.window
    }

    /// Per-label costs for the weighted kinds, `None` for sup.
    pub fn costs(&self) -> Option<&[f64]> {
        self.costs.as_deref()
    }

    /// Norm value of a mode; summation runs in window order so the result is
    /// bit-identical to the incremental accumulation used by lattice scans.
    pub fn value(&self, k: &[i64]) -> f64 {
        debug_assert_eq!(k.len(), self.window.len());
        match &self.costs {
            Some(costs) => {
                let mut acc = 0.0;
                for (kj, c) in k.iter().zip(costs) {
                    acc += kj.unsigned_abs() as f64 * c;
                }
                acc
            }
            None => mode_sup(k),
        }
    }

    /// Smallest norm value among nonzero modes (a single ±1 on the cheapest label).
    pub fn min_positive(&self) -> f64 {
        match &self.costs {
            Some(costs) => costs.iter().copied().fold(f64::INFINITY, f64::min),
            None => 1.0,
        }
    }

    /// True when `Σ_j |k_j| ≤ |k|` holds for every mode, i.e. for the weighted
    /// kinds (all costs ≥ 1). The composition and directional-derivative bounds
    /// rely on this.
    pub fn dominates_l1(&self) -> bool {
        match &self.costs {
            Some(costs) => costs.iter().all(|c| *c >= 1.0),
            None => false,
        }
    }
}

fn check_field_window(f: &Field, norm: &IndexNorm) -> Result<()> {
    same_window(f.window(), norm.window())
}

/// `Σ_k |û(k)| e^{σ |k|}` with the component-sup coefficient magnitude.
/// Constants contribute `|û(0)|`, so a constant field has norm `|X|`.
pub fn sigma_norm(f: &Field, sigma: f64, norm: &IndexNorm) -> Result<f64> {
    check_field_window(f, norm)?;
    let mut acc = 0.0;
    for (k, c) in f.iter() {
        acc += coeff_sup(c) * (sigma * norm.value(k)).exp();
    }
    Ok(acc)
}

/// `Σ_{k≠0} |û(k)| m(|k|)`. Errors if a constant mode is stored: the weighted
/// norm is defined for zero-mean data only.
pub fn m_norm(f: &Field, m: &Weight, norm: &IndexNorm) -> Result<f64> {
    check_field_window(f, norm)?;
    let mut acc = 0.0;
    for (k, c) in f.iter() {
        if crate::window::mode_is_zero(k) {
            return Err(Error::Domain(
                "weighted norm requires a zero constant mode; strip it first".into(),
            ));
        }
        acc += coeff_sup(c) * m.eval(norm.value(k));
    }
    Ok(acc)
}

/// `Σ_k |M̂(k)|_{∞→∞} e^{σ |k|}` where `|·|_{∞→∞}` is the max row sum of moduli.
/// Submultiplicative and compatible with the field σ-norm: `‖Mv‖ ≤ ‖M‖ ‖v‖`.
pub fn matrix_sigma_norm(m: &MatrixField, sigma: f64, norm: &IndexNorm) -> Result<f64> {
    same_window(m.window(), norm.window())?;
    let rows = m.rows();
    let cols = m.cols();
    let mut acc = 0.0;
    for (k, entries) in m.iter() {
        let mut op = 0.0f64;
        for i in 0..rows {
            let mut row = 0.0;
            for j in 0..cols {
                row += entries[i * cols + j].norm();
            }
            op = op.max(row);
        }
        acc += op * (sigma * norm.value(k)).exp();
    }
    Ok(acc)
}

/// Majorant norm of the total derivative: `max_i Σ_k |k|_sup |û_i(k)| e^{σ |k|}`.
/// The sup factor counts one partial derivative at a time, matching the
/// directional bounds `‖D(T_K f)‖_{ασ} ≤ K ‖T_K f‖_{ασ}` and
/// `‖Df‖_0 ≤ (eσ)^{-1} ‖f‖_σ`.
pub fn derivative_sup_norm(f: &Field, sigma: f64, norm: &IndexNorm) -> Result<f64> {
    check_field_window(f, norm)?;
    let mut worst = 0.0f64;
    for i in 0..f.components() {
        let mut acc = 0.0;
        for (k, c) in f.iter() {
            acc += mode_sup(k) * c[i].norm() * (sigma * norm.value(k)).exp();
        }
        worst = worst.max(acc);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eta_norm_weights_labels_by_bracket_power() {
        let w = Window::new(vec![1, 2]).unwrap();
        let n = IndexNorm::eta(w.clone(), 1.0).unwrap();
        assert_eq!(n.value(&[2, -1]), 4.0);
        let s = IndexNorm::sup(w);
        assert_eq!(s.value(&[2, -1]), 2.0);
    }

    #[test]
    fn weighted_norm_uses_function_of_bracket() {
        let w = Window::new(vec![0, 3]).unwrap();
        let n = IndexNorm::weighted(w, ApproxFn::poly(2.0).unwrap()).unwrap();
        // costs: w(1) = 1, w(3) = 9
        assert_eq!(n.value(&[1, 1]), 10.0);
        assert_eq!(n.min_positive(), 1.0);
    }

    #[test]
    fn sigma_norm_single_mode_frozen_value() {
        let w = Window::new(vec![1]).unwrap();
        let mut f = Field::zeros(w.clone(), 1, true);
        f.set(vec![3].into(), vec![c(2.0, 0.0)]);
        let n = IndexNorm::eta(w, 0.0).unwrap();
        let v = sigma_norm(&f, 0.5, &n).unwrap();
        assert!((v - 2.0 * (1.5f64).exp()).abs() < 1e-12);
        assert!((v - 8.963_378_140_676_03).abs() < 1e-9);
    }

    #[test]
    fn sigma_norm_of_constant_is_coefficient_magnitude() {
        let w = Window::new(vec![1, 2]).unwrap();
        let mut f = Field::zeros(w.clone(), 2, true);
        f.set(w.zero_mode(), vec![c(0.25, 0.0), c(-1.5, 0.0)]);
        let n = IndexNorm::sup(w);
        assert_eq!(sigma_norm(&f, 3.0, &n).unwrap(), 1.5);
    }

    #[test]
    fn m_norm_frozen_value_and_constant_rejection() {
        let w = Window::new(vec![1]).unwrap();
        let mut f = Field::zeros(w.clone(), 1, false);
        f.set(vec![2].into(), vec![c(0.0, 3.0)]);
        let n = IndexNorm::eta(w.clone(), 0.0).unwrap();
        let m = Weight::poly(2.0).unwrap();
        assert!((m_norm(&f, &m, &n).unwrap() - 12.0).abs() < 1e-12);

        let mut g = Field::zeros(w, 1, true);
        g.set(vec![0].into(), vec![c(1.0, 0.0)]);
        assert!(m_norm(&g, &m, &n).is_err());
    }

    #[test]
    fn weight_frozen_values_and_monotonicity() {
        let gv = Weight::gevrey(1.0).unwrap();
        assert!((gv.eval(8.0) - (8.0f64.sqrt()).exp()).abs() < 1e-12);
        assert!((gv.eval(8.0) - 16.918_828_678_557_897).abs() < 1e-9);
        let p = Weight::poly(2.0).unwrap();
        assert_eq!(p.eval(4.0), 16.0);
        let lp = Weight::logpow(1.5, 2.0).unwrap();
        let mut prev = lp.eval(0.0);
        let mut t = 0.5;
        for _ in 0..40 {
            t *= 1.7;
            let v = lp.eval(t);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn approx_fn_inverse_round_trip() {
        for f in [
            ApproxFn::poly(2.5).unwrap(),
            ApproxFn::exppow(0.5).unwrap(),
            ApproxFn::logpow(1.2, 2.0).unwrap(),
        ] {
            f.validate_grid().unwrap();
            for x in [1.0, 2.0, 7.5, 40.0] {
                let y = f.eval(x);
                assert!((f.inverse(y) - x).abs() / x < 1e-9, "{f:?} at {x}");
            }
            assert_eq!(f.inverse(0.5), 1.0);
        }
    }

    #[test]
    fn approx_fn_table_interpolates_and_inverts() {
        let t = ApproxFn::table(vec![1.0, 2.0, 4.0], vec![1.0, 3.0, 9.0]).unwrap();
        assert_eq!(t.eval(1.5), 2.0);
        assert_eq!(t.eval(8.0), 21.0); // last slope 3 extrapolated
        assert!((t.inverse(3.0) - 2.0).abs() < 1e-12);
        assert!(ApproxFn::table(vec![1.0], vec![1.0]).is_err());
        assert!(ApproxFn::table(vec![1.0, 1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn parsers_accept_spec_grammar() {
        let w = Window::new(vec![1, 2]).unwrap();
        assert!(IndexNorm::parse("eta:1.0", w.clone()).is_ok());
        assert!(IndexNorm::parse("w:logpow:2.0", w.clone()).is_ok());
        assert!(IndexNorm::parse("sup", w.clone()).is_ok());
        assert!(IndexNorm::parse("wat", w).is_err());
        assert!(Weight::parse("weight:gevrey:0.5").is_ok());
        assert!(Weight::parse("logpow:1.5:2.0").is_ok());
        assert!(Weight::parse("weight:poly:2.0").is_ok());
        assert!(Weight::parse("weight:nope:1").is_err());
    }

    #[test]
    fn parameter_validation_rejects_out_of_range() {
        assert!(ApproxFn::poly(0.0).is_err());
        assert!(ApproxFn::exppow(-1.0).is_err());
        assert!(Weight::logpow(1.0, 1.0).is_err());
        assert!(Weight::gevrey(0.0).is_err());
        let w = Window::new(vec![1]).unwrap();
        assert!(IndexNorm::eta(w, -0.5).is_err());
    }
}
