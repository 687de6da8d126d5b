//! Named parameter schemes: how the truncation cap, the analyticity width,
//! the index norm and the coefficient-decay majorant evolve together across
//! iteration steps, plus the scalar scans that probe whether a scheme's
//! envelope series stays summable.
//!
//! Every scheme fixes `K_ν = b^ν` and `σ_ν = b^{-ν}(r + d_ν)` and differs in
//! the balancing sequence `d_ν`, the width-shrink factor `λ`, the index norm
//! and the decay majorant `m`.

use std::sync::Arc;

use serde::Serialize;

use crate::nonres::delta_max;
use crate::norms::{ApproxFn, IndexNorm, NormKind, Weight};
use crate::window::{Frequency, Window};
use crate::{Error, Result};

/// Extra width `d_ν` granted at step `ν` on top of the base width `r`.
#[derive(Debug, Clone, Serialize)]
pub enum Balancing {
    /// `d ≡ 0`: plain geometric shrink.
    ConstantZero,
    /// `d_ν = θ^ν`.
    Geometric { theta: f64 },
    /// `d_ν = amp · ν^{a-1}` (zero at `ν = 0`).
    Power { amp: f64, a: f64 },
    /// Explicit prefix, zero afterwards.
    Table { values: Vec<f64> },
}

impl Balancing {
    /// `d_ν`, with the convention `d_{-1} = 0`.
    pub fn d(&self, nu: i64) -> f64 {
        if nu < 0 {
            return 0.0;
        }
        match self {
            Balancing::ConstantZero => 0.0,
            Balancing::Geometric { theta } => theta.powi(nu as i32),
            Balancing::Power { amp, a } => {
                if nu == 0 {
                    0.0
                } else {
                    amp * (nu as f64).powf(a - 1.0)
                }
            }
            Balancing::Table { values } => values.get(nu as usize).copied().unwrap_or(0.0),
        }
    }

    /// `Σ_{j=lo}^{hi-1} d_j` (empty when `hi <= lo`).
    pub fn partial_sum(&self, lo: i64, hi: i64) -> f64 {
        let mut s = 0.0;
        let mut j = lo;
        while j < hi {
            s += self.d(j);
            j += 1;
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub enum SchemeKind {
    Gevrey { eta: f64, eta_prime: f64, theta: f64 },
    CInf { a: f64, big_a: f64, kappa: f64 },
    Dio { beta: f64 },
    SubExp { zeta: f64, zeta_prime: f64, theta: f64 },
    LogPow { a: f64, kappa: f64, big_a: f64 },
}

/// A fully determined iteration scheme.
#[derive(Debug, Clone, Serialize)]
pub struct Scheme {
    pub kind: SchemeKind,
    /// Truncation growth base: `K_ν = b^ν`.
    pub b: f64,
    /// Width shrink factor: `σ_{ν+1} ≈ λ σ_ν` asymptotically.
    pub lambda: f64,
    /// `(1 + λ)/2`
    pub alpha: f64,
    /// `(3/4)(1 - λ)`
    pub gamma: f64,
    /// `min(1/4, 1/α - 1)`
    pub kappa_ball: f64,
    pub balancing: Balancing,
    /// Coefficient-decay majorant `m` for the perturbation shells.
    pub weight: Weight,
    pub norm_kind: NormKind,
    /// Strict upper bound for the admissible envelope ratio `q`.
    pub q_upper: f64,
}

fn derived(lambda: f64) -> (f64, f64, f64) {
    let alpha = (1.0 + lambda) / 2.0;
    let gamma = 0.75 * (1.0 - lambda);
    let kappa = (1.0f64 / 4.0).min(1.0 / alpha - 1.0);
    (alpha, gamma, kappa)
}

fn check_base(b: f64) -> Result<()> {
    if !(b > 1.0 && b.is_finite()) {
        return Err(Error::Parameter(format!("growth base must exceed 1, got {b}")));
    }
    Ok(())
}

impl Scheme {
    /// Gevrey-type scheme: eta-norm, stretched-exponential majorant, geometric
    /// balancing with `b^{1/(1+η)} < θ < b`.
    pub fn gevrey(b: f64, eta: f64, eta_prime: f64, theta: f64) -> Result<Self> {
        check_base(b)?;
        if !(eta >= 0.0) {
            return Err(Error::Parameter(format!("eta must be nonnegative, got {eta}")));
        }
        if !(eta_prime >= 0.0) {
            return Err(Error::Parameter(format!(
                "majorant exponent must be nonnegative, got {eta_prime}"
            )));
        }
        let lo = b.powf(1.0 / (1.0 + eta));
        if !(theta > lo && theta < b) {
            return Err(Error::Parameter(format!(
                "balancing base must satisfy b^(1/(1+eta)) = {lo:.6} < theta < b = {b}, got {theta}"
            )));
        }
        let lambda = theta / b;
        let (alpha, gamma, kappa_ball) = derived(lambda);
        Ok(Scheme {
            kind: SchemeKind::Gevrey { eta, eta_prime, theta },
            b,
            lambda,
            alpha,
            gamma,
            kappa_ball,
            balancing: Balancing::Geometric { theta },
            weight: Weight::gevrey(eta_prime)?,
            norm_kind: NormKind::Eta(eta),
            q_upper: 1.0 / b,
        })
    }

    /// Smooth-class scheme: w-weighted norm, log-power majorant
    /// `m(t) = exp(κ (ln t)^a)`, power balancing `d_ν = A ν^{a-1}` with
    /// `A > a γ^{-1} (ln b)^a`.
    pub fn cinf(b: f64, a: f64, big_a: f64, kappa: f64, w: Option<ApproxFn>) -> Result<Self> {
        check_base(b)?;
        if !(a > 1.0) {
            return Err(Error::Parameter(format!("log-power exponent must exceed 1, got {a}")));
        }
        let lambda = 1.0 / b;
        let (alpha, gamma, kappa_ball) = derived(lambda);
        let floor = a * b.ln().powf(a) / gamma;
        if !(big_a > floor) {
            return Err(Error::Parameter(format!(
                "balancing amplitude must exceed a (ln b)^a / gamma = {floor:.6}, got {big_a}"
            )));
        }
        let w = match w {
            Some(f) => {
                f.validate_grid()?;
                f
            }
            None => ApproxFn::poly(1.0)?,
        };
        Ok(Scheme {
            kind: SchemeKind::CInf { a, big_a, kappa },
            b,
            lambda,
            alpha,
            gamma,
            kappa_ball,
            balancing: Balancing::Power { amp: big_a, a },
            weight: Weight::logpow(kappa, a)?,
            norm_kind: NormKind::Weighted(w),
            q_upper: 1.0 / b,
        })
    }

    /// Finitely differentiable scheme: sup norm, polynomial majorant
    /// `m(t) = t^{β+1}`, no balancing, `q < b^{-(β+1)}`.
    pub fn dio(b: f64, beta: f64) -> Result<Self> {
        check_base(b)?;
        if !(beta >= 1.0) {
            return Err(Error::Parameter(format!("decay order must be at least 1, got {beta}")));
        }
        let lambda = 1.0 / b;
        let (alpha, gamma, kappa_ball) = derived(lambda);
        Ok(Scheme {
            kind: SchemeKind::Dio { beta },
            b,
            lambda,
            alpha,
            gamma,
            kappa_ball,
            balancing: Balancing::ConstantZero,
            weight: Weight::poly(beta + 1.0)?,
            norm_kind: NormKind::Sup,
            q_upper: b.powf(-(beta + 1.0)),
        })
    }

    /// Sub-exponential scheme: sup norm, majorant `m(t) = exp(t^{ζ'})` with
    /// `ζ' > ζ`, geometric balancing with `b^ζ < θ < b`
    /// (default `θ = b^{(1+ζ)/2}`).
    pub fn subexp(b: f64, zeta: f64, zeta_prime: f64, theta: Option<f64>) -> Result<Self> {
        check_base(b)?;
        if !(zeta > 0.0 && zeta < zeta_prime && zeta_prime < 1.0) {
            return Err(Error::Parameter(format!(
                "exponents must satisfy 0 < zeta < zeta' < 1, got {zeta} and {zeta_prime}"
            )));
        }
        let theta = theta.unwrap_or_else(|| b.powf((1.0 + zeta) / 2.0));
        let lo = b.powf(zeta);
        if !(theta > lo && theta < b) {
            return Err(Error::Parameter(format!(
                "balancing base must satisfy b^zeta = {lo:.6} < theta < b = {b}, got {theta}"
            )));
        }
        let lambda = theta / b;
        let (alpha, gamma, kappa_ball) = derived(lambda);
        Ok(Scheme {
            kind: SchemeKind::SubExp { zeta, zeta_prime, theta },
            b,
            lambda,
            alpha,
            gamma,
            kappa_ball,
            balancing: Balancing::Geometric { theta },
            weight: Weight::exppow(zeta_prime)?,
            norm_kind: NormKind::Sup,
            q_upper: 1.0 / b,
        })
    }

    /// Log-power scheme: sup norm, majorant `m(t) = exp(κ (ln t)^a)`, power
    /// balancing (default amplitude 1.1 times the admissibility floor).
    pub fn logpow(b: f64, a: f64, kappa: f64, big_a: Option<f64>) -> Result<Self> {
        check_base(b)?;
        if !(a > 1.0) {
            return Err(Error::Parameter(format!("log-power exponent must exceed 1, got {a}")));
        }
        let lambda = 1.0 / b;
        let (alpha, gamma, kappa_ball) = derived(lambda);
        let floor = a * b.ln().powf(a) / gamma;
        let big_a = big_a.unwrap_or(1.1 * floor);
        if !(big_a > floor) {
            return Err(Error::Parameter(format!(
                "balancing amplitude must exceed a (ln b)^a / gamma = {floor:.6}, got {big_a}"
            )));
        }
        Ok(Scheme {
            kind: SchemeKind::LogPow { a, kappa, big_a },
            b,
            lambda,
            alpha,
            gamma,
            kappa_ball,
            balancing: Balancing::Power { amp: big_a, a },
            weight: Weight::logpow(kappa, a)?,
            norm_kind: NormKind::Sup,
            q_upper: 1.0 / b,
        })
    }

    /// Parse a positional scheme string:
    /// `gevrey:b:eta:eta':theta`, `cinf:b:a:A:kappa[:w~spec]`, `dio:b:beta`,
    /// `subexp:b:zeta:zeta'[:theta]`, `logpow:b:a:kappa[:A]`.
    /// The optional smooth-class norm function uses `~` in place of `:`,
    /// e.g. `cinf:2:2:3:1:poly~1`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| -> Result<f64> {
            p.parse().map_err(|_| Error::Parse(format!("bad number `{p}` in scheme `{s}`")))
        };
        match parts.as_slice() {
            ["gevrey", b, e, ep, th] => Scheme::gevrey(num(b)?, num(e)?, num(ep)?, num(th)?),
            ["cinf", b, a, big, k] => Scheme::cinf(num(b)?, num(a)?, num(big)?, num(k)?, None),
            ["cinf", b, a, big, k, w] => {
                let f = ApproxFn::parse(&w.replace('~', ":"))?;
                Scheme::cinf(num(b)?, num(a)?, num(big)?, num(k)?, Some(f))
            }
            ["dio", b, beta] => Scheme::dio(num(b)?, num(beta)?),
            ["subexp", b, z, zp] => Scheme::subexp(num(b)?, num(z)?, num(zp)?, None),
            ["subexp", b, z, zp, th] => Scheme::subexp(num(b)?, num(z)?, num(zp)?, Some(num(th)?)),
            ["logpow", b, a, k] => Scheme::logpow(num(b)?, num(a)?, num(k)?, None),
            ["logpow", b, a, k, big] => Scheme::logpow(num(b)?, num(a)?, num(k)?, Some(num(big)?)),
            _ => Err(Error::Parse(format!("unknown scheme `{s}`"))),
        }
    }

    /// The index norm this scheme measures modes with, on a given window.
    pub fn index_norm(&self, window: &Arc<Window>) -> Result<IndexNorm> {
        match &self.norm_kind {
            NormKind::Eta(e) => IndexNorm::eta(window.clone(), *e),
            NormKind::Weighted(f) => IndexNorm::weighted(window.clone(), f.clone()),
            NormKind::Sup => Ok(IndexNorm::sup(window.clone())),
        }
    }

    /// Window-dependent admissibility: the polynomial decay order must cover
    /// the torus dimension.
    pub fn validate_for_window(&self, window: &Window) -> Result<()> {
        if let SchemeKind::Dio { beta } = self.kind {
            let need = 1.0f64.max(window.len() as f64 - 1.0);
            if beta < need {
                return Err(Error::Parameter(format!(
                    "decay order beta = {beta} is below max(1, n-1) = {need} for an \
                     {n}-coordinate window",
                    n = window.len()
                )));
            }
        }
        Ok(())
    }

    /// Default envelope ratio: half the admissible upper bound.
    pub fn q_default(&self) -> f64 {
        self.q_upper / 2.0
    }
}

/// Term-by-term probe of the envelope series `t_ν = q^ν e^{-γ Σ_{j<ν} d_j} Δ_ν`
/// with the brute-force `Δ_ν = K_ν max_{0<|k|≤K_ν} |k·ω|^{-1}`.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesReport {
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub ratios: Vec<f64>,
    pub max_inverses: Vec<f64>,
    /// All ratios in the trailing quarter of the horizon are below 1.
    pub bounded_so_far: bool,
}

pub fn series_scan(
    scheme: &Scheme,
    omega: &Frequency,
    q: f64,
    horizon: u32,
) -> Result<SeriesReport> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Parameter(format!("envelope ratio must lie in (0,1), got {q}")));
    }
    let norm = scheme.index_norm(omega.window())?;
    let mut terms = Vec::with_capacity(horizon as usize + 1);
    let mut sums = Vec::with_capacity(horizon as usize + 1);
    let mut max_inverses = Vec::with_capacity(horizon as usize + 1);
    let mut d_sum = 0.0f64;
    let mut running = 0.0f64;
    for nu in 0..=horizon {
        let cap = scheme.b.powi(nu as i32);
        let dm = delta_max(omega, cap, &norm)?;
        let t = q.powi(nu as i32) * (-scheme.gamma * d_sum).exp() * cap * dm.max_inverse;
        running += t;
        terms.push(t);
        sums.push(running);
        max_inverses.push(dm.max_inverse);
        d_sum += scheme.balancing.d(nu as i64);
    }
    let ratios: Vec<f64> = terms.windows(2).map(|w| w[1] / w[0]).collect();
    let lq = ratios.len().saturating_sub(1).div_ceil(4).max(1).min(ratios.len());
    let bounded_so_far = !ratios.is_empty() && ratios[ratios.len() - lq..].iter().all(|r| *r < 1.0);
    Ok(SeriesReport { terms, partial_sums: sums, ratios, max_inverses, bounded_so_far })
}

/// Shell-weight consistency probe: for each entry shell `μ`, the downstream
/// envelope mass `ρ(μ) = Σ_{ν≥μ} q^{ν-μ} e^{-γ Σ_{j=μ}^{ν-1} d_j}` multiplied
/// by the shell's entry-credit ratio `e^{d_μ} / m(b^{μ-1})`: the extra width
/// `d_μ` granted to a freshly admitted shell must be paid for by the shell's
/// own coefficient decay, or the envelope recursion loses summability.
#[derive(Debug, Clone, Serialize)]
pub struct RhoReport {
    pub rho: Vec<f64>,
    pub ratios: Vec<f64>,
    pub median: f64,
    pub last_quarter_max: f64,
    /// The trailing quarter stays within twice the median ratio.
    pub bounded: bool,
}

pub fn weight_ratio_scan(scheme: &Scheme, q: f64, horizon: u32) -> Result<RhoReport> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Parameter(format!("envelope ratio must lie in (0,1), got {q}")));
    }
    if horizon < 2 {
        return Err(Error::Parameter("horizon must be at least 2".into()));
    }
    let h = horizon as i64;
    let mut rho = Vec::new();
    let mut ratios = Vec::new();
    for mu in 1..=h {
        let mut acc = 0.0f64;
        for nu in mu..=h {
            acc += q.powi((nu - mu) as i32)
                * (-scheme.gamma * scheme.balancing.partial_sum(mu, nu)).exp();
        }
        rho.push(acc);
        let credit = scheme.balancing.d(mu).exp()
            / scheme.weight.eval(scheme.b.powi(mu as i32 - 1));
        ratios.push(acc * credit);
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("ratios must be comparable"));
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let lq = ratios.len().saturating_sub(1).div_ceil(4).max(1).min(ratios.len());
    let last_quarter_max =
        ratios[ratios.len() - lq..].iter().fold(0.0f64, |a, v| a.max(*v));
    Ok(RhoReport { rho, ratios, median, last_quarter_max, bounded: last_quarter_max <= 2.0 * median })
}

/// Smallest `ν ≥ 1` at which the geometric balancing credit overtakes the
/// fitted divisor growth: `(3(1-θ/b)/(4b(θ-1))) θ^ν ≥ c ν b^{ν/(1+η)}`.
pub fn gevrey_ratio_crossover(scheme: &Scheme, c_fit: f64, cap: u32) -> Result<Option<u32>> {
    let (eta, theta) = match scheme.kind {
        SchemeKind::Gevrey { eta, theta, .. } => (eta, theta),
        _ => {
            return Err(Error::Parameter(
                "crossover scan applies to Gevrey-type schemes only".into(),
            ));
        }
    };
    if !(c_fit > 0.0) {
        return Err(Error::Parameter(format!("fitted constant must be positive, got {c_fit}")));
    }
    let front = 3.0 * (1.0 - theta / scheme.b) / (4.0 * scheme.b * (theta - 1.0));
    for nu in 1..=cap {
        let lhs = front * theta.powi(nu as i32);
        let rhs = c_fit * nu as f64 * scheme.b.powf(nu as f64 / (1.0 + eta));
        if lhs >= rhs {
            return Ok(Some(nu));
        }
    }
    Ok(None)
}
