//! The outer linearization loop: repeated band-limited steps with growing
//! caps `K_ν = b^ν` and shrinking widths `σ_ν = b^{-ν}(r + d_ν)`.
//!
//! Each stage feeds the current defect `Q_ν` to [`kam_step`], composes the
//! accumulated transformation with the stage correction, absorbs the next
//! spectral shell of the perturbation by pullback, and records a trace row.
//! The per-stage envelope
//!
//! ```text
//! ε_ν = C Σ_{μ=0}^{ν} q^{ν-μ} exp(-γ Σ_{j=μ}^{ν-1} d_j)
//!         · e^{(1+λ) b d_{μ-1}/2} / M(μ) · ‖Δ*P_μ‖_m
//! ```
//!
//! with `M(0) = 1`, `M(μ) = m(b^{μ-1})`, `d_{-1} = 0` is evaluated up front;
//! the constant `C` is the smallest one consistent with stage zero, i.e.
//! `‖Q_0‖_{σ_0} / ‖Δ*P_0‖_m` (`1` when the first shell is empty). The run
//! verifies `|ω̃_{ν+1} - ω̃_ν| ≤ 4 ε_ν` and `‖DΨ_{ν+1} - DΨ_ν‖_0 ≤ 12 Δ_ν ε_ν`
//! at every stage and samples the conjugacy defect
//! `max_x |DΨ(x)·ω - (ω - ω̃ + P)(Ψ(x))|` on a uniform grid.

use serde::Serialize;

use crate::field::{compose_shift, jacobian, pullback, Field};
use crate::nonres::delta_max;
use crate::norms::{m_norm, matrix_sigma_norm, sigma_norm, IndexNorm, Weight};
use crate::schemes::{Balancing, Scheme};
use crate::step::{kam_step, StepDiagnostics, StepInput};
use crate::window::Frequency;
use crate::{Error, Result};

/// Fallback number of sample points per coordinate for defect grids.
const DEFAULT_GRID: usize = 64;

/// Parameters of the outer loop.
///
/// `b`, `r`, `q` and `lambda` are the geometry knobs: caps grow like `b^ν`,
/// widths shrink like `b^{-ν}(r + d_ν)`, and `q` is the contraction ratio the
/// envelope charges per stage. The balancing sequence `d_ν` adds slack on top
/// of the base width `r`. `nu_max` is the index of the last stage; the run
/// performs `nu_max + 1` steps.
#[derive(Debug, Clone)]
pub struct IterationConfig {
    pub b: f64,
    pub r: f64,
    pub q: f64,
    pub lambda: f64,
    pub balancing: Balancing,
    pub nu_max: u32,
    /// Fixed-point tolerance forwarded to each step; `None` keeps the
    /// step default `1e-13 (1 + ‖Q‖_σ)`.
    pub step_tol: Option<f64>,
    /// Fixed-point budget per step; `0` keeps the step default.
    pub max_step_iters: usize,
    /// Abort when a step's sufficient smallness conditions fail instead of
    /// recording them as warnings.
    pub enforce_smallness: bool,
    /// Entry bound on `‖P‖_m`; exceeding it is a hard error.
    pub smallness_threshold: Option<f64>,
    /// Defect-grid resolution per coordinate; `0` means 64.
    pub grid_per_dim: usize,
}

impl IterationConfig {
    /// Loss rate `γ = (3/4)(1 - λ)` of the configured geometry.
    pub fn gamma(&self) -> f64 {
        0.75 * (1.0 - self.lambda)
    }

    /// Geometry taken from a truncation scheme: base, shrink factor,
    /// balancing sequence and default contraction ratio.
    pub fn for_scheme(scheme: &Scheme, r: f64, q: Option<f64>, nu_max: u32) -> Self {
        IterationConfig {
            b: scheme.b,
            r,
            q: q.unwrap_or_else(|| scheme.q_default()),
            lambda: scheme.lambda,
            balancing: scheme.balancing.clone(),
            nu_max,
            step_tol: None,
            max_step_iters: 0,
            enforce_smallness: false,
            smallness_threshold: None,
            grid_per_dim: 0,
        }
    }

    /// Rejects unusable geometry and returns advisory notes for legal but
    /// fragile choices (closure margin `12 e^{-γr} > q`, base width below
    /// the step requirement `(1-λ)^{-1}`).
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.b > 1.0) {
            return Err(Error::Parameter(format!("cap base must exceed 1, got {}", self.b)));
        }
        if !(self.r > 0.0) {
            return Err(Error::Parameter(format!("base width must be positive, got {}", self.r)));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::Parameter(format!(
                "contraction ratio must lie in (0,1), got {}",
                self.q
            )));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Parameter(format!(
                "width shrink factor must lie in (0,1), got {}",
                self.lambda
            )));
        }
        for nu in 0..=self.nu_max {
            let d = self.balancing.d(nu as i64);
            if !(d >= 0.0) || !d.is_finite() {
                return Err(Error::Parameter(format!(
                    "balancing sequence must be finite and non-negative, d_{nu} = {d}"
                )));
            }
        }
        let mut notes = Vec::new();
        let closure = 12.0 * (-self.gamma() * self.r).exp();
        if closure > self.q {
            notes.push(format!(
                "closure margin not met: 12 exp(-γr) = {closure:.4e} exceeds q = {:.4e}; \
                 the per-stage contraction bound is not guaranteed",
                self.q
            ));
        }
        if self.r < 1.0 / (1.0 - self.lambda) {
            notes.push(format!(
                "base width r = {} is below (1-λ)^{{-1}} = {:.4}; step width checks will fail",
                self.r,
                1.0 / (1.0 - self.lambda)
            ));
        }
        Ok(notes)
    }
}

/// One line of the run record; all state fields describe the stage *entry*
/// (`Q_ν`, `ω̃_ν`, the defect of `Ψ_ν`), while `step_iters` and
/// `contraction_factor` describe the step performed at that stage.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub nu: u32,
    /// Cap `K_ν = b^ν`.
    pub cap_k: f64,
    /// Width `σ_ν = b^{-ν}(r + d_ν)`.
    pub sigma: f64,
    /// Small-divisor budget `Δ_ν` of the stage band.
    pub delta: f64,
    /// `‖Q_ν‖_{σ_ν}` on entry.
    pub q_norm: f64,
    /// Envelope value `ε_ν`.
    pub eps_bound: f64,
    /// Transformation-deviation bound `δ_ν = Π_{μ<ν}(1 + 4Δ_με_μ) - 1`.
    pub delta_bound: f64,
    /// `|ω̃_ν|` (sup over components) on entry.
    pub omega_tilde_sup: f64,
    pub step_iters: usize,
    pub contraction_factor: f64,
    /// Grid-sampled conjugacy defect of the entry state.
    pub defect: f64,
}

/// Per-stage verification of the increment bounds.
#[derive(Debug, Clone, Serialize)]
pub struct StepCheck {
    pub nu: u32,
    /// `|ω̃_{ν+1} - ω̃_ν|` against `4 ε_ν`.
    pub omega_increment: f64,
    pub omega_bound: f64,
    pub omega_ok: bool,
    /// `‖DΨ_{ν+1} - DΨ_ν‖_0` against `12 Δ_ν ε_ν`.
    pub jacobian_increment: f64,
    pub jacobian_bound: f64,
    pub jacobian_ok: bool,
}

/// Everything a finished (or aborted) run produced.
#[derive(Debug, Clone)]
pub struct KamRun {
    /// Accumulated modifying term `ω̃`.
    pub omega_tilde: Vec<f64>,
    /// Accumulated transformation displacement; `Ψ = id + ψ̂`.
    pub psi_hat: Field,
    pub trace: Vec<TraceRow>,
    pub checks: Vec<StepCheck>,
    /// Step diagnostics per completed stage, in stage order.
    pub steps: Vec<StepDiagnostics>,
    pub warnings: Vec<String>,
    /// Fitted envelope constant `C`.
    pub envelope_c: f64,
    /// `‖Δ*P_ν‖_m` per shell, `ν = 0 ..= nu_max`.
    pub shell_norms: Vec<f64>,
    /// `‖P‖_m` at entry.
    pub p_weighted_norm: f64,
    /// Grid-sampled defect of the final `(ω̃, Ψ)` against the full `P`.
    pub final_defect: f64,
    /// `Some(reason)` when a stage failed; the trace then covers only the
    /// completed stages and the outputs reflect the last good state.
    pub aborted: Option<String>,
}

/// Largest grid deviation `max_x |DΨ(x)·ω - (ω - ω̃ + P)(Ψ(x))|` over the
/// uniform lattice with `grid_per_dim` points per coordinate (`0` means 64).
///
/// With `ψ̂ = 0` and `ω̃ = 0` this is exactly the grid maximum of `|P|`; a
/// zero `P` with trivial transformation gives exactly `0.0`.
pub fn conjugacy_defect(
    psi_hat: &Field,
    omega_tilde: &[f64],
    p: &Field,
    omega: &Frequency,
    grid_per_dim: usize,
) -> Result<f64> {
    crate::window::same_window(psi_hat.window(), p.window())?;
    crate::window::same_window(p.window(), omega.window())?;
    let d = p.window().len();
    if psi_hat.components() != d || p.components() != d || omega_tilde.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "defect sampling needs {d}-component fields and a {d}-component modifying term"
        )));
    }
    if !psi_hat.is_real() || !p.is_real() {
        return Err(Error::Domain("defect sampling expects real fields".into()));
    }
    let g = if grid_per_dim == 0 { DEFAULT_GRID } else { grid_per_dim };
    let jac = jacobian(psi_hat);
    let ov = omega.values();
    let step = std::f64::consts::TAU / g as f64;

    let mut worst = 0.0f64;
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0f64; d];
    let mut y = vec![0.0f64; d];
    loop {
        for j in 0..d {
            x[j] = idx[j] as f64 * step;
        }
        let shift = psi_hat.eval_at(&x);
        for j in 0..d {
            y[j] = x[j] + shift[j].re;
        }
        let jx = jac.eval_at(&x);
        let pv = p.eval_at(&y);
        for i in 0..d {
            // DΨ·ω - (ω - ω̃ + P)∘Ψ with the common ω_i cancelled analytically,
            // so small defects are not floored at the rounding of |ω|.
            let mut dev = omega_tilde[i] - pv[i].re;
            for j in 0..d {
                dev += jx[i * d + j].re * ov[j];
            }
            worst = worst.max(dev.abs());
        }
        // odometer over the grid multi-index
        let mut carry = 0;
        while carry < d {
            idx[carry] += 1;
            if idx[carry] < g {
                break;
            }
            idx[carry] = 0;
            carry += 1;
        }
        if carry == d {
            break;
        }
    }
    Ok(worst)
}

/// Envelope values `ε_0 ..= ε_{nu_max}` for given shell weighted norms.
fn envelope(cfg: &IterationConfig, c: f64, m: &Weight, shell_norms: &[f64]) -> Vec<f64> {
    let gamma = cfg.gamma();
    let mut eps = Vec::with_capacity(shell_norms.len());
    for nu in 0..shell_norms.len() {
        let mut sum = 0.0;
        for (mu, shell) in shell_norms.iter().enumerate().take(nu + 1) {
            let decay = cfg.balancing.partial_sum(mu as i64, nu as i64);
            let credit = 0.5 * (1.0 + cfg.lambda) * cfg.b * cfg.balancing.d(mu as i64 - 1);
            let scale = if mu == 0 { 1.0 } else { m.eval(cfg.b.powi(mu as i32 - 1)) };
            sum += cfg.q.powi((nu - mu) as i32)
                * (-gamma * decay).exp()
                * credit.exp()
                / scale
                * shell;
        }
        eps.push(c * sum);
    }
    eps
}

/// Splits `p` into spectral shells `Δ*P_ν` between consecutive caps
/// `K_{ν-1} < |k| ≤ K_ν` (the zeroth shell covers `|k| ≤ 1`); the second
/// return value is whatever lies beyond the final cap.
fn shells_of(p: &Field, cfg: &IterationConfig, norm: &IndexNorm) -> Result<(Vec<Field>, Field)> {
    let mut shells = Vec::with_capacity(cfg.nu_max as usize + 1);
    let (head, mut rest) = crate::field::truncate_residual(p, 1.0, norm)?;
    shells.push(head);
    for nu in 1..=cfg.nu_max {
        let (shell, tail) = crate::field::truncate_residual(&rest, cfg.b.powi(nu as i32), norm)?;
        shells.push(shell);
        rest = tail;
    }
    Ok((shells, rest))
}

/// Runs the full loop: stage caps `K_ν = b^ν`, widths `σ_ν = b^{-ν}(r+d_ν)`,
/// one band-limited step per stage, shell absorption by pullback, and the
/// increment checks of the outer induction. A stage failure stops the loop
/// and returns the partial record with [`KamRun::aborted`] set; entry
/// problems (bad geometry, constant mode, oversized `‖P‖_m`) are hard errors.
pub fn kam_iterate(
    p: &Field,
    omega: &Frequency,
    cfg: &IterationConfig,
    m: &Weight,
    norm: &IndexNorm,
) -> Result<KamRun> {
    let mut warnings = cfg.validate()?;
    crate::window::same_window(p.window(), omega.window())?;
    crate::window::same_window(p.window(), norm.window())?;
    let d = p.window().len();
    if p.components() != d {
        return Err(Error::ShapeMismatch(format!(
            "perturbation has {} components on a {d}-coordinate window",
            p.components()
        )));
    }
    if !p.is_real() {
        return Err(Error::Domain("the loop drives real vector fields only".into()));
    }
    if p.constant_coeff().is_some() {
        return Err(Error::Domain(
            "perturbation carries a constant mode; remove it and fold it into the frequency"
                .into(),
        ));
    }

    let p_weighted_norm = m_norm(p, m, norm)?;
    if let Some(cap) = cfg.smallness_threshold {
        if p_weighted_norm > cap {
            return Err(Error::Smallness(format!(
                "entry weighted norm {p_weighted_norm:.6e} exceeds the configured threshold {cap:.6e}"
            )));
        }
    }

    let (shells, beyond) = shells_of(p, cfg, norm)?;
    if !beyond.is_zero() {
        warnings.push(format!(
            "{} modes lie beyond the final cap b^{} and are never absorbed; \
             they remain in the final defect",
            beyond.support_len(),
            cfg.nu_max
        ));
    }
    let mut shell_norms = Vec::with_capacity(shells.len());
    for shell in &shells {
        shell_norms.push(m_norm(shell, m, norm)?);
    }

    let sigma0 = cfg.r + cfg.balancing.d(0);
    let q0_norm = sigma_norm(&shells[0], sigma0, norm)?;
    let envelope_c = if shell_norms[0] > 0.0 { q0_norm / shell_norms[0] } else { 1.0 };
    let eps = envelope(cfg, envelope_c, m, &shell_norms);

    let grid = if cfg.grid_per_dim == 0 { DEFAULT_GRID } else { cfg.grid_per_dim };
    let mut q_cur = shells[0].clone();
    let mut psi_cur = Field::zeros(p.window().clone(), d, true);
    let mut omega_tilde = vec![0.0f64; d];
    let mut deviation_product = 1.0f64;

    let mut trace = Vec::new();
    let mut checks = Vec::new();
    let mut steps = Vec::new();
    let mut aborted = None;

    for nu in 0..=cfg.nu_max {
        let cap_k = cfg.b.powi(nu as i32);
        let sigma = cfg.b.powi(-(nu as i32)) * (cfg.r + cfg.balancing.d(nu as i64));

        let stage = (|| -> Result<TraceRow> {
            let divisor = delta_max(omega, cap_k, norm)?;
            let q_norm = sigma_norm(&q_cur, sigma, norm)?;
            let defect = conjugacy_defect(&psi_cur, &omega_tilde, p, omega, grid)?;

            let out = kam_step(&StepInput {
                q_field: &q_cur,
                psi_hat: &psi_cur,
                omega,
                sigma,
                lambda: cfg.lambda,
                cap_k,
                norm,
                tol: cfg.step_tol,
                max_iters: cfg.max_step_iters,
                enforce: cfg.enforce_smallness,
            })?;

            let row = TraceRow {
                nu,
                cap_k,
                sigma,
                delta: divisor.delta,
                q_norm,
                eps_bound: eps[nu as usize],
                delta_bound: deviation_product - 1.0,
                omega_tilde_sup: omega_tilde.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                step_iters: out.diagnostics.iters,
                contraction_factor: out.diagnostics.contraction_factor,
                defect,
            };
            for w in &out.diagnostics.warnings {
                warnings.push(format!("stage {nu}: {w}"));
            }

            let sigma_next =
                cfg.b.powi(-(nu as i32 + 1)) * (cfg.r + cfg.balancing.d(nu as i64 + 1));
            if sigma_next > cfg.lambda * sigma * (1.0 + 1e-12) {
                warnings.push(format!(
                    "stage {nu}: width schedule is not λ-contracting \
                     (σ_{} = {sigma_next:.6e} > λσ_{nu} = {:.6e})",
                    nu + 1,
                    cfg.lambda * sigma
                ));
            }

            let comp_tol = 1e-16 * (1.0 + sigma_norm(&psi_cur, sigma_next, norm)?);
            let psi_next = compose_shift(&psi_cur, &out.phi_hat, sigma_next, norm, comp_tol)?
                .add(&out.phi_hat)?;

            let omega_increment =
                out.omega_prime.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let omega_bound = 4.0 * eps[nu as usize];
            let increment = psi_next.sub(&psi_cur)?;
            let jacobian_increment = matrix_sigma_norm(&jacobian(&increment), 0.0, norm)?;
            let jacobian_bound = 12.0 * divisor.delta * eps[nu as usize];
            let check = StepCheck {
                nu,
                omega_increment,
                omega_bound,
                omega_ok: omega_increment <= omega_bound * (1.0 + 1e-9),
                jacobian_increment,
                jacobian_bound,
                jacobian_ok: jacobian_increment <= jacobian_bound * (1.0 + 1e-9),
            };
            if !check.omega_ok {
                warnings.push(format!(
                    "stage {nu}: modifying-term increment {omega_increment:.6e} exceeds 4ε = {omega_bound:.6e}"
                ));
            }
            if !check.jacobian_ok {
                warnings.push(format!(
                    "stage {nu}: transformation increment {jacobian_increment:.6e} exceeds 12Δε = {jacobian_bound:.6e}"
                ));
            }
            checks.push(check);

            for (acc, inc) in omega_tilde.iter_mut().zip(&out.omega_prime) {
                *acc += inc;
            }
            deviation_product *= 1.0 + 4.0 * divisor.delta * eps[nu as usize];

            if nu < cfg.nu_max {
                let shell = &shells[nu as usize + 1];
                let pull_tol = 1e-16 * (1.0 + sigma_norm(shell, sigma_next, norm)?);
                let moved = pullback(shell, &psi_next, sigma_next, norm, pull_tol)?;
                q_cur = out.q_plus.add(&moved)?;
            } else {
                q_cur = out.q_plus.clone();
            }
            psi_cur = psi_next;
            steps.push(out.diagnostics);
            Ok(row)
        })();

        match stage {
            Ok(row) => trace.push(row),
            Err(err) => {
                aborted = Some(format!("stage {nu}: {err}"));
                break;
            }
        }
    }

    let final_defect = conjugacy_defect(&psi_cur, &omega_tilde, p, omega, grid)?;
    Ok(KamRun {
        omega_tilde,
        psi_hat: psi_cur,
        trace,
        checks,
        steps,
        warnings,
        envelope_c,
        shell_norms,
        p_weighted_norm,
        final_defect,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;
    use crate::norms::Weight;
    use crate::window::Window;
    use num_complex::Complex64 as C64;
    use std::sync::Arc;

    const PHI: f64 = 1.618_033_988_749_895;

    fn torus2() -> Arc<Window> {
        Window::new(vec![1, 2]).unwrap()
    }

    fn golden(window: &Arc<Window>) -> Frequency {
        Frequency::new(window.clone(), vec![1.0, PHI]).unwrap()
    }

    fn seed_pair(f: &mut Field, k: &[i64], c: &[C64]) {
        f.set(k.to_vec().into_boxed_slice(), c.to_vec());
        let neg: Vec<i64> = k.iter().map(|v| -v).collect();
        let conj: Vec<C64> = c.iter().map(|v| v.conj()).collect();
        f.set(neg.into_boxed_slice(), conj);
    }

    fn base_config() -> IterationConfig {
        IterationConfig {
            b: 2.0,
            r: 10.0,
            q: 0.2,
            lambda: 0.5,
            balancing: Balancing::ConstantZero,
            nu_max: 3,
            step_tol: None,
            max_step_iters: 0,
            enforce_smallness: false,
            smallness_threshold: None,
            grid_per_dim: 0,
        }
    }

    #[test]
    fn config_validation_rejects_bad_geometry() {
        let mut cfg = base_config();
        cfg.b = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = base_config();
        cfg.r = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = base_config();
        cfg.q = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = base_config();
        cfg.lambda = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = base_config();
        cfg.balancing = Balancing::Table { values: vec![1.0, -0.5] };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn closure_margin_warning_depends_on_r() {
        // 12 e^{-0.375 r}: 0.2822 at r = 10 (above q), 0.1938 at r = 11 (below).
        let mut cfg = base_config();
        cfg.q = 0.2;
        let notes = cfg.validate().unwrap();
        assert!(notes.iter().any(|w| w.contains("closure margin")));
        cfg.r = 11.0;
        assert!(cfg.validate().unwrap().is_empty());
    }

    #[test]
    fn scheme_geometry_transfers_into_the_config() {
        let scheme = Scheme::dio(2.0, 1.0).unwrap();
        let cfg = IterationConfig::for_scheme(&scheme, 11.0, None, 5);
        assert_eq!(cfg.b, 2.0);
        assert_eq!(cfg.lambda, 0.5);
        assert_eq!(cfg.q, scheme.q_default());
        assert!(matches!(cfg.balancing, Balancing::ConstantZero));
        assert_eq!(cfg.nu_max, 5);
    }

    #[test]
    fn defect_of_trivial_transformation_is_the_grid_maximum_of_p() {
        let w = torus2();
        let omega = golden(&w);
        let mut p = Field::zeros(w.clone(), 2, true);
        let amp = C64::new(1e-4, 0.0);
        seed_pair(&mut p, &[1, -1], &[amp, amp]);
        let psi = Field::zeros(w.clone(), 2, true);
        let defect = conjugacy_defect(&psi, &[0.0, 0.0], &p, &omega, 64).unwrap();
        // the grid contains x1 - x2 = 0 where 2·1e-4·cos attains its maximum
        assert!((defect - 2e-4).abs() < 1e-18, "defect {defect}");

        let zero = Field::zeros(w.clone(), 2, true);
        let none = conjugacy_defect(&psi, &[0.0, 0.0], &zero, &omega, 32).unwrap();
        assert_eq!(none, 0.0);

        let shifted = conjugacy_defect(&psi, &[3e-7, -2e-7], &zero, &omega, 8).unwrap();
        assert!((shifted - 3e-7).abs() < 1e-22);
    }

    #[test]
    fn zero_perturbation_runs_to_all_zero_rows() {
        let w = torus2();
        let omega = golden(&w);
        let p = Field::zeros(w.clone(), 2, true);
        let mut cfg = base_config();
        cfg.r = 11.0;
        let norm = IndexNorm::sup(w.clone());
        let run = kam_iterate(&p, &omega, &cfg, &Weight::poly(2.0).unwrap(), &norm).unwrap();
        assert!(run.aborted.is_none());
        assert_eq!(run.trace.len(), 4);
        for row in &run.trace {
            assert_eq!(row.q_norm, 0.0);
            assert_eq!(row.eps_bound, 0.0);
            assert_eq!(row.defect, 0.0);
            assert_eq!(row.step_iters, 1);
        }
        assert_eq!(run.omega_tilde, vec![0.0, 0.0]);
        assert!(run.psi_hat.is_zero());
        assert_eq!(run.final_defect, 0.0);
        assert_eq!(run.envelope_c, 1.0);
        assert!(run.warnings.is_empty(), "{:?}", run.warnings);
    }

    #[test]
    fn entry_rejects_constant_modes_complex_fields_and_oversized_norms() {
        let w = torus2();
        let omega = golden(&w);
        let norm = IndexNorm::sup(w.clone());
        let m = Weight::poly(2.0).unwrap();

        let mut with_const = Field::zeros(w.clone(), 2, true);
        with_const.set(w.zero_mode(), vec![C64::new(0.1, 0.0), C64::ZERO]);
        let err = kam_iterate(&with_const, &omega, &base_config(), &m, &norm).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));

        let complex = Field::zeros(w.clone(), 2, false);
        let err = kam_iterate(&complex, &omega, &base_config(), &m, &norm).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));

        let mut p = Field::zeros(w.clone(), 2, true);
        let amp = C64::new(1e-4, 0.0);
        seed_pair(&mut p, &[1, -1], &[amp, amp]);
        let mut cfg = base_config();
        cfg.smallness_threshold = Some(1e-9);
        let err = kam_iterate(&p, &omega, &cfg, &m, &norm).unwrap_err();
        assert!(matches!(err, Error::Smallness(_)));
    }

    #[test]
    fn symmetric_perturbation_collapses_in_one_stage() {
        // Both components carry the same coefficient on modes ±(1,-1), so the
        // stage correction has equal components and k·φ̂ vanishes identically
        // on the ray k ∝ (1,-1): the composition is exact, the conjugacy
        // closes after one stage, and every later defect field is exactly 0.
        let w = torus2();
        let omega = golden(&w);
        let mut p = Field::zeros(w.clone(), 2, true);
        let amp = C64::new(1e-4, 0.0);
        seed_pair(&mut p, &[1, -1], &[amp, amp]);
        let mut cfg = base_config();
        cfg.nu_max = 2;
        let norm = IndexNorm::sup(w.clone());
        let run = kam_iterate(&p, &omega, &cfg, &Weight::poly(2.0).unwrap(), &norm).unwrap();
        assert!(run.aborted.is_none(), "{:?}", run.aborted);
        assert_eq!(run.trace.len(), 3);
        assert!((run.trace[0].q_norm - 2e-4 * 10f64.exp()).abs() < 1e-9);
        assert_eq!(run.trace[1].q_norm, 0.0);
        assert_eq!(run.trace[2].q_norm, 0.0);
        assert_eq!(run.omega_tilde, vec![0.0, 0.0]);
        assert_eq!(run.psi_hat.support_len(), 2);
        assert!(run.final_defect <= 1e-14, "final defect {}", run.final_defect);
        // ε is fitted at stage zero
        assert!((run.trace[0].eps_bound - run.trace[0].q_norm).abs() <= 1e-12 * run.trace[0].q_norm);
    }

    #[test]
    fn asymmetric_golden_run_decays_under_the_envelope() {
        // Distinct component coefficients break the k·φ̂ cancellation, so the
        // defect fields stay nonzero and shrink roughly quadratically.
        let w = torus2();
        let omega = golden(&w);
        let mut p = Field::zeros(w.clone(), 2, true);
        seed_pair(&mut p, &[1, -1], &[C64::new(1e-4, 0.0), C64::new(5e-5, 0.0)]);
        let cfg = base_config();
        let norm = IndexNorm::sup(w.clone());
        let run = kam_iterate(&p, &omega, &cfg, &Weight::poly(2.0).unwrap(), &norm).unwrap();
        assert!(run.aborted.is_none(), "{:?}", run.aborted);
        assert_eq!(run.trace.len(), 4);
        for win in run.trace.windows(2) {
            assert!(
                win[1].q_norm < win[0].q_norm,
                "defect norms must drop: {} -> {}",
                win[0].q_norm,
                win[1].q_norm
            );
        }
        for row in &run.trace {
            assert!(row.q_norm <= row.eps_bound * (1.0 + 1e-9), "stage {}", row.nu);
            assert!(row.contraction_factor <= 0.5 + 1e-9, "stage {}", row.nu);
        }
        for check in &run.checks {
            assert!(check.omega_ok && check.jacobian_ok, "stage {}", check.nu);
        }
        // widths halve exactly under the constant balancing sequence
        for win in run.trace.windows(2) {
            assert_eq!(win[1].sigma, 0.5 * win[0].sigma);
        }
        assert_eq!(run.trace[0].defect, 2e-4);
        assert!(run.final_defect <= 1e-12, "final defect {}", run.final_defect);
        assert!(run.trace[3].defect <= run.trace[1].defect);
    }

    #[test]
    fn multi_shell_run_obeys_the_monotone_trace_bound() {
        // Shells at |k| = 1, 2, 5 with closure margin satisfied (r = 11):
        // ‖Q_{ν+1}‖ ≤ q ‖Q_ν‖ + 2 e^{(1+λ)b(r+d_ν)/2} ‖Δ*P_{ν+1}‖_m / m(b^ν).
        let w = torus2();
        let omega = golden(&w);
        let mut p = Field::zeros(w.clone(), 2, true);
        seed_pair(&mut p, &[1, 0], &[C64::new(8e-9, 0.0), C64::new(-3e-9, 2e-9)]);
        seed_pair(&mut p, &[2, 1], &[C64::new(0.0, 3e-9), C64::new(1e-9, 0.0)]);
        seed_pair(&mut p, &[5, -3], &[C64::new(1e-9, 0.0), C64::new(0.0, -1e-9)]);
        let mut cfg = base_config();
        cfg.r = 11.0;
        cfg.nu_max = 4;
        cfg.enforce_smallness = true;
        let norm = IndexNorm::sup(w.clone());
        let m = Weight::poly(2.0).unwrap();
        let run = kam_iterate(&p, &omega, &cfg, &m, &norm).unwrap();
        assert!(run.aborted.is_none(), "{:?}", run.aborted);
        assert!(run.warnings.is_empty(), "{:?}", run.warnings);
        assert_eq!(run.shell_norms.len(), 5);
        assert!(run.shell_norms[0] > 0.0 && run.shell_norms[1] > 0.0 && run.shell_norms[3] > 0.0);
        assert_eq!(run.shell_norms[2], 0.0);

        for nu in 0..run.trace.len() - 1 {
            let tail = 2.0
                * (0.5 * (1.0 + cfg.lambda) * cfg.b * (cfg.r + cfg.balancing.d(nu as i64))).exp()
                * run.shell_norms[nu + 1]
                / m.eval(cfg.b.powi(nu as i32));
            let bound = cfg.q * run.trace[nu].q_norm + tail;
            assert!(
                run.trace[nu + 1].q_norm <= bound,
                "stage {nu}: {} > {bound}",
                run.trace[nu + 1].q_norm
            );
        }
        for check in &run.checks {
            assert!(check.omega_ok && check.jacobian_ok, "stage {}", check.nu);
        }
        assert!(run.final_defect <= 1e-12, "final defect {}", run.final_defect);
    }

    #[test]
    fn stage_failure_keeps_the_partial_trace() {
        // A resonant frequency passes entry validation but fails the stage-0
        // divisor scan; the run must return the abort reason with no rows.
        let w = torus2();
        let omega = Frequency::new(w.clone(), vec![1.0, 1.0]).unwrap();
        let mut p = Field::zeros(w.clone(), 2, true);
        let amp = C64::new(1e-6, 0.0);
        seed_pair(&mut p, &[1, -1], &[amp, amp]);
        let run = kam_iterate(&p, &omega, &base_config(), &Weight::poly(2.0).unwrap(), &IndexNorm::sup(w.clone()))
            .unwrap();
        let reason = run.aborted.expect("resonance must abort the run");
        assert!(reason.contains("stage 0"), "{reason}");
        assert!(run.trace.is_empty());
        assert!(run.psi_hat.is_zero());
    }
}
