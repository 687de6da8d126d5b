//! One linearization step at fixed truncation: solve the truncated conjugacy
//! equation by fixed-point iteration, extract the frequency correction
//! `ω'` and the transformation increment `Φ̂ = id-shift`, and push the
//! remainder to the next width.
//!
//! The contracted map sends `(ω', Φ̂)` to the constant part and the band
//! solution of `(Q + Θ ω') ∘ (id + Φ̂)`, where `Θ = (DΨ)^{-1}(DΨ - I)`
//! normalizes the accumulated transformation `Ψ = id + ψ̂`. Distances are
//! measured with `max(Δ |δω'|_sup, K ‖δΦ̂‖_{ασ})`, `α = (1+λ)/2`, under which
//! the map is a contraction whenever the smallness hypotheses hold.

use serde::Serialize;

use crate::field::{
    compose_shift, derivative_dot, jacobian, neumann_inverse, truncate_residual, Field,
    MatrixField,
};
use crate::nonres::{delta_max, homological_solve};
use crate::norms::{matrix_sigma_norm, sigma_norm, IndexNorm};
use crate::window::{same_window, Frequency};
use crate::{Error, Result};

use num_complex::Complex64 as C64;

/// `Θ = (DΨ)^{-1}(DΨ - I)` for `Ψ = id + ψ̂`, at width `sigma`.
pub fn theta_of(
    psi_hat: &Field,
    sigma: f64,
    norm: &IndexNorm,
    tol: f64,
) -> Result<MatrixField> {
    let j = jacobian(psi_hat);
    let dpsi = MatrixField::identity(psi_hat.window().clone(), psi_hat.components()).add(&j)?;
    let n = neumann_inverse(&dpsi, sigma, norm, tol)?;
    n.mat_mul(&j)
}

/// Inputs for a single step. `tol` defaults to `1e-13 (1 + ‖Q‖_σ)`;
/// `max_iters = 0` means 200.
#[derive(Debug, Clone)]
pub struct StepInput<'a> {
    pub q_field: &'a Field,
    pub psi_hat: &'a Field,
    pub omega: &'a Frequency,
    pub sigma: f64,
    pub lambda: f64,
    pub cap_k: f64,
    pub norm: &'a IndexNorm,
    pub tol: Option<f64>,
    pub max_iters: usize,
    /// Fail (instead of warn) when a smallness hypothesis is violated.
    pub enforce: bool,
}

/// The three hypotheses the contraction estimates rest on.
#[derive(Debug, Clone, Serialize)]
pub struct SmallnessReport {
    /// `σK ≥ 1/(1-λ)`
    pub width_ok: bool,
    pub width_value: f64,
    pub width_required: f64,
    /// `4Δ‖Q‖_σ ≤ κ = min(1/4, 1/α - 1)`
    pub ball_ok: bool,
    pub ball_value: f64,
    pub ball_required: f64,
    /// `‖DΨ - I‖_σ ≤ 1/7`
    pub jacobian_ok: bool,
    pub jacobian_value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepDiagnostics {
    pub alpha: f64,
    /// `K · max_{0<|k|≤K} |k·ω|^{-1}`
    pub delta: f64,
    pub q_norm_sigma: f64,
    pub smallness: SmallnessReport,
    pub warnings: Vec<String>,
    pub iters: usize,
    /// Largest observed ratio of successive fixed-point increments.
    pub contraction_factor: f64,
    pub metric_final: f64,
    /// `Δ |ω'|_sup` and `K ‖Φ̂‖_{ασ}` against the radius `4Δ‖Q‖_σ`.
    pub omega_ball: f64,
    pub phi_ball: f64,
    pub ball_radius: f64,
    pub ball_within: bool,
    /// `‖Q⁺‖_{λσ}` against `12 e^{-γσK} ‖Q‖_σ`, `γ = (3/4)(1-λ)`.
    pub q_plus_norm: f64,
    pub q_plus_bound: f64,
    /// `‖DΦ̂·ω - (T_K((Q+Θω')∘Φ) - ω')‖_0` at the returned fixed point.
    pub defect_identity: f64,
    pub theta_norm: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub omega_prime: Vec<f64>,
    pub phi_hat: Field,
    pub q_plus: Field,
    pub diagnostics: StepDiagnostics,
}

/// Run one step. Requires real-flagged `Q` and `ψ̂` whose component count
/// equals the window dimension.
pub fn kam_step(input: &StepInput) -> Result<StepOutput> {
    let q = input.q_field;
    let psi = input.psi_hat;
    let window = q.window().clone();
    same_window(&window, psi.window())?;
    same_window(&window, input.omega.window())?;
    same_window(&window, input.norm.window())?;
    let dim = window.len();
    if q.components() != dim || psi.components() != dim {
        return Err(Error::ShapeMismatch(format!(
            "step needs {dim}-component fields on a {dim}-label window, got {} and {}",
            q.components(),
            psi.components()
        )));
    }
    if !q.is_real() || !psi.is_real() {
        return Err(Error::Parameter(
            "step inputs must be real-flagged (conjugate-symmetric) fields".into(),
        ));
    }
    if !(input.sigma > 0.0 && input.sigma.is_finite()) {
        return Err(Error::Parameter(format!("width must be positive, got {}", input.sigma)));
    }
    if !(input.lambda > 0.0 && input.lambda < 1.0) {
        return Err(Error::Parameter(format!(
            "shrink factor must lie in (0,1), got {}",
            input.lambda
        )));
    }
    let sigma = input.sigma;
    let lambda = input.lambda;
    let alpha = (1.0 + lambda) / 2.0;
    let cap_k = input.cap_k;

    let dm = delta_max(input.omega, cap_k, input.norm)?;
    let delta = dm.delta;
    let q_norm = sigma_norm(q, sigma, input.norm)?;
    let tol_fp = input.tol.unwrap_or(1e-13 * (1.0 + q_norm));
    if !(tol_fp > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol_fp}")));
    }
    let tol_inner = tol_fp * 1e-2;
    let max_iters = if input.max_iters == 0 { 200 } else { input.max_iters };

    // Smallness hypotheses.
    let kappa = (1.0f64 / 4.0).min(1.0 / alpha - 1.0);
    let width_value = sigma * cap_k;
    let width_required = 1.0 / (1.0 - lambda);
    let ball_value = 4.0 * delta * q_norm;
    let jac = jacobian(psi);
    let jacobian_value = matrix_sigma_norm(&jac, sigma, input.norm)?;
    let smallness = SmallnessReport {
        width_ok: width_value >= width_required,
        width_value,
        width_required,
        ball_ok: ball_value <= kappa,
        ball_value,
        ball_required: kappa,
        jacobian_ok: jacobian_value <= 1.0 / 7.0,
        jacobian_value,
        pass: width_value >= width_required && ball_value <= kappa && jacobian_value <= 1.0 / 7.0,
    };
    let mut warnings = Vec::new();
    if !smallness.width_ok {
        warnings.push(format!(
            "width hypothesis fails: sigma*K = {width_value:.6e} < {width_required:.6e}"
        ));
    }
    if !smallness.ball_ok {
        warnings.push(format!(
            "smallness hypothesis fails: 4*Delta*|Q| = {ball_value:.6e} > kappa = {kappa:.6e}"
        ));
    }
    if !smallness.jacobian_ok {
        warnings.push(format!(
            "transformation hypothesis fails: |DPsi - I| = {jacobian_value:.6e} > 1/7"
        ));
    }
    if input.enforce && !smallness.pass {
        return Err(Error::Smallness(warnings.join("; ")));
    }

    // Theta normalizes the accumulated transformation.
    let dpsi = MatrixField::identity(window.clone(), dim).add(&jac)?;
    let n_psi = neumann_inverse(&dpsi, sigma, input.norm, tol_inner)?;
    let mut theta = n_psi.mat_mul(&jac)?;
    theta.trim_mass(sigma, input.norm, tol_inner)?;
    let theta_norm = matrix_sigma_norm(&theta, sigma, input.norm)?;

    // Fixed point of (omega', phi) -> (const, band) of (Q + Theta omega') o (id + phi).
    let map = |omega_p: &[f64], phi: &Field| -> Result<(Vec<f64>, Field, Field)> {
        let mut g = q.clone();
        if omega_p.iter().any(|v| *v != 0.0) {
            let oc: Vec<C64> = omega_p.iter().map(|v| C64::new(*v, 0.0)).collect();
            g.add_scaled(&theta.mat_vec_const(&oc)?, C64::new(1.0, 0.0))?;
        }
        let t = compose_shift(&g, phi, alpha * sigma, input.norm, tol_inner)?;
        let omega_new: Vec<f64> = match t.constant_coeff() {
            Some(c) => c.iter().map(|v| v.re).collect(),
            None => vec![0.0; dim],
        };
        let phi_new = homological_solve(&t, input.omega, cap_k, input.norm)?;
        Ok((omega_new, phi_new, t))
    };

    let mut omega_p = vec![0.0f64; dim];
    let mut phi = Field::zeros(window.clone(), dim, true);
    let mut prev_metric: Option<f64> = None;
    let mut contraction: f64 = 0.0;
    let mut metric = f64::INFINITY;
    let mut iters = 0usize;
    let mut t_last: Field = q.clone();
    while metric > tol_fp {
        if iters >= max_iters {
            return Err(Error::NonConvergence(format!(
                "fixed point did not reach {tol_fp:.3e} in {max_iters} iterations \
                 (last increment {metric:.3e})"
            )));
        }
        iters += 1;
        let (omega_new, phi_new, t) = map(&omega_p, &phi)?;
        let d_omega = omega_new
            .iter()
            .zip(&omega_p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let diff = phi_new.sub(&phi)?;
        metric = (delta * d_omega).max(cap_k * sigma_norm(&diff, alpha * sigma, input.norm)?);
        if let Some(p) = prev_metric {
            if p > 0.0 {
                contraction = contraction.max(metric / p);
            }
        }
        prev_metric = Some(metric);
        omega_p = omega_new;
        phi = phi_new;
        t_last = t;
    }

    let omega_ball = delta * omega_p.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let phi_ball = cap_k * sigma_norm(&phi, alpha * sigma, input.norm)?;
    let ball_radius = ball_value; // 4 Delta |Q|_sigma
    let ball_within = omega_ball <= ball_radius * (1.0 + 1e-9) + tol_fp
        && phi_ball <= ball_radius * (1.0 + 1e-9) + tol_fp;

    // Step defect: D(phi)·omega must equal T_K(t) - omega' at the fixed point.
    let omega_const = Field::constant(
        window.clone(),
        input.omega.values().iter().map(|v| C64::new(*v, 0.0)).collect(),
        true,
    );
    let lhs = derivative_dot(&phi, &omega_const)?;
    let (mut t_band, _) = truncate_residual(&t_last, cap_k, input.norm)?;
    t_band.add_scaled(
        &Field::constant(
            window.clone(),
            omega_p.iter().map(|v| C64::new(*v, 0.0)).collect(),
            true,
        ),
        C64::new(-1.0, 0.0),
    )?;
    let defect_identity = sigma_norm(&lhs.sub(&t_band)?, 0.0, input.norm)?;

    // Remainder: Q+ = (DPhi)^{-1} R_K((Q - N omega') o Phi). The composition
    // spends the alpha*sigma -> lambda*sigma width margin; the inverse is
    // summed at lambda*sigma, the width where Q+ is measured and carried on,
    // which also keeps the series convergent on runs past the sufficient
    // smallness conditions.
    let mut h = q.clone();
    if omega_p.iter().any(|v| *v != 0.0) {
        let oc: Vec<C64> = omega_p.iter().map(|v| C64::new(*v, 0.0)).collect();
        h.add_scaled(&n_psi.mat_vec_const(&oc)?, C64::new(-1.0, 0.0))?;
    }
    let hc = compose_shift(&h, &phi, alpha * sigma, input.norm, tol_inner)?;
    let (_, resid) = truncate_residual(&hc, cap_k, input.norm)?;
    let dphi = MatrixField::identity(window.clone(), dim).add(&jacobian(&phi))?;
    let n_phi = neumann_inverse(&dphi, lambda * sigma, input.norm, tol_inner)?;
    let mut q_plus = n_phi.mat_vec(&resid)?;
    q_plus.trim_mass(lambda * sigma, input.norm, tol_fp)?;

    let gamma = 0.75 * (1.0 - lambda);
    let q_plus_norm = sigma_norm(&q_plus, lambda * sigma, input.norm)?;
    let q_plus_bound = 12.0 * (-gamma * sigma * cap_k).exp() * q_norm;

    Ok(StepOutput {
        omega_prime: omega_p,
        phi_hat: phi,
        q_plus,
        diagnostics: StepDiagnostics {
            alpha,
            delta,
            q_norm_sigma: q_norm,
            smallness,
            warnings,
            iters,
            contraction_factor: contraction,
            metric_final: metric,
            omega_ball,
            phi_ball,
            ball_radius,
            ball_within,
            q_plus_norm,
            q_plus_bound,
            defect_identity,
            theta_norm,
        },
    })
}
