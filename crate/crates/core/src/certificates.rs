//! Certificate construction and verification, plus every recovery and oracle
//! inequality evaluated as a checkable slack (`rhs − lhs`, nonnegative when
//! the inequality holds).

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, norm2, solve_spd, sub, DenseMatrix};
use crate::losses::{Design, LossSpec};
use crate::regularizers::{CertificateFrame, NormDescriptor, RegularizerSpec, TangentSpace};
use crate::solvers::{
    certificate_delta, solve_certificate_global, tangent_min_singular, tangent_solve, EffectiveLoss, GlobalCertificate,
    SolveOptions,
};

/// Below this the tangent-restricted design counts as non-injective.
pub const INJECTIVITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Global,
    Tangent,
    Interior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub kind: CertificateKind,
    /// `Q_G`, `Q_G^T` or `v₀`.
    pub certificate: Vec<f64>,
    /// `‖δ‖₂` for the measured correction `δ`.
    pub delta_norm: f64,
    /// B-dual norm of the off-tangent part that must stay below `η`.
    pub off_dual_norm: f64,
    pub eta: f64,
    pub pass: bool,
    /// `η − off_dual_norm`.
    pub margin: f64,
}

/// `∇L(β*) = ã + b̃` with `ã ∈ T`, `b̃ ∈ T^⊥`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSplit {
    pub beta_star: Vec<f64>,
    pub a_tilde: Vec<f64>,
    pub b_tilde: Vec<f64>,
    pub eta_tilde: f64,
}

impl TargetSplit {
    /// Split of `∇L(β*)` at a given `β*` (no tangent correction).
    pub fn at(loss: &LossSpec, frame: &CertificateFrame, beta_star: &[f64]) -> Result<Self> {
        let g = loss.gradient(beta_star)?;
        let a_tilde = frame.tangent().project_t(&g);
        let b_tilde = sub(&g, &a_tilde);
        let eta_tilde = frame.b_dual_norm(&b_tilde)?;
        Ok(TargetSplit { beta_star: beta_star.to_vec(), a_tilde, b_tilde, eta_tilde })
    }
}

/// `β* = β̄* + argmin_{Δ ∈ T} L(β̄* + Δ)`, which makes `ã = 0`.
///
/// Quadratic losses take one tangent solve; GLMs run damped Newton steps in an
/// orthonormal basis of `T`.
pub fn target_projection(loss: &LossSpec, frame: &CertificateFrame, target: &[f64]) -> Result<TargetSplit> {
    check_len("target", frame.dim(), target.len())?;
    let tangent = frame.tangent();
    let beta_star = if loss.is_quadratic() {
        let g = tangent.project_t(&loss.gradient(target)?);
        let z = tangent_solve(loss, &tangent, &g)?;
        target.iter().zip(&z).map(|(t, v)| t - 0.5 * v).collect()
    } else {
        glm_tangent_newton(loss, &tangent, target)?
    };
    TargetSplit::at(loss, frame, &beta_star)
}

fn glm_tangent_newton(loss: &LossSpec, tangent: &TangentSpace, start: &[f64]) -> Result<Vec<f64>> {
    let basis = tangent.basis();
    let k = basis.cols();
    let mut beta = start.to_vec();
    if k == 0 {
        return Ok(beta);
    }
    let cols = basis.columns();
    for _ in 0..100 {
        let g = basis.tmatvec(&loss.gradient(&beta)?);
        if norm2(&g) <= 1e-13 * (1.0 + norm2(&loss.gradient(&beta)?)) {
            return Ok(beta);
        }
        let hb: Vec<Vec<f64>> = cols.iter().map(|c| loss.hessian_apply(&beta, c)).collect::<Result<_>>()?;
        let h = DenseMatrix::from_fn(k, k, |i, j| dot(&cols[i], &hb[j]));
        let h = DenseMatrix::from_fn(k, k, |i, j| 0.5 * (h.get(i, j) + h.get(j, i)));
        let step = solve_spd(&h, &g)?;
        let dir = basis.matvec(&step);
        let f0 = loss.value(&beta)?;
        let slope = dot(&g, &step);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(&dir).map(|(b, d)| b - t * d).collect();
            let f = loss.value(&cand)?;
            if f <= f0 - 1e-4 * t * slope || t < 1e-12 {
                beta = cand;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::InvalidArgument("tangent Newton iterations did not converge".into()))
}

/// Interior certificate `v₀ = XᵀX_T(X_TᵀX_T)^{-1}e_S(W)` for noise-free recovery.
///
/// Passes iff `‖v₀ − e_S(W)‖_{B,D} ≤ η < 1`.
pub fn build_interior_noisefree(design: &Design, frame: &CertificateFrame) -> Result<CertificateReport> {
    check_len("interior certificate frame", design.ncols(), frame.dim())?;
    let tangent = frame.tangent();
    let smin = tangent_min_singular(design, &tangent)?;
    if smin <= INJECTIVITY_TOL {
        return Err(Error::NotInjective { min_singular: smin });
    }
    let loss = LossSpec::Quadratic { design: design.clone(), y: vec![0.0; design.nrows()] };
    let z = tangent_solve(&loss, &tangent, &tangent.project_t(&frame.sign))?;
    let v0 = design.gram_apply(&z);
    let off = frame.b_dual_norm(&sub(&v0, &frame.sign))?;
    let margin = frame.eta - off;
    Ok(CertificateReport {
        kind: CertificateKind::Interior,
        certificate: v0,
        delta_norm: 0.0,
        off_dual_norm: off,
        eta: frame.eta,
        pass: margin >= 0.0 && frame.eta < 1.0,
        margin,
    })
}

/// `‖P_T^⊥ H H_T^{-1}(e_S(W) + ã) − b̃‖_{B,D} ≤ η`; the certificate field
/// holds the tangent certificate `β̄ − ½H_T^{-1}(e_S(W) + ã)`.
pub fn check_irrepresentable(loss: &LossSpec, frame: &CertificateFrame, split: &TargetSplit) -> Result<CertificateReport> {
    let tangent = frame.tangent();
    let rhs = tangent.project_t(&frame.sign.iter().zip(&split.a_tilde).map(|(e, a)| e + a).collect::<Vec<_>>());
    let z = tangent_solve(loss, &tangent, &rhs)?;
    let hz = loss.h_apply(&z)?;
    let w = sub(&tangent.project_perp(&hz), &split.b_tilde);
    let lhs = frame.b_dual_norm(&w)?;
    let q = frame.anchor.iter().zip(&z).map(|(a, v)| a - 0.5 * v).collect();
    let margin = frame.eta - lhs;
    Ok(CertificateReport {
        kind: CertificateKind::Tangent,
        certificate: q,
        delta_norm: 0.0,
        off_dual_norm: lhs,
        eta: frame.eta,
        pass: margin >= 0.0,
        margin,
    })
}

/// Solve for `Q_G` and package the dual-feasibility report.
pub fn global_certificate(
    loss: &EffectiveLoss,
    frame: &CertificateFrame,
    opts: &SolveOptions,
) -> Result<(GlobalCertificate, CertificateReport)> {
    let cert = solve_certificate_global(loss, frame, opts)?;
    let margin = frame.eta - cert.off_dual_norm;
    let report = CertificateReport {
        kind: CertificateKind::Global,
        certificate: cert.q.clone(),
        delta_norm: norm2(&cert.delta),
        off_dual_norm: cert.off_dual_norm,
        eta: frame.eta,
        pass: cert.dual_feasible && margin >= -opts.kkt_tol.max(1e-8),
        margin,
    };
    Ok((cert, report))
}

/// `δ` with `−∇L_eff(q) + δ ∈ G` of minimal size.
pub fn measured_delta(loss: &EffectiveLoss, frame: &CertificateFrame, q: &[f64]) -> Result<Vec<f64>> {
    let g: Vec<f64> = loss.gradient(q)?.into_iter().map(|v| -v).collect();
    Ok(certificate_delta(frame, &g)?.0)
}

/// Slack of
/// `D(β̄,β̂) + D(β̂,Q) + [R − R_G](β̂) ≤ D(β̄,Q) − ⟨δ, β̂ − β̄⟩`.
pub fn recovery_bound_thm1(
    loss: &LossSpec,
    reg: &RegularizerSpec,
    frame: &CertificateFrame,
    beta_hat: &[f64],
    q: &[f64],
    delta: &[f64],
) -> Result<f64> {
    let anchor = &frame.anchor;
    let lhs = loss.bregman_divergence(anchor, beta_hat)?
        + loss.bregman_divergence(beta_hat, q)?
        + (reg.value(beta_hat)? - frame.r_g(beta_hat)?);
    let rhs = loss.bregman_divergence(anchor, q)? - dot(delta, &sub(beta_hat, anchor));
    Ok(rhs - lhs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSlack {
    /// Slack of the full inequality (no side condition needed).
    pub full: f64,
    /// Slack of the corollary form, meaningful when `condition_holds`.
    pub corollary: f64,
    /// `D_L(β̄, β̂) − D_{L̄}(β̂, β̄)`; the corollary needs this `≥ 0`.
    pub condition_gap: f64,
    pub condition_holds: bool,
}

/// Oracle inequality with `L̄_*(β) = γL(β) − ⟨γ∇L(β̄) − ∇L(β*), β − β̄⟩`;
/// `q` and `δ` certify `−∇L̄_*(Q) + δ ∈ G`.
#[allow(clippy::too_many_arguments)]
pub fn oracle_bound_thm2(
    loss: &LossSpec,
    gamma: f64,
    reg: &RegularizerSpec,
    frame: &CertificateFrame,
    beta_star: &[f64],
    beta_hat: &[f64],
    q: &[f64],
    delta: &[f64],
) -> Result<OracleSlack> {
    let anchor = &frame.anchor;
    let lbar = EffectiveLoss::shifted(loss, gamma, anchor, beta_star)?;
    let gap_r = reg.value(beta_hat)? - frame.r_g(beta_hat)?;
    let corr = dot(delta, &sub(beta_hat, anchor));
    let d_ab = loss.bregman_divergence(anchor, beta_hat)?;
    let d_hs = loss.bregman_divergence(beta_hat, beta_star)?;
    let d_as = loss.bregman_divergence(anchor, beta_star)?;
    let dbar_hq = lbar.bregman_divergence(beta_hat, q)?;
    let dbar_ha = lbar.bregman_divergence(beta_hat, anchor)?;
    let dbar_aq = lbar.bregman_divergence(anchor, q)?;
    let full = (dbar_ha + d_as + dbar_aq - corr) - (d_ab + d_hs + dbar_hq + gap_r);
    let corollary = (d_as + dbar_aq - corr) - (d_hs + gap_r);
    let condition_gap = d_ab - dbar_ha;
    Ok(OracleSlack { full, corollary, condition_gap, condition_holds: condition_gap >= -1e-12 * (1.0 + d_ab.abs()) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentOracle {
    /// `D_L(β̄, β*)`.
    pub anchor_divergence: f64,
    /// `¼⟨e_S(W) + ã, H_T^{-1}(e_S(W) + ã)⟩`.
    pub certificate_term: f64,
    /// Right-hand side bounding `D_L(β̂, β*) + (1 − η)‖β̂‖_B`-type terms.
    pub bound: f64,
}

pub fn oracle_bound_tangent_quadratic(loss: &LossSpec, frame: &CertificateFrame, split: &TargetSplit) -> Result<TangentOracle> {
    let tangent = frame.tangent();
    let r = tangent.project_t(&frame.sign.iter().zip(&split.a_tilde).map(|(e, a)| e + a).collect::<Vec<_>>());
    let z = tangent_solve(loss, &tangent, &r)?;
    let certificate_term = 0.25 * dot(&r, &z);
    let anchor_divergence = loss.bregman_divergence(&frame.anchor, &split.beta_star)?;
    Ok(TangentOracle { anchor_divergence, certificate_term, bound: anchor_divergence + certificate_term })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalRecoveryBound {
    pub anchor_divergence: f64,
    /// `inf_{u ∈ G} ‖u + ∇L(β*)‖_D`.
    pub penalty_level: f64,
    pub gamma: f64,
    /// `D_L(β̄, β*) + penalty_level² / (2γ)`.
    pub bound: f64,
}

/// Quadratic global bound `D_L(β̄,β*) + (2γ)^{-1} inf_{u∈G}‖u + ∇L(β*)‖_D²`.
pub fn recovery_bound_global(
    loss: &LossSpec,
    frame: &CertificateFrame,
    split: &TargetSplit,
    gamma: f64,
    norm: &NormDescriptor,
) -> Result<GlobalRecoveryBound> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("curvature estimate must be positive, got {gamma}")));
    }
    if !(split.eta_tilde < 1.0) {
        return Err(Error::InvalidArgument(format!("eta_tilde = {} is not below 1", split.eta_tilde)));
    }
    let g: Vec<f64> = split.a_tilde.iter().zip(&split.b_tilde).map(|(a, b)| a + b).collect();
    let penalty_level = frame.certificate_distance(&g, norm)?;
    let anchor_divergence = loss.bregman_divergence(&frame.anchor, &split.beta_star)?;
    let bound = if gamma.is_infinite() { anchor_divergence } else { anchor_divergence + penalty_level.powi(2) / (2.0 * gamma) };
    Ok(GlobalRecoveryBound { anchor_divergence, penalty_level, gamma, bound })
}
