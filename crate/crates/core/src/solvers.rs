//! Convex solvers: the regularized estimator, noise-free basis pursuit and
//! the certificate optimization problems, all on one accelerated proximal
//! gradient core with halving backtracking and adaptive restart.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{
    axpy, conjugate_gradient, dot, min_eigenvalue_sym, norm2, norm_inf, solve_spd, sub, svd, DenseMatrix,
};
use crate::losses::{Design, LossSpec};
use crate::regularizers::{
    as_matrix, mixed_decompose, CertificateFrame, FrameKind, RegularizerSpec, TangentSpace, DEFAULT_SUPPORT_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Relative objective change treated as stagnation.
    pub objective_tol: f64,
    /// Target KKT residual (dual-norm units).
    pub kkt_tol: f64,
    /// Step shrink factor for backtracking.
    pub backtrack: f64,
    pub accelerate: bool,
    /// `‖Xβ − y‖₂ ≤ feasibility_tol · max(1, ‖y‖₂)` for basis pursuit.
    pub feasibility_tol: f64,
    /// Certified relative suboptimality for basis pursuit.
    pub gap_tol: f64,
    pub power_iterations: usize,
    pub continuation_rho0: f64,
    pub continuation_factor: f64,
    pub continuation_stages: usize,
    /// Optional `ridge·‖β − β̄‖²` added to certificate problems.
    pub ridge: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 20_000,
            objective_tol: 1e-15,
            kkt_tol: 1e-9,
            backtrack: 0.5,
            accelerate: true,
            feasibility_tol: 1e-8,
            gap_tol: 1e-6,
            power_iterations: 20,
            continuation_rho0: 1.0,
            continuation_factor: 10.0,
            continuation_stages: 8,
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub objective: f64,
    pub kkt_residual: f64,
    pub status: SolveStatus,
    /// Basis pursuit only: `‖Xβ̂ − y‖₂`.
    pub feasibility_residual: Option<f64>,
    /// Basis pursuit only: `R(β̂) − (dual lower bound)`.
    pub duality_gap: Option<f64>,
}

/// `γ·L(β) + ⟨c, β − β̄⟩`, the loss seen by certificate problems.
///
/// With `γ = 1, c = 0` this is `L` itself; [`EffectiveLoss::shifted`] builds
/// `L̄_*(β) = γL(β) − ⟨γ∇L(β̄) − ∇L(β*), β − β̄⟩`.
#[derive(Debug, Clone)]
pub struct EffectiveLoss<'a> {
    pub loss: &'a LossSpec,
    pub gamma: f64,
    pub linear: Vec<f64>,
    pub anchor: Vec<f64>,
}

impl<'a> EffectiveLoss<'a> {
    pub fn plain(loss: &'a LossSpec) -> Self {
        let d = loss.dim();
        EffectiveLoss { loss, gamma: 1.0, linear: vec![0.0; d], anchor: vec![0.0; d] }
    }

    pub fn shifted(loss: &'a LossSpec, gamma: f64, anchor: &[f64], beta_star: &[f64]) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument("gamma must be positive".into()));
        }
        let ga = loss.gradient(anchor)?;
        let gs = loss.gradient(beta_star)?;
        let linear = ga.iter().zip(&gs).map(|(a, s)| -(gamma * a - s)).collect();
        Ok(EffectiveLoss { loss, gamma, linear, anchor: anchor.to_vec() })
    }

    pub fn value(&self, beta: &[f64]) -> Result<f64> {
        Ok(self.gamma * self.loss.value(beta)? + dot(&self.linear, &sub(beta, &self.anchor)))
    }

    pub fn gradient(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.loss.gradient(beta)?;
        g.iter_mut().zip(&self.linear).for_each(|(gi, ci)| *gi = self.gamma * *gi + ci);
        Ok(g)
    }

    fn value_and_gradient(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        let (v, mut g) = self.loss.value_and_gradient(beta);
        g.iter_mut().zip(&self.linear).for_each(|(gi, ci)| *gi = self.gamma * *gi + ci);
        (self.gamma * v + dot(&self.linear, &sub(beta, &self.anchor)), g)
    }

    /// `D_{L_eff}(a, b) = γ D_L(a, b)` (linear terms do not contribute).
    pub fn bregman_divergence(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        Ok(self.gamma * self.loss.bregman_divergence(a, b)?)
    }
}

fn lipschitz_estimate(loss: &LossSpec, power_iterations: usize) -> f64 {
    let curv = match loss {
        LossSpec::Quadratic { .. } => 2.0,
        LossSpec::Glm { family, .. } => match family {
            crate::losses::GlmFamily::Squared => 2.0,
            crate::losses::GlmFamily::Logistic => 0.25,
            crate::losses::GlmFamily::Poisson => 1.0,
        },
    };
    let norm_sq = match loss {
        LossSpec::Quadratic { design, .. } => design.spectral_norm_sq(power_iterations),
        LossSpec::Glm { x, .. } => crate::linalg::spectral_norm_power(x, power_iterations).powi(2),
    };
    (curv * norm_sq).max(1e-12)
}

struct Composite<'f> {
    smooth: &'f dyn Fn(&[f64]) -> (f64, Vec<f64>),
    smooth_value: &'f dyn Fn(&[f64]) -> f64,
    prox: &'f dyn Fn(&[f64], f64) -> Result<Vec<f64>>,
    nonsmooth: &'f dyn Fn(&[f64]) -> Result<f64>,
    kkt: &'f dyn Fn(&[f64], &[f64]) -> Result<f64>,
}

struct CoreOutcome {
    beta: Vec<f64>,
    iterations: usize,
    objective: f64,
    kkt: f64,
    converged: bool,
}

const KKT_CHECK_EVERY: usize = 5;

/// Accelerated proximal gradient with halving backtracking; momentum is
/// reset whenever a step would increase the objective, so accepted iterates
/// are monotone.
fn fista(problem: &Composite, x0: Vec<f64>, step0: f64, opts: &SolveOptions) -> Result<CoreOutcome> {
    let mut x = x0;
    let (fx0, mut gx) = (problem.smooth)(&x);
    let mut fx = fx0 + (problem.nonsmooth)(&x)?;
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut step = step0;
    let mut checkpoint = (x.clone(), fx);
    let mut stalled = 0usize;
    let mut kkt = (problem.kkt)(&x, &gx)?;
    if kkt <= opts.kkt_tol {
        return Ok(CoreOutcome { beta: x, iterations: 0, objective: fx, kkt, converged: true });
    }
    let mut it = 0;
    while it < opts.max_iterations {
        it += 1;
        let at_x = y == x;
        let (fy, gy) = (problem.smooth)(&y);
        let (z, fz_smooth) = loop {
            let mut v = y.clone();
            axpy(-step, &gy, &mut v);
            let z = (problem.prox)(&v, step)?;
            let d = sub(&z, &y);
            let fz = (problem.smooth_value)(&z);
            let model = fy + dot(&gy, &d) + dot(&d, &d) / (2.0 * step);
            if fz <= model + 1e-12 * fy.abs().max(1e-300) || step < 1e-300 {
                break (z, fz);
            }
            step *= opts.backtrack;
        };
        let fz = fz_smooth + (problem.nonsmooth)(&z)?;
        if !fz.is_finite() {
            return Err(Error::NonFinite("objective during proximal iterations"));
        }
        // Differences below this are rounding noise in the objective itself.
        let noise = 1e-14 * (1.0 + fx.abs());
        if fz > fx + noise {
            if !at_x && opts.accelerate {
                // Non-monotone extrapolated step: restart from x.
                y = x.clone();
                t = 1.0;
                continue;
            }
            // A plain step cannot make progress: numerical floor reached.
            stalled += 1;
            if stalled >= 3 {
                break;
            }
            continue;
        }
        debug_assert!(fz <= fx + noise, "accepted iterate increased the objective");
        let rel_change = (fx - fz) / fx.abs().max(1.0);
        let t_next = if opts.accelerate { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) } else { 1.0 };
        let momentum = if opts.accelerate { (t - 1.0) / t_next } else { 0.0 };
        let mut y_next = z.clone();
        for i in 0..z.len() {
            y_next[i] += momentum * (z[i] - x[i]);
        }
        x = z;
        fx = fz;
        y = y_next;
        t = t_next;
        let need_grad = it % KKT_CHECK_EVERY == 0 || rel_change <= opts.objective_tol;
        if need_grad {
            gx = (problem.smooth)(&x).1;
            kkt = (problem.kkt)(&x, &gx)?;
            if kkt <= opts.kkt_tol {
                return Ok(CoreOutcome { beta: x, iterations: it, objective: fx, kkt, converged: true });
            }
        }
        if fx < -1e12 || norm2(&x) > 1e12 {
            return Err(Error::Unbounded { objective: fx, norm: norm2(&x) });
        }
        if it % 1000 == 0 {
            detect_recession(problem, &checkpoint, &x, fx)?;
            checkpoint = (x.clone(), fx);
        }
    }
    gx = (problem.smooth)(&x).1;
    kkt = (problem.kkt)(&x, &gx)?;
    Ok(CoreOutcome { beta: x, iterations: it, objective: fx, kkt, converged: kkt <= opts.kkt_tol })
}

/// If the iterates drift along a ray on which the objective keeps falling,
/// follow that ray to exhibit an objective below −1e12.
fn detect_recession(problem: &Composite, checkpoint: &(Vec<f64>, f64), x: &[f64], fx: f64) -> Result<()> {
    let d = sub(x, &checkpoint.0);
    let nd = norm2(&d);
    if !(fx < checkpoint.1) || nd <= 1e-3 * (1.0 + norm2(x)) {
        return Ok(());
    }
    let mut prev = fx;
    for &s in &[1e3, 1e6, 1e9, 1e12, 1e15] {
        let mut z = x.to_vec();
        axpy(s / nd, &d, &mut z);
        let fz = (problem.smooth_value)(&z) + (problem.nonsmooth)(&z)?;
        if !(fz < prev) {
            return Ok(());
        }
        prev = fz;
        if fz < -1e12 {
            return Err(Error::Unbounded { objective: fz, norm: norm2(&z) });
        }
    }
    Ok(())
}

/// Dual-norm distance of `g = −∇L(β)` to `∂R(β)`.
pub fn stationarity_residual(reg: &RegularizerSpec, beta: &[f64], g: &[f64]) -> Result<f64> {
    check_len("stationarity", beta.len(), g.len())?;
    Ok(match reg {
        RegularizerSpec::Lasso { lambda } => lasso_residual(*lambda, beta, g),
        RegularizerSpec::Group { lambda, groups } => {
            let mut worst = 0.0_f64;
            for j in 0..groups.q() {
                let bn = groups.group_norm(j, beta);
                let gn = groups.group_norm(j, g);
                let r = if bn > 0.0 {
                    groups.group(j).iter().map(|&i| (g[i] - lambda * beta[i] / bn).powi(2)).sum::<f64>().sqrt()
                } else {
                    (gn - lambda).max(0.0)
                };
                worst = worst.max(r / lambda);
            }
            worst
        }
        RegularizerSpec::Nuclear { lambda, rows, cols } => {
            let f = svd(&as_matrix(beta, *rows, *cols)?)?;
            let r = f.rank(DEFAULT_SUPPORT_TOL);
            let u = DenseMatrix::from_fn(*rows, r, |i, k| f.u.get(i, k));
            let v = DenseMatrix::from_fn(*cols, r, |i, k| f.v.get(i, k));
            let t = TangentSpace::Matrix { rows: *rows, cols: *cols, u: u.clone(), v: v.clone() };
            let (gt, gp) = t.project(g);
            let uv = u.matmul(&v.transpose());
            let align: Vec<f64> = gt.iter().zip(uv.data()).map(|(a, b)| a - lambda * b).collect();
            let spec = |w: &[f64]| -> Result<f64> { Ok(svd(&as_matrix(w, *rows, *cols)?)?.s[0]) };
            spec(&align)? / lambda + (spec(&gp)? / lambda - 1.0).max(0.0)
        }
        RegularizerSpec::Mixed { lambda1, lambda_group, groups } => {
            let (first, second) = mixed_decompose(*lambda1, *lambda_group, groups, beta);
            let r1 = lasso_residual(*lambda1, &first, g);
            let r2 = stationarity_residual(
                &RegularizerSpec::Group { lambda: *lambda_group, groups: groups.clone() },
                &second,
                g,
            )?;
            r1.max(r2)
        }
    })
}

fn lasso_residual(lambda: f64, beta: &[f64], g: &[f64]) -> f64 {
    beta.iter()
        .zip(g)
        .map(|(&b, &gi)| if b != 0.0 { (gi - lambda * b.signum()).abs() } else { (gi.abs() - lambda).max(0.0) })
        .fold(0.0, f64::max)
        / lambda
}

/// KKT residual of `min L + R` at `β`.
pub fn kkt_residual(loss: &LossSpec, reg: &RegularizerSpec, beta: &[f64]) -> Result<f64> {
    let g: Vec<f64> = loss.gradient(beta)?.into_iter().map(|v| -v).collect();
    stationarity_residual(reg, beta, &g)
}

/// `β̂ ∈ argmin L(β) + R(β)`.
pub fn solve_regularized(loss: &LossSpec, reg: &RegularizerSpec, opts: &SolveOptions) -> Result<SolveResult> {
    solve_regularized_from(loss, reg, vec![0.0; loss.dim()], opts)
}

pub fn solve_regularized_from(
    loss: &LossSpec,
    reg: &RegularizerSpec,
    start: Vec<f64>,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    loss.validate()?;
    reg.validate()?;
    reg.check_shape(&start)?;
    check_len("start point", loss.dim(), start.len())?;
    let smooth = |b: &[f64]| loss.value_and_gradient(b);
    let smooth_value = |b: &[f64]| loss.value_and_gradient(b).0;
    let prox = |v: &[f64], s: f64| reg.prox(v, s);
    let nonsmooth = |b: &[f64]| reg.value(b);
    let kkt = |b: &[f64], g: &[f64]| {
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        stationarity_residual(reg, b, &neg)
    };
    let problem = Composite { smooth: &smooth, smooth_value: &smooth_value, prox: &prox, nonsmooth: &nonsmooth, kkt: &kkt };
    let step0 = 1.0 / lipschitz_estimate(loss, opts.power_iterations);
    let out = fista(&problem, start, step0, opts)?;
    Ok(SolveResult {
        beta: out.beta,
        iterations: out.iterations,
        objective: out.objective,
        kkt_residual: out.kkt,
        status: if out.converged { SolveStatus::Converged } else { SolveStatus::MaxIterations },
        feasibility_residual: None,
        duality_gap: None,
    })
}

/// Least-squares fit of `y` over the detected support/tangent of `beta`.
fn polish(design: &Design, y: &[f64], reg: &RegularizerSpec, beta: &[f64]) -> Option<Vec<f64>> {
    let d = beta.len();
    let coords: Vec<usize> = match reg {
        RegularizerSpec::Lasso { .. } | RegularizerSpec::Mixed { .. } => {
            let mx = norm_inf(beta);
            (0..d).filter(|&i| beta[i].abs() > DEFAULT_SUPPORT_TOL * mx).collect()
        }
        RegularizerSpec::Group { groups, .. } => {
            let norms: Vec<f64> = (0..groups.q()).map(|j| groups.group_norm(j, beta)).collect();
            let mx = norms.iter().copied().fold(0.0, f64::max);
            let mut c: Vec<usize> = (0..groups.q())
                .filter(|&j| norms[j] > DEFAULT_SUPPORT_TOL * mx)
                .flat_map(|j| groups.group(j).iter().copied())
                .collect();
            c.sort_unstable();
            c
        }
        RegularizerSpec::Nuclear { lambda, rows, cols } => {
            let frame = CertificateFrame::new(
                &RegularizerSpec::Nuclear { lambda: *lambda, rows: *rows, cols: *cols },
                beta,
                1.0,
                DEFAULT_SUPPORT_TOL,
            )
            .ok()?;
            let t = frame.tangent();
            if t.dim() == 0 || t.dim() > design.nrows() {
                return None;
            }
            let rhs = t.project_t(&design.apply_t(y));
            let apply = |v: &[f64]| t.project_t(&design.gram_apply(&t.project_t(v)));
            let cg = conjugate_gradient(apply, &rhs, 1e-13, 10 * t.dim()).ok()?;
            return Some(t.project_t(&cg.x));
        }
    };
    if coords.is_empty() || coords.len() > design.nrows() {
        return None;
    }
    let xs = match design {
        Design::Dense { x } => x.select_columns(&coords),
        Design::Sampling { .. } => design.to_dense().select_columns(&coords),
    };
    let z = solve_spd(&xs.gram(), &xs.tmatvec(y)).ok()?;
    let mut out = vec![0.0; d];
    for (k, &i) in coords.iter().enumerate() {
        out[i] = z[k];
    }
    Some(out)
}

/// Residual norm of the least-squares projection of `y` onto `range(X)`.
fn range_residual(design: &Design, y: &[f64]) -> f64 {
    let rhs = design.apply_t(y);
    let cap = 10 * design.ncols().min(design.nrows()).max(1);
    match conjugate_gradient(|v| design.gram_apply(v), &rhs, 1e-12, cap) {
        Ok(cg) => norm2(&sub(&design.apply(&cg.x), y)),
        Err(_) => f64::INFINITY,
    }
}

/// `min R(β)` subject to `Xβ = y`, by quadratic-penalty continuation
/// `ρ_k‖Xβ − y‖² + R(β)` followed by a least-squares polish on the detected
/// support. Optimality of the returned point is certified by weak duality:
/// `w = 2ρ(y − Xβ_ρ)` rescaled into the dual ball gives `⟨w, y⟩ ≤ R*`.
pub fn solve_basis_pursuit(design: &Design, y: &[f64], reg: &RegularizerSpec, opts: &SolveOptions) -> Result<SolveResult> {
    reg.validate()?;
    check_len("basis pursuit responses", design.nrows(), y.len())?;
    reg.check_shape(&vec![0.0; design.ncols()])?;
    let feas_tol = opts.feasibility_tol * norm2(y).max(1.0);
    let mut beta = vec![0.0; design.ncols()];
    let mut rho = opts.continuation_rho0;
    let mut total_iters = 0;
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let mut last_kkt = f64::INFINITY;
    let mut stage_opts = opts.clone();
    stage_opts.kkt_tol = opts.kkt_tol.max(1e-10);
    for _stage in 0..opts.continuation_stages {
        let loss = LossSpec::Quadratic {
            design: scaled_design(design, rho.sqrt())?,
            y: y.iter().map(|v| v * rho.sqrt()).collect(),
        };
        let res = solve_regularized_from(&loss, reg, beta.clone(), &stage_opts)?;
        total_iters += res.iterations;
        last_kkt = res.kkt_residual;
        beta = res.beta;
        let resid = sub(y, &design.apply(&beta));
        let w: Vec<f64> = resid.iter().map(|r| 2.0 * rho * r).collect();
        let dn = reg.dual_norm(&design.apply_t(&w))?;
        let lower = dot(&w, y) / dn.max(1.0);
        let mut candidates = vec![beta.clone()];
        if let Some(p) = polish(design, y, reg, &beta) {
            candidates.push(p);
        }
        for cand in candidates {
            let feas = norm2(&sub(&design.apply(&cand), y));
            if feas > feas_tol {
                continue;
            }
            let val = reg.value(&cand)?;
            let gap = val - lower;
            if best.as_ref().map_or(true, |b| val < b.1) {
                best = Some((cand.clone(), val, gap));
            }
            if gap <= opts.gap_tol * (1.0 + val) {
                return Ok(SolveResult {
                    beta: cand,
                    iterations: total_iters,
                    objective: val,
                    kkt_residual: last_kkt,
                    status: SolveStatus::Converged,
                    feasibility_residual: Some(feas),
                    duality_gap: Some(gap),
                });
            }
        }
        rho *= opts.continuation_factor;
    }
    if let Some((b, val, gap)) = best {
        let feas = norm2(&sub(&design.apply(&b), y));
        return Ok(SolveResult {
            beta: b,
            iterations: total_iters,
            objective: val,
            kkt_residual: last_kkt,
            status: SolveStatus::MaxIterations,
            feasibility_residual: Some(feas),
            duality_gap: Some(gap),
        });
    }
    let feas = norm2(&sub(&design.apply(&beta), y));
    let status = if range_residual(design, y) > feas_tol { SolveStatus::Infeasible } else { SolveStatus::MaxIterations };
    Ok(SolveResult {
        objective: reg.value(&beta)?,
        beta,
        iterations: total_iters,
        kkt_residual: last_kkt,
        status,
        feasibility_residual: Some(feas),
        duality_gap: None,
    })
}

fn scaled_design(design: &Design, c: f64) -> Result<Design> {
    match design {
        Design::Dense { x } => Ok(Design::Dense { x: x.scaled(c) }),
        Design::Sampling { .. } => {
            // Sampling rows scaled by c are no longer 0/1; use a dense copy.
            Ok(Design::Dense { x: design.to_dense().scaled(c) })
        }
    }
}

/// Global certificate `Q_G` with its dual-feasibility report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalCertificate {
    pub q: Vec<f64>,
    /// Smallest correction with `−∇L_eff(Q_G) + δ ∈ G`.
    pub delta: Vec<f64>,
    /// `‖−∇L_eff(Q_G) − e_S(W)‖_{B,D}`.
    pub off_dual_norm: f64,
    /// `‖P_T(∇L_eff(Q_G) + e_S(W))‖₂`.
    pub tangent_residual: f64,
    pub dual_feasible: bool,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Minimizes `L_eff(β) + ⟨e_S(W), β⟩ + η‖β‖_B` (plus the optional ridge).
pub fn solve_certificate_global(
    loss: &EffectiveLoss,
    frame: &CertificateFrame,
    opts: &SolveOptions,
) -> Result<GlobalCertificate> {
    check_len("certificate frame", loss.loss.dim(), frame.dim())?;
    let tangent = frame.tangent();
    let eta = frame.eta;
    let ridge = opts.ridge;
    let anchor = frame.anchor.clone();
    let smooth = |b: &[f64]| {
        let (mut v, mut g) = loss.value_and_gradient(b);
        v += dot(&frame.sign, b);
        axpy(1.0, &frame.sign, &mut g);
        if ridge > 0.0 {
            let d = sub(b, &anchor);
            v += ridge * dot(&d, &d);
            axpy(2.0 * ridge, &d, &mut g);
        }
        (v, g)
    };
    let smooth_value = |b: &[f64]| smooth(b).0;
    let prox = |v: &[f64], s: f64| frame.b_norm_prox(v, s * eta);
    let nonsmooth = |b: &[f64]| Ok(eta * frame.b_norm(b)?);
    let scale = frame_scale(frame);
    let kkt = |b: &[f64], g: &[f64]| -> Result<f64> {
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let (gt, gp) = tangent.project(&neg);
        let tangent_part = norm2(&gt) / scale;
        let dual = frame.b_dual_norm(&gp)? / eta;
        let bn = frame.b_norm(b)?;
        let align = (dot(&gp, b) - eta * bn).abs() / (eta * bn).max(1.0);
        Ok(tangent_part + (dual - 1.0).max(0.0) + align)
    };
    let problem = Composite { smooth: &smooth, smooth_value: &smooth_value, prox: &prox, nonsmooth: &nonsmooth, kkt: &kkt };
    let lip = loss.gamma * lipschitz_estimate(loss.loss, opts.power_iterations) + 2.0 * ridge;
    let out = fista(&problem, frame.anchor.clone(), 1.0 / lip, opts)?;
    let q = out.beta;
    let g: Vec<f64> = loss.gradient(&q)?.into_iter().map(|v| -v).collect();
    let report = certificate_delta(frame, &g)?;
    Ok(GlobalCertificate {
        q,
        delta: report.0,
        off_dual_norm: report.1,
        tangent_residual: report.2,
        dual_feasible: report.1 <= eta + opts.kkt_tol.max(1e-8) && report.2 <= 1e-8 * scale.max(1.0),
        objective: out.objective,
        kkt_residual: out.kkt,
        iterations: out.iterations,
        status: if out.converged { SolveStatus::Converged } else { SolveStatus::MaxIterations },
    })
}

fn frame_scale(frame: &CertificateFrame) -> f64 {
    match &frame.kind {
        FrameKind::Coordinate { lambda, .. } | FrameKind::Group { lambda, .. } | FrameKind::Matrix { lambda, .. } => *lambda,
        FrameKind::Mixed { lambda1, .. } => *lambda1,
    }
}

/// For `g = −∇L_eff(Q)`: the minimal `δ` with `g + δ ∈ G`, the off-tangent
/// dual norm of `g − e_S(W)` and the tangent mismatch `‖P_T g − e_S(W)‖₂`.
pub fn certificate_delta(frame: &CertificateFrame, g: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let (gt, gp) = frame.tangent().project(g);
    let clipped = frame.project_dual_ball(&gp, frame.eta)?;
    let target: Vec<f64> = frame.sign.iter().zip(&clipped).map(|(e, c)| e + c).collect();
    let delta = sub(&target, g);
    let off = frame.b_dual_norm(&sub(g, &frame.sign))?;
    let tan = norm2(&sub(&gt, &frame.sign));
    Ok((delta, off, tan))
}

/// `H_T^{-1} r` for `r ∈ T`, returned as an ambient vector in `T`
/// (`H = XᵀX`). Coordinate spaces use a dense Cholesky solve; matrix spaces
/// run CG on `P_T H P_T` to tolerance 1e-10 with at most `10·dim T` steps.
pub fn tangent_solve(loss: &LossSpec, tangent: &TangentSpace, rhs: &[f64]) -> Result<Vec<f64>> {
    let design = loss
        .design()
        .ok_or_else(|| Error::Unsupported("tangent solves need a quadratic loss".into()))?;
    check_len("tangent rhs", design.ncols(), rhs.len())?;
    match tangent.coordinates() {
        Some(coords) => {
            let mut out = vec![0.0; rhs.len()];
            if coords.is_empty() {
                return Ok(out);
            }
            let ht = tangent_gram(design, &coords);
            let r: Vec<f64> = coords.iter().map(|&i| rhs[i]).collect();
            let z = solve_spd(&ht, &r)?;
            for (k, &i) in coords.iter().enumerate() {
                out[i] = z[k];
            }
            Ok(out)
        }
        None => {
            let d = tangent.dim();
            if d == 0 {
                return Ok(vec![0.0; rhs.len()]);
            }
            let b = tangent.project_t(rhs);
            let apply = |v: &[f64]| tangent.project_t(&design.gram_apply(&tangent.project_t(v)));
            let cg = conjugate_gradient(apply, &b, 1e-10, 10 * d)?;
            if cg.relative_residual > 1e-8 {
                return Err(Error::Singular { min_eigenvalue: f64::NAN });
            }
            Ok(tangent.project_t(&cg.x))
        }
    }
}

/// `X_TᵀX_T` on coordinates.
pub fn tangent_gram(design: &Design, coords: &[usize]) -> DenseMatrix {
    match design {
        Design::Dense { x } => x.select_columns(coords).gram(),
        Design::Sampling { .. } => design.to_dense().select_columns(coords).gram(),
    }
}

/// Smallest singular value of `X` restricted to `T` (dense, via an
/// orthonormal basis of `T`).
pub fn tangent_min_singular(design: &Design, tangent: &TangentSpace) -> Result<f64> {
    if tangent.dim() == 0 {
        return Ok(f64::INFINITY);
    }
    let g = match tangent.coordinates() {
        Some(coords) => tangent_gram(design, &coords),
        None => {
            let basis = tangent.basis();
            let cols: Vec<Vec<f64>> = basis.columns().iter().map(|c| design.apply(c)).collect();
            DenseMatrix::from_columns(design.nrows(), &cols).gram()
        }
    };
    Ok(min_eigenvalue_sym(&g)?.max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentCertificate {
    pub q: Vec<f64>,
    /// `ΔQ = −½ H_T^{-1}(e_S(W) + ã)`.
    pub delta_q: Vec<f64>,
    /// `‖P_T(2HΔQ + ã + e_S(W))‖₂`.
    pub residual: f64,
}

/// Tangent-space certificate `Q_G^T = β̄ − ½H_T^{-1}(e_S(W) + ã)`.
pub fn solve_certificate_tangent(loss: &LossSpec, frame: &CertificateFrame, a_tilde: &[f64]) -> Result<TangentCertificate> {
    check_len("a_tilde", frame.dim(), a_tilde.len())?;
    let tangent = frame.tangent();
    let rhs = tangent.project_t(&frame.sign.iter().zip(a_tilde).map(|(e, a)| e + a).collect::<Vec<_>>());
    let z = tangent_solve(loss, &tangent, &rhs)?;
    let delta_q: Vec<f64> = z.iter().map(|v| -0.5 * v).collect();
    let q: Vec<f64> = frame.anchor.iter().zip(&delta_q).map(|(a, d)| a + d).collect();
    let h_dq = loss.h_apply(&delta_q)?;
    let r: Vec<f64> = (0..q.len()).map(|i| 2.0 * h_dq[i] + a_tilde[i] + frame.sign[i]).collect();
    let residual = norm2(&tangent.project_t(&r));
    Ok(TangentCertificate { q, delta_q, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, seeded};

    fn random_quadratic(n: usize, p: usize, seed: u64) -> LossSpec {
        let mut rng = seeded(seed);
        let x = DenseMatrix::from_row_major(n, p, normal_vec(&mut rng, n * p)).unwrap();
        LossSpec::quadratic(x, normal_vec(&mut rng, n)).unwrap()
    }

    #[test]
    fn identity_design_soft_thresholds() {
        let y = vec![3.0, -0.2, 0.9, -4.0];
        let loss = LossSpec::quadratic(DenseMatrix::identity(4), y.clone()).unwrap();
        let lambda = 1.5;
        let res = solve_regularized(&loss, &RegularizerSpec::Lasso { lambda }, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Converged);
        for (b, yi) in res.beta.iter().zip(&y) {
            assert!((b - crate::regularizers::soft_threshold(*yi, lambda / 2.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn large_lambda_gives_zero() {
        let loss = random_quadratic(10, 6, 1);
        let LossSpec::Quadratic { design, y } = &loss else { unreachable!() };
        let lambda = 2.0 * norm_inf(&design.apply_t(y)) * 1.0001;
        let res = solve_regularized(&loss, &RegularizerSpec::Lasso { lambda }, &SolveOptions::default()).unwrap();
        assert!(res.beta.iter().all(|&b| b == 0.0));
        assert!(kkt_residual(&loss, &RegularizerSpec::Lasso { lambda }, &res.beta).unwrap() <= 1e-10);
    }

    #[test]
    fn matches_long_reference_solve() {
        let loss = random_quadratic(10, 20, 3);
        let reg = RegularizerSpec::Lasso { lambda: 1.0 };
        let fast = solve_regularized(&loss, &reg, &SolveOptions::default()).unwrap();
        let slow_opts = SolveOptions { max_iterations: 1_000_000, kkt_tol: 1e-14, objective_tol: 0.0, ..Default::default() };
        let slow = solve_regularized(&loss, &reg, &slow_opts).unwrap();
        assert!((fast.objective - slow.objective).abs() <= 1e-8 * (1.0 + slow.objective.abs()));
    }

    #[test]
    fn kkt_residual_grows_with_perturbation() {
        let loss = random_quadratic(15, 8, 4);
        let reg = RegularizerSpec::Lasso { lambda: 2.0 };
        let sol = solve_regularized(&loss, &reg, &SolveOptions { kkt_tol: 1e-12, ..Default::default() }).unwrap();
        assert!(kkt_residual(&loss, &reg, &sol.beta).unwrap() <= 1e-10);
        let d = normal_vec(&mut seeded(5), 8);
        let mut last = 0.0;
        for eps in [1e-6, 1e-4, 1e-2, 1.0] {
            let mut b = sol.beta.clone();
            axpy(eps, &d, &mut b);
            let r = kkt_residual(&loss, &reg, &b).unwrap();
            assert!(r >= last);
            last = r;
        }
        assert!(last > 0.0);
    }

    #[test]
    fn basis_pursuit_identity_and_selector() {
        let y = vec![1.0, -2.0, 0.5];
        let design = Design::dense(DenseMatrix::identity(3));
        let res = solve_basis_pursuit(&design, &y, &RegularizerSpec::Lasso { lambda: 1.0 }, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Converged);
        assert!(norm2(&sub(&res.beta, &y)) <= 1e-9);

        let sel = DenseMatrix::from_fn(2, 4, |i, j| if i == j { 1.0 } else { 0.0 });
        let res = solve_basis_pursuit(&Design::dense(sel), &[3.0, -1.0], &RegularizerSpec::Lasso { lambda: 1.0 }, &SolveOptions::default())
            .unwrap();
        assert!(norm2(&sub(&res.beta, &[3.0, -1.0, 0.0, 0.0])) <= 1e-9);
    }

    #[test]
    fn basis_pursuit_recovers_planted_sparse_vector() {
        let mut rng = seeded(11);
        let (n, p) = (60, 128);
        let x = DenseMatrix::from_row_major(n, p, normal_vec(&mut rng, n * p)).unwrap();
        let mut beta = vec![0.0; p];
        for (k, &i) in crate::rng::sample_indices(&mut rng, p, 4).iter().enumerate() {
            beta[i] = if k % 2 == 0 { 1.0 } else { -1.0 };
        }
        let y = x.matvec(&beta);
        let res = solve_basis_pursuit(&Design::dense(x), &y, &RegularizerSpec::Lasso { lambda: 1.0 }, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Converged);
        assert!(norm2(&sub(&res.beta, &beta)) <= 1e-5 * norm2(&beta));
    }

    #[test]
    fn basis_pursuit_flags_infeasible_rhs() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let opts = SolveOptions { continuation_stages: 3, max_iterations: 2000, ..Default::default() };
        let res = solve_basis_pursuit(&Design::dense(x), &[1.0, -1.0], &RegularizerSpec::Lasso { lambda: 1.0 }, &opts).unwrap();
        assert_eq!(res.status, SolveStatus::Infeasible);
    }

    #[test]
    fn global_certificate_identity_closed_form() {
        // L = ‖β − y‖²; Q minimizes ‖β − y‖² + ⟨e, β⟩ + ηλ‖β_{S^c}‖₁ coordinatewise.
        let y = vec![2.0, 0.3, -1.7, 0.05];
        let loss = LossSpec::quadratic(DenseMatrix::identity(4), y.clone()).unwrap();
        let reg = RegularizerSpec::Lasso { lambda: 1.0 };
        let frame = reg.certificate_frame(&[1.0, 0.0, -1.0, 0.0], 1.0).unwrap();
        let cert = solve_certificate_global(&EffectiveLoss::plain(&loss), &frame, &SolveOptions::default()).unwrap();
        let expect = [2.0 - 0.5, crate::regularizers::soft_threshold(0.3, 0.5), -1.7 + 0.5, 0.0];
        assert!(norm2(&sub(&cert.q, &expect)) <= 1e-8);
        assert!(cert.dual_feasible);
        assert!(norm2(&cert.delta) <= 1e-8);
    }

    #[test]
    fn global_certificate_at_stationary_anchor() {
        // ∇L(β̄) = −e_S(W) ⇒ Q_G = β̄.
        let anchor = vec![1.0, 0.0, -1.0];
        let loss = LossSpec::quadratic(DenseMatrix::identity(3), vec![1.5, 0.0, -1.5]).unwrap();
        let frame = RegularizerSpec::Lasso { lambda: 1.0 }.certificate_frame(&anchor, 1.0).unwrap();
        let cert = solve_certificate_global(&EffectiveLoss::plain(&loss), &frame, &SolveOptions::default()).unwrap();
        assert!(norm2(&sub(&cert.q, &anchor)) <= 1e-10);
    }

    #[test]
    fn global_certificate_dominates_anchor_objective() {
        let loss = random_quadratic(12, 6, 8);
        let frame = RegularizerSpec::Lasso { lambda: 1.0 }.certificate_frame(&[0.5, 0.0, 0.0, -1.0, 0.0, 0.0], 0.5).unwrap();
        let eff = EffectiveLoss::plain(&loss);
        let cert = solve_certificate_global(&eff, &frame, &SolveOptions::default()).unwrap();
        let obj = |b: &[f64]| eff.value(b).unwrap() + frame.r_g(b).unwrap();
        assert!(obj(&cert.q) <= obj(&frame.anchor) + 1e-12);
    }

    #[test]
    fn global_certificate_reports_unbounded_problem() {
        // X has a null direction inside T along which ⟨e_S, ·⟩ decreases.
        let x = DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let loss = LossSpec::quadratic(x, vec![0.0]).unwrap();
        let frame = RegularizerSpec::Lasso { lambda: 1.0 }.certificate_frame(&[1.0, 1.0], 1.0).unwrap();
        let err = solve_certificate_global(&EffectiveLoss::plain(&loss), &frame, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Unbounded { .. }));
    }

    #[test]
    fn tangent_certificate_examples() {
        let loss = LossSpec::quadratic(DenseMatrix::identity(3), vec![0.0; 3]).unwrap();
        let frame = RegularizerSpec::Lasso { lambda: 2.0 }.certificate_frame(&[1.0, 0.0, -3.0], 1.0).unwrap();
        let cert = solve_certificate_tangent(&loss, &frame, &[0.0; 3]).unwrap();
        for (d, e) in cert.delta_q.iter().zip(&frame.sign) {
            assert!((d + 0.5 * e).abs() < 1e-14);
        }
        let neg: Vec<f64> = frame.sign.iter().map(|v| -v).collect();
        let cert = solve_certificate_tangent(&loss, &frame, &neg).unwrap();
        assert_eq!(cert.q, frame.anchor);
    }

    #[test]
    fn tangent_solve_matrix_cg_matches_dense_basis_solve() {
        let (p, q) = (5, 4);
        let mut rng = seeded(19);
        let x = DenseMatrix::from_row_major(16, p * q, normal_vec(&mut rng, 16 * p * q)).unwrap();
        let loss = LossSpec::quadratic(x.clone(), vec![0.0; 16]).unwrap();
        let (a, b) = (normal_vec(&mut rng, p), normal_vec(&mut rng, q));
        let anchor: Vec<f64> = (0..p * q).map(|k| a[k / q] * b[k % q]).collect();
        let frame = RegularizerSpec::Nuclear { lambda: 1.0, rows: p, cols: q }.certificate_frame(&anchor, 1.0).unwrap();
        let t = frame.tangent();
        let rhs = t.project_t(&normal_vec(&mut rng, p * q));
        let cg = tangent_solve(&loss, &t, &rhs).unwrap();
        let basis = t.basis();
        let xb = x.matmul(&basis);
        let coeff = solve_spd(&xb.gram(), &basis.tmatvec(&rhs)).unwrap();
        let dense = basis.matvec(&coeff);
        assert!(norm2(&sub(&cg, &dense)) <= 1e-8 * norm2(&dense));
    }
}
