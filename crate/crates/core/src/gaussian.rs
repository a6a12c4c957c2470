//! Gaussian width: Monte Carlo estimation, closed-form upper bounds, Gordon
//! tail probabilities and the sample size they imply.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::certificates::TargetSplit;
use crate::error::{check_len, Error, Result};
use crate::regularizers::CertificateFrame;
use crate::rng::{child_rng, normal_vec};

/// `λ_n = E‖ε‖₂` for `ε ~ N(0, I_n)`, i.e. `√2 Γ((n+1)/2) / Γ(n/2)`.
pub fn lambda_n(n: usize) -> f64 {
    assert!(n >= 1, "lambda_n needs n >= 1");
    let n = n as f64;
    std::f64::consts::SQRT_2 * (ln_gamma(0.5 * (n + 1.0)) - ln_gamma(0.5 * n)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthMethod {
    MonteCarlo,
    BoundLasso,
    BoundGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    /// `E inf_{u,γ} ‖γ(u + ∇L(β*)) − ε‖₂`.
    pub mean: f64,
    pub std_error: f64,
    /// `inf_γ E inf_u ‖γ(u + ∇L(β*)) − ε‖₂²` (one `γ` shared by all draws).
    pub squared_mean: f64,
    pub squared_std_error: f64,
    pub trials: usize,
    pub method: WidthMethod,
    pub seed: u64,
}

/// Per-draw data that makes `f(γ)` cheap to evaluate.
struct Draw {
    tangent_eps: Vec<f64>,
    perp_eps: Vec<f64>,
}

struct WidthProblem<'a> {
    frame: &'a CertificateFrame,
    /// `e_S(W) + ã`
    direction: Vec<f64>,
    b_tilde: &'a [f64],
}

impl WidthProblem<'_> {
    /// `‖γ(e_S + ã) − P_Tε‖² + dist²(P_T^⊥ε − γb̃, γηK)`.
    fn squared(&self, draw: &Draw, gamma: f64) -> f64 {
        let mut t = 0.0;
        for (d, e) in self.direction.iter().zip(&draw.tangent_eps) {
            t += (gamma * d - e).powi(2);
        }
        let z: Vec<f64> = draw.perp_eps.iter().zip(self.b_tilde).map(|(e, b)| e - gamma * b).collect();
        t + inner_distance_sq(self.frame, &z, gamma * self.frame.eta)
    }
}

/// `dist²(z, radius·K)` where `K` is the B-dual unit ball.
pub fn inner_distance_sq(frame: &CertificateFrame, z: &[f64], radius: f64) -> f64 {
    let proj = frame.project_dual_ball(z, radius).expect("frame and vector dimensions agree");
    z.iter().zip(&proj).map(|(a, b)| (a - b).powi(2)).sum()
}

const GAMMA_LO: f64 = 1e-6;
const GAMMA_HI: f64 = 1e6;
const GAMMA_FLOOR: f64 = 1e-10;
const GAMMA_CEIL: f64 = 1e12;

/// Minimizes a convex function on `γ ≥ 0`: bracket `[1e-6, 1e6]`, expanded
/// toward `1e-10` or outward when the minimum sits on an end, then
/// golden-section search to relative width 1e-10. Returns `(γ*, f(γ*))`.
pub fn minimize_convex_gamma(f: impl Fn(f64) -> f64) -> (f64, f64) {
    let (mut lo, mut hi) = (GAMMA_LO, GAMMA_HI);
    while lo > GAMMA_FLOOR && f(lo * 0.1) < f(lo) {
        lo *= 0.1;
    }
    while hi < GAMMA_CEIL && f(hi * 10.0) < f(hi) {
        hi *= 10.0;
    }
    let lo = if lo <= GAMMA_LO { 0.0 } else { lo * 0.1 };
    let (g, v) = golden_section(&f, lo, hi, 1e-10);
    let at_zero = f(0.0);
    if at_zero <= v {
        (0.0, at_zero)
    } else {
        (g, v)
    }
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > tol * (1.0 + c.abs()) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of the width term `E_ε inf_{u∈G, γ>0} ‖γ(u + ∇L(β*)) − ε‖₂`.
///
/// The `u`-step is an exact projection for each `γ`; `γ` is found by
/// golden-section search. Draw `i` uses the stream `child_rng(seed, i)`.
pub fn width_mc(frame: &CertificateFrame, split: &TargetSplit, trials: usize, seed: u64) -> Result<WidthEstimate> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let d = frame.dim();
    check_len("width split", d, split.a_tilde.len())?;
    check_len("width split", d, split.b_tilde.len())?;
    let tangent = frame.tangent();
    let problem = WidthProblem {
        frame,
        direction: frame.sign.iter().zip(&split.a_tilde).map(|(e, a)| e + a).collect(),
        b_tilde: &split.b_tilde,
    };
    let draws: Vec<Draw> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let eps = normal_vec(&mut child_rng(seed, i as u64), d);
            let (tangent_eps, perp_eps) = tangent.project(&eps);
            Draw { tangent_eps, perp_eps }
        })
        .collect();
    let per_draw: Vec<f64> = draws
        .par_iter()
        .map(|draw| minimize_convex_gamma(|g| problem.squared(draw, g).max(0.0).sqrt()).1)
        .collect();
    let (mean, std_error) = mean_and_se(&per_draw);
    let (gamma_sq, _) = minimize_convex_gamma(|g| {
        draws.iter().map(|draw| problem.squared(draw, g)).sum::<f64>() / trials as f64
    });
    let sq: Vec<f64> = draws.iter().map(|draw| problem.squared(draw, gamma_sq)).collect();
    let (squared_mean, squared_std_error) = mean_and_se(&sq);
    Ok(WidthEstimate {
        mean,
        std_error,
        squared_mean,
        squared_std_error,
        trials,
        method: WidthMethod::MonteCarlo,
        seed,
    })
}

fn check_eta(eta: f64, eta_tilde: f64) -> Result<()> {
    if !(eta_tilde >= 0.0 && eta_tilde < eta) {
        return Err(Error::InvalidArgument(format!("need 0 <= eta_tilde < eta, got eta={eta}, eta_tilde={eta_tilde}")));
    }
    Ok(())
}

/// `2|S| + 2 ln(p/|S| − 1)/(η − η̃)² · ‖sgn(β̄) + ã/λ‖₂²`.
pub fn width_bound_lasso(s: usize, p: usize, eta: f64, eta_tilde: f64, signterm: f64) -> Result<f64> {
    check_eta(eta, eta_tilde)?;
    if s == 0 || p < 2 * s {
        return Err(Error::InvalidArgument(format!("need 1 <= |S| and p >= 2|S|, got |S|={s}, p={p}")));
    }
    let log = (p as f64 / s as f64 - 1.0).ln();
    Ok(2.0 * s as f64 + 2.0 * log / (eta - eta_tilde).powi(2) * signterm)
}

/// `|S|(m+1) + (√(2 ln(q/|S| − 1)) + √m)²/(η − η̃)² · ‖sgn_Γ(β̄) + ã/λ‖₂²`.
pub fn width_bound_group(s: usize, q: usize, m: usize, eta: f64, eta_tilde: f64, signterm: f64) -> Result<f64> {
    check_eta(eta, eta_tilde)?;
    if s == 0 || m == 0 || q < 2 * s {
        return Err(Error::InvalidArgument(format!("need |S|, m >= 1 and q >= 2|S|, got |S|={s}, q={q}, m={m}")));
    }
    let log = (q as f64 / s as f64 - 1.0).ln();
    let root = (2.0 * log).sqrt() + (m as f64).sqrt();
    Ok(s as f64 * (m as f64 + 1.0) + root * root / (eta - eta_tilde).powi(2) * signterm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GordonPrediction {
    pub g: f64,
    pub delta: f64,
    pub n: usize,
    /// Upper bound on the failure probability, in `[0, 0.5]`.
    pub failure_probability: f64,
    /// False when `g + δ > n/√(n+1)`: the bound says nothing.
    pub guaranteed: bool,
}

/// `½ exp(−½(n/√(n+1) − g − δ)²)`, or `0.5` unguaranteed when `g + δ` exceeds `n/√(n+1)`.
pub fn gordon_tail(n: usize, g: f64, delta: f64) -> GordonPrediction {
    let nf = n as f64;
    let gap = nf / (nf + 1.0).sqrt() - g - delta;
    let (failure_probability, guaranteed) = if gap >= 0.0 { (0.5 * (-0.5 * gap * gap).exp(), true) } else { (0.5, false) };
    GordonPrediction { g, delta, n, failure_probability, guaranteed }
}

/// `δ(α) = √(2 ln(1/(2α)))`, the slack whose Gaussian tail equals `α`.
pub fn delta_for_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    Ok((2.0 * (1.0 / (2.0 * alpha)).ln()).sqrt())
}

/// Smallest `n` with `n/√(n+1) ≥ g + δ(α)`.
pub fn sample_complexity(g: f64, alpha: f64) -> Result<GordonPrediction> {
    if !(g >= 0.0) || !g.is_finite() {
        return Err(Error::InvalidArgument(format!("width must be finite and nonnegative, got {g}")));
    }
    let delta = delta_for_alpha(alpha)?;
    let target = g + delta;
    let fits = |n: usize| n as f64 / (n as f64 + 1.0).sqrt() >= target;
    // n/√(n+1) ≥ √n − 1/2 for n ≥ 1, so (target + 1)² always suffices.
    let mut hi = ((target + 1.0).powi(2).ceil() as usize).max(1);
    while !fits(hi) {
        hi *= 2;
    }
    let mut lo = 0usize;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(gordon_tail(hi, g, delta))
}

/// Gordon-predicted sample size for a lasso frame (`ã = 0`, `η̃ = 0`).
pub fn lasso_prediction(s: usize, p: usize, eta: f64, alpha: f64) -> Result<(f64, GordonPrediction)> {
    let bound = width_bound_lasso(s, p, eta, 0.0, s as f64)?;
    Ok((bound, sample_complexity(bound.sqrt(), alpha)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizers::RegularizerSpec;

    #[test]
    fn lambda_n_values() {
        assert!((lambda_n(1) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!((lambda_n(2) - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-12);
        let n = 10_000.0;
        let l = lambda_n(10_000);
        assert!(n / (n + 1.0f64).sqrt() <= l && l <= n.sqrt());
    }

    #[test]
    fn width_bound_examples() {
        let v = width_bound_lasso(8, 256, 1.0, 0.0, 8.0).unwrap();
        assert!((v - (16.0 + 16.0 * 31f64.ln())).abs() < 1e-12);
        assert!((v - 70.95).abs() < 1e-2);
        assert_eq!(width_bound_lasso(8, 256, 1.0, 0.0, 0.0).unwrap(), 16.0);
        assert_eq!(width_bound_lasso(8, 16, 1.0, 0.0, 5.0).unwrap(), 16.0);
        let g = width_bound_group(4, 32, 4, 1.0, 0.0, 4.0).unwrap();
        assert!((g - 83.13).abs() < 5e-3);
        assert_eq!(width_bound_group(4, 32, 4, 1.0, 0.0, 0.0).unwrap(), 20.0);
        assert!(width_bound_lasso(8, 15, 1.0, 0.0, 1.0).is_err());
        assert!(width_bound_lasso(8, 256, 0.5, 0.5, 1.0).is_err());
    }

    #[test]
    fn gordon_tail_examples() {
        let n = 99usize;
        let edge = 99.0 / 10.0;
        let p = gordon_tail(n, edge, 0.0);
        assert!(p.guaranteed && (p.failure_probability - 0.5).abs() < 1e-15);
        let p = gordon_tail(n, edge - 2.0, 0.0);
        assert!((p.failure_probability - 0.5 * (-2.0f64).exp()).abs() < 1e-12);
        assert!(gordon_tail(n, 0.0, 0.0).failure_probability < 1e-20);
        let bad = gordon_tail(n, edge + 1.0, 0.0);
        assert!(!bad.guaranteed && bad.failure_probability == 0.5);
    }

    #[test]
    fn sample_complexity_examples() {
        assert_eq!(sample_complexity(0.0, 0.5 * (-2.0f64).exp()).unwrap().n, 5);
        let (bound, pred) = lasso_prediction(8, 256, 1.0, 0.05).unwrap();
        assert!((bound.sqrt() - 8.42).abs() < 5e-3);
        assert!((pred.delta - 2.146).abs() < 1e-3);
        assert_eq!(pred.n, 113);
        assert!(sample_complexity(1.0, 0.05).unwrap().n <= sample_complexity(2.0, 0.05).unwrap().n);
    }

    #[test]
    fn golden_section_finds_quadratic_minimum() {
        let (g, v) = minimize_convex_gamma(|x| (x - 3.7).powi(2) + 1.0);
        assert!((g - 3.7).abs() < 1e-6 && (v - 1.0).abs() < 1e-12);
        let (g0, _) = minimize_convex_gamma(|x| x + 2.0);
        assert_eq!(g0, 0.0);
    }

    #[test]
    fn empty_frame_matches_lambda_p() {
        for p in [8usize, 64] {
            let frame = CertificateFrame::unrestricted(p);
            let split = TargetSplit { beta_star: vec![0.0; p], a_tilde: vec![0.0; p], b_tilde: vec![0.0; p], eta_tilde: 0.0 };
            let w = width_mc(&frame, &split, 500, 3).unwrap();
            assert!((w.mean - lambda_n(p)).abs() <= 3.0 * w.std_error);
        }
    }

    #[test]
    fn inner_step_vanishes_inside_ball() {
        let anchor = [1.0, 0.0, 0.0, 0.0];
        let frame = RegularizerSpec::Lasso { lambda: 1.0 }.certificate_frame(&anchor, 1.0).unwrap();
        assert_eq!(inner_distance_sq(&frame, &[0.0, 0.3, -0.9, 0.5], 1.0), 0.0);
        assert!((inner_distance_sq(&frame, &[0.0, 1.5, 0.0, 0.0], 1.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn lasso_frame_squared_width_below_bound() {
        let p = 256;
        let mut anchor = vec![0.0; p];
        for i in 0..8 {
            anchor[i * 31] = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let frame = RegularizerSpec::Lasso { lambda: 1.0 }.certificate_frame(&anchor, 1.0).unwrap();
        let split = TargetSplit { beta_star: anchor.clone(), a_tilde: vec![0.0; p], b_tilde: vec![0.0; p], eta_tilde: 0.0 };
        let w = width_mc(&frame, &split, 400, 5).unwrap();
        let bound = width_bound_lasso(8, p, 1.0, 0.0, 8.0).unwrap();
        assert!(w.squared_mean <= bound + 3.0 * w.squared_std_error);
        assert!(w.mean * w.mean <= bound + 3.0 * w.std_error * 2.0 * w.mean);
    }
}
