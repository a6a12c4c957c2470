//! Losses: quadratic `‖Xβ − y‖²` and generalized linear models
//! `Σ ℓ_i(⟨x_i, β⟩)`, with Bregman divergences and the GLM constants κ, γ.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg::{dot, norm_inf, sub, DenseMatrix};
use crate::regularizers::{NormDescriptor, RegularizerSpec};

/// Linear predictors are clamped to this magnitude before exponentiation.
pub const SATURATION: f64 = 500.0;

/// Design operator `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    Dense { x: DenseMatrix },
    /// Rows are canonical basis vectors `e_{indices[i]}` of `R^dim`
    /// (entry sampling for matrix completion).
    Sampling { dim: usize, indices: Vec<usize> },
}

impl Design {
    pub fn dense(x: DenseMatrix) -> Self {
        Design::Dense { x }
    }

    pub fn nrows(&self) -> usize {
        match self {
            Design::Dense { x } => x.rows(),
            Design::Sampling { indices, .. } => indices.len(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Design::Dense { x } => x.cols(),
            Design::Sampling { dim, .. } => *dim,
        }
    }

    /// `X β`.
    pub fn apply(&self, beta: &[f64]) -> Vec<f64> {
        match self {
            Design::Dense { x } => x.matvec(beta),
            Design::Sampling { indices, .. } => indices.iter().map(|&i| beta[i]).collect(),
        }
    }

    /// `Xᵀ r`.
    pub fn apply_t(&self, r: &[f64]) -> Vec<f64> {
        match self {
            Design::Dense { x } => x.tmatvec(r),
            Design::Sampling { dim, indices } => {
                let mut out = vec![0.0; *dim];
                for (k, &i) in indices.iter().enumerate() {
                    out[i] += r[k];
                }
                out
            }
        }
    }

    /// `XᵀX v`.
    pub fn gram_apply(&self, v: &[f64]) -> Vec<f64> {
        self.apply_t(&self.apply(v))
    }

    /// Materialized `XᵀX`.
    pub fn gram(&self) -> DenseMatrix {
        match self {
            Design::Dense { x } => x.gram(),
            Design::Sampling { dim, indices } => {
                let mut g = DenseMatrix::zeros(*dim, *dim);
                for &i in indices {
                    g.set(i, i, g.get(i, i) + 1.0);
                }
                g
            }
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Design::Dense { x } => x.clone(),
            Design::Sampling { dim, indices } => {
                DenseMatrix::from_fn(indices.len(), *dim, |r, c| if indices[r] == c { 1.0 } else { 0.0 })
            }
        }
    }

    /// `‖X‖²_sp` by power iteration (exact for sampling designs).
    pub fn spectral_norm_sq(&self, iterations: usize) -> f64 {
        match self {
            Design::Dense { x } => crate::linalg::spectral_norm_power(x, iterations).powi(2),
            Design::Sampling { dim, indices } => {
                let mut counts = vec![0usize; *dim];
                indices.iter().for_each(|&i| counts[i] += 1);
                counts.into_iter().max().unwrap_or(0) as f64
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Result<Design> {
        match self {
            Design::Dense { x } => Ok(Design::Dense { x: x.scaled(c) }),
            Design::Sampling { .. } => Err(Error::Unsupported("rescaling a sampling design".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlmFamily {
    /// `ℓ(t) = (t − y)²`.
    Squared,
    /// `ℓ(t) = ln(1 + e^{−y t})`, `y ∈ {−1, +1}`.
    Logistic,
    /// `ℓ(t) = e^t − y t`, `y ≥ 0`.
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    /// `‖Xβ − y‖₂²`; equivalently `⟨Hβ − z, β⟩ + ‖y‖²` with `H = XᵀX`, `z = 2Xᵀy`.
    Quadratic { design: Design, y: Vec<f64> },
    /// `Σ_i ℓ_i(⟨x_i, β⟩)` with rows `x_i` of `x`.
    Glm { x: DenseMatrix, family: GlmFamily, y: Vec<f64> },
}

/// Forward, reverse and symmetrized Bregman divergences of a pair `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BregmanTriple {
    /// `D_L(a, b)`.
    pub forward: f64,
    /// `D_L(b, a)`.
    pub reverse: f64,
    /// `D_L^s(a, b) = ⟨∇L(a) − ∇L(b), a − b⟩`.
    pub symmetric: f64,
}

#[inline]
fn softplus(z: f64) -> f64 {
    // ln(1 + e^z) without overflow
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl GlmFamily {
    #[inline]
    pub fn value(self, t: f64, y: f64) -> f64 {
        let t = t.clamp(-SATURATION, SATURATION);
        match self {
            GlmFamily::Squared => (t - y) * (t - y),
            GlmFamily::Logistic => softplus(-y * t),
            GlmFamily::Poisson => t.exp() - y * t,
        }
    }

    #[inline]
    pub fn derivative(self, t: f64, y: f64) -> f64 {
        let t = t.clamp(-SATURATION, SATURATION);
        match self {
            GlmFamily::Squared => 2.0 * (t - y),
            GlmFamily::Logistic => -y * sigmoid(-y * t),
            GlmFamily::Poisson => t.exp() - y,
        }
    }

    #[inline]
    pub fn curvature(self, t: f64) -> f64 {
        let t = t.clamp(-SATURATION, SATURATION);
        match self {
            GlmFamily::Squared => 2.0,
            GlmFamily::Logistic => sigmoid(t) * sigmoid(-t),
            GlmFamily::Poisson => t.exp(),
        }
    }

    /// Lipschitz constant of `ln ℓ″`.
    pub fn kappa(self) -> f64 {
        match self {
            GlmFamily::Squared => 0.0,
            GlmFamily::Logistic | GlmFamily::Poisson => 1.0,
        }
    }

    /// Uniform `γ ≤ ℓ″(s)/ℓ″(t)` over `|s|, |t| ≤ A`.
    pub fn convexity_ratio(self, amplitude: f64) -> f64 {
        match self {
            GlmFamily::Squared => 1.0,
            GlmFamily::Logistic => 4.0 / (2.0 + (-amplitude).exp() + amplitude.exp()),
            GlmFamily::Poisson => (-2.0 * amplitude).exp(),
        }
    }
}

impl LossSpec {
    pub fn quadratic(x: DenseMatrix, y: Vec<f64>) -> Result<Self> {
        let l = LossSpec::Quadratic { design: Design::dense(x), y };
        l.validate()?;
        Ok(l)
    }

    pub fn glm(x: DenseMatrix, family: GlmFamily, y: Vec<f64>) -> Result<Self> {
        let l = LossSpec::Glm { x, family, y };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LossSpec::Quadratic { design, y } => {
                check_len("quadratic responses", design.nrows(), y.len())?;
                check_finite("responses", y)?;
                if let Design::Dense { x } = design {
                    if !x.is_finite() {
                        return Err(Error::NonFinite("design"));
                    }
                }
                if let Design::Sampling { dim, indices } = design {
                    if indices.iter().any(|&i| i >= *dim) {
                        return Err(Error::InvalidArgument("sampling index out of range".into()));
                    }
                }
            }
            LossSpec::Glm { x, family, y } => {
                check_len("glm responses", x.rows(), y.len())?;
                check_finite("responses", y)?;
                if !x.is_finite() {
                    return Err(Error::NonFinite("design"));
                }
                match family {
                    GlmFamily::Poisson if y.iter().any(|&v| v < 0.0) => {
                        return Err(Error::InvalidArgument("poisson responses must be nonnegative".into()))
                    }
                    GlmFamily::Logistic if y.iter().any(|&v| v != 1.0 && v != -1.0) => {
                        return Err(Error::InvalidArgument("logistic labels must be ±1".into()))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            LossSpec::Quadratic { design, .. } => design.ncols(),
            LossSpec::Glm { x, .. } => x.cols(),
        }
    }

    pub fn n_obs(&self) -> usize {
        match self {
            LossSpec::Quadratic { design, .. } => design.nrows(),
            LossSpec::Glm { x, .. } => x.rows(),
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, LossSpec::Quadratic { .. })
    }

    /// Linear predictors `Xβ`.
    pub fn predictors(&self, beta: &[f64]) -> Vec<f64> {
        match self {
            LossSpec::Quadratic { design, .. } => design.apply(beta),
            LossSpec::Glm { x, .. } => x.matvec(beta),
        }
    }

    fn apply_t(&self, r: &[f64]) -> Vec<f64> {
        match self {
            LossSpec::Quadratic { design, .. } => design.apply_t(r),
            LossSpec::Glm { x, .. } => x.tmatvec(r),
        }
    }

    /// True when some GLM predictor hit the ±500 clamp.
    pub fn is_saturated(&self, beta: &[f64]) -> bool {
        match self {
            LossSpec::Quadratic { .. } => false,
            LossSpec::Glm { family: GlmFamily::Squared, .. } => false,
            LossSpec::Glm { .. } => norm_inf(&self.predictors(beta)) > SATURATION,
        }
    }

    pub fn value(&self, beta: &[f64]) -> Result<f64> {
        check_len("loss argument", self.dim(), beta.len())?;
        let t = self.predictors(beta);
        Ok(match self {
            LossSpec::Quadratic { y, .. } => t.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
            LossSpec::Glm { family, y, .. } => t.iter().zip(y).map(|(&ti, &yi)| family.value(ti, yi)).sum(),
        })
    }

    pub fn gradient(&self, beta: &[f64]) -> Result<Vec<f64>> {
        check_len("loss argument", self.dim(), beta.len())?;
        let t = self.predictors(beta);
        let w: Vec<f64> = match self {
            LossSpec::Quadratic { y, .. } => t.iter().zip(y).map(|(a, b)| 2.0 * (a - b)).collect(),
            LossSpec::Glm { family, y, .. } => t.iter().zip(y).map(|(&ti, &yi)| family.derivative(ti, yi)).collect(),
        };
        Ok(self.apply_t(&w))
    }

    /// Value and gradient from one pass over the predictors.
    pub fn value_and_gradient(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        let t = self.predictors(beta);
        let (v, w): (f64, Vec<f64>) = match self {
            LossSpec::Quadratic { y, .. } => {
                let r: Vec<f64> = t.iter().zip(y).map(|(a, b)| a - b).collect();
                (dot(&r, &r), r.iter().map(|x| 2.0 * x).collect())
            }
            LossSpec::Glm { family, y, .. } => (
                t.iter().zip(y).map(|(&ti, &yi)| family.value(ti, yi)).sum(),
                t.iter().zip(y).map(|(&ti, &yi)| family.derivative(ti, yi)).collect(),
            ),
        };
        (v, self.apply_t(&w))
    }

    /// Per-row second derivatives `ℓ_i″(⟨x_i, β⟩)`.
    pub fn curvature_weights(&self, beta: &[f64]) -> Result<Vec<f64>> {
        check_len("loss argument", self.dim(), beta.len())?;
        Ok(match self {
            LossSpec::Quadratic { design, .. } => vec![2.0; design.nrows()],
            LossSpec::Glm { family, .. } => self.predictors(beta).into_iter().map(|t| family.curvature(t)).collect(),
        })
    }

    /// `∇²L(β) v`.
    pub fn hessian_apply(&self, beta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let w = self.curvature_weights(beta)?;
        let xv = self.predictors(v);
        Ok(self.apply_t(&xv.iter().zip(&w).map(|(a, b)| a * b).collect::<Vec<_>>()))
    }

    /// Dense `∇²L(β)`.
    pub fn hessian(&self, beta: &[f64]) -> Result<DenseMatrix> {
        let w = self.curvature_weights(beta)?;
        let x = match self {
            LossSpec::Quadratic { design, .. } => design.to_dense(),
            LossSpec::Glm { x, .. } => x.clone(),
        };
        let p = x.cols();
        let mut h = DenseMatrix::zeros(p, p);
        for i in 0..x.rows() {
            let r = x.row(i);
            for a in 0..p {
                if r[a] == 0.0 {
                    continue;
                }
                for b in 0..p {
                    h.set(a, b, h.get(a, b) + w[i] * r[a] * r[b]);
                }
            }
        }
        Ok(h)
    }

    /// `H = XᵀX` of the quadratic form.
    pub fn quadratic_h(&self) -> Result<DenseMatrix> {
        match self {
            LossSpec::Quadratic { design, .. } => Ok(design.gram()),
            _ => Err(Error::Unsupported("H is defined for quadratic losses only".into())),
        }
    }

    /// `H v` for the quadratic loss (never materializing `H`).
    pub fn h_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            LossSpec::Quadratic { design, .. } => Ok(design.gram_apply(v)),
            _ => Err(Error::Unsupported("H is defined for quadratic losses only".into())),
        }
    }

    pub fn design(&self) -> Option<&Design> {
        match self {
            LossSpec::Quadratic { design, .. } => Some(design),
            LossSpec::Glm { .. } => None,
        }
    }

    /// `D_L(a, b)` computed row by row to avoid differencing whole losses.
    pub fn bregman_divergence(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_len("bregman", self.dim(), a.len())?;
        check_len("bregman", self.dim(), b.len())?;
        Ok(match self {
            LossSpec::Quadratic { design, .. } => {
                let d = design.apply(&sub(a, b));
                dot(&d, &d)
            }
            LossSpec::Glm { family, y, .. } => {
                let (ta, tb) = (self.predictors(a), self.predictors(b));
                ta.iter()
                    .zip(&tb)
                    .zip(y)
                    .map(|((&s, &t), &yi)| match family {
                        GlmFamily::Squared => (s - t) * (s - t),
                        _ => family.value(s, yi) - family.value(t, yi) - family.derivative(t, yi) * (s - t),
                    })
                    .sum()
            }
        })
    }

    pub fn bregman(&self, a: &[f64], b: &[f64]) -> Result<BregmanTriple> {
        let forward = self.bregman_divergence(a, b)?;
        let reverse = self.bregman_divergence(b, a)?;
        Ok(BregmanTriple { forward, reverse, symmetric: forward + reverse })
    }

    pub fn kappa(&self) -> f64 {
        match self {
            LossSpec::Quadratic { .. } => 0.0,
            LossSpec::Glm { family, .. } => family.kappa(),
        }
    }

    /// `max_i |⟨x_i, β⟩|`.
    pub fn amplitude(&self, beta: &[f64]) -> f64 {
        norm_inf(&self.predictors(beta))
    }
}

pub fn kappa(loss: &LossSpec) -> f64 {
    loss.kappa()
}

/// `γ` such that `D_L(β̄, β) ≥ γ D_L(β, β̄)` whenever all predictors lie in `[−A, A]`.
pub fn convexity_ratio_gamma(loss: &LossSpec, amplitude: f64) -> Result<f64> {
    if !(amplitude >= 0.0) {
        return Err(Error::InvalidArgument("amplitude must be nonnegative".into()));
    }
    Ok(match loss {
        LossSpec::Quadratic { .. } => 1.0,
        LossSpec::Glm { family, .. } => family.convexity_ratio(amplitude),
    })
}

/// `η(β*) = ‖∇L(β*)‖_{R,D}`.
pub fn noise_level_eta(loss: &LossSpec, beta_star: &[f64], reg: &RegularizerSpec) -> Result<f64> {
    reg.dual_norm(&loss.gradient(beta_star)?)
}

/// `inf_{ū ∈ ∂R(β̄)} ‖∇L(β*) + ū‖_D` (an upper bound on the penalty level).
///
/// For the mixed norm the infimum runs over the interior certificate set
/// with `η = 1`, a subset of `∂R(β̄)`, so the value remains an upper bound.
pub fn penalty_level_lambda(
    loss: &LossSpec,
    anchor: &[f64],
    beta_star: &[f64],
    reg: &RegularizerSpec,
    norm: &NormDescriptor,
) -> Result<f64> {
    let frame = reg.certificate_frame(anchor, 1.0)?;
    frame.certificate_distance(&loss.gradient(beta_star)?, norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, seeded};

    #[test]
    fn quadratic_identity_example() {
        let l = LossSpec::quadratic(DenseMatrix::identity(3), vec![0.0; 3]).unwrap();
        let b = [1.0, -2.0, 0.5];
        assert_eq!(l.value(&b).unwrap(), 5.25);
        assert_eq!(l.gradient(&b).unwrap(), vec![2.0, -4.0, 1.0]);
        assert_eq!(l.bregman_divergence(&b, &[0.0; 3]).unwrap(), 5.25);
        assert_eq!(l.bregman_divergence(&b, &b).unwrap(), 0.0);
    }

    #[test]
    fn curvature_examples() {
        let x = DenseMatrix::from_rows(&[vec![1.0]]).unwrap();
        let l = LossSpec::glm(x.clone(), GlmFamily::Logistic, vec![1.0]).unwrap();
        assert_eq!(l.curvature_weights(&[0.0]).unwrap(), vec![0.25]);
        let p = LossSpec::glm(x, GlmFamily::Poisson, vec![2.0]).unwrap();
        assert_eq!(p.curvature_weights(&[0.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn kappa_and_gamma_values() {
        assert_eq!(GlmFamily::Logistic.kappa(), 1.0);
        assert_eq!(GlmFamily::Squared.kappa(), 0.0);
        assert_eq!(GlmFamily::Logistic.convexity_ratio(0.0), 1.0);
        assert_eq!(GlmFamily::Squared.convexity_ratio(3.0), 1.0);
        assert!((GlmFamily::Logistic.convexity_ratio(1.0) - 0.786_448).abs() < 1e-5);
    }

    #[test]
    fn kappa_dominates_log_curvature_slopes() {
        for family in [GlmFamily::Logistic, GlmFamily::Poisson, GlmFamily::Squared] {
            let grid: Vec<f64> = (0..=400).map(|i| -10.0 + 0.05 * i as f64).collect();
            let mut worst = 0.0_f64;
            for (a, &t) in grid.iter().enumerate() {
                for &s in &grid[a + 1..] {
                    let slope = (family.curvature(t).ln() - family.curvature(s).ln()).abs() / (t - s).abs();
                    worst = worst.max(slope);
                }
            }
            assert!(worst <= family.kappa() + 1e-6, "{family:?}: {worst}");
        }
    }

    #[test]
    fn saturation_is_flagged() {
        let x = DenseMatrix::from_rows(&[vec![1.0]]).unwrap();
        let p = LossSpec::glm(x, GlmFamily::Poisson, vec![0.0]).unwrap();
        assert!(p.is_saturated(&[600.0]));
        assert!(p.value(&[600.0]).unwrap().is_finite());
        assert!(!p.is_saturated(&[3.0]));
    }

    #[test]
    fn rejects_bad_responses() {
        let x = DenseMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(LossSpec::glm(x.clone(), GlmFamily::Poisson, vec![-1.0]).is_err());
        assert!(LossSpec::glm(x, GlmFamily::Logistic, vec![0.5]).is_err());
    }

    #[test]
    fn noise_and_penalty_level_examples() {
        let l = LossSpec::quadratic(DenseMatrix::identity(2), vec![0.0, 0.0]).unwrap();
        let reg = RegularizerSpec::Lasso { lambda: 1.0 };
        assert_eq!(noise_level_eta(&l, &[0.0, 0.0], &reg).unwrap(), 0.0);
        // gradient at β* = (1.5, −0.5) is (3, −1)
        assert_eq!(noise_level_eta(&l, &[1.5, -0.5], &reg).unwrap(), 3.0);
        let anchor = [1.0, 0.0, -2.0, 0.0];
        let l4 = LossSpec::quadratic(DenseMatrix::identity(4), vec![0.0; 4]).unwrap();
        let lam = penalty_level_lambda(&l4, &anchor, &[0.0; 4], &reg, &NormDescriptor::L2).unwrap();
        assert!((lam - 2f64.sqrt()).abs() < 1e-15);
        // off-support gradient inside the box contributes nothing
        let lam = penalty_level_lambda(&l4, &anchor, &[0.0, 0.3, 0.0, -0.2], &reg, &NormDescriptor::L2).unwrap();
        assert!((lam - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn penalty_level_matches_grid_oracle() {
        let mut rng = seeded(21);
        let x = DenseMatrix::from_row_major(5, 3, normal_vec(&mut rng, 15)).unwrap();
        let l = LossSpec::quadratic(x, normal_vec(&mut rng, 5)).unwrap();
        let reg = RegularizerSpec::Lasso { lambda: 0.8 };
        let anchor = [1.0, 0.0, 0.0];
        let bstar = normal_vec(&mut rng, 3);
        let g = l.gradient(&bstar).unwrap();
        let got = penalty_level_lambda(&l, &anchor, &bstar, &reg, &NormDescriptor::L2).unwrap();
        let n = 2000;
        let mut best = f64::INFINITY;
        for a in 0..=n {
            for b in 0..=n {
                let u1 = -0.8 + 1.6 * a as f64 / n as f64;
                let u2 = -0.8 + 1.6 * b as f64 / n as f64;
                let v = ((g[0] + 0.8).powi(2) + (g[1] + u1).powi(2) + (g[2] + u2).powi(2)).sqrt();
                best = best.min(v);
            }
        }
        assert!(got <= best + 1e-12 && best - got <= 1e-3);
    }
}
