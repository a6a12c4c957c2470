//! Structured-ℓ1 regularizers: lasso, group lasso, nuclear norm and the
//! ℓ1 / group-ℓ1 infimal convolution, together with the certificate frames
//! (sign element, interior parameter, B-seminorm) and tangent spaces built
//! around a sparse anchor.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg::{axpy, dot, norm1, norm2, norm_inf, orthonormal_complement, scale, sub, svd, DenseMatrix};

/// Entries (or singular values) below `DEFAULT_SUPPORT_TOL · max` count as zero.
pub const DEFAULT_SUPPORT_TOL: f64 = 1e-10;

/// Disjoint equal-size groups covering `0..p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GroupsRepr", into = "GroupsRepr")]
pub struct GroupStructure {
    p: usize,
    m: usize,
    groups: Vec<Vec<usize>>,
    owner: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct GroupsRepr {
    groups: Vec<Vec<usize>>,
}

impl TryFrom<GroupsRepr> for GroupStructure {
    type Error = Error;
    fn try_from(r: GroupsRepr) -> Result<Self> {
        GroupStructure::new(r.groups)
    }
}

impl From<GroupStructure> for GroupsRepr {
    fn from(g: GroupStructure) -> Self {
        GroupsRepr { groups: g.groups }
    }
}

impl GroupStructure {
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let q = groups.len();
        if q == 0 {
            return Err(Error::InvalidArgument("at least one group is required".into()));
        }
        let m = groups[0].len();
        if m == 0 || groups.iter().any(|g| g.len() != m) {
            return Err(Error::InvalidArgument("groups must be non-empty and of equal size".into()));
        }
        let p = q * m;
        let mut owner = vec![usize::MAX; p];
        for (j, g) in groups.iter().enumerate() {
            for &i in g {
                if i >= p || owner[i] != usize::MAX {
                    return Err(Error::InvalidArgument(format!("groups do not partition 0..{p} (index {i})")));
                }
                owner[i] = j;
            }
        }
        Ok(GroupStructure { p, m, groups, owner })
    }

    /// `q` consecutive blocks of size `m`.
    pub fn contiguous(q: usize, m: usize) -> Result<Self> {
        Self::new((0..q).map(|j| (j * m..(j + 1) * m).collect()).collect())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, j: usize) -> &[usize] {
        &self.groups[j]
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.owner[i]
    }

    pub fn gather(&self, j: usize, v: &[f64]) -> Vec<f64> {
        self.groups[j].iter().map(|&i| v[i]).collect()
    }

    pub fn group_norm(&self, j: usize, v: &[f64]) -> f64 {
        self.groups[j].iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt()
    }

    /// `Σ_j ‖v_Γj‖₂`.
    pub fn norm_l1(&self, v: &[f64]) -> f64 {
        (0..self.q()).map(|j| self.group_norm(j, v)).sum()
    }

    /// `max_j ‖v_Γj‖₂`.
    pub fn norm_linf(&self, v: &[f64]) -> f64 {
        (0..self.q()).map(|j| self.group_norm(j, v)).fold(0.0, f64::max)
    }
}

/// The four supported regularizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerSpec {
    Lasso { lambda: f64 },
    Group { lambda: f64, groups: GroupStructure },
    /// Nuclear norm on `rows × cols` matrices stored row-major.
    Nuclear { lambda: f64, rows: usize, cols: usize },
    /// `inf_{β=β′+β″} λ₁‖β′‖₁ + λ_Γ‖β″‖_{Γ,1}`.
    Mixed { lambda1: f64, lambda_group: f64, groups: GroupStructure },
}

/// Outcome of a subgradient membership test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgradientCheck {
    pub holds: bool,
    /// `1 − dual_norm(u)`; negative when `u` leaves the dual ball.
    pub margin: f64,
    /// `|⟨u,β⟩ − R(β)| / max(1, R(β))`.
    pub alignment_gap: f64,
}

impl SubgradientCheck {
    /// Combined violation, zero iff `u ∈ ∂R(β)`.
    pub fn residual(&self) -> f64 {
        (-self.margin).max(0.0) + self.alignment_gap
    }
}

impl RegularizerSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            RegularizerSpec::Lasso { lambda } | RegularizerSpec::Group { lambda, .. } => *lambda > 0.0 && lambda.is_finite(),
            RegularizerSpec::Nuclear { lambda, rows, cols } => *lambda > 0.0 && lambda.is_finite() && *rows > 0 && *cols > 0,
            RegularizerSpec::Mixed { lambda1, lambda_group, .. } => {
                *lambda1 > 0.0 && *lambda_group > 0.0 && lambda1.is_finite() && lambda_group.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("regularizer weights must be positive and finite".into()))
        }
    }

    /// Required parameter length, if the variant fixes one.
    pub fn expected_dim(&self) -> Option<usize> {
        match self {
            RegularizerSpec::Lasso { .. } => None,
            RegularizerSpec::Group { groups, .. } | RegularizerSpec::Mixed { groups, .. } => Some(groups.p()),
            RegularizerSpec::Nuclear { rows, cols, .. } => Some(rows * cols),
        }
    }

    pub fn check_shape(&self, v: &[f64]) -> Result<()> {
        if let Some(d) = self.expected_dim() {
            check_len("regularizer argument", d, v.len())?;
        }
        Ok(())
    }

    pub fn value(&self, beta: &[f64]) -> Result<f64> {
        self.check_shape(beta)?;
        Ok(match self {
            RegularizerSpec::Lasso { lambda } => lambda * norm1(beta),
            RegularizerSpec::Group { lambda, groups } => lambda * groups.norm_l1(beta),
            RegularizerSpec::Nuclear { lambda, rows, cols } => {
                lambda * svd(&as_matrix(beta, *rows, *cols)?)?.s.iter().sum::<f64>()
            }
            RegularizerSpec::Mixed { lambda1, lambda_group, groups } => {
                (0..groups.q()).map(|j| mixed_group_value(&groups.gather(j, beta), *lambda1, *lambda_group)).sum()
            }
        })
    }

    /// `argmin_β ½‖β − v‖² + t·R(β)`.
    pub fn prox(&self, v: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_shape(v)?;
        if !(t > 0.0) {
            return Err(Error::InvalidArgument("prox step must be positive".into()));
        }
        Ok(match self {
            RegularizerSpec::Lasso { lambda } => v.iter().map(|&x| soft_threshold(x, t * lambda)).collect(),
            RegularizerSpec::Group { lambda, groups } => {
                let mut out = v.to_vec();
                for j in 0..groups.q() {
                    let nrm = groups.group_norm(j, v);
                    let f = if nrm > t * lambda { 1.0 - t * lambda / nrm } else { 0.0 };
                    for &i in groups.group(j) {
                        out[i] = f * v[i];
                    }
                }
                out
            }
            RegularizerSpec::Nuclear { lambda, rows, cols } => svt(v, *rows, *cols, t * lambda)?,
            RegularizerSpec::Mixed { lambda1, lambda_group, groups } => {
                // Moreau: prox = v − Π onto t·{|u_i| ≤ λ₁, ‖u_Γj‖ ≤ λ_Γ}, exact per group.
                let mut out = v.to_vec();
                for j in 0..groups.q() {
                    let w = groups.gather(j, v);
                    let pr = project_box_ball(&w, t * lambda1, t * lambda_group);
                    for (k, &i) in groups.group(j).iter().enumerate() {
                        out[i] = v[i] - pr[k];
                    }
                }
                out
            }
        })
    }

    /// Prox for the mixed norm returning the optimal split `(β′, β″)` of
    /// the joint problem `min ½‖β′+β″−v‖² + t(λ₁‖β′‖₁ + λ_Γ‖β″‖_{Γ,1})`.
    pub fn prox_mixed_split(&self, v: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            RegularizerSpec::Mixed { lambda1, lambda_group, groups } => {
                let beta = self.prox(v, t)?;
                Ok(mixed_decompose(*lambda1, *lambda_group, groups, &beta))
            }
            _ => Err(Error::Unsupported("split prox is only defined for the mixed norm".into())),
        }
    }

    pub fn dual_norm(&self, u: &[f64]) -> Result<f64> {
        self.check_shape(u)?;
        Ok(match self {
            RegularizerSpec::Lasso { lambda } => norm_inf(u) / lambda,
            RegularizerSpec::Group { lambda, groups } => groups.norm_linf(u) / lambda,
            RegularizerSpec::Nuclear { lambda, rows, cols } => {
                svd(&as_matrix(u, *rows, *cols)?)?.s.first().copied().unwrap_or(0.0) / lambda
            }
            RegularizerSpec::Mixed { lambda1, lambda_group, groups } => {
                (norm_inf(u) / lambda1).max(groups.norm_linf(u) / lambda_group)
            }
        })
    }

    /// Membership test `u ∈ ∂R(β)` via dual feasibility and alignment.
    pub fn is_subgradient(&self, beta: &[f64], u: &[f64]) -> Result<SubgradientCheck> {
        check_len("is_subgradient", beta.len(), u.len())?;
        let dn = self.dual_norm(u)?;
        let r = self.value(beta)?;
        let gap = (dot(u, beta) - r).abs() / r.max(1.0);
        Ok(SubgradientCheck { holds: dn <= 1.0 + 1e-8 && gap <= 1e-8, margin: 1.0 - dn, alignment_gap: gap })
    }

    pub fn certificate_frame(&self, anchor: &[f64], eta: f64) -> Result<CertificateFrame> {
        CertificateFrame::new(self, anchor, eta, DEFAULT_SUPPORT_TOL)
    }
}

pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

pub fn as_matrix(v: &[f64], rows: usize, cols: usize) -> Result<DenseMatrix> {
    DenseMatrix::from_row_major(rows, cols, v.to_vec())
}

/// Singular value soft-thresholding at level `tau`.
pub fn svt(v: &[f64], rows: usize, cols: usize, tau: f64) -> Result<Vec<f64>> {
    let f = svd(&as_matrix(v, rows, cols)?)?;
    let s: Vec<f64> = f.s.iter().map(|&s| (s - tau).max(0.0)).collect();
    Ok(low_rank(&f.u, &s, &f.v))
}

/// `U diag(s) Vᵀ` flattened row-major.
fn low_rank(u: &DenseMatrix, s: &[f64], v: &DenseMatrix) -> Vec<f64> {
    let (m, n) = (u.rows(), v.rows());
    let mut out = vec![0.0; m * n];
    for (k, &sk) in s.iter().enumerate() {
        if sk == 0.0 {
            continue;
        }
        for i in 0..m {
            let a = sk * u.get(i, k);
            if a == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += a * v.get(j, k);
            }
        }
    }
    out
}

/// Singular values clipped at `tau` (Euclidean projection onto the spectral ball).
fn clip_singular(v: &[f64], rows: usize, cols: usize, tau: f64) -> Result<Vec<f64>> {
    let f = svd(&as_matrix(v, rows, cols)?)?;
    let s: Vec<f64> = f.s.iter().map(|&s| s.min(tau)).collect();
    Ok(low_rank(&f.u, &s, &f.v))
}

/// Generalized sign: each group scaled to unit ℓ2 norm, zero groups stay zero.
pub fn sign_generalized(beta: &[f64], groups: &GroupStructure) -> Vec<f64> {
    let mut out = vec![0.0; beta.len()];
    for j in 0..groups.q() {
        let nrm = groups.group_norm(j, beta);
        if nrm > 0.0 {
            for &i in groups.group(j) {
                out[i] = beta[i] / nrm;
            }
        }
    }
    out
}

/// Clip level `θ > 0` with `‖clip(b, θ)‖₂ = ρ θ`, or `None` when
/// `ρ² ≥ nnz(b)` (the pure-ℓ1 split is optimal, ties included).
fn clip_level(b: &[f64], rho: f64) -> Option<f64> {
    let mut a: Vec<f64> = b.iter().map(|x| x.abs()).filter(|&x| x > 0.0).collect();
    let k = a.len();
    if rho * rho >= k as f64 {
        return None;
    }
    a.sort_by(|x, y| y.total_cmp(x));
    let mut tail: f64 = a.iter().map(|x| x * x).sum();
    // j entries clipped: j θ² + tail_j = ρ² θ².
    for j in 0..k {
        if j > 0 {
            tail -= a[j - 1] * a[j - 1];
        }
        let denom = rho * rho - j as f64;
        if denom <= 0.0 {
            break;
        }
        let theta = (tail.max(0.0) / denom).sqrt();
        let upper = if j == 0 { f64::INFINITY } else { a[j - 1] };
        if theta <= upper * (1.0 + 1e-15) && theta >= a[j] * (1.0 - 1e-15) {
            return Some(theta);
        }
    }
    // Rounding fallback: bisection on the monotone ratio ‖clip(b,θ)‖/θ.
    let ratio = |theta: f64| a.iter().map(|&x| x.min(theta).powi(2)).sum::<f64>().sqrt() / theta;
    let (mut lo, mut hi) = (0.0_f64, a[0]);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 {
            break;
        }
        if ratio(mid) > rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn clip(b: &[f64], theta: f64) -> Vec<f64> {
    b.iter().map(|&x| x.signum() * x.abs().min(theta)).collect()
}

/// Optimal split of one group block: returns `(β′, β″)`.
pub fn mixed_group_split(b: &[f64], lambda1: f64, lambda_group: f64) -> (Vec<f64>, Vec<f64>) {
    match clip_level(b, lambda_group / lambda1) {
        None => (b.to_vec(), vec![0.0; b.len()]),
        Some(theta) => {
            let second = clip(b, theta);
            (sub(b, &second), second)
        }
    }
}

/// `min_{β′+β″=b} λ₁‖β′‖₁ + λ_Γ‖β″‖₂` for a single block.
pub fn mixed_group_value(b: &[f64], lambda1: f64, lambda_group: f64) -> f64 {
    let (first, second) = mixed_group_split(b, lambda1, lambda_group);
    lambda1 * norm1(&first) + lambda_group * norm2(&second)
}

/// Optimal decomposition `β = β′ + β″` of the mixed norm; ties favour `β″ = 0`.
pub fn mixed_decompose(lambda1: f64, lambda_group: f64, groups: &GroupStructure, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut first = vec![0.0; beta.len()];
    let mut second = vec![0.0; beta.len()];
    for j in 0..groups.q() {
        let (f, s) = mixed_group_split(&groups.gather(j, beta), lambda1, lambda_group);
        for (k, &i) in groups.group(j).iter().enumerate() {
            first[i] = f[k];
            second[i] = s[k];
        }
    }
    (first, second)
}

/// Euclidean projection onto `{u : |u_i| ≤ a, ‖u‖₂ ≤ r}`.
///
/// The minimizer has the form `clip(s·w, a)` with `s ∈ (0, 1]` chosen so the
/// ball constraint is tight whenever it is active.
pub fn project_box_ball(w: &[f64], a: f64, r: f64) -> Vec<f64> {
    let boxed = clip(w, a);
    if norm2(&boxed) <= r {
        return boxed;
    }
    let mut c: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    c.sort_by(|x, y| y.total_cmp(x));
    let mut tail: f64 = c.iter().map(|x| x * x).sum();
    let mut found = None;
    for j in 0..c.len() {
        if j > 0 {
            tail -= c[j - 1] * c[j - 1];
        }
        let num = r * r - j as f64 * a * a;
        if num < 0.0 || tail <= 0.0 {
            break;
        }
        let s = (num / tail).sqrt();
        let upper_ok = j == 0 || s * c[j - 1] >= a * (1.0 - 1e-15);
        let lower_ok = s * c[j] <= a * (1.0 + 1e-15);
        if upper_ok && lower_ok && s <= 1.0 {
            found = Some(s);
            break;
        }
    }
    let s = found.unwrap_or_else(|| {
        let norm_at = |s: f64| c.iter().map(|&x| (s * x).min(a).powi(2)).sum::<f64>().sqrt();
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm_at(mid) > r {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    });
    w.iter().map(|&x| (s * x).clamp(-a, a)).collect()
}

/// Tangent space of a certificate frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TangentSpace {
    /// Coordinates `support` of `R^dim`.
    Coordinate { dim: usize, support: Vec<usize> },
    /// Union of the active groups.
    Group { groups: GroupStructure, active: Vec<usize> },
    /// `{UAᵀ + BVᵀ}` for column-orthonormal `U (rows×r)`, `V (cols×r)`.
    Matrix { rows: usize, cols: usize, u: DenseMatrix, v: DenseMatrix },
}

impl TangentSpace {
    pub fn ambient_dim(&self) -> usize {
        match self {
            TangentSpace::Coordinate { dim, .. } => *dim,
            TangentSpace::Group { groups, .. } => groups.p(),
            TangentSpace::Matrix { rows, cols, .. } => rows * cols,
        }
    }

    /// `dim T`.
    pub fn dim(&self) -> usize {
        match self {
            TangentSpace::Coordinate { support, .. } => support.len(),
            TangentSpace::Group { groups, active } => active.len() * groups.m(),
            TangentSpace::Matrix { rows, cols, u, .. } => {
                let r = u.cols();
                r * (rows + cols - r)
            }
        }
    }

    /// Sorted coordinate support for coordinate-type spaces.
    pub fn coordinates(&self) -> Option<Vec<usize>> {
        match self {
            TangentSpace::Coordinate { support, .. } => Some(support.clone()),
            TangentSpace::Group { groups, active } => {
                let mut c: Vec<usize> = active.iter().flat_map(|&j| groups.group(j).iter().copied()).collect();
                c.sort_unstable();
                Some(c)
            }
            TangentSpace::Matrix { .. } => None,
        }
    }

    /// `P_T β`.
    pub fn project_t(&self, beta: &[f64]) -> Vec<f64> {
        match self {
            TangentSpace::Matrix { rows, cols, u, v } => {
                let (p, q) = (*rows, *cols);
                let b = DenseMatrix::from_fn(p, q, |i, j| beta[i * q + j]);
                // UUᵀβ + βVVᵀ − UUᵀβVVᵀ = UUᵀβ + (I − UUᵀ)βVVᵀ
                let ut_b = u.transpose().matmul(&b);
                let uu_b = u.matmul(&ut_b);
                let resid = b.sub(&uu_b);
                let rv = resid.matmul(v).matmul(&v.transpose());
                let mut out = uu_b.into_data();
                axpy(1.0, rv.data(), &mut out);
                out
            }
            _ => {
                let mut out = vec![0.0; beta.len()];
                for i in self.coordinates().unwrap() {
                    out[i] = beta[i];
                }
                out
            }
        }
    }

    /// `P_T^⊥ β = β − P_T β`.
    pub fn project_perp(&self, beta: &[f64]) -> Vec<f64> {
        sub(beta, &self.project_t(beta))
    }

    /// `(P_T β, P_T^⊥ β)` with the two parts summing to `β` exactly.
    pub fn project(&self, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let t = self.project_t(beta);
        let perp = sub(beta, &t);
        (t, perp)
    }

    /// Orthonormal basis of `T` as columns of an `ambient × dim T` matrix.
    pub fn basis(&self) -> DenseMatrix {
        match self {
            TangentSpace::Matrix { rows, cols, u, v } => {
                let (p, q, r) = (*rows, *cols, u.cols());
                let w = orthonormal_complement(u);
                let mut columns = Vec::with_capacity(self.dim());
                for k in 0..r {
                    for c in 0..q {
                        let mut e = vec![0.0; p * q];
                        for i in 0..p {
                            e[i * q + c] = u.get(i, k);
                        }
                        columns.push(e);
                    }
                }
                for l in 0..w.cols() {
                    for k in 0..r {
                        let mut e = vec![0.0; p * q];
                        for i in 0..p {
                            for c in 0..q {
                                e[i * q + c] = w.get(i, l) * v.get(c, k);
                            }
                        }
                        columns.push(e);
                    }
                }
                DenseMatrix::from_columns(p * q, &columns)
            }
            _ => {
                let d = self.ambient_dim();
                let coords = self.coordinates().unwrap();
                DenseMatrix::from_fn(d, coords.len(), |i, j| if coords[j] == i { 1.0 } else { 0.0 })
            }
        }
    }
}

/// The frame-specific data behind the certificate set `G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrameKind {
    /// Lasso: `‖β‖_B = λ‖β_{S^c}‖₁`.
    Coordinate { lambda: f64, support: Vec<usize> },
    /// Group lasso: `‖β‖_B = λ‖β_{S^c}‖_{Γ,1}` over inactive groups.
    Group { lambda: f64, groups: GroupStructure, active: Vec<usize> },
    /// Nuclear norm: `‖β‖_B = λ‖P_T^⊥ β‖_*`.
    Matrix { lambda: f64, rows: usize, cols: usize, u: DenseMatrix, v: DenseMatrix },
    /// Mixed norm with support `S₁ = supp(β̄) ∪ S_Γ` and group set `S_Γ`.
    Mixed { lambda1: f64, lambda_group: f64, groups: GroupStructure, support: Vec<usize>, active_groups: Vec<usize> },
}

/// Anchor `β̄`, sign element `e_S(W)`, interior parameter `η` and B-seminorm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateFrame {
    pub anchor: Vec<f64>,
    pub sign: Vec<f64>,
    pub eta: f64,
    pub kind: FrameKind,
}

/// Dual-norm choices for certificate-set distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormDescriptor {
    L2,
    LInf,
    GroupLInf { groups: GroupStructure },
}

fn detect_support(beta: &[f64], tol: f64) -> Vec<usize> {
    let mx = norm_inf(beta);
    if mx == 0.0 {
        return Vec::new();
    }
    (0..beta.len()).filter(|&i| beta[i].abs() > tol * mx).collect()
}

fn detect_groups(beta: &[f64], groups: &GroupStructure, tol: f64) -> Vec<usize> {
    let norms: Vec<f64> = (0..groups.q()).map(|j| groups.group_norm(j, beta)).collect();
    let mx = norms.iter().copied().fold(0.0, f64::max);
    if mx == 0.0 {
        return Vec::new();
    }
    (0..groups.q()).filter(|&j| norms[j] > tol * mx).collect()
}

fn complement_mask(dim: usize, support: &[usize]) -> Vec<bool> {
    let mut on = vec![false; dim];
    for &i in support {
        on[i] = true;
    }
    on
}

impl CertificateFrame {
    /// Frame of `R` at `anchor`. Support and rank use the relative tolerance `tol`.
    pub fn new(reg: &RegularizerSpec, anchor: &[f64], eta: f64, tol: f64) -> Result<Self> {
        reg.validate()?;
        reg.check_shape(anchor)?;
        check_finite("frame anchor", anchor)?;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidArgument(format!("eta must lie in (0, 1], got {eta}")));
        }
        let d = anchor.len();
        let (sign, kind) = match reg {
            RegularizerSpec::Lasso { lambda } => {
                let support = detect_support(anchor, tol);
                let mut sign = vec![0.0; d];
                for &i in &support {
                    sign[i] = lambda * anchor[i].signum();
                }
                (sign, FrameKind::Coordinate { lambda: *lambda, support })
            }
            RegularizerSpec::Group { lambda, groups } => {
                let active = detect_groups(anchor, groups, tol);
                let mut sign = vec![0.0; d];
                for &j in &active {
                    let nrm = groups.group_norm(j, anchor);
                    for &i in groups.group(j) {
                        sign[i] = lambda * anchor[i] / nrm;
                    }
                }
                (sign, FrameKind::Group { lambda: *lambda, groups: groups.clone(), active })
            }
            RegularizerSpec::Nuclear { lambda, rows, cols } => {
                let f = svd(&as_matrix(anchor, *rows, *cols)?)?;
                let r = f.rank(tol);
                if r > 0 && f.s[r - 1] <= 0.0 {
                    return Err(Error::Detection(format!("rank tolerance {tol:e} produced a zero singular value")));
                }
                let u = DenseMatrix::from_fn(*rows, r, |i, k| f.u.get(i, k));
                let v = DenseMatrix::from_fn(*cols, r, |i, k| f.v.get(i, k));
                let sign = scale(*lambda, &low_rank(&u, &vec![1.0; r], &v));
                (sign, FrameKind::Matrix { lambda: *lambda, rows: *rows, cols: *cols, u, v })
            }
            RegularizerSpec::Mixed { lambda1, lambda_group, groups } => {
                let support0 = detect_support(anchor, tol);
                let mut clean = vec![0.0; d];
                for &i in &support0 {
                    clean[i] = anchor[i];
                }
                let mut sign = vec![0.0; d];
                let mut active_groups = Vec::new();
                for j in 0..groups.q() {
                    let b = groups.gather(j, &clean);
                    let nnz = b.iter().filter(|x| **x != 0.0).count();
                    // S_Γ = {j : λ_Γ < 2λ₁‖sgn(β̄)_Γj‖₂}
                    if lambda_group * lambda_group < 4.0 * lambda1 * lambda1 * nnz as f64 {
                        active_groups.push(j);
                    }
                    let e: Vec<f64> = match clip_level(&b, lambda_group / lambda1) {
                        None => b.iter().map(|&x| if x != 0.0 { lambda1 * x.signum() } else { 0.0 }).collect(),
                        Some(theta) => clip(&b, theta).iter().map(|c| lambda1 * c / theta).collect(),
                    };
                    for (k, &i) in groups.group(j).iter().enumerate() {
                        sign[i] = e[k];
                    }
                }
                let mut on = complement_mask(d, &support0);
                for &j in &active_groups {
                    for &i in groups.group(j) {
                        on[i] = true;
                    }
                }
                let support = (0..d).filter(|&i| on[i]).collect();
                (
                    sign,
                    FrameKind::Mixed {
                        lambda1: *lambda1,
                        lambda_group: *lambda_group,
                        groups: groups.clone(),
                        support,
                        active_groups,
                    },
                )
            }
        };
        Ok(CertificateFrame { anchor: anchor.to_vec(), sign, eta, kind })
    }

    /// Frame with `T = R^dim` and `G = {0}`: no off-tangent freedom at all.
    pub fn unrestricted(dim: usize) -> Self {
        CertificateFrame {
            anchor: vec![0.0; dim],
            sign: vec![0.0; dim],
            eta: 1.0,
            kind: FrameKind::Coordinate { lambda: 1.0, support: (0..dim).collect() },
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidArgument(format!("eta must lie in (0, 1], got {eta}")));
        }
        self.eta = eta;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn tangent(&self) -> TangentSpace {
        let dim = self.dim();
        match &self.kind {
            FrameKind::Coordinate { support, .. } | FrameKind::Mixed { support, .. } => {
                TangentSpace::Coordinate { dim, support: support.clone() }
            }
            FrameKind::Group { groups, active, .. } => TangentSpace::Group { groups: groups.clone(), active: active.clone() },
            FrameKind::Matrix { rows, cols, u, v, .. } => {
                TangentSpace::Matrix { rows: *rows, cols: *cols, u: u.clone(), v: v.clone() }
            }
        }
    }

    /// Size of the support descriptor: `|S|`, number of active groups, or rank.
    pub fn support_size(&self) -> usize {
        match &self.kind {
            FrameKind::Coordinate { support, .. } | FrameKind::Mixed { support, .. } => support.len(),
            FrameKind::Group { active, .. } => active.len(),
            FrameKind::Matrix { u, .. } => u.cols(),
        }
    }

    /// Off-support coordinates grouped by the blocks that carry B-norm mass.
    fn off_blocks(&self) -> Vec<Vec<usize>> {
        match &self.kind {
            FrameKind::Coordinate { support, .. } => {
                let on = complement_mask(self.dim(), support);
                (0..self.dim()).filter(|&i| !on[i]).map(|i| vec![i]).collect()
            }
            FrameKind::Group { groups, active, .. } => {
                let mut is_active = vec![false; groups.q()];
                active.iter().for_each(|&j| is_active[j] = true);
                (0..groups.q()).filter(|&j| !is_active[j]).map(|j| groups.group(j).to_vec()).collect()
            }
            FrameKind::Mixed { groups, support, active_groups, .. } => {
                let on = complement_mask(self.dim(), support);
                let mut is_active = vec![false; groups.q()];
                active_groups.iter().for_each(|&j| is_active[j] = true);
                (0..groups.q())
                    .filter(|&j| !is_active[j])
                    .map(|j| groups.group(j).iter().copied().filter(|&i| !on[i]).collect::<Vec<_>>())
                    .filter(|b| !b.is_empty())
                    .collect()
            }
            FrameKind::Matrix { .. } => Vec::new(),
        }
    }

    /// `‖β‖_B`.
    pub fn b_norm(&self, beta: &[f64]) -> Result<f64> {
        check_len("b_norm", self.dim(), beta.len())?;
        Ok(match &self.kind {
            FrameKind::Coordinate { lambda, .. } => lambda * self.off_blocks().iter().map(|b| beta[b[0]].abs()).sum::<f64>(),
            FrameKind::Group { lambda, .. } => {
                lambda * self.off_blocks().iter().map(|b| b.iter().map(|&i| beta[i] * beta[i]).sum::<f64>().sqrt()).sum::<f64>()
            }
            FrameKind::Mixed { lambda1, lambda_group, .. } => self
                .off_blocks()
                .iter()
                .map(|b| mixed_group_value(&b.iter().map(|&i| beta[i]).collect::<Vec<_>>(), *lambda1, 0.5 * lambda_group))
                .sum(),
            FrameKind::Matrix { lambda, rows, cols, .. } => {
                let perp = self.tangent().project_perp(beta);
                lambda * svd(&as_matrix(&perp, *rows, *cols)?)?.s.iter().sum::<f64>()
            }
        })
    }

    /// `‖u‖_{B,D}`, which only sees the off-tangent part of `u`.
    pub fn b_dual_norm(&self, u: &[f64]) -> Result<f64> {
        check_len("b_dual_norm", self.dim(), u.len())?;
        Ok(match &self.kind {
            FrameKind::Coordinate { lambda, .. } => self.off_blocks().iter().map(|b| u[b[0]].abs()).fold(0.0, f64::max) / lambda,
            FrameKind::Group { lambda, .. } => {
                self.off_blocks().iter().map(|b| b.iter().map(|&i| u[i] * u[i]).sum::<f64>().sqrt()).fold(0.0, f64::max)
                    / lambda
            }
            FrameKind::Mixed { lambda1, lambda_group, .. } => {
                let mut worst = 0.0_f64;
                for b in self.off_blocks() {
                    let w: Vec<f64> = b.iter().map(|&i| u[i]).collect();
                    worst = worst.max(norm_inf(&w) / lambda1).max(norm2(&w) / (0.5 * lambda_group));
                }
                worst
            }
            FrameKind::Matrix { lambda, rows, cols, .. } => {
                let perp = self.tangent().project_perp(u);
                svd(&as_matrix(&perp, *rows, *cols)?)?.s.first().copied().unwrap_or(0.0) / lambda
            }
        })
    }

    /// Euclidean projection of `w` onto `radius·K`, where
    /// `K = {u ∈ T^⊥ : ‖u‖_{B,D} ≤ 1}`. The result lies in `T^⊥`.
    pub fn project_dual_ball(&self, w: &[f64], radius: f64) -> Result<Vec<f64>> {
        check_len("project_dual_ball", self.dim(), w.len())?;
        let mut out = vec![0.0; w.len()];
        match &self.kind {
            FrameKind::Coordinate { lambda, .. } => {
                let a = radius * lambda;
                for b in self.off_blocks() {
                    out[b[0]] = w[b[0]].clamp(-a, a);
                }
            }
            FrameKind::Group { lambda, .. } => {
                let a = radius * lambda;
                for b in self.off_blocks() {
                    let nrm = b.iter().map(|&i| w[i] * w[i]).sum::<f64>().sqrt();
                    let f = if nrm > a { a / nrm } else { 1.0 };
                    for &i in &b {
                        out[i] = f * w[i];
                    }
                }
            }
            FrameKind::Mixed { lambda1, lambda_group, .. } => {
                for b in self.off_blocks() {
                    let sub_w: Vec<f64> = b.iter().map(|&i| w[i]).collect();
                    let pr = project_box_ball(&sub_w, radius * lambda1, radius * 0.5 * lambda_group);
                    for (k, &i) in b.iter().enumerate() {
                        out[i] = pr[k];
                    }
                }
            }
            FrameKind::Matrix { lambda, rows, cols, .. } => {
                let perp = self.tangent().project_perp(w);
                out = clip_singular(&perp, *rows, *cols, radius * lambda)?;
            }
        }
        Ok(out)
    }

    /// Prox of `t·‖·‖_B` (identity on the tangent part).
    pub fn b_norm_prox(&self, v: &[f64], t: f64) -> Result<Vec<f64>> {
        let pr = self.project_dual_ball(v, t)?;
        Ok(sub(v, &pr))
    }

    /// `R_G(β) = ⟨e_S(W), β⟩ + η‖β‖_B`.
    pub fn r_g(&self, beta: &[f64]) -> Result<f64> {
        Ok(dot(&self.sign, beta) + self.eta * self.b_norm(beta)?)
    }

    /// Residual vector `r` realizing `inf_{u∈G} ‖u + g‖` coordinatewise: the
    /// tangent part is `e_S(W) + P_T g`, the off-tangent part is `g_⊥` with its
    /// projection onto `ηK` removed.
    pub fn certificate_residual(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_len("certificate_residual", self.dim(), g.len())?;
        let (gt, gp) = self.tangent().project(g);
        let mut r: Vec<f64> = self.sign.iter().zip(&gt).map(|(e, x)| e + x).collect();
        let pr = self.project_dual_ball(&gp, self.eta)?;
        for i in 0..r.len() {
            r[i] += gp[i] - pr[i];
        }
        Ok(r)
    }

    /// `inf_{u∈G} ‖u + g‖_D` in closed form.
    pub fn certificate_distance(&self, g: &[f64], norm: &NormDescriptor) -> Result<f64> {
        let separable = matches!(self.kind, FrameKind::Coordinate { .. });
        match (norm, &self.kind) {
            (NormDescriptor::L2, _) => Ok(norm2(&self.certificate_residual(g)?)),
            (NormDescriptor::LInf, _) if separable => Ok(norm_inf(&self.certificate_residual(g)?)),
            (NormDescriptor::GroupLInf { groups }, _) if separable => {
                check_len("group norm descriptor", self.dim(), groups.p())?;
                Ok(groups.norm_linf(&self.certificate_residual(g)?))
            }
            (NormDescriptor::GroupLInf { groups }, FrameKind::Group { groups: own, .. }) if groups == own => {
                Ok(groups.norm_linf(&self.certificate_residual(g)?))
            }
            (NormDescriptor::LInf, FrameKind::Group { lambda, groups, active }) => {
                let mut is_active = vec![false; groups.q()];
                active.iter().for_each(|&j| is_active[j] = true);
                let mut worst = 0.0_f64;
                for j in 0..groups.q() {
                    let w = groups.gather(j, g);
                    let val = if is_active[j] {
                        groups.group(j).iter().map(|&i| (g[i] + self.sign[i]).abs()).fold(0.0, f64::max)
                    } else {
                        linf_distance_to_ball(&w, self.eta * lambda)
                    };
                    worst = worst.max(val);
                }
                Ok(worst)
            }
            _ => Err(Error::Unsupported(format!("norm {norm:?} for this certificate frame"))),
        }
    }
}

/// `min_{‖u‖₂ ≤ r} ‖w + u‖_∞`: smallest `t` with `‖(|w| − t)_+‖₂ ≤ r`.
fn linf_distance_to_ball(w: &[f64], r: f64) -> f64 {
    let excess = |t: f64| w.iter().map(|x| (x.abs() - t).max(0.0).powi(2)).sum::<f64>().sqrt();
    let hi0 = norm_inf(w);
    if excess(0.0) <= r {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, seeded};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn groups2() -> GroupStructure {
        GroupStructure::contiguous(2, 2).unwrap()
    }

    #[test]
    fn value_examples() {
        assert_eq!(RegularizerSpec::Lasso { lambda: 2.0 }.value(&[1.0, -3.0]).unwrap(), 8.0);
        let g = RegularizerSpec::Group { lambda: 1.0, groups: groups2() };
        assert!(close(g.value(&[3.0, 4.0, 0.0, 0.0]).unwrap(), 5.0, 1e-15));
        let n = RegularizerSpec::Nuclear { lambda: 1.0, rows: 2, cols: 2 };
        assert!(close(n.value(&[3.0, 0.0, 0.0, 1.0]).unwrap(), 4.0, 1e-12));
        let beta = normal_vec(&mut seeded(4), 4);
        let m = RegularizerSpec::Mixed { lambda1: 10.0, lambda_group: 1.0, groups: groups2() };
        assert!(close(m.value(&beta).unwrap(), groups2().norm_l1(&beta), 1e-12));
    }

    #[test]
    fn prox_examples() {
        let l = RegularizerSpec::Lasso { lambda: 1.0 };
        assert_eq!(l.prox(&[2.0, -0.5], 1.0).unwrap(), vec![1.0, 0.0]);
        let g = RegularizerSpec::Group { lambda: 1.0, groups: GroupStructure::contiguous(1, 2).unwrap() };
        let out = g.prox(&[3.0, 4.0], 1.0).unwrap();
        assert!(close(out[0], 2.4, 1e-15) && close(out[1], 3.2, 1e-15));
        let n = RegularizerSpec::Nuclear { lambda: 1.0, rows: 2, cols: 2 };
        let out = n.prox(&[3.0, 0.0, 0.0, 0.5], 1.0).unwrap();
        for (a, b) in out.iter().zip([2.0, 0.0, 0.0, 0.0]) {
            assert!(close(*a, b, 1e-12));
        }
    }

    #[test]
    fn dual_norm_examples() {
        assert_eq!(RegularizerSpec::Lasso { lambda: 2.0 }.dual_norm(&[1.0, -4.0]).unwrap(), 2.0);
        let g = RegularizerSpec::Group { lambda: 1.0, groups: groups2() };
        assert!(close(g.dual_norm(&[3.0, 4.0, 1.0, 0.0]).unwrap(), 5.0, 1e-15));
        assert_eq!(g.dual_norm(&[0.0; 4]).unwrap(), 0.0);
    }

    #[test]
    fn sign_generalized_examples() {
        let s = sign_generalized(&[3.0, 4.0, 0.0, 0.0], &groups2());
        assert!(close(s[0], 0.6, 1e-15) && close(s[1], 0.8, 1e-15) && s[2] == 0.0);
        assert_eq!(sign_generalized(&[0.0; 4], &groups2()), vec![0.0; 4]);
        let singles = GroupStructure::contiguous(3, 1).unwrap();
        assert_eq!(sign_generalized(&[-2.0, 0.0, 5.0], &singles), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn frame_examples() {
        let f = RegularizerSpec::Lasso { lambda: 1.0 }.certificate_frame(&[2.0, 0.0, -1.0], 1.0).unwrap();
        assert_eq!(f.sign, vec![1.0, 0.0, -1.0]);
        assert!(matches!(&f.kind, FrameKind::Coordinate { support, .. } if support == &vec![0, 2]));

        let n = RegularizerSpec::Nuclear { lambda: 1.0, rows: 2, cols: 2 };
        let f = n.certificate_frame(&[2.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        for (a, b) in f.sign.iter().zip([1.0, 0.0, 0.0, 0.0]) {
            assert!(close(a.abs(), b, 1e-12));
        }
        if let FrameKind::Matrix { u, v, .. } = &f.kind {
            assert_eq!(u.cols(), 1);
            assert!(close(u.get(0, 0).abs(), 1.0, 1e-12) && close(v.get(0, 0).abs(), 1.0, 1e-12));
        } else {
            panic!("matrix frame expected");
        }

        let groups = GroupStructure::contiguous(2, 4).unwrap();
        let m = RegularizerSpec::Mixed { lambda1: 1.0, lambda_group: 1.0, groups };
        let f = m.certificate_frame(&[1.0, -2.0, 0.5, 3.0, 0.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        assert!(matches!(&f.kind, FrameKind::Mixed { active_groups, .. } if active_groups == &vec![0]));
    }

    #[test]
    fn b_norm_examples() {
        let g = RegularizerSpec::Group { lambda: 1.0, groups: groups2() };
        let f = g.certificate_frame(&[1.0, 1.0, 0.0, 0.0], 1.0).unwrap();
        assert!(close(f.b_norm(&[9.0, 9.0, 3.0, 4.0]).unwrap(), 5.0, 1e-15));
        assert_eq!(f.b_norm(&[9.0, -2.0, 0.0, 0.0]).unwrap(), 0.0);
        let n = RegularizerSpec::Nuclear { lambda: 1.0, rows: 3, cols: 3 };
        let anchor = normal_vec(&mut seeded(1), 3);
        let b: Vec<f64> = (0..9).map(|k| anchor[k / 3] * anchor[k % 3]).collect();
        let f = n.certificate_frame(&b, 1.0).unwrap();
        let u = f.tangent().project_t(&normal_vec(&mut seeded(2), 9));
        assert!(f.b_dual_norm(&u).unwrap() <= 1e-12);
    }

    #[test]
    fn tangent_projection_examples() {
        let t = TangentSpace::Coordinate { dim: 2, support: vec![0] };
        assert_eq!(t.project(&[3.0, 7.0]), (vec![3.0, 0.0], vec![0.0, 7.0]));
        let n = RegularizerSpec::Nuclear { lambda: 1.0, rows: 3, cols: 4 };
        let (a, b) = (normal_vec(&mut seeded(5), 3), normal_vec(&mut seeded(6), 4));
        let uv: Vec<f64> = (0..12).map(|k| a[k / 4] * b[k % 4]).collect();
        let t = n.certificate_frame(&uv, 1.0).unwrap().tangent();
        let pt = t.project_t(&uv);
        assert!(norm2(&sub(&pt, &uv)) <= 1e-12 * norm2(&uv));
        let x = normal_vec(&mut seeded(7), 12);
        let (xt, xp) = t.project(&x);
        assert!(dot(&xt, &xp).abs() <= 1e-10);
        assert!(norm2(&sub(&t.project_t(&xt), &xt)) <= 1e-10);
    }

    #[test]
    fn matrix_tangent_basis_is_orthonormal_and_spans_t() {
        let n = RegularizerSpec::Nuclear { lambda: 1.0, rows: 4, cols: 3 };
        let a = normal_vec(&mut seeded(8), 12);
        let f = n.certificate_frame(&svt(&a, 4, 3, 1.0).unwrap(), 1.0).unwrap();
        let t = f.tangent();
        let basis = t.basis();
        assert_eq!(basis.cols(), t.dim());
        let g = basis.gram();
        assert!(g.sub(&DenseMatrix::identity(t.dim())).max_abs() <= 1e-12);
        for c in basis.columns() {
            assert!(norm2(&t.project_perp(&c)) <= 1e-12);
        }
    }

    #[test]
    fn mixed_decompose_examples() {
        let groups = GroupStructure::contiguous(1, 2).unwrap();
        let (a, b) = mixed_decompose(1.0, 1.0, &groups, &[1.0, 1.0]);
        assert_eq!(a, vec![0.0, 0.0]);
        assert_eq!(b, vec![1.0, 1.0]);
        let (a, b) = mixed_decompose(1.0, 100.0, &groups, &[1.0, -2.0]);
        assert_eq!(a, vec![1.0, -2.0]);
        assert_eq!(b, vec![0.0, 0.0]);
        let (a, b) = mixed_decompose(10.0, 1.0, &groups, &[0.3, -2.0]);
        assert!(norm2(&a) <= 1e-15 && close(b[1], -2.0, 1e-15));
    }

    #[test]
    fn mixed_tie_prefers_l1_part() {
        // λ_Γ = λ₁√k exactly: both splits cost the same.
        let groups = GroupStructure::contiguous(1, 4).unwrap();
        let (_, second) = mixed_decompose(1.0, 2.0, &groups, &[1.0, 2.0, -1.0, 3.0]);
        assert_eq!(second, vec![0.0; 4]);
    }

    #[test]
    fn box_ball_projection_is_feasible_and_optimal() {
        let mut rng = seeded(9);
        for _ in 0..200 {
            let w = scale(3.0, &normal_vec(&mut rng, 5));
            let p = project_box_ball(&w, 1.0, 1.5);
            assert!(norm_inf(&p) <= 1.0 + 1e-12 && norm2(&p) <= 1.5 + 1e-12);
            // Variational inequality ⟨w − p, z − p⟩ ≤ 0 for feasible z.
            for _ in 0..20 {
                let z = project_box_ball(&scale(2.0, &normal_vec(&mut rng, 5)), 1.0, 1.5);
                assert!(dot(&sub(&w, &p), &sub(&z, &p)) <= 1e-9);
            }
        }
    }

    #[test]
    fn subgradient_examples() {
        let l = RegularizerSpec::Lasso { lambda: 1.0 };
        assert!(l.is_subgradient(&[2.0, 0.0], &[1.0, 0.5]).unwrap().holds);
        assert!(!l.is_subgradient(&[2.0, 0.0], &[0.5, 0.0]).unwrap().holds);
        let n = RegularizerSpec::Nuclear { lambda: 1.0, rows: 2, cols: 2 };
        for t in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert!(n.is_subgradient(&[2.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, t]).unwrap().holds);
        }
        assert!(!n.is_subgradient(&[2.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 1.2]).unwrap().holds);
    }

    #[test]
    fn certificate_distance_linf_group_matches_grid() {
        let groups = GroupStructure::contiguous(2, 2).unwrap();
        let reg = RegularizerSpec::Group { lambda: 1.0, groups };
        let f = reg.certificate_frame(&[1.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        let g = [0.2, -0.1, 1.5, -0.4];
        let got = f.certificate_distance(&g, &NormDescriptor::LInf).unwrap();
        let mut best = f64::INFINITY;
        let n = 800;
        for a in 0..=n {
            for b in 0..=n {
                let (u2, u3) = (-1.0 + 2.0 * a as f64 / n as f64, -1.0 + 2.0 * b as f64 / n as f64);
                if u2 * u2 + u3 * u3 > 1.0 {
                    continue;
                }
                let v = (g[2] + u2).abs().max((g[3] + u3).abs()).max((g[0] + 1.0).abs()).max(g[1].abs());
                best = best.min(v);
            }
        }
        assert!(got <= best + 1e-9 && best - got <= 5e-3);
    }
}
