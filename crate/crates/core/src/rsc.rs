//! Curvature constants: restricted strong convexity over certificate cones,
//! compatibility, sparse eigenvalues, `cor(T̃, T̃⊥)` and the GLM `γ_j`.
//!
//! Every infimum over a cone is a degree-0 homogeneous ratio of the form
//! `Σ_i w_i φ(⟨x_i, d⟩ / N(d))`, so one search engine serves all of them.
//! Sampled values are upper estimates of the infimum. In low dimension a
//! branch-and-bound over cube-surface cells adds a rigorous lower bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certificates::TargetSplit;
use crate::error::{check_len, Error, Result};
use crate::linalg::{add, dot, norm2, scale, sub, sym_eigen, DenseMatrix};
use crate::losses::{noise_level_eta, penalty_level_lambda, LossSpec};
use crate::regularizers::{CertificateFrame, FrameKind, GroupStructure, NormDescriptor, RegularizerSpec, TangentSpace};
use crate::rng::{normal_vec, seeded};

/// Largest ambient dimension in which cone infima are certified by cell search.
pub const CERTIFY_MAX_DIM: usize = 6;
/// Same for the GLM `γ_j`.
pub const GLM_CERTIFY_MAX_DIM: usize = 4;
/// Target gap between certified lower and upper values.
pub const GRID_RESOLUTION: f64 = 1e-2;
/// Group-support patterns `sparse_eigs` will enumerate.
pub const PATTERN_LIMIT: u128 = 100_000;
pub const MIN_BUDGET: usize = 100;

const MAX_CELLS: usize = 400_000;
const REFINE_STARTS: usize = 4;

/// Norm `‖·‖` in the denominator of a curvature ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConeNorm {
    L2,
    /// `scale · Σ_g ‖d_g‖₂`.
    GroupL1 { groups: GroupStructure, scale: f64 },
}

impl ConeNorm {
    /// Primal norm paired with a dual-norm descriptor.
    pub fn primal_of(dual: &NormDescriptor, dim: usize) -> Result<Self> {
        Ok(match dual {
            NormDescriptor::L2 => ConeNorm::L2,
            NormDescriptor::LInf => ConeNorm::GroupL1 { groups: GroupStructure::contiguous(dim, 1)?, scale: 1.0 },
            NormDescriptor::GroupLInf { groups } => ConeNorm::GroupL1 { groups: groups.clone(), scale: 1.0 },
        })
    }

    pub fn eval(&self, d: &[f64]) -> f64 {
        match self {
            ConeNorm::L2 => norm2(d),
            ConeNorm::GroupL1 { groups, scale } => scale * groups.norm_l1(d),
        }
    }

    /// Upper bound of the norm over the box `[lo, hi]`.
    fn box_upper(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let sq = |k: usize| lo[k].abs().max(hi[k].abs()).powi(2);
        match self {
            ConeNorm::L2 => (0..lo.len()).map(sq).sum::<f64>().sqrt(),
            ConeNorm::GroupL1 { groups, scale } => {
                scale * groups.groups().iter().map(|g| g.iter().map(|&k| sq(k)).sum::<f64>().sqrt()).sum::<f64>()
            }
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if let ConeNorm::GroupL1 { groups, scale } = self {
            if groups.p() != dim {
                return Err(Error::InvalidArgument(format!("cone norm groups cover {} coordinates, need {dim}", groups.p())));
            }
            if !(*scale > 0.0 && scale.is_finite()) {
                return Err(Error::InvalidArgument("cone norm scale must be positive and finite".into()));
            }
        }
        Ok(())
    }
}

/// Which linear functional cuts out the cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeConstraint {
    /// `⟨e_S(W) + ã, d⟩ + (η − η̃)‖d‖_B ≤ 0`, valid whenever `‖b̃‖_{B,D} ≤ η̃`.
    Relaxed,
    /// `sup_{u∈G} ⟨u + ∇L(β*), d⟩ = ⟨e_S(W) + ã + b̃, d⟩ + η‖d‖_B ≤ 0`.
    Exact,
}

/// The restricted set of directions `β − β̄` for curvature constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub frame: CertificateFrame,
    pub split: TargetSplit,
    /// Neighbourhood radius `r`. Quadratic ratios do not depend on it.
    pub radius: f64,
    pub norm: ConeNorm,
    pub constraint: ConeConstraint,
}

impl ConeSpec {
    pub fn new(frame: CertificateFrame, split: TargetSplit) -> Self {
        ConeSpec { frame, split, radius: f64::INFINITY, norm: ConeNorm::L2, constraint: ConeConstraint::Relaxed }
    }

    pub fn with_norm(mut self, norm: ConeNorm) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_constraint(mut self, constraint: ConeConstraint) -> Self {
        self.constraint = constraint;
        self
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.frame.dim();
        check_len("cone split", p, self.split.a_tilde.len())?;
        check_len("cone split", p, self.split.b_tilde.len())?;
        if !(self.radius > 0.0) {
            return Err(Error::InvalidArgument("cone radius must be positive".into()));
        }
        self.norm.validate(p)
    }

    /// The cone's defining function; `d` is feasible iff the value is negative.
    pub fn constraint_value(&self, d: &[f64]) -> Result<f64> {
        self.validate()?;
        self.feasible_set()?.eval(d)
    }

    fn feasible_set(&self) -> Result<Feasible> {
        let (v, kappa) = match self.constraint {
            ConeConstraint::Relaxed => (add(&self.frame.sign, &self.split.a_tilde), self.frame.eta - self.split.eta_tilde),
            ConeConstraint::Exact => {
                (add(&add(&self.frame.sign, &self.split.a_tilde), &self.split.b_tilde), self.frame.eta)
            }
        };
        if kappa < 0.0 {
            return Err(Error::InvalidArgument(format!("cone needs η̃ ≤ η (η − η̃ = {kappa:e})")));
        }
        Ok(Feasible::Linear { v, kappa, frame: self.frame.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    /// Random directions refined by projected local search.
    Sampling,
    /// Sampling plus branch-and-bound over cube-surface cells.
    Grid,
    /// Closed form or exhaustive enumeration.
    Exact,
}

/// Two-sided estimate of a curvature constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    pub lower: f64,
    pub upper: f64,
    /// Best value from sampling and local refinement alone.
    pub sampled: f64,
    pub budget: usize,
    pub evaluations: usize,
    pub method: EstimateMethod,
    /// `lower` is rigorous and within [`GRID_RESOLUTION`] of `upper`.
    pub certified: bool,
    /// No feasible direction exists (or none was found); the value is `+∞`.
    pub empty_cone: bool,
}

impl CurvatureEstimate {
    /// Point value: the certified lower bound if available, else the search value.
    pub fn value(&self) -> f64 {
        if self.certified {
            self.lower
        } else {
            self.upper
        }
    }

    fn exact(v: f64, budget: usize, evaluations: usize) -> Self {
        CurvatureEstimate {
            lower: v,
            upper: v,
            sampled: v,
            budget,
            evaluations,
            method: EstimateMethod::Exact,
            certified: true,
            empty_cone: false,
        }
    }
}

fn check_budget(budget: usize) -> Result<()> {
    if budget < MIN_BUDGET {
        return Err(Error::InvalidArgument(format!("budget must be at least {MIN_BUDGET}, got {budget}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Search engine

#[derive(Debug, Clone, Copy)]
enum Phi {
    Square,
    /// `min(t², |t|^{2−j} / r^j)`.
    Capped { j: u8, inv_r: f64 },
}

impl Phi {
    fn apply(self, t: f64) -> f64 {
        let t = t.abs();
        match self {
            Phi::Square => t * t,
            Phi::Capped { j: 2, inv_r } => (t * t).min(inv_r * inv_r),
            Phi::Capped { inv_r, .. } => (t * t).min(t * inv_r),
        }
    }
}

/// `d ↦ Σ_i w_i φ(⟨x_i, d⟩ / N(d))`.
struct RowRatio {
    rows: Vec<Vec<f64>>,
    weights: Vec<f64>,
    phi: Phi,
    norm: ConeNorm,
    /// Added to every value (the spectral floor in the ℓ₂ quadratic form).
    offset: f64,
}

impl RowRatio {
    fn eval(&self, d: &[f64]) -> f64 {
        let n = self.norm.eval(d);
        if n == 0.0 {
            return f64::INFINITY;
        }
        self.offset + self.rows.iter().zip(&self.weights).map(|(x, &w)| w * self.phi.apply(dot(x, d) / n)).sum::<f64>()
    }

    /// Valid lower bound over the box: each `|⟨x_i, d⟩|` is bounded below
    /// exactly, the norm above, and `φ` is nondecreasing in `|t|`.
    fn box_lower(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let n_max = self.norm.box_upper(lo, hi);
        if n_max == 0.0 {
            return f64::INFINITY;
        }
        let mut total = self.offset;
        for (x, &w) in self.rows.iter().zip(&self.weights) {
            let (mut a, mut b) = (0.0, 0.0);
            for k in 0..x.len() {
                let (p, q) = (x[k] * lo[k], x[k] * hi[k]);
                a += p.min(q);
                b += p.max(q);
            }
            let m = if a <= 0.0 && b >= 0.0 { 0.0 } else { a.abs().min(b.abs()) };
            total += w * self.phi.apply(m / n_max);
        }
        total
    }
}

/// Cone membership: `eval(d) < 0`.
enum Feasible {
    /// `⟨v, d⟩ + κ‖d‖_B`.
    Linear { v: Vec<f64>, kappa: f64, frame: CertificateFrame },
    /// `κ Σ_{off} ‖d_g‖ − Σ_{on} ‖d_g‖` (the full group-ℓ1 cone).
    L1Cone { on: Vec<Vec<usize>>, off: Vec<Vec<usize>>, kappa: f64 },
}

fn block_norm(d: &[f64], g: &[usize]) -> f64 {
    g.iter().map(|&k| d[k] * d[k]).sum::<f64>().sqrt()
}

fn interval_min_sq(lo: f64, hi: f64) -> f64 {
    if lo <= 0.0 && hi >= 0.0 {
        0.0
    } else {
        lo.abs().min(hi.abs()).powi(2)
    }
}

/// `(λ, off-support blocks)` for frames whose B-norm is a weighted block ℓ1 norm.
fn block_b_norm(frame: &CertificateFrame) -> Option<(f64, Vec<Vec<usize>>)> {
    match &frame.kind {
        FrameKind::Coordinate { lambda, support } => {
            let mut on = vec![false; frame.dim()];
            support.iter().for_each(|&i| on[i] = true);
            Some((*lambda, (0..frame.dim()).filter(|&i| !on[i]).map(|i| vec![i]).collect()))
        }
        FrameKind::Group { lambda, groups, active } => {
            let mut on = vec![false; groups.q()];
            active.iter().for_each(|&j| on[j] = true);
            Some((*lambda, (0..groups.q()).filter(|&j| !on[j]).map(|j| groups.group(j).to_vec()).collect()))
        }
        _ => None,
    }
}

impl Feasible {
    fn eval(&self, d: &[f64]) -> Result<f64> {
        Ok(match self {
            Feasible::Linear { v, kappa, frame } => {
                dot(v, d) + if *kappa == 0.0 { 0.0 } else { kappa * frame.b_norm(d)? }
            }
            Feasible::L1Cone { on, off, kappa } => {
                kappa * off.iter().map(|g| block_norm(d, g)).sum::<f64>() - on.iter().map(|g| block_norm(d, g)).sum::<f64>()
            }
        })
    }

    fn is_feasible(&self, d: &[f64]) -> bool {
        matches!(self.eval(d), Ok(c) if c < 0.0)
    }

    /// Lower bound over the box; the nuclear and mixed B-norms contribute 0.
    fn box_lower(&self, lo: &[f64], hi: &[f64]) -> f64 {
        match self {
            Feasible::Linear { v, kappa, frame } => {
                let lin: f64 = (0..v.len()).map(|k| (v[k] * lo[k]).min(v[k] * hi[k])).sum();
                let b = match block_b_norm(frame) {
                    Some((lambda, blocks)) if *kappa > 0.0 => {
                        lambda
                            * blocks
                                .iter()
                                .map(|g| g.iter().map(|&k| interval_min_sq(lo[k], hi[k])).sum::<f64>().sqrt())
                                .sum::<f64>()
                    }
                    _ => 0.0,
                };
                lin + kappa * b
            }
            Feasible::L1Cone { on, off, kappa } => {
                let off_lo: f64 =
                    off.iter().map(|g| g.iter().map(|&k| interval_min_sq(lo[k], hi[k])).sum::<f64>().sqrt()).sum();
                let on_hi: f64 = on
                    .iter()
                    .map(|g| g.iter().map(|&k| lo[k].abs().max(hi[k].abs()).powi(2)).sum::<f64>().sqrt())
                    .sum();
                kappa * off_lo - on_hi
            }
        }
    }

    fn anchor_candidates(&self, tangent: &TangentSpace) -> Vec<Vec<f64>> {
        match self {
            Feasible::Linear { v, .. } => {
                let vt = tangent.project_t(v);
                let vp = sub(v, &vt);
                vec![scale(-1.0, &vt), scale(-1.0, v), scale(-1.0, &vp)]
            }
            Feasible::L1Cone { on, .. } => {
                let mut d = vec![0.0; tangent.ambient_dim()];
                on.iter().flatten().for_each(|&k| d[k] = 1.0);
                vec![d]
            }
        }
    }
}

fn normalized(d: Vec<f64>) -> Option<Vec<f64>> {
    let n = norm2(&d);
    (n > 0.0 && n.is_finite()).then(|| scale(1.0 / n, &d))
}

struct MinSearch<'a> {
    obj: &'a RowRatio,
    cons: &'a Feasible,
    tangent: TangentSpace,
    dim: usize,
    anchor: Option<Vec<f64>>,
    evaluations: usize,
}

impl<'a> MinSearch<'a> {
    fn new(obj: &'a RowRatio, cons: &'a Feasible, tangent: TangentSpace) -> Self {
        let dim = tangent.ambient_dim();
        let anchor = cons
            .anchor_candidates(&tangent)
            .into_iter()
            .filter_map(normalized)
            .find(|a| cons.is_feasible(a));
        MinSearch { obj, cons, tangent, dim, anchor, evaluations: 0 }
    }

    /// Moves an infeasible direction onto the cone along the segment to the anchor.
    fn project(&self, d: Vec<f64>) -> Option<Vec<f64>> {
        let d = normalized(d)?;
        if self.cons.is_feasible(&d) {
            return Some(d);
        }
        let a = self.anchor.as_ref()?;
        let point = |t: f64| -> Vec<f64> { d.iter().zip(a).map(|(x, y)| (1.0 - t) * x + t * y).collect() };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.cons.is_feasible(&point(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        normalized(point(hi)).filter(|p| self.cons.is_feasible(p))
    }

    fn value(&mut self, d: &[f64]) -> f64 {
        self.evaluations += 1;
        self.obj.eval(d)
    }

    fn sample(&self, rng: &mut ChaCha8Rng, kind: usize) -> Vec<f64> {
        let xi = normal_vec(rng, self.dim);
        let (t, p) = self.tangent.project(&xi);
        match kind % 5 {
            0 | 1 => add(&t, &scale(0.1, &p)),
            2 | 3 => add(&scale(0.1, &t), &p),
            _ => {
                let mut d = t;
                let k = rng.random_range(0..self.dim);
                d[k] += 3.0 * xi[k].signum();
                d
            }
        }
    }

    /// (1+1) evolution strategy on the sphere with projection onto the cone.
    fn refine(&mut self, mut x: Vec<f64>, mut fx: f64, evals: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        let mut sigma = 0.3;
        for _ in 0..evals {
            if sigma < 1e-9 {
                break;
            }
            let xi = normal_vec(rng, self.dim);
            let trial: Vec<f64> = x.iter().zip(&xi).map(|(a, b)| a + sigma * b).collect();
            match self.project(trial) {
                Some(c) => {
                    let fc = self.value(&c);
                    if fc < fx {
                        x = c;
                        fx = fc;
                        sigma = (sigma * 1.5).min(1.0);
                    } else {
                        sigma *= 0.82;
                    }
                }
                None => sigma *= 0.82,
            }
        }
        (x, fx)
    }

    fn run(&mut self, budget: usize, seed: u64) -> (Option<Vec<f64>>, f64) {
        let mut rng = seeded(seed);
        let mut pool: Vec<(f64, Vec<f64>)> = Vec::new();
        let push = |pool: &mut Vec<(f64, Vec<f64>)>, f: f64, d: Vec<f64>| {
            if f.is_finite() {
                pool.push((f, d));
            }
        };
        let mut initial: Vec<Vec<f64>> = self.anchor.iter().cloned().collect();
        for k in 0..self.dim {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; self.dim];
                e[k] = s;
                initial.push(e);
            }
        }
        for d in initial {
            if self.evaluations >= budget / 2 {
                break;
            }
            if self.cons.is_feasible(&d) {
                let f = self.value(&d);
                push(&mut pool, f, d);
            }
        }
        let mut kind = 0;
        let mut attempts = 0;
        while self.evaluations < budget / 2 && attempts < 4 * budget {
            attempts += 1;
            let raw = self.sample(&mut rng, kind);
            kind += 1;
            if let Some(d) = self.project(raw) {
                let f = self.value(&d);
                push(&mut pool, f, d);
            }
        }
        if pool.is_empty() {
            return (None, f64::INFINITY);
        }
        pool.sort_by(|a, b| a.0.total_cmp(&b.0));
        pool.truncate(REFINE_STARTS);
        let per = (budget.saturating_sub(self.evaluations)) / pool.len();
        let mut best = (None, f64::INFINITY);
        for (f, d) in pool {
            let (x, fx) = self.refine(d, f, per, &mut rng);
            if fx < best.1 {
                best = (Some(x), fx);
            }
        }
        best
    }
}

struct Cell {
    lower: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.lower.total_cmp(&other.lower) == Ordering::Equal
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    // Reversed so that `BinaryHeap` pops the smallest lower bound.
    fn cmp(&self, other: &Self) -> Ordering {
        other.lower.total_cmp(&self.lower)
    }
}

struct CellSearch {
    lower: f64,
    best: f64,
    certified: bool,
    cells: usize,
}

/// Branch-and-bound over the surface of `[−1, 1]^d`, one face per `(axis, sign)`.
fn cell_search(obj: &RowRatio, cons: &Feasible, dim: usize, incumbent: f64, tol: f64) -> CellSearch {
    let mut best = incumbent;
    let mut pruned_min = f64::INFINITY;
    let mut heap = BinaryHeap::new();
    let mut cells = 0usize;
    let consider = |lo: Vec<f64>, hi: Vec<f64>, best: &mut f64, pruned_min: &mut f64, heap: &mut BinaryHeap<Cell>| {
        if cons.box_lower(&lo, &hi) >= 0.0 {
            return;
        }
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        if cons.is_feasible(&center) {
            *best = best.min(obj.eval(&center));
        }
        let lower = obj.box_lower(&lo, &hi);
        if lower >= *best - tol {
            *pruned_min = pruned_min.min(lower);
        } else {
            heap.push(Cell { lower, lo, hi });
        }
    };
    for axis in 0..dim {
        for s in [1.0, -1.0] {
            let mut lo = vec![-1.0; dim];
            let mut hi = vec![1.0; dim];
            lo[axis] = s;
            hi[axis] = s;
            consider(lo, hi, &mut best, &mut pruned_min, &mut heap);
        }
    }
    let mut certified = true;
    let mut frontier = f64::INFINITY;
    while let Some(cell) = heap.pop() {
        if cell.lower >= best - tol {
            frontier = cell.lower;
            break;
        }
        if cells >= MAX_CELLS {
            frontier = cell.lower;
            certified = false;
            break;
        }
        cells += 1;
        let free: Vec<usize> = (0..dim).filter(|&k| cell.hi[k] > cell.lo[k]).collect();
        if free.is_empty() {
            continue;
        }
        for mask in 0..(1usize << free.len()) {
            let (mut lo, mut hi) = (cell.lo.clone(), cell.hi.clone());
            for (bit, &k) in free.iter().enumerate() {
                let mid = 0.5 * (cell.lo[k] + cell.hi[k]);
                if mask >> bit & 1 == 0 {
                    hi[k] = mid;
                } else {
                    lo[k] = mid;
                }
            }
            consider(lo, hi, &mut best, &mut pruned_min, &mut heap);
        }
    }
    let lower = pruned_min.min(frontier);
    CellSearch { lower: if lower.is_finite() { lower.max(0.0) } else { lower }, best, certified, cells }
}

fn estimate_min(
    obj: &RowRatio,
    cons: &Feasible,
    tangent: TangentSpace,
    budget: usize,
    seed: u64,
    certify_dim: usize,
) -> CurvatureEstimate {
    let mut search = MinSearch::new(obj, cons, tangent);
    let dim = search.dim;
    let (_, sampled) = search.run(budget, seed);
    let mut est = CurvatureEstimate {
        lower: sampled,
        upper: sampled,
        sampled,
        budget,
        evaluations: search.evaluations,
        method: EstimateMethod::Sampling,
        certified: false,
        empty_cone: false,
    };
    if dim <= certify_dim {
        let cs = cell_search(obj, cons, dim, sampled, GRID_RESOLUTION);
        est.method = EstimateMethod::Grid;
        est.evaluations += cs.cells;
        est.upper = cs.best.min(sampled);
        est.lower = cs.lower.min(est.upper);
        est.certified = cs.certified;
        if cs.certified && !cs.best.is_finite() && !cs.lower.is_finite() {
            est.empty_cone = true;
        }
    }
    if !est.upper.is_finite() {
        est.upper = f64::INFINITY;
        est.lower = f64::INFINITY;
        est.empty_cone = true;
    }
    est
}

/// `dᵀAd/‖d‖² = λ_min + Σ_k (λ_k − λ_min)⟨v_k, d⟩²/‖d‖²`. Cell bounds then
/// scale with the eigenvalue spread, so flat directions certify at once.
fn spectral_ratio(a: &DenseMatrix) -> Result<RowRatio> {
    let e = sym_eigen(a)?;
    let floor = e.values[0];
    let mut rows = Vec::new();
    let mut weights = Vec::new();
    for (k, &lam) in e.values.iter().enumerate() {
        if lam - floor > 0.0 {
            rows.push(e.vectors.column(k));
            weights.push(lam - floor);
        }
    }
    Ok(RowRatio { rows, weights, phi: Phi::Square, norm: ConeNorm::L2, offset: floor })
}

fn design_rows(x: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..x.rows()).map(|i| x.row(i).to_vec()).collect()
}

// ---------------------------------------------------------------------------
// Public estimators

/// `γ_L = inf D_L^s(β̄ + d, β̄)/‖d‖²` over the cone, for quadratic losses,
/// where `D_L^s(β̄ + d, β̄) = 2‖Xd‖²` at every scale.
pub fn rsc_estimate(loss: &LossSpec, cone: &ConeSpec, budget: usize, seed: u64) -> Result<CurvatureEstimate> {
    check_budget(budget)?;
    cone.validate()?;
    let design = loss
        .design()
        .ok_or_else(|| Error::Unsupported("rsc_estimate covers quadratic losses; use glm_gamma for GLMs".into()))?;
    check_len("rsc_estimate", cone.frame.dim(), design.ncols())?;
    let x = design.to_dense();
    let obj = match cone.norm {
        ConeNorm::L2 => spectral_ratio(&x.gram().scaled(2.0))?,
        _ => RowRatio {
            rows: design_rows(&x),
            weights: vec![2.0; x.rows()],
            phi: Phi::Square,
            norm: cone.norm.clone(),
            offset: 0.0,
        },
    };
    let cons = cone.feasible_set()?;
    Ok(estimate_min(&obj, &cons, cone.frame.tangent(), budget, seed, CERTIFY_MAX_DIM))
}

/// Group-ℓ1 blocks on and off the support of a coordinate or group frame.
fn frame_blocks(frame: &CertificateFrame) -> Result<(GroupStructure, Vec<Vec<usize>>, Vec<Vec<usize>>, f64)> {
    let (lambda, groups, active) = match &frame.kind {
        FrameKind::Coordinate { lambda, support } => (*lambda, GroupStructure::contiguous(frame.dim(), 1)?, support.clone()),
        FrameKind::Group { lambda, groups, active } => (*lambda, groups.clone(), active.clone()),
        _ => return Err(Error::Unsupported("compatibility constants need a lasso or group frame".into())),
    };
    let mut on = vec![false; groups.q()];
    active.iter().for_each(|&j| on[j] = true);
    let blocks = |want: bool| (0..groups.q()).filter(|&j| on[j] == want).map(|j| groups.group(j).to_vec()).collect();
    Ok((groups.clone(), blocks(true), blocks(false), lambda))
}

fn compatibility_common(
    x: &DenseMatrix,
    frame: &CertificateFrame,
    eta: f64,
    eta_tilde: f64,
    budget: usize,
    seed: u64,
    sign_cone: bool,
) -> Result<CurvatureEstimate> {
    check_budget(budget)?;
    check_len("compatibility design", frame.dim(), x.cols())?;
    let kappa = eta - eta_tilde;
    if !(kappa >= 0.0) {
        return Err(Error::InvalidArgument(format!("need η̃ ≤ η, got η = {eta}, η̃ = {eta_tilde}")));
    }
    let (groups, on, off, _) = frame_blocks(frame)?;
    if on.is_empty() {
        return Err(Error::InvalidArgument("compatibility constant needs a nonempty support".into()));
    }
    let s = on.len() as f64;
    let obj = RowRatio {
        rows: design_rows(x),
        weights: vec![1.0; x.rows()],
        phi: Phi::Square,
        norm: ConeNorm::GroupL1 { groups, scale: 1.0 / s.sqrt() },
        offset: 0.0,
    };
    let cons = if sign_cone {
        Feasible::Linear { v: frame.sign.clone(), kappa, frame: frame.clone() }
    } else {
        Feasible::L1Cone { on, off, kappa }
    };
    Ok(estimate_min(&obj, &cons, frame.tangent(), budget, seed, CERTIFY_MAX_DIM))
}

/// `γ̄ = inf ‖XΔ‖²/(‖Δ‖_{Γ,1}²/|S|)` over the sign cone
/// `Δ_Sᵀ sgn_Γ(β̄) + (η − η̃)‖Δ_{S^c}‖_{Γ,1} ≤ 0`.
pub fn compatibility_constant(
    x: &DenseMatrix,
    frame: &CertificateFrame,
    eta: f64,
    eta_tilde: f64,
    budget: usize,
    seed: u64,
) -> Result<CurvatureEstimate> {
    compatibility_common(x, frame, eta, eta_tilde, budget, seed, true)
}

/// The same ratio over the full cone `(η − η̃)‖Δ_{S^c}‖_{Γ,1} ≤ ‖Δ_S‖_{Γ,1}`,
/// which contains the sign cone.
pub fn compatibility_constant_l1(
    x: &DenseMatrix,
    frame: &CertificateFrame,
    eta: f64,
    eta_tilde: f64,
    budget: usize,
    seed: u64,
) -> Result<CurvatureEstimate> {
    compatibility_common(x, frame, eta, eta_tilde, budget, seed, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseEigs {
    /// `ρ⁺(k)`.
    pub rho_plus: f64,
    /// `γ_{S,k}`; `+∞` when no admissible unit vector exists.
    pub gamma_sk: f64,
    pub patterns: u128,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

fn for_each_subset(pool: &[usize], k: usize, f: &mut dyn FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let n = pool.len();
    if k > n {
        return Ok(());
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let chosen: Vec<usize> = idx.iter().map(|&i| pool[i]).collect();
        f(&chosen)?;
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 && idx[0] == n - k {
                return Ok(());
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Upper sparse eigenvalue `ρ⁺(k)` and `γ_{S,k}` by exhaustive enumeration of
/// group supports. `k` counts groups; `support` lists group indices.
pub fn sparse_eigs(x: &DenseMatrix, groups: &GroupStructure, k: usize, support: &[usize]) -> Result<SparseEigs> {
    check_len("sparse_eigs design", groups.p(), x.cols())?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let q = groups.q();
    let mut in_s = vec![false; q];
    for &j in support {
        if j >= q {
            return Err(Error::InvalidArgument(format!("group index {j} out of range (q = {q})")));
        }
        in_s[j] = true;
    }
    let outside: Vec<usize> = (0..q).filter(|&j| !in_s[j]).collect();
    let k_rho = k.min(q);
    let k_extra = (k - 1).min(outside.len());
    let patterns = binomial(q, k_rho).saturating_add(binomial(outside.len(), k_extra));
    if patterns > PATTERN_LIMIT {
        return Err(Error::BudgetExceeded { needed: patterns, limit: PATTERN_LIMIT });
    }
    let gram = x.gram();
    let coords = |gs: &[usize]| -> Vec<usize> {
        let mut c: Vec<usize> = gs.iter().flat_map(|&j| groups.group(j).iter().copied()).collect();
        c.sort_unstable();
        c
    };
    let all: Vec<usize> = (0..q).collect();
    let mut rho_plus = 0.0_f64;
    for_each_subset(&all, k_rho, &mut |gs| {
        let e = sym_eigen(&gram.principal(&coords(gs)))?;
        rho_plus = rho_plus.max(*e.values.last().unwrap());
        Ok(())
    })?;
    let mut gamma_sk = f64::INFINITY;
    let mut s_sorted = support.to_vec();
    s_sorted.sort_unstable();
    s_sorted.dedup();
    for_each_subset(&outside, k_extra, &mut |extra| {
        let gs: Vec<usize> = s_sorted.iter().chain(extra).copied().collect();
        let c = coords(&gs);
        if !c.is_empty() {
            gamma_sk = gamma_sk.min(sym_eigen(&gram.principal(&c))?.values[0].max(0.0));
        }
        Ok(())
    })?;
    Ok(SparseEigs { rho_plus: rho_plus.max(0.0), gamma_sk, patterns })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    /// Supremum estimate; `lower` is what the search attained.
    pub estimate: CurvatureEstimate,
    /// `sup ⟨H P_T̃⊥ β, P_T̃⊥ β⟩^{1/2}` over the same ball.
    pub crude_bound: f64,
}

/// Pseudo-inverse of a symmetric PSD matrix, dropping null directions.
fn pinv_psd(m: &DenseMatrix) -> Result<DenseMatrix> {
    let n = m.rows();
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    let e = sym_eigen(m)?;
    let top = e.values.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let cut = 1e-12 * top.max(f64::MIN_POSITIVE);
    let mut out = DenseMatrix::zeros(n, n);
    for (k, &lam) in e.values.iter().enumerate() {
        if lam > cut {
            for i in 0..n {
                for j in 0..n {
                    out.set(i, j, out.get(i, j) + e.vectors.get(i, k) * e.vectors.get(j, k) / lam);
                }
            }
        }
    }
    Ok(out)
}

/// Closed-form supremum over the `T`-component of `β` for a fixed `w ∈ T⊥`.
struct CorrelationMap {
    h: DenseMatrix,
    q: DenseMatrix,
    hq: DenseMatrix,
    hq_pinv: DenseMatrix,
    /// H-orthogonal projector onto `T` inside `T̃` coordinates.
    pi: DenseMatrix,
}

impl CorrelationMap {
    fn new(h: &DenseMatrix, t_tilde: &TangentSpace, tangent: &TangentSpace) -> Result<Self> {
        let q = t_tilde.basis();
        let hq = q.transpose().matmul(&h.matmul(&q));
        let hq_pinv = pinv_psd(&hq)?;
        let m = q.transpose().matmul(&tangent.basis());
        let pi = if m.cols() == 0 {
            DenseMatrix::zeros(q.cols(), q.cols())
        } else {
            let inner = pinv_psd(&m.transpose().matmul(&hq.matmul(&m)))?;
            m.matmul(&inner).matmul(&m.transpose()).matmul(&hq)
        };
        Ok(CorrelationMap { h: h.clone(), q, hq, hq_pinv, pi })
    }

    fn h_norm_sq(&self, a: &[f64]) -> f64 {
        dot(a, &self.hq.matvec(a)).max(0.0)
    }

    /// `sup_{τ∈T} |⟨H P_T̃ β, P_T̃⊥ β⟩| / ⟨H P_T̃ β, P_T̃ β⟩^{1/2}` at `β = τ + w`.
    fn value(&self, w: &[f64]) -> f64 {
        let a0 = self.q.tmatvec(w);
        let b = sub(w, &self.q.matvec(&a0));
        let g = self.q.tmatvec(&self.h.matvec(&b));
        let v = self.hq_pinv.matvec(&g);
        let vt = self.pi.matvec(&v);
        let vp = sub(&v, &vt);
        let a0p = sub(&a0, &self.pi.matvec(&a0));
        let a2 = self.h_norm_sq(&a0p);
        let c0 = dot(&a0p, &self.hq.matvec(&vp));
        let first = if a2 > 1e-14 * (1.0 + self.h_norm_sq(&a0)) { c0 * c0 / a2 } else { 0.0 };
        (first + self.h_norm_sq(&vt)).sqrt()
    }

    fn crude(&self, w: &[f64]) -> f64 {
        let b = sub(w, &self.q.matvec(&self.q.tmatvec(w)));
        dot(&b, &self.h.matvec(&b)).max(0.0).sqrt()
    }
}

/// Top eigenvalue/vector of the quadratic form `w ↦ f(w)²` on the span of `block`,
/// recovered by polarization.
fn block_top(block: &[usize], dim: usize, f: &dyn Fn(&[f64]) -> f64) -> Result<(f64, Vec<f64>)> {
    let m = block.len();
    let unit = |i: usize, j: Option<usize>| {
        let mut e = vec![0.0; dim];
        e[block[i]] = 1.0;
        if let Some(j) = j {
            e[block[j]] += 1.0;
        }
        e
    };
    let diag: Vec<f64> = (0..m).map(|i| f(&unit(i, None)).powi(2)).collect();
    let mut k = DenseMatrix::zeros(m, m);
    for i in 0..m {
        k.set(i, i, diag[i]);
        for j in i + 1..m {
            let val = 0.5 * (f(&unit(i, Some(j))).powi(2) - diag[i] - diag[j]);
            k.set(i, j, val);
            k.set(j, i, val);
        }
    }
    let e = sym_eigen(&k)?;
    let mut v = vec![0.0; dim];
    for (i, &c) in block.iter().enumerate() {
        v[c] = e.vectors.get(i, m - 1);
    }
    Ok((e.values[m - 1].max(0.0).sqrt(), v))
}

/// `cor(T̃, T̃⊥)` over `‖β‖_B ≤ δ′`. `T̃` must contain the frame's tangent space.
///
/// The supremum over the tangent part of `β` is taken in closed form. For lasso
/// and group frames with `T̃ = T` the remaining map is a seminorm of `w`, so
/// enumerating the extreme points of the B-ball is exact; otherwise the value
/// is a sampled lower estimate of the supremum.
pub fn correlation_t(
    h: &DenseMatrix,
    t_tilde: &TangentSpace,
    frame: &CertificateFrame,
    delta_prime: f64,
    budget: usize,
    seed: u64,
) -> Result<CorrelationEstimate> {
    check_budget(budget)?;
    let p = frame.dim();
    check_len("correlation operator", p, h.rows())?;
    check_len("correlation operator", p, h.cols())?;
    check_len("correlation subspace", p, t_tilde.ambient_dim())?;
    if !(delta_prime >= 0.0 && delta_prime.is_finite()) {
        return Err(Error::InvalidArgument("δ′ must be finite and nonnegative".into()));
    }
    let tangent = frame.tangent();
    let tb = tangent.basis();
    for j in 0..tb.cols() {
        let c = tb.column(j);
        if norm2(&sub(&t_tilde.project_t(&c), &c)) > 1e-9 {
            return Err(Error::InvalidArgument("T̃ must contain the tangent space of the frame".into()));
        }
    }
    if delta_prime == 0.0 {
        return Ok(CorrelationEstimate { estimate: CurvatureEstimate::exact(0.0, budget, 0), crude_bound: 0.0 });
    }
    let map = CorrelationMap::new(h, t_tilde, &tangent)?;
    let value = |w: &[f64]| map.value(w);
    let crude = |w: &[f64]| map.crude(w);
    let mut evaluations = 0usize;

    // Extreme points of the unit B-ball (block ℓ1 frames).
    let mut best = 0.0_f64;
    let mut best_w: Option<Vec<f64>> = None;
    let mut crude_best = 0.0_f64;
    let exact_structure = block_b_norm(frame);
    if let Some((lambda, blocks)) = &exact_structure {
        for g in blocks {
            let (vb, wv) = block_top(g, p, &value)?;
            let (cb, _) = block_top(g, p, &crude)?;
            evaluations += g.len() * (g.len() + 1);
            if vb / lambda > best {
                best = vb / lambda;
                best_w = Some(scale(1.0 / lambda, &wv));
            }
            crude_best = crude_best.max(cb / lambda);
        }
    }
    let exact = exact_structure.is_some() && t_tilde.dim() == tangent.dim();
    let mut method = EstimateMethod::Exact;
    if !exact {
        method = EstimateMethod::Sampling;
        let mut rng = seeded(seed);
        let on_ball = |w: Vec<f64>| -> Result<Option<Vec<f64>>> {
            let w = tangent.project_perp(&w);
            let b = frame.b_norm(&w)?;
            Ok((b > 0.0 && b.is_finite()).then(|| scale(1.0 / b, &w)))
        };
        let mut pool: Vec<(f64, Vec<f64>)> = best_w.iter().map(|w| (best, w.clone())).collect();
        while evaluations < budget / 2 {
            evaluations += 1;
            if let Some(w) = on_ball(normal_vec(&mut rng, p))? {
                crude_best = crude_best.max(crude(&w));
                pool.push((value(&w), w));
            }
        }
        pool.sort_by(|a, b| b.0.total_cmp(&a.0));
        pool.truncate(REFINE_STARTS);
        let per = budget.saturating_sub(evaluations) / pool.len().max(1);
        for (mut fx, mut x) in pool {
            let mut sigma = 0.3;
            for _ in 0..per {
                if sigma < 1e-9 {
                    break;
                }
                evaluations += 1;
                let xi = normal_vec(&mut rng, p);
                let trial: Vec<f64> = x.iter().zip(&xi).map(|(a, b)| a + sigma * b).collect();
                match on_ball(trial)? {
                    Some(c) => {
                        let fc = value(&c);
                        crude_best = crude_best.max(crude(&c));
                        if fc > fx {
                            x = c;
                            fx = fc;
                            sigma = (sigma * 1.5).min(1.0);
                        } else {
                            sigma *= 0.82;
                        }
                    }
                    None => sigma *= 0.82,
                }
            }
            best = best.max(fx);
        }
    }
    let v = delta_prime * best;
    let estimate = CurvatureEstimate {
        lower: v,
        upper: v,
        sampled: v,
        budget,
        evaluations,
        method,
        certified: exact,
        empty_cone: false,
    };
    Ok(CorrelationEstimate { estimate, crude_bound: delta_prime * crude_best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamErrorBound {
    /// `δ′ = δ/(1 − η) + ‖P_T^⊥ β*‖_B`, a bound on `‖β̂ − β*‖_B`.
    pub delta_prime: f64,
    /// Bound on `⟨H P_T̃ Δ, P_T̃ Δ⟩^{1/2}`.
    pub tangent_energy: f64,
    /// Smallest eigenvalue of `H` restricted to `T̃`.
    pub gamma_t_tilde: f64,
    /// Resulting bound on `‖P_T̃ Δ‖₂` (`+∞` when `H` is singular on `T̃`).
    pub tangent_l2: f64,
}

/// `δ′` from `δ` and `β*`. Feed it to [`correlation_t`] and then [`param_error_bound`].
pub fn param_delta_prime(delta: f64, eta: f64, frame: &CertificateFrame, beta_star: &[f64]) -> Result<f64> {
    if !(eta < 1.0) {
        return Err(Error::InvalidArgument(format!("parameter bounds need η < 1, got {eta}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("δ must be nonnegative, got {delta}")));
    }
    let off = frame.b_norm(&frame.tangent().project_perp(beta_star))?;
    Ok(delta / (1.0 - eta) + off)
}

/// Parameter-estimation bounds from `D_L(β̂, β*) + (1 − η)‖β̂‖_B ≤ δ` for the
/// quadratic loss with `H = XᵀX`.
pub fn param_error_bound(
    delta: f64,
    eta: f64,
    frame: &CertificateFrame,
    beta_star: &[f64],
    h: &DenseMatrix,
    t_tilde: &TangentSpace,
    cor: f64,
) -> Result<ParamErrorBound> {
    let delta_prime = param_delta_prime(delta, eta, frame, beta_star)?;
    if !(cor >= 0.0) {
        return Err(Error::InvalidArgument("cor must be nonnegative".into()));
    }
    let tangent_energy = ((1.0 - eta) * delta_prime).sqrt() + 2.0 * cor;
    let q = t_tilde.basis();
    let gamma_t_tilde = if q.cols() == 0 {
        f64::INFINITY
    } else {
        sym_eigen(&q.transpose().matmul(&h.matmul(&q)))?.values[0].max(0.0)
    };
    let tangent_l2 = if q.cols() == 0 {
        0.0
    } else if gamma_t_tilde > 0.0 {
        tangent_energy / gamma_t_tilde.sqrt()
    } else {
        f64::INFINITY
    };
    Ok(ParamErrorBound { delta_prime, tangent_energy, gamma_t_tilde, tangent_l2 })
}

/// `γ_j(β̄; r, C, ‖·‖) = inf_{d∈C} Σ_i ℓ″(⟨x_i, β̄⟩)/(2e) · min(⟨x_i,d⟩²/‖d‖², |⟨x_i,d⟩|^{2−j}/(r^j ‖d‖^{2−j}))`.
pub fn glm_gamma(
    loss: &LossSpec,
    anchor: &[f64],
    cone: &ConeSpec,
    r: f64,
    j: u8,
    budget: usize,
    seed: u64,
) -> Result<CurvatureEstimate> {
    check_budget(budget)?;
    cone.validate()?;
    let x = match loss {
        LossSpec::Glm { x, .. } => x,
        _ => return Err(Error::Unsupported("glm_gamma needs a GLM loss".into())),
    };
    if !(j == 1 || j == 2) {
        return Err(Error::InvalidArgument(format!("j must be 1 or 2, got {j}")));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidArgument("r must be positive".into()));
    }
    check_len("glm_gamma cone", loss.dim(), cone.frame.dim())?;
    let two_e = 2.0 * std::f64::consts::E;
    let weights: Vec<f64> = loss.curvature_weights(anchor)?.iter().map(|w| w / two_e).collect();
    let obj = RowRatio { rows: design_rows(x), weights, phi: Phi::Capped { j, inv_r: 1.0 / r }, norm: cone.norm.clone(), offset: 0.0 };
    let cons = cone.feasible_set()?;
    Ok(estimate_min(&obj, &cons, cone.frame.tangent(), budget, seed, GLM_CERTIFY_MAX_DIM))
}

/// Radius condition `sup_{β∈C} ‖β − β̄‖ ≤ γ₂/(κ²λ) + λ/(4γ₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusCondition {
    pub threshold: f64,
    /// `sup ‖β − β̄‖` over the enclosing cone `{β : inf_{ū∈∂R(β̄)} ⟨ū + ∇L(β*), β̄ − β⟩ > 0}`:
    /// `0` when it is empty, `+∞` otherwise.
    pub enclosing_radius: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmOracleBound {
    /// `D_L(β̄, β*)`.
    pub anchor_divergence: f64,
    /// `λ(β̄, β*; ‖·‖)`.
    pub lambda: f64,
    pub eta_star: f64,
    pub gamma2: CurvatureEstimate,
    /// `D_L(β̄, β*) + λ²/(4γ₂)` with the certified lower `γ₂` where available.
    pub bound: f64,
    pub radius: RadiusCondition,
}

impl GlmOracleBound {
    /// A-posteriori form of the radius condition at a computed estimate.
    pub fn estimate_within_radius(&self, anchor: &[f64], beta_hat: &[f64]) -> bool {
        norm2(&sub(beta_hat, anchor)) <= self.radius.threshold
    }

    pub fn slack(&self, loss: &LossSpec, beta_hat: &[f64], beta_star: &[f64]) -> Result<f64> {
        Ok(self.bound - loss.bregman_divergence(beta_hat, beta_star)?)
    }
}

/// `D_L(β̂, β*) ≤ D_L(β̄, β*) + λ²(β̄, β*; ‖·‖)/(4γ₂(β̄; 1, C_{β̄,β*}, ‖·‖))`.
///
/// `γ₂` is evaluated over the enclosing cone, a superset of `C_{β̄,β*}`, so its
/// value bounds the true `γ₂` from below.
pub fn glm_oracle_bound(
    loss: &LossSpec,
    anchor: &[f64],
    beta_star: &[f64],
    reg: &RegularizerSpec,
    norm: &NormDescriptor,
    budget: usize,
    seed: u64,
) -> Result<GlmOracleBound> {
    if loss.is_quadratic() {
        return Err(Error::Unsupported("glm_oracle_bound needs a GLM loss".into()));
    }
    let eta_star = noise_level_eta(loss, beta_star, reg)?;
    if !(eta_star < 1.0) {
        return Err(Error::InvalidArgument(format!("η(β*) = {eta_star} is not below 1")));
    }
    let lambda = penalty_level_lambda(loss, anchor, beta_star, reg, norm)?;
    let anchor_divergence = loss.bregman_divergence(anchor, beta_star)?;
    let frame = reg.certificate_frame(anchor, 1.0)?;
    let split = TargetSplit::at(loss, &frame, beta_star)?;
    let cone = ConeSpec::new(frame, split)
        .with_norm(ConeNorm::primal_of(norm, loss.dim())?)
        .with_constraint(ConeConstraint::Exact);
    let gamma2 = glm_gamma(loss, anchor, &cone, 1.0, 2, budget, seed)?;
    let kappa = loss.kappa();
    let (bound, threshold) = if gamma2.empty_cone {
        (anchor_divergence, f64::INFINITY)
    } else {
        let g = gamma2.value();
        if !(g > 0.0) {
            return Err(Error::Infeasible(format!("γ₂ estimate is not positive ({g:e})")));
        }
        let extra = if lambda == 0.0 { 0.0 } else { lambda * lambda / (4.0 * g) };
        let threshold = if kappa == 0.0 || lambda == 0.0 { f64::INFINITY } else { g / (kappa * kappa * lambda) + lambda / (4.0 * g) };
        (anchor_divergence + extra, threshold)
    };
    let enclosing_radius = if gamma2.empty_cone { 0.0 } else { f64::INFINITY };
    let radius = RadiusCondition { threshold, enclosing_radius, holds: enclosing_radius <= threshold };
    Ok(GlmOracleBound { anchor_divergence, lambda, eta_star, gamma2, bound, radius })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::GlmFamily;
    use crate::rng::seeded;

    fn lasso(lambda: f64) -> RegularizerSpec {
        RegularizerSpec::Lasso { lambda }
    }

    fn quad(x: DenseMatrix) -> LossSpec {
        let n = x.rows();
        LossSpec::quadratic(x, vec![0.0; n]).unwrap()
    }

    fn random_matrix(n: usize, p: usize, seed: u64) -> DenseMatrix {
        let mut rng = seeded(seed);
        DenseMatrix::from_row_major(n, p, normal_vec(&mut rng, n * p)).unwrap()
    }

    /// Cone of a noise-free target (`∇L(β*) = 0`).
    fn lasso_cone(anchor: &[f64], eta: f64) -> ConeSpec {
        let frame = lasso(1.0).certificate_frame(anchor, eta).unwrap();
        let p = anchor.len();
        let split = TargetSplit { beta_star: anchor.to_vec(), a_tilde: vec![0.0; p], b_tilde: vec![0.0; p], eta_tilde: 0.0 };
        ConeSpec::new(frame, split)
    }

    #[test]
    fn identity_design_gives_two() {
        let loss = quad(DenseMatrix::identity(5));
        let cone = lasso_cone(&[1.0, 0.0, -2.0, 0.0, 0.0], 0.5);
        let est = rsc_estimate(&loss, &cone, 400, 3).unwrap();
        assert!((est.upper - 2.0).abs() < 1e-12);
        assert!(est.certified && (est.lower - 2.0).abs() <= GRID_RESOLUTION);
    }

    #[test]
    fn empty_cone_is_flagged() {
        // Anchor 0: no tangent, noise inside the certificate set.
        let loss = LossSpec::quadratic(DenseMatrix::identity(3), vec![0.1, -0.1, 0.05]).unwrap();
        let frame = lasso(1.0).certificate_frame(&[0.0; 3], 0.9).unwrap();
        let split = TargetSplit::at(&loss, &frame, &[0.0; 3]).unwrap();
        let cone = ConeSpec::new(frame, split).with_constraint(ConeConstraint::Exact);
        let est = rsc_estimate(&loss, &cone, 200, 1).unwrap();
        assert!(est.empty_cone && est.upper.is_infinite());
    }

    #[test]
    fn two_dim_grid_matches_sampling() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 0.4], vec![0.3, 0.8], vec![-0.5, 0.2]]).unwrap();
        let loss = quad(x);
        let cone = lasso_cone(&[1.0, 0.0], 0.5);
        let est = rsc_estimate(&loss, &cone, 2000, 11).unwrap();
        assert!(est.certified);
        assert!(est.lower <= est.upper && est.lower >= 0.0);
        assert!((est.sampled - est.lower).abs() <= GRID_RESOLUTION, "{est:?}");
    }

    #[test]
    fn quadratic_ratio_ignores_radius() {
        let loss = quad(random_matrix(8, 4, 2));
        let a = lasso_cone(&[1.0, -1.0, 0.0, 0.0], 0.5);
        let b = a.clone().with_radius(0.01);
        let ea = rsc_estimate(&loss, &a, 500, 4).unwrap();
        let eb = rsc_estimate(&loss, &b, 500, 4).unwrap();
        assert_eq!(ea, eb);
    }

    #[test]
    fn compatibility_scales_quadratically() {
        let x = random_matrix(6, 3, 5);
        let frame = lasso(1.0).certificate_frame(&[1.0, 0.0, 0.0], 0.5).unwrap();
        let a = compatibility_constant(&x, &frame, 0.5, 0.1, 1000, 1).unwrap();
        let b = compatibility_constant(&x.scaled(3.0), &frame, 0.5, 0.1, 1000, 1).unwrap();
        assert!(a.certified && b.certified);
        assert!((b.lower - 9.0 * a.lower).abs() <= 9.0 * GRID_RESOLUTION + 1e-9);
        assert!((b.sampled - 9.0 * a.sampled).abs() <= 1e-6 * b.sampled.max(1.0) + 9.0 * GRID_RESOLUTION);
    }

    #[test]
    fn sign_cone_dominates_l1_cone() {
        let x = random_matrix(7, 3, 9);
        let frame = lasso(1.0).certificate_frame(&[1.0, 0.0, 0.0], 0.5).unwrap();
        let s = compatibility_constant(&x, &frame, 0.5, 0.0, 1000, 2).unwrap();
        let l = compatibility_constant_l1(&x, &frame, 0.5, 0.0, 1000, 2).unwrap();
        assert!(s.lower + GRID_RESOLUTION >= l.lower);
        assert!(s.upper + GRID_RESOLUTION >= l.upper);
    }

    #[test]
    fn sparse_eigs_identity_and_duplicates() {
        let g = GroupStructure::contiguous(4, 1).unwrap();
        for k in 1..=4 {
            let e = sparse_eigs(&DenseMatrix::identity(4), &g, k, &[0]).unwrap();
            assert!((e.rho_plus - 1.0).abs() < 1e-12 && (e.gamma_sk - 1.0).abs() < 1e-12);
        }
        let mut x = random_matrix(6, 4, 3);
        for i in 0..6 {
            x.set(i, 3, x.get(i, 0));
        }
        let e = sparse_eigs(&x, &g, 2, &[0]).unwrap();
        assert!(e.gamma_sk < 1e-10);
    }

    #[test]
    fn sparse_eigs_refuses_large_enumerations() {
        let g = GroupStructure::contiguous(40, 1).unwrap();
        let x = DenseMatrix::identity(40);
        assert!(matches!(sparse_eigs(&x, &g, 10, &[]), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn correlation_vanishes_for_orthonormal_columns() {
        let h = DenseMatrix::identity(5);
        let frame = lasso(1.0).certificate_frame(&[1.0, 0.0, 0.0, 0.0, 0.0], 0.5).unwrap();
        let tt = TangentSpace::Coordinate { dim: 5, support: vec![0, 1] };
        let c = correlation_t(&h, &tt, &frame, 2.0, 300, 1).unwrap();
        assert!(c.estimate.upper.abs() < 1e-12);
        assert!((c.crude_bound - 2.0).abs() < 1e-9);
        let z = correlation_t(&h, &frame.tangent(), &frame, 0.0, 300, 1).unwrap();
        assert_eq!(z.estimate.upper, 0.0);
    }

    #[test]
    fn correlation_exact_matches_closed_form() {
        // T̃ = T, lasso: cor = δ′/λ · max_j ‖H_SS^{-1/2} H_{S j}‖.
        let x = random_matrix(10, 4, 8);
        let h = x.gram();
        let lambda = 0.7;
        let frame = RegularizerSpec::Lasso { lambda }.certificate_frame(&[1.0, -1.0, 0.0, 0.0], 0.5).unwrap();
        let c = correlation_t(&h, &frame.tangent(), &frame, 1.5, 300, 1).unwrap();
        let hs = h.principal(&[0, 1]);
        let inv = pinv_psd(&hs).unwrap();
        let oracle = [2, 3]
            .iter()
            .map(|&j| {
                let col = vec![h.get(0, j), h.get(1, j)];
                dot(&col, &inv.matvec(&col)).sqrt()
            })
            .fold(0.0, f64::max)
            * 1.5
            / lambda;
        assert!(c.estimate.certified);
        assert!((c.estimate.upper - oracle).abs() < 1e-9 * oracle.max(1.0), "{} vs {oracle}", c.estimate.upper);
    }

    #[test]
    fn param_bound_trivial_cases() {
        let frame = lasso(1.0).certificate_frame(&[1.0, 0.0, 0.0], 0.5).unwrap();
        let h = DenseMatrix::identity(3);
        let b = param_error_bound(0.0, 0.5, &frame, &[2.0, 0.0, 0.0], &h, &frame.tangent(), 0.0).unwrap();
        assert_eq!((b.delta_prime, b.tangent_energy), (0.0, 0.0));
        let b = param_error_bound(0.3, 0.5, &frame, &[2.0, 0.0, 0.0], &h, &frame.tangent(), 0.0).unwrap();
        assert!((b.tangent_energy - (0.5 * 0.6f64).sqrt()).abs() < 1e-15);
        assert!(param_error_bound(0.3, 1.0, &frame, &[2.0, 0.0, 0.0], &h, &frame.tangent(), 0.0).is_err());
    }

    fn logistic(x: DenseMatrix, seed: u64) -> LossSpec {
        let mut rng = seeded(seed);
        let y = (0..x.rows()).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        LossSpec::glm(x, GlmFamily::Logistic, y).unwrap()
    }

    #[test]
    fn glm_gamma_squared_identity() {
        // ℓ″ = 2 for (t − y)², so each row weighs 2/(2e) and Σ d_i² = 1.
        let loss = LossSpec::glm(DenseMatrix::identity(2), GlmFamily::Squared, vec![0.0, 0.0]).unwrap();
        let cone = lasso_cone(&[1.0, 0.0], 0.5);
        let est = glm_gamma(&loss, &[1.0, 0.0], &cone, 1.0, 2, 500, 1).unwrap();
        assert!((est.upper - 1.0 / std::f64::consts::E).abs() < 1e-9, "{est:?}");
        assert!(est.certified);
    }

    #[test]
    fn glm_gamma_vanishes_without_cap() {
        let loss = logistic(random_matrix(12, 2, 4), 4);
        let cone = lasso_cone(&[0.5, 0.0], 0.5);
        let est = glm_gamma(&loss, &[0.5, 0.0], &cone, f64::INFINITY, 2, 500, 1).unwrap();
        assert_eq!(est.upper, 0.0);
    }

    #[test]
    fn glm_gamma_monotone_in_weights() {
        let loss = logistic(random_matrix(12, 2, 6), 6);
        let near = [0.3, 0.0];
        let far = [6.0, 0.0];
        let cn = lasso_cone(&near, 0.5);
        let cf = lasso_cone(&far, 0.5);
        // The two cones coincide (same support and sign), so only the weights move.
        let a = glm_gamma(&loss, &near, &cn, 1.0, 2, 800, 2).unwrap();
        let b = glm_gamma(&loss, &far, &cf, 1.0, 2, 800, 2).unwrap();
        assert!(b.upper < a.upper);
    }

    #[test]
    fn glm_bound_collapses_without_penalty_level() {
        let x = random_matrix(20, 2, 12);
        let loss = logistic(x, 12);
        let reg = RegularizerSpec::Lasso { lambda: 2.0 };
        let beta = [0.4, -0.2];
        // λ(β̄, β*) = 0 requires ∇L(β*) ∈ −∂R(β̄); at β̄ = β* = 0 and a tiny
        // gradient the dual ball contains it.
        let zero = [0.0, 0.0];
        let g = loss.gradient(&zero).unwrap();
        if crate::linalg::norm_inf(&g) < 2.0 {
            let b = glm_oracle_bound(&loss, &zero, &zero, &reg, &NormDescriptor::L2, 300, 1).unwrap();
            assert_eq!(b.lambda, 0.0);
            assert_eq!(b.bound, b.anchor_divergence);
        }
        let b = glm_oracle_bound(&loss, &beta, &beta, &reg, &NormDescriptor::L2, 300, 1);
        if let Ok(b) = b {
            assert!(b.bound >= b.anchor_divergence);
            assert!(b.gamma2.certified);
        }
    }
}
