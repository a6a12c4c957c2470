//! Dense kernels sized for desk-scale problems: one-sided Jacobi SVD, cyclic
//! Jacobi symmetric eigen-decomposition, Cholesky solves and conjugate gradient.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len("DenseMatrix::from_row_major", rows * cols, data.len())?;
        check_finite("DenseMatrix", &data)?;
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            check_len("DenseMatrix::from_rows", c, row.len())?;
            data.extend_from_slice(row);
        }
        Self::from_row_major(r, c, data)
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in d.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, col) in columns.iter().enumerate() {
            for i in 0..rows {
                m.data[i * cols + j] = col[i];
            }
        }
        m
    }

    /// Builds an `rows × cols` matrix from a generator closure.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Aᵀ y`.
    pub fn tmatvec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                axpy(yi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a != 0.0 {
                    axpy(a, other.row(k), orow);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `AᵀA`.
    pub fn gram(&self) -> DenseMatrix {
        let mut g = DenseMatrix::zeros(self.cols, self.cols);
        for i in 0..self.rows {
            let r = self.row(i);
            for a in 0..self.cols {
                let ra = r[a];
                if ra == 0.0 {
                    continue;
                }
                for b in a..self.cols {
                    g.data[a * self.cols + b] += ra * r[b];
                }
            }
        }
        for a in 0..self.cols {
            for b in 0..a {
                g.data[a * self.cols + b] = g.data[b * self.cols + a];
            }
        }
        g
    }

    pub fn select_columns(&self, idx: &[usize]) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, idx.len(), |i, j| self.get(i, idx[j]))
    }

    /// Principal submatrix on `idx`.
    pub fn principal(&self, idx: &[usize]) -> DenseMatrix {
        DenseMatrix::from_fn(idx.len(), idx.len(), |a, b| self.get(idx[a], idx[b]))
    }

    pub fn scaled(&self, c: f64) -> DenseMatrix {
        DenseMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| c * v).collect() }
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

#[inline]
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `y += a x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(c: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|v| c * v).collect()
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, k, n) = (self.u.rows(), self.s.len(), self.v.rows());
        DenseMatrix::from_fn(m, n, |i, j| (0..k).map(|r| self.u.get(i, r) * self.s[r] * self.v.get(j, r)).sum())
    }

    /// Number of singular values above `rel_tol · s_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            return 0;
        }
        self.s.iter().filter(|&&s| s > rel_tol * smax).count()
    }
}

const JACOBI_SVD_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(a: &DenseMatrix) -> Result<SvdFactors> {
    if !a.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::InvalidArgument("svd of an empty matrix".into()));
    }
    if a.rows() < a.cols() {
        let t = svd_tall(&a.transpose());
        return Ok(SvdFactors { u: t.v, s: t.s, v: t.u });
    }
    Ok(svd_tall(a))
}

fn svd_tall(a: &DenseMatrix) -> SvdFactors {
    let (m, n) = (a.rows(), a.cols());
    let mut cols = a.columns();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tiny = f64::MIN_POSITIVE.sqrt();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = dot(&cols[i], &cols[i]);
                let beta = dot(&cols[j], &cols[j]);
                let gamma = dot(&cols[i], &cols[j]);
                if gamma.abs() <= JACOBI_SVD_TOL * (alpha * beta).sqrt() || gamma.abs() < tiny {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, i, j, c, s);
                rotate_pair(&mut vcols, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
    let smax = norms[order[0]];
    let floor = smax * (m.max(n) as f64) * f64::EPSILON;
    let mut s = Vec::with_capacity(n);
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut vsorted: Vec<Vec<f64>> = Vec::with_capacity(n);
    for &k in &order {
        let sk = norms[k];
        if sk > floor && sk > 0.0 {
            s.push(sk);
            ucols.push(scale(1.0 / sk, &cols[k]));
        } else {
            s.push(0.0);
            ucols.push(vec![0.0; m]);
        }
        vsorted.push(vcols[k].clone());
    }
    orthonormalize_in_place(&mut ucols, m);
    SvdFactors { u: DenseMatrix::from_columns(m, &ucols), s, v: DenseMatrix::from_columns(n, &vsorted) }
}

fn rotate_pair(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(j);
    let (ci, cj) = (&mut lo[i], &mut hi[0]);
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Modified Gram-Schmidt pass; degenerate columns are replaced by canonical
/// basis vectors orthogonal to their predecessors.
fn orthonormalize_in_place(cols: &mut [Vec<f64>], dim: usize) {
    let mut next_basis = 0usize;
    for j in 0..cols.len() {
        let mut v = cols[j].clone();
        for _ in 0..2 {
            for prev in cols[..j].iter() {
                let c = dot(prev, &v);
                axpy(-c, prev, &mut v);
            }
        }
        let nv = norm2(&v);
        if nv > 0.5 {
            cols[j] = scale(1.0 / nv, &v);
            continue;
        }
        // Column was zero (null direction): complete with a canonical vector.
        loop {
            assert!(next_basis < dim, "cannot complete orthonormal basis");
            let mut e = vec![0.0; dim];
            e[next_basis] = 1.0;
            next_basis += 1;
            for _ in 0..2 {
                for prev in cols[..j].iter() {
                    let c = dot(prev, &e);
                    axpy(-c, prev, &mut e);
                }
            }
            let ne = norm2(&e);
            if ne > 1e-3 {
                cols[j] = scale(1.0 / ne, &e);
                break;
            }
        }
    }
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// (orthonormal) columns of `q`.
pub fn orthonormal_complement(q: &DenseMatrix) -> DenseMatrix {
    let dim = q.rows();
    let mut cols = q.columns();
    let k = cols.len();
    cols.extend((k..dim).map(|_| vec![0.0; dim]));
    orthonormalize_in_place(&mut cols, dim);
    DenseMatrix::from_columns(dim, &cols[k..])
}

/// Eigen-decomposition of a symmetric matrix; values ascending, vectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

fn check_symmetric(m: &DenseMatrix) -> Result<()> {
    if m.rows() != m.cols() {
        return Err(Error::Shape {
            context: "symmetric matrix",
            expected: format!("{0}x{0}", m.rows()),
            got: format!("{}x{}", m.rows(), m.cols()),
        });
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("symmetric matrix"));
    }
    let n = m.rows();
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in i + 1..n {
            asym = asym.max((m.get(i, j) - m.get(j, i)).abs());
        }
    }
    if asym > 1e-10 * m.max_abs().max(1.0) {
        return Err(Error::Asymmetric(asym));
    }
    Ok(())
}

/// Cyclic Jacobi eigen-iteration.
pub fn sym_eigen(m: &DenseMatrix) -> Result<SymEigen> {
    check_symmetric(m)?;
    let n = m.rows();
    let mut a = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)));
    let mut v = DenseMatrix::identity(n);
    let scale_sq = a.frobenius_norm().powi(2);
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a.get(i, j).powi(2)).sum();
        if off <= 1e-30 * scale_sq || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a.get(p, p), a.get(q, q));
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a.get(k, p), a.get(k, q));
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (a.get(p, k), a.get(q, k));
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a.get(x, x).total_cmp(&a.get(y, y)));
    let values = order.iter().map(|&k| a.get(k, k)).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| v.get(i, order[j]));
    Ok(SymEigen { values, vectors })
}

pub fn min_eigenvalue_sym(m: &DenseMatrix) -> Result<f64> {
    if m.rows() == 0 {
        return Err(Error::InvalidArgument("eigenvalue of an empty matrix".into()));
    }
    Ok(sym_eigen(m)?.values[0])
}

pub fn max_eigenvalue_sym(m: &DenseMatrix) -> Result<f64> {
    if m.rows() == 0 {
        return Err(Error::InvalidArgument("eigenvalue of an empty matrix".into()));
    }
    Ok(*sym_eigen(m)?.values.last().unwrap())
}

/// Cholesky factor `M = L Lᵀ` of an SPD matrix, reusable for several solves.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors `m`; near-singular input (min eigenvalue ≤ 1e-12·trace) is
    /// rejected with the eigenvalue estimate attached.
    pub fn new(m: &DenseMatrix) -> Result<Self> {
        check_symmetric(m)?;
        let n = m.rows();
        let trace = m.trace();
        let threshold = 1e-12 * trace.abs().max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = m.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > threshold) {
                return Err(Error::Singular { min_eigenvalue: min_eigenvalue_sym(m)? });
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        let chol = Cholesky { n, l };
        // Pivots only bound λ_min from above; inverse iteration closes the gap.
        let est = chol.min_eigenvalue_estimate();
        if est <= threshold {
            return Err(Error::Singular { min_eigenvalue: min_eigenvalue_sym(m)? });
        }
        Ok(chol)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn solve_raw(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_raw(b)
    }

    /// `λ_min` estimate by inverse iteration on the factor.
    pub fn min_eigenvalue_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return f64::INFINITY;
        }
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
        let nx = norm2(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let mut growth = 0.0;
        for _ in 0..30 {
            let y = self.solve_raw(&x);
            growth = norm2(&y);
            if !(growth > 0.0) || !growth.is_finite() {
                return 0.0;
            }
            x = scale(1.0 / growth, &y);
        }
        1.0 / growth
    }
}

/// Solves `M x = b` for SPD `M` with one step of iterative refinement.
pub fn solve_spd(m: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    check_len("solve_spd", m.rows(), b.len())?;
    check_finite("solve_spd rhs", b)?;
    let chol = Cholesky::new(m)?;
    let mut x = chol.solve(b);
    let r = sub(b, &m.matvec(&x));
    let dx = chol.solve(&r);
    axpy(1.0, &dx, &mut x);
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradient for a symmetric positive (semi)definite operator.
///
/// Stops when `‖r‖ ≤ tol·‖b‖`. A non-positive curvature direction means the
/// operator is singular on the Krylov space and is reported as such.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgOutcome { x, iterations: 0, relative_residual: 0.0 });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut it = 0;
    while it < max_iter {
        if rr.sqrt() <= tol * bnorm {
            break;
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        let pp = dot(&p, &p);
        if !(pap > 0.0) {
            return Err(Error::Singular { min_eigenvalue: pap / pp });
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        it += 1;
    }
    // Recompute the true residual rather than trusting the recurrence.
    let res = sub(b, &apply(&x));
    Ok(CgOutcome { relative_residual: norm2(&res) / bnorm, x, iterations: it })
}

/// Largest singular value of `A` by power iteration on `AᵀA`.
pub fn spectral_norm_power(a: &DenseMatrix, iterations: usize) -> f64 {
    if a.cols() == 0 || a.rows() == 0 {
        return 0.0;
    }
    let n = a.cols();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 2654435761usize) % 97) as f64 / 97.0).collect();
    let mut est = 0.0;
    for _ in 0..iterations {
        let nx = norm2(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let y = a.tmatvec(&a.matvec(&x));
        est = norm2(&y);
        x = y;
    }
    est.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, seeded};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        DenseMatrix::from_row_major(rows, cols, normal_vec(&mut seeded(seed), rows * cols)).unwrap()
    }

    fn orthonormality_error(q: &DenseMatrix) -> f64 {
        let g = q.gram();
        let mut e = 0.0_f64;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let target = if i == j { 1.0 } else { 0.0 };
                e = e.max((g.get(i, j) - target).abs());
            }
        }
        e
    }

    #[test]
    fn svd_identity_and_diagonal() {
        let f = svd(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(f.s, vec![1.0, 1.0, 1.0]);
        let f = svd(&DenseMatrix::from_diag(&[1.0, 3.0])).unwrap();
        assert!(close(f.s[0], 3.0, 1e-14) && close(f.s[1], 1.0, 1e-14));
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        for seed in 0..200u64 {
            let rows = 1 + (seed as usize * 7) % 20;
            let cols = 1 + (seed as usize * 13) % 20;
            let a = random(rows, cols, seed);
            let f = svd(&a).unwrap();
            let err = f.reconstruct().sub(&a).frobenius_norm();
            assert!(err <= 1e-8 * a.frobenius_norm(), "seed {seed}: {err}");
            assert!(orthonormality_error(&f.u) <= 1e-10, "U seed {seed}");
            assert!(orthonormality_error(&f.v) <= 1e-10, "V seed {seed}");
            assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn svd_rank_deficient_keeps_orthonormal_factors() {
        let u = random(6, 1, 1);
        let v = random(1, 4, 2);
        let a = u.matmul(&v);
        let f = svd(&a).unwrap();
        assert_eq!(f.rank(1e-10), 1);
        assert!(orthonormality_error(&f.u) <= 1e-10);
        assert!(f.reconstruct().sub(&a).frobenius_norm() <= 1e-10 * a.frobenius_norm());
        let z = svd(&DenseMatrix::zeros(3, 2)).unwrap();
        assert_eq!(z.s, vec![0.0, 0.0]);
        assert!(orthonormality_error(&z.u) <= 1e-12);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut a = DenseMatrix::identity(2);
        a.set(0, 1, f64::NAN);
        assert!(matches!(svd(&a), Err(Error::NonFinite(_))));
    }

    #[test]
    fn min_eigenvalue_examples() {
        assert!(close(min_eigenvalue_sym(&DenseMatrix::from_diag(&[2.0, 5.0])).unwrap(), 2.0, 1e-14));
        assert_eq!(min_eigenvalue_sym(&DenseMatrix::zeros(3, 3)).unwrap(), 0.0);
        let mut a = DenseMatrix::identity(2);
        a.set(0, 1, 1.0);
        assert!(matches!(min_eigenvalue_sym(&a), Err(Error::Asymmetric(_))));
    }

    #[test]
    fn min_eigenvalue_bounded_by_rayleigh_quotients() {
        let a = random(8, 5, 11);
        let g = a.gram();
        let lmin = min_eigenvalue_sym(&g).unwrap();
        assert!(lmin >= -1e-10);
        let mut rng = seeded(12);
        let mut best = f64::INFINITY;
        for _ in 0..10_000 {
            let x = normal_vec(&mut rng, 5);
            let q = dot(&x, &g.matvec(&x)) / dot(&x, &x);
            best = best.min(q);
        }
        // Every Rayleigh quotient dominates λ_min, and sampling gets close.
        assert!(best >= lmin - 1e-8 * g.frobenius_norm());
        assert!(best - lmin <= 0.05 * g.frobenius_norm());
    }

    #[test]
    fn eigenvectors_diagonalize() {
        let g = random(7, 6, 5).gram();
        let e = sym_eigen(&g).unwrap();
        for (k, &lam) in e.values.iter().enumerate() {
            let v = e.vectors.column(k);
            let r = sub(&g.matvec(&v), &scale(lam, &v));
            assert!(norm2(&r) <= 1e-9 * g.frobenius_norm());
        }
    }

    #[test]
    fn solve_spd_examples() {
        let b = vec![0.3, -2.0, 5.0];
        let x = solve_spd(&DenseMatrix::identity(3), &b).unwrap();
        assert_eq!(x, b);
        let x = solve_spd(&DenseMatrix::from_diag(&[2.0, 4.0]), &[2.0, 4.0]).unwrap();
        assert!(close(x[0], 1.0, 1e-15) && close(x[1], 1.0, 1e-15));
    }

    #[test]
    fn solve_spd_recovers_known_solution() {
        for seed in 0..50 {
            let m = random(12, 8, seed).gram();
            let x = normal_vec(&mut seeded(seed + 1000), 8);
            let b = m.matvec(&x);
            let got = solve_spd(&m, &b).unwrap();
            assert!(norm2(&sub(&got, &x)) <= 1e-8 * norm2(&x).max(1.0));
            assert!(norm2(&sub(&m.matvec(&got), &b)) <= 1e-9 * norm2(&b));
        }
    }

    #[test]
    fn solve_spd_reports_singularity() {
        let a = random(3, 5, 3);
        match solve_spd(&a.gram(), &[1.0; 5]) {
            Err(Error::Singular { min_eigenvalue }) => assert!(min_eigenvalue.abs() < 1e-8),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn conjugate_gradient_matches_dense_solve() {
        let m = random(10, 6, 77).gram();
        let b = normal_vec(&mut seeded(78), 6);
        let cg = conjugate_gradient(|v| m.matvec(v), &b, 1e-12, 60).unwrap();
        let dense = solve_spd(&m, &b).unwrap();
        assert!(norm2(&sub(&cg.x, &dense)) <= 1e-8 * norm2(&dense));
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let q = svd(&random(6, 2, 4)).unwrap().u;
        let c = orthonormal_complement(&q);
        assert_eq!(c.cols(), 4);
        assert!(orthonormality_error(&c) <= 1e-12);
        let cross = q.transpose().matmul(&c);
        assert!(cross.max_abs() <= 1e-12);
    }

    #[test]
    fn power_iteration_spectral_norm() {
        let a = random(9, 4, 9);
        let s = svd(&a).unwrap().s[0];
        assert!((spectral_norm_power(&a, 200) - s).abs() <= 1e-6 * s);
    }
}
