//! Hermitian and PSD matrix calculus: log-determinants, Loewner tests,
//! trace-capped PSD projection, inverse square roots, SVD and pseudoinverse.
//!
//! Every logarithm here is natural; callers convert to bits.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Numerical slack used by the Loewner tests, residual checks and rate comparisons.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub psd_eig: f64,
    pub residual: f64,
    /// Bits.
    pub rate: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { psd_eig: 1e-9, residual: 1e-8, rate: 1e-4 }
    }
}

impl Tolerance {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if ok(self.psd_eig) && ok(self.residual) && ok(self.rate) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("tolerances must be positive: {self:?}")))
        }
    }
}

/// A square complex matrix equal to its conjugate transpose.
#[derive(Clone, Debug, PartialEq)]
pub struct Hermitian(CMatrix);

impl Hermitian {
    /// Accepts `m` if it is square, finite and Hermitian up to a relative 1e-9
    /// asymmetry; the stored value is the exact Hermitian part.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: "square matrix".into(),
                found: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { field: "matrix" });
        }
        let asym = (&m - m.adjoint()).norm();
        if asym > 1e-9 * m.norm().max(1.0) {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        Ok(Hermitian::symmetrize(&m))
    }

    /// Hermitian part (M + Mᴴ)/2 of a square matrix.
    pub fn symmetrize(m: &CMatrix) -> Self {
        Hermitian((m + m.adjoint()).scale(0.5))
    }

    pub fn identity(n: usize) -> Self {
        Hermitian(CMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Hermitian(CMatrix::zeros(n, n))
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Hermitian(CMatrix::from_fn(n, n, |i, j| if i == j { C64::new(d[i], 0.0) } else { C64::new(0.0, 0.0) }))
    }

    /// Builds from real rows; the rows must form a symmetric matrix.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        Hermitian::new(cmatrix_from_real(rows))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    /// Eigenvalues in ascending order with matching unit eigenvectors as columns.
    pub fn eigh(&self) -> (Vec<f64>, CMatrix) {
        eigh(&self.0)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigh().0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Spectral norm.
    pub fn norm2(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0, |m: f64, x| m.max(x.abs()))
    }

    /// A·self·Aᴴ.
    pub fn congruence(&self, a: &CMatrix) -> Hermitian {
        Hermitian::symmetrize(&(a * &self.0 * a.adjoint()))
    }

    pub fn add(&self, other: &Hermitian) -> Hermitian {
        Hermitian(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Hermitian) -> Hermitian {
        Hermitian(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> Hermitian {
        Hermitian(self.0.scale(s))
    }

    pub fn inverse(&self) -> Result<Hermitian> {
        let (w, v) = self.eigh();
        let tiny = f64::EPSILON * self.norm2().max(f64::MIN_POSITIVE) * self.dim() as f64;
        if w.iter().any(|x| x.abs() <= tiny) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: w[0] });
        }
        Ok(from_eigen(&w.iter().map(|x| 1.0 / x).collect::<Vec<_>>(), &v))
    }

    /// Principal square root of a PSD matrix (negative eigenvalues clipped).
    pub fn sqrt_psd(&self) -> Hermitian {
        let (w, v) = self.eigh();
        from_eigen(&w.iter().map(|x| x.max(0.0).sqrt()).collect::<Vec<_>>(), &v)
    }

    pub fn is_psd(&self, tol: &Tolerance) -> bool {
        self.min_eigenvalue() >= -tol.psd_eig * self.norm2().max(1.0)
    }
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cmatrix_from_real(rows: &[&[f64]]) -> CMatrix {
    let r = rows.len();
    let k = rows.first().map_or(0, |row| row.len());
    CMatrix::from_fn(r, k, |i, j| C64::new(rows[i][j], 0.0))
}

/// Ascending eigen-decomposition of the Hermitian part of `m`.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let h = (m + m.adjoint()).scale(0.5);
    let se = h.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let w = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let v = CMatrix::from_fn(n, n, |r, col| se.eigenvectors[(r, idx[col])]);
    (w, v)
}

/// V·diag(w)·Vᴴ.
pub fn from_eigen(w: &[f64], v: &CMatrix) -> Hermitian {
    let mut scaled = v.clone();
    for (j, &x) in w.iter().enumerate() {
        scaled.column_mut(j).scale_mut(x);
    }
    Hermitian::symmetrize(&(scaled * v.adjoint()))
}

/// Natural log-determinant of a positive definite matrix.
///
/// Fails with `NotPositiveDefinite` when an eigenvalue lies below
/// `−psd_eig·‖M‖`, or is not strictly positive (the log is undefined there).
pub fn logdet_pd(m: &Hermitian, tol: &Tolerance) -> Result<f64> {
    let w = m.eigenvalues();
    let norm = w.iter().fold(0.0, |a: f64, x| a.max(x.abs()));
    let min = w.first().copied().unwrap_or(1.0);
    if min < -tol.psd_eig * norm || min <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(w.iter().map(|x| x.ln()).sum())
}

/// Cholesky log-determinant; `None` if `m` is not numerically positive definite.
pub(crate) fn logdet_chol(m: &CMatrix) -> Option<f64> {
    let ch = m.clone().cholesky()?;
    let l = ch.l_dirty();
    let mut s = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)].re;
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        s += d.ln();
    }
    Some(2.0 * s)
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub(crate) fn inv_pd(m: &CMatrix) -> Option<CMatrix> {
    let inv = m.clone().cholesky()?.inverse();
    Some((&inv + inv.adjoint()).scale(0.5))
}

/// A ⪯ B in the Loewner order, up to `psd_eig·max(1, ‖B−A‖)`.
pub fn loewner_leq(a: &Hermitian, b: &Hermitian, tol: &Tolerance) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0}", a.dim()),
            found: format!("{0}x{0}", b.dim()),
        });
    }
    let d = b.sub(a);
    let w = d.eigenvalues();
    let norm = w.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
    let min = w.first().copied().unwrap_or(0.0);
    Ok(min >= -tol.psd_eig * norm.max(1.0))
}

/// Frobenius-nearest X with X ⪰ 0 and tr X ≤ p.
pub fn project_psd_trace(m: &Hermitian, p: f64) -> Hermitian {
    let (w, v) = m.eigh();
    let mut lam: Vec<f64> = w.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = lam.iter().sum();
    if total > p {
        let level = water_level(&lam, p);
        for x in lam.iter_mut() {
            *x = (*x - level).max(0.0);
        }
        // Rounding in the reconstruction must not push the trace over the cap.
        let s: f64 = lam.iter().sum();
        if s > p {
            let f = p / s;
            lam.iter_mut().for_each(|x| *x *= f);
        }
    }
    let out = from_eigen(&lam, &v);
    let tr = out.trace();
    if tr > p {
        out.scale(p / tr * (1.0 - 1e-15))
    } else {
        out
    }
}

/// μ ≥ 0 with Σ max(λᵢ − μ, 0) = p, for nonnegative λ with Σλ > p.
fn water_level(lam: &[f64], p: f64) -> f64 {
    let mut s: Vec<f64> = lam.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    for k in 0..s.len() {
        acc += s[k];
        let mu = (acc - p) / (k + 1) as f64;
        let next = s.get(k + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if mu >= next {
            return mu.max(0.0);
        }
    }
    0.0
}

/// Z^{−1/2}, so that T·Z·Tᴴ = I.
pub fn inv_sqrt(z: &Hermitian) -> Result<Hermitian> {
    let (w, v) = z.eigh();
    let min = w.first().copied().unwrap_or(1.0);
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(from_eigen(&w.iter().map(|x| 1.0 / x.sqrt()).collect::<Vec<_>>(), &v))
}

/// Full singular value decomposition M = U·Σ·Vᴴ with square unitary U (rows×rows)
/// and V (cols×cols) and nonincreasing singular values of length min(rows, cols).
pub fn svd(m: &CMatrix) -> (CMatrix, Vec<f64>, CMatrix) {
    let (r, k) = m.shape();
    let p = r.min(k);
    if p == 0 {
        return (CMatrix::identity(r, r), Vec::new(), CMatrix::identity(k, k));
    }
    let s = m.clone().svd(true, true);
    let u_thin = s.u.expect("u requested");
    let vt = s.v_t.expect("v requested");
    let mut idx: Vec<usize> = (0..p).collect();
    idx.sort_by(|&a, &b| s.singular_values[b].total_cmp(&s.singular_values[a]));
    let sigma: Vec<f64> = idx.iter().map(|&i| s.singular_values[i].max(0.0)).collect();
    let u_cols = CMatrix::from_fn(r, p, |i, j| u_thin[(i, idx[j])]);
    let v_cols = CMatrix::from_fn(k, p, |i, j| vt[(idx[j], i)].conj());
    (complete_unitary(&u_cols), sigma, complete_unitary(&v_cols))
}

/// Extends orthonormal columns to a square unitary matrix by Gram–Schmidt
/// against the standard basis.
fn complete_unitary(cols: &CMatrix) -> CMatrix {
    let n = cols.nrows();
    let mut basis: Vec<nalgebra::DVector<C64>> = Vec::with_capacity(n);
    for j in 0..cols.ncols() {
        basis.push(cols.column(j).into_owned());
    }
    let mut e = 0;
    while basis.len() < n && e < n {
        let mut v = nalgebra::DVector::<C64>::zeros(n);
        v[e] = c(1.0, 0.0);
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dotc(&v);
                v -= b * proj;
            }
        }
        let nv = v.norm();
        if nv > 1e-6 {
            basis.push(v / c(nv, 0.0));
        }
        e += 1;
    }
    CMatrix::from_fn(n, n, |i, j| basis[j][i])
}

/// Moore–Penrose pseudoinverse.
pub fn pinv(m: &CMatrix) -> CMatrix {
    let (r, k) = m.shape();
    let (u, s, v) = svd(m);
    let cutoff = s.first().copied().unwrap_or(0.0) * (r.max(k) as f64) * f64::EPSILON;
    let mut out = CMatrix::zeros(k, r);
    for (i, &si) in s.iter().enumerate() {
        if si > cutoff && si > 0.0 {
            let vi = v.column(i);
            let ui = u.column(i);
            out += (vi * ui.adjoint()).scale(1.0 / si);
        }
    }
    out
}

/// Numerical rank with the usual relative cutoff.
pub fn rank(m: &CMatrix) -> usize {
    let (r, k) = m.shape();
    let (_, s, _) = svd(m);
    let cutoff = s.first().copied().unwrap_or(0.0) * (r.max(k) as f64) * 1e-10;
    s.iter().filter(|&&x| x > cutoff && x > 0.0).count()
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub fn null_space(m: &CMatrix) -> CMatrix {
    let k = m.ncols();
    let r = rank(m);
    let (_, _, v) = svd(m);
    CMatrix::from_fn(k, k - r, |i, j| v[(i, r + j)])
}

/// Largest singular value divided by the smallest (∞ for singular input).
pub fn condition_number(m: &CMatrix) -> f64 {
    let (_, s, _) = svd(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 && s.len() == m.nrows().max(m.ncols()) => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Largest entrywise modulus of `a − b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().fold(0.0, |m: f64, z| m.max(z.norm()))
}
