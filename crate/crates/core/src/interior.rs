//! Log-barrier Newton engine for max-min log-det programs over products of
//! Hermitian PSD blocks with trace budgets and optional upper bounds.
//!
//! Each objective is a sum of terms `coef·(log|O + Σ H X Hᴴ| − log|O|)` plus
//! linear terms `Re tr(K X)` and a constant. The engine maximizes the minimum of
//! the objectives through the epigraph variable `t`. Newton directions are
//! parametrized as `ΔX_k = L_k E_k L_kᴴ` with `L_k` the Cholesky factor of the
//! current block, which turns the PSD barrier Hessian into the identity.
//!
//! With nonconcave objectives (negative coefficients) the Hessian is
//! regularized until it is definite; the method then finds a local maximizer.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, DVector};

use crate::matrix::{c, eigh, inv_pd, logdet_chol, CMatrix, C64};

#[derive(Clone, Debug)]
pub(crate) struct LogDetTerm {
    pub coef: f64,
    pub offset: CMatrix,
    pub maps: Vec<(usize, CMatrix)>,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Objective {
    pub logdets: Vec<LogDetTerm>,
    pub linear: Vec<(usize, CMatrix)>,
    pub constant: f64,
}

/// `Σ_{(k, idx)} Σ_{i ∈ idx} X_k[i, i] ≤ cap`.
#[derive(Clone, Debug)]
pub(crate) struct Budget {
    pub cap: f64,
    pub members: Vec<(usize, Vec<usize>)>,
}

#[derive(Clone, Debug)]
pub(crate) struct Program {
    pub dims: Vec<usize>,
    pub upper: Vec<Option<CMatrix>>,
    pub objectives: Vec<Objective>,
    pub budgets: Vec<Budget>,
}

#[derive(Clone, Debug)]
pub(crate) struct SolveOptions {
    pub gap_tol: f64,
    pub mu: f64,
    pub tau0: f64,
    pub max_newton: usize,
    pub warm: Option<Vec<CMatrix>>,
    /// Weight of the analytic-center point mixed into a warm start.
    pub warm_blend: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { gap_tol: 1e-8, mu: 16.0, tau0: 1.0, max_newton: 600, warm: None, warm_blend: 1e-3 }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Solution {
    pub blocks: Vec<CMatrix>,
    pub values: Vec<f64>,
    pub newton_steps: usize,
    pub converged: bool,
}

impl Solution {
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy)]
struct Elem {
    e: [(usize, usize, C64); 2],
    len: usize,
}

fn basis(n: usize) -> Vec<Elem> {
    let mut out = Vec::with_capacity(n * n);
    let z = (0, 0, c(0.0, 0.0));
    for i in 0..n {
        out.push(Elem { e: [(i, i, c(1.0, 0.0)), z], len: 1 });
    }
    let s = FRAC_1_SQRT_2;
    for i in 0..n {
        for j in i + 1..n {
            out.push(Elem { e: [(i, j, c(s, 0.0)), (j, i, c(s, 0.0))], len: 2 });
            out.push(Elem { e: [(i, j, c(0.0, s)), (j, i, c(0.0, -s))], len: 2 });
        }
    }
    out
}

impl Elem {
    fn entries(&self) -> &[(usize, usize, C64)] {
        &self.e[..self.len]
    }

    /// Re tr(A·E).
    fn tr(&self, a: &CMatrix) -> f64 {
        self.entries().iter().map(|&(r, s, w)| (w * a[(s, r)]).re).sum()
    }
}

/// Re tr(E_p·A·E_q·B).
fn tr4(p: &Elem, a: &CMatrix, q: &Elem, b: &CMatrix) -> f64 {
    let mut acc = 0.0;
    for &(i, j, wp) in p.entries() {
        for &(k, l, wq) in q.entries() {
            acc += (wp * wq * a[(j, k)] * b[(l, i)]).re;
        }
    }
    acc
}

fn to_matrix(x: &[f64], n: usize, basis: &[Elem]) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for (v, el) in x.iter().zip(basis) {
        for &(i, j, w) in el.entries() {
            m[(i, j)] += w * *v;
        }
    }
    m
}

fn herm(m: CMatrix) -> CMatrix {
    (&m + m.adjoint()).scale(0.5)
}

struct Prepared<'a> {
    prog: &'a Program,
    offsets_ld: Vec<Vec<f64>>,
    bases: Vec<Vec<Elem>>,
    starts: Vec<usize>,
    nv: usize,
    m_bar: f64,
}

impl<'a> Prepared<'a> {
    fn new(prog: &'a Program) -> Self {
        let offsets_ld = prog
            .objectives
            .iter()
            .map(|o| o.logdets.iter().map(|t| logdet_chol(&t.offset).expect("offset must be positive definite")).collect())
            .collect();
        let bases: Vec<Vec<Elem>> = prog.dims.iter().map(|&n| basis(n)).collect();
        let mut starts = Vec::with_capacity(prog.dims.len());
        let mut acc = 0;
        for &n in &prog.dims {
            starts.push(acc);
            acc += n * n;
        }
        let cones: usize = prog.dims.iter().sum::<usize>()
            + prog.upper.iter().zip(&prog.dims).filter(|(u, _)| u.is_some()).map(|(_, &n)| n).sum::<usize>();
        let m_bar = (cones + prog.budgets.len() + prog.objectives.len()) as f64;
        Prepared { prog, offsets_ld, bases, starts, nv: acc + 1, m_bar }
    }

    fn objective_value(&self, i: usize, xs: &[CMatrix]) -> Option<f64> {
        let o = &self.prog.objectives[i];
        let mut v = o.constant;
        for (t, term) in o.logdets.iter().enumerate() {
            let mut m = term.offset.clone();
            for (k, h) in &term.maps {
                m += h * &xs[*k] * h.adjoint();
            }
            v += term.coef * (logdet_chol(&herm(m))? - self.offsets_ld[i][t]);
        }
        for (k, kmat) in &o.linear {
            v += (kmat.component_mul(&xs[*k].transpose())).sum().re;
        }
        Some(v)
    }

    fn values(&self, xs: &[CMatrix]) -> Option<Vec<f64>> {
        (0..self.prog.objectives.len()).map(|i| self.objective_value(i, xs)).collect()
    }

    fn slack(&self, b: &Budget, xs: &[CMatrix]) -> f64 {
        let used: f64 = b.members.iter().map(|(k, idx)| idx.iter().map(|&i| xs[*k][(i, i)].re).sum::<f64>()).sum();
        b.cap - used
    }

    /// Barrier value without the `τ·t` term, or `None` outside the interior.
    fn phi(&self, xs: &[CMatrix], t: f64) -> Option<f64> {
        let mut v = 0.0;
        for f in self.values(xs)? {
            let d = f - t;
            if !(d > 0.0) {
                return None;
            }
            v += d.ln();
        }
        for (k, x) in xs.iter().enumerate() {
            v += logdet_chol(x)?;
            if let Some(u) = &self.prog.upper[k] {
                v += logdet_chol(&herm(u - x))?;
            }
        }
        for b in &self.prog.budgets {
            let s = self.slack(b, xs);
            if !(s > 0.0) {
                return None;
            }
            v += s.ln();
        }
        Some(v)
    }

    fn initial_point(&self) -> Vec<CMatrix> {
        let prog = self.prog;
        prog.dims
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let mut d = vec![f64::INFINITY; n];
                for b in &prog.budgets {
                    let count: usize = b.members.iter().map(|(_, idx)| idx.len()).sum();
                    let level = b.cap / (2.0 * count.max(1) as f64);
                    for (kk, idx) in &b.members {
                        if *kk == k {
                            for &i in idx {
                                d[i] = d[i].min(level);
                            }
                        }
                    }
                }
                let mut cap = 1.0;
                if let Some(u) = &prog.upper[k] {
                    cap = 0.5 * eigh(u).0[0];
                }
                let diag: Vec<f64> = d.iter().map(|&x| if x.is_finite() { x.min(cap) } else { cap }).collect();
                CMatrix::from_fn(n, n, |i, j| if i == j { c(diag[i], 0.0) } else { c(0.0, 0.0) })
            })
            .collect()
    }
}

/// Gradient and Hessian of objective `i` in the scaled coordinates.
fn objective_derivs(
    pre: &Prepared,
    i: usize,
    ls: &[CMatrix],
    xs: &[CMatrix],
    grad: &mut DVector<f64>,
    hess: &mut DMatrix<f64>,
) {
    let o = &pre.prog.objectives[i];
    for term in &o.logdets {
        let mut m = term.offset.clone();
        for (k, h) in &term.maps {
            m += h * &xs[*k] * h.adjoint();
        }
        let minv = inv_pd(&herm(m)).expect("interior point keeps log-det arguments definite");
        let hats: Vec<CMatrix> = term.maps.iter().map(|(k, h)| h * &ls[*k]).collect();
        let mh: Vec<CMatrix> = hats.iter().map(|h| &minv * h).collect();
        for (a, (ka, _)) in term.maps.iter().enumerate() {
            let basis_a = &pre.bases[*ka];
            let off_a = pre.starts[*ka];
            let gmat = hats[a].adjoint() * &mh[a];
            for (p, el) in basis_a.iter().enumerate() {
                grad[off_a + p] += term.coef * el.tr(&gmat);
            }
            for (b, (kb, _)) in term.maps.iter().enumerate() {
                let basis_b = &pre.bases[*kb];
                let off_b = pre.starts[*kb];
                let k_ab = hats[a].adjoint() * &mh[b];
                let k_ba = hats[b].adjoint() * &mh[a];
                for (p, ep) in basis_a.iter().enumerate() {
                    for (q, eq) in basis_b.iter().enumerate() {
                        hess[(off_a + p, off_b + q)] -= term.coef * tr4(ep, &k_ab, eq, &k_ba);
                    }
                }
            }
        }
    }
    for (k, kmat) in &o.linear {
        let g = ls[*k].adjoint() * kmat * &ls[*k];
        for (p, el) in pre.bases[*k].iter().enumerate() {
            grad[pre.starts[*k] + p] += el.tr(&g);
        }
    }
}

enum Step {
    Done,
    Moved,
    Stalled,
}

#[allow(clippy::too_many_arguments)]
fn newton_step(pre: &Prepared, xs: &mut [CMatrix], t: &mut f64, tau: f64, tol: f64) -> Option<(Step, f64)> {
    let prog = pre.prog;
    let nv = pre.nv;
    let it = nv - 1;
    let ls: Vec<CMatrix> = xs.iter().map(|x| x.clone().cholesky().map(|ch| ch.unpack())).collect::<Option<_>>()?;

    let mut grad = DVector::<f64>::zeros(nv);
    let mut hess = DMatrix::<f64>::zeros(nv, nv);
    grad[it] += tau;

    let vals = pre.values(xs)?;
    for (i, &f) in vals.iter().enumerate() {
        let d = f - *t;
        if !(d > 0.0) {
            return None;
        }
        let mut g = DVector::<f64>::zeros(nv);
        let mut h = DMatrix::<f64>::zeros(nv, nv);
        objective_derivs(pre, i, &ls, xs, &mut g, &mut h);
        g[it] = -1.0;
        grad.axpy(1.0 / d, &g, 1.0);
        hess += h.scale(1.0 / d);
        hess.ger(-1.0 / (d * d), &g, &g, 1.0);
    }

    for (k, &n) in prog.dims.iter().enumerate() {
        let off = pre.starts[k];
        for p in 0..n {
            grad[off + p] += 1.0;
        }
        for p in 0..n * n {
            hess[(off + p, off + p)] -= 1.0;
        }
        if let Some(u) = &prog.upper[k] {
            let w = inv_pd(&herm(u - &xs[k]))?;
            let kk = ls[k].adjoint() * w * &ls[k];
            let basis = &pre.bases[k];
            for (p, ep) in basis.iter().enumerate() {
                grad[off + p] -= ep.tr(&kk);
                for (q, eq) in basis.iter().enumerate() {
                    hess[(off + p, off + q)] -= tr4(ep, &kk, eq, &kk);
                }
            }
        }
    }

    for b in &prog.budgets {
        let s = pre.slack(b, xs);
        if !(s > 0.0) {
            return None;
        }
        let mut a = DVector::<f64>::zeros(nv);
        for (k, idx) in &b.members {
            let l = &ls[*k];
            let n = prog.dims[*k];
            let mut sel = CMatrix::zeros(n, n);
            for &i in idx {
                let row = l.row(i);
                sel += row.adjoint() * row;
            }
            for (p, el) in pre.bases[*k].iter().enumerate() {
                a[pre.starts[*k] + p] += el.tr(&sel);
            }
        }
        grad.axpy(-1.0 / s, &a, 1.0);
        hess.ger(-1.0 / (s * s), &a, &a, 1.0);
    }

    let dir = solve_newton(&hess, &grad)?;
    let dec = grad.dot(&dir);
    if dec <= tol {
        return Some((Step::Done, dec));
    }

    let dirs: Vec<CMatrix> = prog
        .dims
        .iter()
        .enumerate()
        .map(|(k, &n)| herm(to_matrix(&dir.as_slice()[pre.starts[k]..pre.starts[k] + n * n], n, &pre.bases[k])))
        .collect();
    let mut alpha_max: f64 = 1.0;
    for e in &dirs {
        if let Some(&lo) = eigh(e).0.first() {
            if lo < 0.0 {
                alpha_max = alpha_max.min(0.99 / -lo);
            }
        }
    }
    let phi0 = pre.phi(xs, *t)?;
    let mut alpha = alpha_max;
    for _ in 0..80 {
        let trial: Vec<CMatrix> = xs
            .iter()
            .zip(&ls)
            .zip(&dirs)
            .map(|((x, l), e)| herm(x + (l * e * l.adjoint()).scale(alpha)))
            .collect();
        let tt = *t + alpha * dir[it];
        if let Some(p) = pre.phi(&trial, tt) {
            if tau * alpha * dir[it] + (p - phi0) >= 0.25 * alpha * dec {
                if alpha < 1e-9 {
                    break;
                }
                xs.clone_from_slice(&trial);
                *t = tt;
                return Some((Step::Moved, dec));
            }
        }
        alpha *= 0.5;
    }
    Some((Step::Stalled, dec))
}

/// Solves (−H)·d = g with Jacobi scaling, regularizing when −H is not definite.
fn solve_newton(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let n = grad.len();
    let neg = -hess;
    let scale: Vec<f64> = (0..n).map(|i| 1.0 / neg[(i, i)].abs().max(1e-300).sqrt()).collect();
    let mut a = DMatrix::from_fn(n, n, |i, j| neg[(i, j)] * scale[i] * scale[j]);
    a = (&a + a.transpose()).scale(0.5);
    let b = DVector::from_fn(n, |i, _| grad[i] * scale[i]);
    let mut delta = 0.0;
    for _ in 0..40 {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += delta;
        }
        if let Some(ch) = m.cholesky() {
            let y = ch.solve(&b);
            if y.iter().all(|v| v.is_finite()) {
                return Some(DVector::from_fn(n, |i, _| y[i] * scale[i]));
            }
        }
        delta = if delta == 0.0 { 1e-10 } else { delta * 10.0 };
    }
    None
}

/// Maximizes the minimum of the objectives of `prog`.
const STALL_GAP: f64 = 1e-6;

pub(crate) fn solve(prog: &Program, opts: &SolveOptions) -> Solution {
    let pre = Prepared::new(prog);
    let center = pre.initial_point();
    let mut xs = match &opts.warm {
        Some(w) => w
            .iter()
            .zip(&center)
            .map(|(x, c0)| herm(x.scale(1.0 - opts.warm_blend) + c0.scale(opts.warm_blend)))
            .collect(),
        None => center.clone(),
    };
    if pre.values(&xs).is_none() || xs.iter().any(|x| x.clone().cholesky().is_none()) {
        xs = center;
    }
    let vals = pre.values(&xs).unwrap_or_default();
    let fmin = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let mut tau = opts.tau0;
    let mut t = fmin - (1.0f64).max(fmin.abs()) * 0.1 - 1.0 / tau;

    let mut steps = 0;
    let mut converged = true;
    let mut healthy = true;
    'outer: loop {
        let mut centered = false;
        while steps < opts.max_newton {
            steps += 1;
            match newton_step(&pre, &mut xs, &mut t, tau, 1e-7) {
                Some((Step::Done, _)) => {
                    centered = true;
                    break;
                }
                Some((Step::Moved, _)) => {}
                Some((Step::Stalled, dec)) => {
                    // Past this gap a stall is rounding noise, not a bad iterate.
                    if pre.m_bar / tau < STALL_GAP {
                        break 'outer;
                    }
                    centered = dec < 1e-6;
                    break;
                }
                None => {
                    healthy = false;
                    break 'outer;
                }
            }
        }
        if !centered {
            converged = false;
        }
        if steps >= opts.max_newton {
            converged = false;
            break;
        }
        if pre.m_bar / tau < opts.gap_tol {
            break;
        }
        tau *= opts.mu;
    }
    let values = pre.values(&xs).unwrap_or_else(|| vec![f64::NEG_INFINITY; prog.objectives.len()]);
    Solution { blocks: xs, values, newton_steps: steps, converged: converged && healthy }
}
