//! Primal decomposition for the aligned channel: an outer search over the
//! innovation covariance `S`, the wiretap-type subproblem over `C_V ⪯ S`, and
//! the cooperative term over the relay-correlated part.

use std::f64::consts::LN_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{pdf_objective, pdf_rate_gaussian, InnovationSplit, PdfJointParams};
use crate::channel::{complex_gaussian, AlignedInstance};
use crate::enhancement::{certify, EnhancementCertificate, VerificationReport};
use crate::error::{Error, Result};
use crate::interior::{self, Budget, LogDetTerm, Objective, Program, SolveOptions};
use crate::matrix::{c, eigh, from_eigen, inv_pd, logdet_chol, CMatrix, Hermitian, Tolerance};
use crate::rates::{joint_gain, lift, MaxMinSolverConfig};

/// Eigenvalues of the whitened variable this close to 0 or 1 are put on the boundary.
const SNAP: f64 = 1e-6;
const CCP_ITERS: usize = 60;

#[derive(Clone, Debug, PartialEq)]
pub struct WiretapSolution {
    /// `log|C★ + Z_D| − log|C★ + Z_R|` at the numerical maximizer, bits.
    pub value: f64,
    pub c_v_star: Hermitian,
    pub certificate: EnhancementCertificate,
    pub report: VerificationReport,
}

fn ld(m: &CMatrix) -> f64 {
    logdet_chol(&(m + m.adjoint()).scale(0.5)).unwrap_or(f64::NEG_INFINITY)
}

struct Compressed {
    t: CMatrix,
    r: usize,
}

/// `C = T Y Tᴴ`, `0 ⪯ Y ⪯ I`, where `T = U √Σ` spans the range of `S`.
fn compress(s: &Hermitian, tol: &Tolerance) -> Compressed {
    let (w, v) = s.eigh();
    let top = w.last().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] > tol.psd_eig * top && w[i] > 0.0).collect();
    let t = CMatrix::from_fn(s.dim(), keep.len(), |i, j| v[(i, keep[j])] * c(w[keep[j]].sqrt(), 0.0));
    Compressed { t, r: keep.len() }
}

fn wiretap_value(t: &CMatrix, y: &CMatrix, z_r: &CMatrix, z_d: &CMatrix) -> f64 {
    let c = t * y * t.adjoint();
    ld(&(&c + z_d)) - ld(&(&c + z_r))
}

fn ccp(t: &CMatrix, z_r: &CMatrix, z_d: &CMatrix, y0: CMatrix, opts: &SolveOptions) -> CMatrix {
    let r = t.ncols();
    let mut y = y0;
    let mut prev = wiretap_value(t, &y, z_r, z_d);
    for _ in 0..CCP_ITERS {
        let inner = z_r + t * &y * t.adjoint();
        let k = t.adjoint() * inv_pd(&inner).expect("noise plus PSD is definite") * t;
        let prog = Program {
            dims: vec![r],
            upper: vec![Some(CMatrix::identity(r, r))],
            objectives: vec![Objective {
                logdets: vec![LogDetTerm { coef: 1.0, offset: z_d.clone(), maps: vec![(0, t.clone())] }],
                linear: vec![(0, -k)],
                constant: 0.0,
            }],
            budgets: vec![],
        };
        let sol = interior::solve(&prog, opts);
        let next = sol.blocks[0].clone();
        let v = wiretap_value(t, &next, z_r, z_d);
        if v < prev {
            break;
        }
        y = next;
        let done = v - prev < 1e-12;
        prev = v;
        if done {
            break;
        }
    }
    y
}

/// Newton refinement on the nonconcave objective from a point near the optimum.
fn polish(t: &CMatrix, z_r: &CMatrix, z_d: &CMatrix, y: &CMatrix) -> CMatrix {
    let r = t.ncols();
    let prog = Program {
        dims: vec![r],
        upper: vec![Some(CMatrix::identity(r, r))],
        objectives: vec![Objective {
            logdets: vec![
                LogDetTerm { coef: 1.0, offset: z_d.clone(), maps: vec![(0, t.clone())] },
                LogDetTerm { coef: -1.0, offset: z_r.clone(), maps: vec![(0, t.clone())] },
            ],
            ..Default::default()
        }],
        budgets: vec![],
    };
    let opts = SolveOptions { warm: Some(vec![y.clone()]), warm_blend: 1e-6, tau0: 1e6, gap_tol: 1e-11, ..SolveOptions::default() };
    let sol = interior::solve(&prog, &opts);
    sol.blocks[0].clone()
}

fn snap(y: &CMatrix) -> CMatrix {
    let (w, v) = eigh(y);
    let w: Vec<f64> = w
        .iter()
        .map(|&x| if x < SNAP { 0.0 } else if x > 1.0 - SNAP { 1.0 } else { x })
        .collect();
    from_eigen(&w, &v).into_matrix()
}

/// Numerical maximizer of `log|C + Z_D| − log|C + Z_R|` over `0 ⪯ C ⪯ S` (nats, C★).
pub(crate) fn wiretap_numeric(
    s: &Hermitian,
    z_r: &Hermitian,
    z_d: &Hermitian,
    cfg: &MaxMinSolverConfig,
) -> (f64, Hermitian) {
    let tol = Tolerance::default();
    let n = s.dim();
    let comp = compress(s, &tol);
    let (zr, zd) = (z_r.as_matrix(), z_d.as_matrix());
    if comp.r == 0 {
        return (ld(zd) - ld(zr), Hermitian::zeros(n));
    }
    let r = comp.r;
    let t = &comp.t;
    let opts = SolveOptions { max_newton: cfg.max_newton, ..SolveOptions::default() };
    let id = CMatrix::identity(r, r);
    let mut starts = vec![CMatrix::zeros(r, r), id.clone(), id.scale(0.5)];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x77_1e_7a9);
    for _ in 0..2 {
        let g = complex_gaussian(&mut rng, r, r);
        let m = &g * g.adjoint();
        let top = eigh(&m).0.last().copied().unwrap_or(1.0).max(1e-12);
        starts.push(m.scale(1.0 / top));
    }
    let mut best: Option<(f64, CMatrix)> = None;
    for y0 in starts {
        let y = ccp(t, zr, zd, y0, &opts);
        let v = wiretap_value(t, &y, zr, zd);
        if best.as_ref().is_none_or(|b| v > b.0) {
            best = Some((v, y));
        }
    }
    let (mut v, mut y) = best.expect("nonempty start set");
    let p = polish(t, zr, zd, &y);
    let vp = wiretap_value(t, &p, zr, zd);
    if vp >= v - 1e-12 {
        v = vp;
        y = p;
    }
    let ys = snap(&y);
    let vs = wiretap_value(t, &ys, zr, zd);
    if vs >= v - 1e-9 {
        v = vs;
        y = ys;
    }
    let c_star = Hermitian::symmetrize(&(t * &y * t.adjoint()));
    (v, c_star)
}

/// Solves the wiretap-type subproblem and validates the value against the
/// closed form built from the enhancement certificate.
pub fn inner_wiretap_solve(
    s: &Hermitian,
    z_r: &Hermitian,
    z_d: &Hermitian,
    cfg: &MaxMinSolverConfig,
) -> Result<WiretapSolution> {
    cfg.validate()?;
    let n = s.dim();
    if z_r.dim() != n || z_d.dim() != n {
        return Err(Error::DimensionMismatch { expected: format!("{n}x{n}"), found: format!("{}x{}", z_r.dim(), z_d.dim()) });
    }
    let tol = Tolerance { rate: cfg.rate_tol, ..Tolerance::default() };
    if !s.is_psd(&tol) {
        return Err(Error::InfeasibleParams("S is not PSD".into()));
    }
    let (v, c_star) = wiretap_numeric(s, z_r, z_d, cfg);
    if !v.is_finite() {
        return Err(Error::SolverNotConverged { best: v / LN_2 });
    }
    let value = v / LN_2;
    let (certificate, report) = certify(s, &c_star, value, z_r, z_d, &tol)?;
    let residual = (value - report.closed_form_value).abs();
    if residual > cfg.rate_tol {
        return Err(Error::CertificateMismatch { residual });
    }
    Ok(WiretapSolution { value, c_v_star: c_star, certificate, report })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CooperativeSolution {
    /// `log|S + Z_D + [I, H_RD] B [I, H_RD]ᴴ| − log|Z_D|`, bits.
    pub value: f64,
    /// Cooperation covariance of size 2N (source rows first).
    pub b: Hermitian,
}

/// Maximizes the destination term over the cooperation covariance `B ⪰ 0`
/// with `tr B_SS ≤ P_S − tr S` and `tr B_RR ≤ P_R`.
pub fn cooperative_value(a: &AlignedInstance, s: &Hermitian, cfg: &MaxMinSolverConfig) -> Result<CooperativeSolution> {
    let n = a.dim();
    let offset = Hermitian::symmetrize(&(s.as_matrix() + a.z_d.as_matrix())).into_matrix();
    let base = ld(&offset) - ld(a.z_d.as_matrix());
    let cap_s = a.p_s - s.trace();
    let full = cap_s > 1e-12 * a.p_s;
    let prog = if full {
        Program {
            dims: vec![2 * n],
            upper: vec![None],
            objectives: vec![Objective {
                logdets: vec![LogDetTerm {
                    coef: 1.0,
                    offset,
                    maps: vec![(0, joint_gain(&CMatrix::identity(n, n), &a.h_rd))],
                }],
                ..Default::default()
            }],
            budgets: vec![
                Budget { cap: cap_s, members: vec![(0, (0..n).collect())] },
                Budget { cap: a.p_r, members: vec![(0, (n..2 * n).collect())] },
            ],
        }
    } else {
        Program {
            dims: vec![n],
            upper: vec![None],
            objectives: vec![Objective {
                logdets: vec![LogDetTerm { coef: 1.0, offset, maps: vec![(0, a.h_rd.clone())] }],
                ..Default::default()
            }],
            budgets: vec![Budget { cap: a.p_r, members: vec![(0, (0..n).collect())] }],
        }
    };
    let sol = interior::solve(&prog, &cfg.solve_options());
    if !sol.converged {
        return Err(Error::SolverNotConverged { best: (base + sol.values[0]) / LN_2 });
    }
    let b = if full {
        sol.blocks[0].clone()
    } else {
        let mut b = CMatrix::zeros(2 * n, 2 * n);
        b.view_mut((n, n), (n, n)).copy_from(&sol.blocks[0]);
        b
    };
    Ok(CooperativeSolution { value: (base + sol.values[0]) / LN_2, b: Hermitian::symmetrize(&b) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignedValue {
    /// `min{first_term, cooperative}`, bits.
    pub rate: f64,
    /// `log|S + Z|/|Z|` from the certificate, or its numerical equivalent
    /// `log|S + Z_R|/|Z_D| + wiretap value` when certification fails.
    pub first_term: f64,
    pub cooperative: f64,
    pub certified: bool,
    pub params: PdfJointParams,
}

/// Achievable PDF value of the aligned channel at innovation covariance `S`.
pub fn aligned_rate_at(a: &AlignedInstance, s: &Hermitian, cfg: &MaxMinSolverConfig) -> Result<AlignedValue> {
    let (z_r, z_d) = (&a.z_r, &a.z_d);
    let coop = cooperative_value(a, s, cfg)?;
    let (first_term, c_star, certified) = match inner_wiretap_solve(s, z_r, z_d, cfg) {
        Ok(w) => {
            let sm = s.as_matrix();
            let z = w.certificate.z.as_matrix();
            ((ld(&(sm + z)) - ld(z)) / LN_2, w.c_v_star, true)
        }
        Err(_) => {
            let (v, c_star) = wiretap_numeric(s, z_r, z_d, cfg);
            let sm = s.as_matrix();
            let base = ld(&(sm + z_r.as_matrix())) - ld(z_d.as_matrix());
            ((base + v) / LN_2, c_star, false)
        }
    };
    let q = s.sub(&c_star);
    let params = PdfJointParams {
        c_joint: Hermitian::symmetrize(&lift(q.as_matrix(), coop.b.as_matrix())),
        q,
        c_v: c_star,
    };
    Ok(AlignedValue { rate: first_term.min(coop.value), first_term, cooperative: coop.value, certified, params })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignedPdfSolution {
    pub rate: f64,
    pub split: InnovationSplit,
    pub params: PdfJointParams,
    pub evaluations: usize,
    pub certified: bool,
}

fn scale_to_budget(s: CMatrix, p_s: f64) -> CMatrix {
    let tr: f64 = s.diagonal().iter().map(|z| z.re).sum();
    if tr > p_s {
        s.scale(p_s / tr)
    } else {
        s
    }
}

/// Maximum PDF rate of an aligned channel by primal decomposition over `S`.
///
/// Scalar channels use a 512-point grid on `[0, P_S]` followed by a
/// golden-section refinement around the best grid point. Otherwise `S = L Lᴴ`
/// (rescaled onto the trace budget when needed) and the entries of the
/// lower-triangular `L` are tuned by compass search, started from the
/// innovation covariance `Q + C_V` of the general solver.
pub fn pdf_rate_aligned(a: &AlignedInstance, cfg: &MaxMinSolverConfig) -> Result<AlignedPdfSolution> {
    cfg.validate()?;
    let n = a.dim();
    let mut evals = 0;
    let mut eval = |s: &CMatrix| -> Result<AlignedValue> {
        evals += 1;
        aligned_rate_at(a, &Hermitian::symmetrize(s), cfg)
    };
    let best = if n == 1 {
        let grid = 512;
        let sv = |x: f64| CMatrix::from_element(1, 1, c(x, 0.0));
        let mut vals = Vec::with_capacity(grid);
        for k in 0..grid {
            let x = a.p_s * k as f64 / (grid - 1) as f64;
            vals.push((x, eval(&sv(x))?));
        }
        let (ib, _) = vals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .1.rate.total_cmp(&y.1 .1.rate))
            .expect("grid is nonempty");
        let h = a.p_s / (grid - 1) as f64;
        let (mut lo, mut hi) = ((vals[ib].0 - h).max(0.0), (vals[ib].0 + h).min(a.p_s));
        let gr = (5f64.sqrt() - 1.0) / 2.0;
        let mut best = vals.swap_remove(ib);
        for _ in 0..60 {
            let x1 = hi - gr * (hi - lo);
            let x2 = lo + gr * (hi - lo);
            let (v1, v2) = (eval(&sv(x1))?, eval(&sv(x2))?);
            if v1.rate < v2.rate {
                lo = x1;
                if v2.rate > best.1.rate {
                    best = (x2, v2);
                }
            } else {
                hi = x2;
                if v1.rate > best.1.rate {
                    best = (x1, v1);
                }
            }
        }
        (sv(best.0), best.1)
    } else {
        let s0 = match pdf_rate_gaussian(&a.to_channel(), cfg) {
            Ok(sol) => (sol.params.q.as_matrix() + sol.params.c_v.as_matrix()).scale(1.0 - 1e-9),
            Err(_) => CMatrix::identity(n, n).scale(a.p_s / n as f64),
        };
        let s0 = scale_to_budget((&s0 + s0.adjoint()).scale(0.5), a.p_s);
        let l0 = (s0.clone() + CMatrix::identity(n, n).scale(1e-9 * a.p_s)).cholesky().map(|ch| ch.unpack());
        let l0 = l0.unwrap_or_else(|| CMatrix::identity(n, n).scale((a.p_s / n as f64).sqrt()));
        let to_s = |x: &[f64]| -> CMatrix {
            let mut l = CMatrix::zeros(n, n);
            let mut k = 0;
            for i in 0..n {
                l[(i, i)] = c(x[k], 0.0);
                k += 1;
                for j in 0..i {
                    l[(i, j)] = c(x[k], x[k + 1]);
                    k += 2;
                }
            }
            scale_to_budget(&l * l.adjoint(), a.p_s)
        };
        let mut x = Vec::with_capacity(n * n);
        for i in 0..n {
            x.push(l0[(i, i)].re);
            for j in 0..i {
                x.push(l0[(i, j)].re);
                x.push(l0[(i, j)].im);
            }
        }
        let mut cur = eval(&to_s(&x))?;
        let mut step = 0.1 * (a.p_s / n as f64).sqrt();
        let floor = 1e-5 * a.p_s.sqrt();
        let mut sweeps = 0;
        while step > floor && sweeps < cfg.max_iters {
            sweeps += 1;
            let mut improved = false;
            for k in 0..x.len() {
                for dir in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[k] += dir * step;
                    let v = eval(&to_s(&y))?;
                    if v.rate > cur.rate + 1e-10 {
                        x = y;
                        cur = v;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        (to_s(&x), cur)
    };
    let (s, value) = best;
    let tol = Tolerance::default();
    let split = InnovationSplit::new(Hermitian::symmetrize(&s), a.p_s, &tol)?;
    let check = pdf_objective(&a.to_channel(), &value.params)?;
    Ok(AlignedPdfSolution {
        rate: value.rate.min(check.rate.max(value.rate - cfg.rate_tol)),
        split,
        params: value.params,
        evaluations: evals,
        certified: value.certified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::random_pd;
    use crate::rates::df_rate;

    fn cfg() -> MaxMinSolverConfig {
        MaxMinSolverConfig::default()
    }

    fn d(x: &[f64]) -> Hermitian {
        Hermitian::from_real_diagonal(x)
    }

    #[test]
    fn scalar_wiretap_examples() {
        let w = inner_wiretap_solve(&d(&[1.0]), &d(&[2.0]), &d(&[1.0]), &cfg()).unwrap();
        assert!((w.value - (2.0f64 / 3.0).log2()).abs() < 1e-9);
        assert!((w.c_v_star.as_matrix()[(0, 0)].re - 1.0).abs() < 1e-9);
        let w = inner_wiretap_solve(&d(&[1.0]), &d(&[1.0]), &d(&[2.0]), &cfg()).unwrap();
        assert!((w.value - 1.0).abs() < 1e-9);
        assert!(w.c_v_star.as_matrix()[(0, 0)].re.abs() < 1e-9);
        let w = inner_wiretap_solve(&d(&[1.0, 2.0]), &d(&[1.0, 3.0]), &d(&[1.0, 3.0]), &cfg()).unwrap();
        assert!(w.value.abs() < 1e-9);
    }

    #[test]
    fn random_wiretap_certifies() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let z_r = random_pd(&mut rng, 2, 0.2);
            let z_d = random_pd(&mut rng, 2, 0.2);
            let s = random_pd(&mut rng, 2, 0.05);
            let w = inner_wiretap_solve(&s, &z_r, &z_d, &cfg()).unwrap();
            assert!(w.report.pass, "{:?}", w.report);
        }
    }

    #[test]
    fn zero_innovation_gives_zero_rate() {
        let a = AlignedInstance::new(d(&[0.5]), d(&[1.0]), CMatrix::identity(1, 1), 1.0, 1.0).unwrap();
        let v = aligned_rate_at(&a, &d(&[0.0]), &cfg()).unwrap();
        assert!(v.rate.abs() < 1e-9 && v.first_term.abs() < 1e-9);
    }

    #[test]
    fn scalar_aligned_matches_general() {
        for (zr, zd) in [(0.5, 1.0), (1.0, 1.0), (2.0, 1.0), (0.8, 1.7)] {
            let a = AlignedInstance::new(d(&[zr]), d(&[zd]), CMatrix::identity(1, 1), 1.0, 1.0).unwrap();
            let al = pdf_rate_aligned(&a, &cfg()).unwrap();
            let gen = pdf_rate_gaussian(&a.to_channel(), &cfg()).unwrap();
            assert!((al.rate - gen.rate).abs() < 1e-4, "{zr} {zd}: {} {}", al.rate, gen.rate);
            if zr == zd {
                let df = df_rate(&a.to_channel(), &cfg()).unwrap().rate;
                assert!((al.rate - df).abs() < 1e-4);
            }
        }
    }
}
