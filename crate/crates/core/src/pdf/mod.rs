//! Gaussian partial decode-and-forward rates.
//!
//! The source splits its input as `x_S = q + A x_R + v`: the relay decodes
//! `u = q + A x_R` and `v` reaches the destination only. With `Q = C_Q` and
//! `Č = Cov(u, x_R)` the rate is `min{term1, term2}` where
//!
//! ```text
//! term1 = log|I + H_SR (Q + C_V) H_SRᴴ| − log|I + H_SR C_V H_SRᴴ| + log|I + H_SD C_V H_SDᴴ|
//! term2 = log|I + H_SD C_V H_SDᴴ + [H_SD, H_RD] Č [H_SD, H_RD]ᴴ|
//! ```
//!
//! on the whitened channel, subject to `Č − D_Sᴴ Q D_S ⪰ 0` and the power
//! budgets. The only nonconcave piece is `−log|I + H_SR C_V H_SRᴴ|`; the
//! general solver replaces it by its tangent plane and iterates.

mod aligned;

pub use aligned::{
    aligned_rate_at, cooperative_value, inner_wiretap_solve, pdf_rate_aligned, AlignedPdfSolution, AlignedValue,
    CooperativeSolution, WiretapSolution,
};

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_gaussian, whitened_gains, AlignedInstance, ChannelInstance};
use crate::error::{Error, Result};
use crate::interior::{self, LogDetTerm, Objective, Program};
use crate::matrix::{c, inv_pd, logdet_chol, null_space, CMatrix, Hermitian, Tolerance};
use crate::rates::{
    df_rate, joint_gain, lift, logdet_term, p2p_capacity, power_budgets, JointCovariance, MaxMinSolverConfig,
};

/// Input covariances of the superposition `x_S = q + A x_R + v`.
#[derive(Clone, Debug, PartialEq)]
pub struct PdfInputParams {
    pub c_q: Hermitian,
    pub c_v: Hermitian,
    pub c_r: Hermitian,
    /// N_S × N_R cooperation gain.
    pub a: CMatrix,
}

/// `(Q, Č, C_V)`; `Č` is the joint covariance of `u` and `x_R`.
#[derive(Clone, Debug, PartialEq)]
pub struct PdfJointParams {
    pub q: Hermitian,
    pub c_joint: Hermitian,
    pub c_v: Hermitian,
}

/// Covariance `S = C_Q + C_V` of the innovative part of the source signal.
#[derive(Clone, Debug, PartialEq)]
pub struct InnovationSplit {
    pub s: Hermitian,
}

impl InnovationSplit {
    pub fn new(s: Hermitian, p_s: f64, tol: &Tolerance) -> Result<Self> {
        if !s.is_psd(tol) || s.trace() > p_s * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::InfeasibleParams(format!("S must be PSD with trace at most {p_s}")));
        }
        Ok(InnovationSplit { s })
    }
}

/// Both terms and their minimum, in bits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdfTerms {
    pub term1: f64,
    pub term2: f64,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub label: String,
    /// Objective after every inner-approximation round, bits.
    pub history: Vec<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdfSolution {
    pub rate: f64,
    pub params: PdfJointParams,
    pub terms: PdfTerms,
    pub starts: Vec<StartTrace>,
    pub newton_steps: usize,
}

impl PdfJointParams {
    pub fn zeros(n_s: usize, n_r: usize) -> Self {
        PdfJointParams { q: Hermitian::zeros(n_s), c_joint: Hermitian::zeros(n_s + n_r), c_v: Hermitian::zeros(n_s) }
    }

    /// `B = Č − D_Sᴴ Q D_S`.
    pub fn cooperation_part(&self) -> Hermitian {
        let n_s = self.q.dim();
        let mut b = self.c_joint.as_matrix().clone();
        let mut v = b.view_mut((0, 0), (n_s, n_s));
        v -= self.q.as_matrix();
        Hermitian::symmetrize(&b)
    }

    pub fn check_feasible(&self, ch: &ChannelInstance, tol: &Tolerance) -> Result<()> {
        let (n_s, n_r) = (ch.n_s(), ch.n_r());
        if self.q.dim() != n_s || self.c_v.dim() != n_s || self.c_joint.dim() != n_s + n_r {
            return Err(Error::DimensionMismatch {
                expected: format!("Q, C_V of size {n_s} and Č of size {}", n_s + n_r),
                found: format!("{}, {}, {}", self.q.dim(), self.c_v.dim(), self.c_joint.dim()),
            });
        }
        let psd = |h: &Hermitian, name: &str| {
            if h.min_eigenvalue() < -tol.psd_eig * h.norm2().max(ch.p_s.max(ch.p_r)).max(1.0) {
                Err(Error::InfeasibleParams(format!("{name} is not PSD")))
            } else {
                Ok(())
            }
        };
        psd(&self.q, "Q")?;
        psd(&self.c_v, "C_V")?;
        psd(&self.cooperation_part(), "Č − D_Sᴴ Q D_S")?;
        let cj = JointCovariance { c: self.c_joint.clone(), n_s };
        let src = self.c_v.trace() + cj.source().trace();
        let rel = cj.relay().trace();
        let slack = |p: f64| p * (1.0 + 1e-8) + 1e-12;
        if src > slack(ch.p_s) {
            return Err(Error::InfeasibleParams(format!("source power {src} exceeds {}", ch.p_s)));
        }
        if rel > slack(ch.p_r) {
            return Err(Error::InfeasibleParams(format!("relay power {rel} exceeds {}", ch.p_r)));
        }
        Ok(())
    }
}

fn ld(m: CMatrix) -> Option<f64> {
    logdet_chol(&(&m + m.adjoint()).scale(0.5))
}

/// Terms in nats on white-noise gains.
pub(crate) fn terms_white(
    h_sr: &CMatrix,
    h_sd: &CMatrix,
    h_rd: &CMatrix,
    q: &CMatrix,
    c_v: &CMatrix,
    c_joint: &CMatrix,
) -> Option<(f64, f64)> {
    let n_r = h_sr.nrows();
    let n_d = h_sd.nrows();
    let ir = CMatrix::identity(n_r, n_r);
    let id = CMatrix::identity(n_d, n_d);
    let sd_v = h_sd * c_v * h_sd.adjoint();
    let t1 = ld(&ir + h_sr * (q + c_v) * h_sr.adjoint())? - ld(&ir + h_sr * c_v * h_sr.adjoint())? + ld(&id + &sd_v)?;
    let g = joint_gain(h_sd, h_rd);
    let t2 = ld(&id + &sd_v + &g * c_joint * g.adjoint())?;
    Some((t1, t2))
}

/// Evaluates both PDF terms at `p`.
pub fn pdf_objective(ch: &ChannelInstance, p: &PdfJointParams) -> Result<PdfTerms> {
    p.check_feasible(ch, &Tolerance::default())?;
    let (h_sr, h_sd, h_rd) = whitened_gains(ch)?;
    let (t1, t2) = terms_white(&h_sr, &h_sd, &h_rd, p.q.as_matrix(), p.c_v.as_matrix(), p.c_joint.as_matrix())
        .ok_or_else(|| Error::InfeasibleParams("log-det argument not positive definite".into()))?;
    let (term1, term2) = (t1 / LN_2, t2 / LN_2);
    Ok(PdfTerms { term1, term2, rate: term1.min(term2) })
}

/// `Q = C_Q`, `Č = D_Sᴴ C_Q D_S + [A; I] C_R [A; I]ᴴ`.
pub fn params_to_joint(p: &PdfInputParams) -> PdfJointParams {
    let n_s = p.c_q.dim();
    let n_r = p.c_r.dim();
    let mut stack = CMatrix::zeros(n_s + n_r, n_r);
    stack.view_mut((0, 0), (n_s, n_r)).copy_from(&p.a);
    stack.view_mut((n_s, 0), (n_r, n_r)).copy_from(&CMatrix::identity(n_r, n_r));
    let coop = &stack * p.c_r.as_matrix() * stack.adjoint();
    PdfJointParams {
        q: p.c_q.clone(),
        c_joint: Hermitian::symmetrize(&lift(p.c_q.as_matrix(), &coop)),
        c_v: p.c_v.clone(),
    }
}

struct Gains {
    h_sr: CMatrix,
    h_sd: CMatrix,
    h_rd: CMatrix,
    n_s: usize,
    n_r: usize,
}

impl Gains {
    fn new(ch: &ChannelInstance) -> Result<Self> {
        let (h_sr, h_sd, h_rd) = whitened_gains(ch)?;
        Ok(Gains { h_sr, h_sd, h_rd, n_s: ch.n_s(), n_r: ch.n_r() })
    }

    fn value(&self, q: &CMatrix, c_v: &CMatrix, b: &CMatrix) -> f64 {
        terms_white(&self.h_sr, &self.h_sd, &self.h_rd, q, c_v, &lift(q, b))
            .map(|(a, b)| a.min(b))
            .unwrap_or(f64::NEG_INFINITY)
    }

    /// Concave minorant of the PDF program, tangent at `C_V = cv`.
    fn surrogate(&self, cv: &CMatrix, p_s: f64, p_r: f64) -> Program {
        let n_r = self.n_r;
        let inner = CMatrix::identity(n_r, n_r) + &self.h_sr * cv * self.h_sr.adjoint();
        let minv = inv_pd(&inner).expect("identity plus PSD is definite");
        let k0 = self.h_sr.adjoint() * minv * &self.h_sr;
        let ld0 = ld(inner).expect("identity plus PSD is definite");
        let lin_at = (k0.component_mul(&cv.transpose())).sum().re;
        let g = joint_gain(&self.h_sd, &self.h_rd);
        Program {
            dims: vec![self.n_s, self.n_s, self.n_s + n_r],
            upper: vec![None, None, None],
            objectives: vec![
                Objective {
                    logdets: vec![
                        logdet_term(1.0, vec![(0, self.h_sr.clone()), (1, self.h_sr.clone())]),
                        logdet_term(1.0, vec![(1, self.h_sd.clone())]),
                    ],
                    linear: vec![(1, -k0)],
                    constant: -ld0 + lin_at,
                },
                Objective {
                    logdets: vec![logdet_term(1.0, vec![(0, self.h_sd.clone()), (1, self.h_sd.clone()), (2, g)])],
                    ..Default::default()
                },
            ],
            budgets: power_budgets(self.n_s, n_r, &[0, 1], 2, p_s, p_r),
        }
    }
}

#[derive(Clone)]
struct Point {
    q: CMatrix,
    c_v: CMatrix,
    b: CMatrix,
    value: f64,
}

const IAA_STOP_BITS: f64 = 1e-6;

struct IaaRun {
    best: Point,
    trace: StartTrace,
    newton_steps: usize,
}

fn run_iaa(g: &Gains, ch: &ChannelInstance, start: Point, label: &str, cfg: &MaxMinSolverConfig) -> IaaRun {
    let mut best = start.clone();
    let mut cv = start.c_v.clone();
    let mut prev = start.value;
    let mut history = Vec::new();
    let mut converged = false;
    let mut steps = 0;
    let mut warm: Option<Vec<CMatrix>> = None;
    for _ in 0..cfg.max_iters {
        let prog = g.surrogate(&cv, ch.p_s, ch.p_r);
        let mut opts = cfg.solve_options();
        opts.warm = warm.take();
        let sol = interior::solve(&prog, &opts);
        steps += sol.newton_steps;
        let (q, c_v, b) = (sol.blocks[0].clone(), sol.blocks[1].clone(), sol.blocks[2].clone());
        let value = g.value(&q, &c_v, &b);
        history.push(value / LN_2);
        if value > best.value {
            best = Point { q: q.clone(), c_v: c_v.clone(), b: b.clone(), value };
        }
        let gain = (value - prev) / LN_2;
        prev = prev.max(value);
        cv = c_v;
        warm = Some(sol.blocks);
        if sol.converged && gain < IAA_STOP_BITS {
            converged = true;
            break;
        }
    }
    IaaRun { best, trace: StartTrace { label: label.to_string(), history, converged }, newton_steps: steps }
}

/// Random PSD matrix with trace uniform in `(0, cap)`.
fn random_psd(rng: &mut ChaCha8Rng, n: usize, cap: f64) -> CMatrix {
    let w = complex_gaussian(rng, n, n);
    let m = &w * w.adjoint();
    let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
    let u: f64 = rng.random_range(0.05..1.0);
    m.scale(u * cap / tr.max(1e-300))
}

fn to_params(p: &Point) -> PdfJointParams {
    PdfJointParams {
        q: Hermitian::symmetrize(&p.q),
        c_joint: Hermitian::symmetrize(&lift(&p.q, &p.b)),
        c_v: Hermitian::symmetrize(&p.c_v),
    }
}

/// Maximum Gaussian PDF rate by inner approximation with multistart.
///
/// Starts: the DF optimizer (`C_V = 0`), the point-to-point water-filling
/// covariance (`u = 0`), the zero-forcing optimizer and `cfg.restarts` random
/// feasible draws. The DF and point-to-point points also compete as
/// candidates themselves, so the result never falls below either.
pub fn pdf_rate_gaussian(ch: &ChannelInstance, cfg: &MaxMinSolverConfig) -> Result<PdfSolution> {
    cfg.validate()?;
    let g = Gains::new(ch)?;
    let (n_s, n_r) = (g.n_s, g.n_r);
    let zero_s = CMatrix::zeros(n_s, n_s);
    let zero_b = CMatrix::zeros(n_s + n_r, n_s + n_r);

    let mut starts: Vec<(String, Point)> = Vec::new();
    let df = df_rate(ch, cfg);
    let mut newton_steps = 0;
    if let Ok(df) = &df {
        let q = df.innovation.as_matrix().clone();
        let mut b = df.covariance.c.as_matrix().clone();
        let mut top = b.view_mut((0, 0), (n_s, n_s));
        top -= &q;
        let b = (&b + b.adjoint()).scale(0.5);
        let value = g.value(&q, &zero_s, &b);
        newton_steps += df.newton_steps;
        starts.push(("df".into(), Point { q, c_v: zero_s.clone(), b, value }));
    }
    let (_, cs) = p2p_capacity(&ch.h_sd, &ch.z_d, ch.p_s)?;
    let cs = cs.into_matrix();
    let value = g.value(&zero_s, &cs, &zero_b);
    starts.push(("p2p".into(), Point { q: zero_s.clone(), c_v: cs, b: zero_b.clone(), value }));
    if let Ok(zf) = pdf_rate_zf(ch, cfg) {
        let p = &zf.params;
        let b = p.cooperation_part().into_matrix();
        let value = g.value(p.q.as_matrix(), p.c_v.as_matrix(), &b);
        newton_steps += zf.newton_steps;
        starts.push(("zf".into(), Point { q: p.q.as_matrix().clone(), c_v: p.c_v.as_matrix().clone(), b, value }));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_9df);
    for k in 0..cfg.restarts {
        let c_v = random_psd(&mut rng, n_s, ch.p_s);
        let value = g.value(&zero_s, &c_v, &zero_b);
        starts.push((format!("random{k}"), Point { q: zero_s.clone(), c_v, b: zero_b.clone(), value }));
    }

    let mut best: Option<Point> = None;
    let mut best_converged = false;
    let mut traces = Vec::new();
    for (label, start) in starts {
        let run = run_iaa(&g, ch, start, &label, cfg);
        newton_steps += run.newton_steps;
        let better = best.as_ref().is_none_or(|b| run.best.value > b.value);
        if better {
            best_converged = run.trace.converged;
            best = Some(run.best);
        } else if best.as_ref().is_some_and(|b| run.best.value >= b.value - 1e-9) {
            best_converged |= run.trace.converged;
        }
        traces.push(run.trace);
    }
    let best = best.expect("at least one start");
    let params = to_params(&best);
    let terms = pdf_objective(ch, &params)?;
    if !best_converged || !terms.rate.is_finite() {
        return Err(Error::SolverNotConverged { best: terms.rate });
    }
    Ok(PdfSolution { rate: terms.rate, params, terms, starts: traces, newton_steps })
}

/// Zero-forcing PDF: `C_V = N V Nᴴ` with `N` an orthonormal basis of ker H_SR,
/// so the relay sees no interference from `v` and the program is concave.
pub fn pdf_rate_zf(ch: &ChannelInstance, cfg: &MaxMinSolverConfig) -> Result<PdfSolution> {
    cfg.validate()?;
    let g = Gains::new(ch)?;
    let (n_s, n_r) = (g.n_s, g.n_r);
    let nb = null_space(&g.h_sr);
    let k = nb.ncols();
    let gj = joint_gain(&g.h_sd, &g.h_rd);
    let sd_n = &g.h_sd * &nb;
    let mut term1 = vec![logdet_term(1.0, vec![(0, g.h_sr.clone())])];
    let mut term2_maps = vec![(0, g.h_sd.clone()), (1, gj)];
    let mut dims = vec![n_s, n_s + n_r];
    let mut budgets = power_budgets(n_s, n_r, &[0], 1, ch.p_s, ch.p_r);
    if k > 0 {
        term1.push(logdet_term(1.0, vec![(2, sd_n.clone())]));
        term2_maps.push((2, sd_n));
        budgets[0].members.push((2, (0..k).collect()));
        dims.push(k);
    }
    let prog = Program {
        upper: vec![None; dims.len()],
        dims,
        objectives: vec![
            Objective { logdets: term1, ..Default::default() },
            Objective { logdets: vec![logdet_term(1.0, term2_maps)], ..Default::default() },
        ],
        budgets,
    };
    let sol = interior::solve(&prog, &cfg.solve_options());
    let c_v = if k > 0 { &nb * &sol.blocks[2] * nb.adjoint() } else { CMatrix::zeros(n_s, n_s) };
    let point = Point { q: sol.blocks[0].clone(), c_v, b: sol.blocks[1].clone(), value: 0.0 };
    let params = to_params(&point);
    let terms = pdf_objective(ch, &params)?;
    if !sol.converged || !terms.rate.is_finite() {
        return Err(Error::SolverNotConverged { best: terms.rate });
    }
    Ok(PdfSolution {
        rate: terms.rate,
        params,
        terms,
        starts: vec![StartTrace { label: "zf".into(), history: vec![terms.rate], converged: true }],
        newton_steps: sol.newton_steps,
    })
}

/// `rank(H_SR) + rank(H_SD) = rank([H_SRᴴ, H_SDᴴ])`: the row spaces intersect trivially.
pub fn zf_rank_condition(ch: &ChannelInstance) -> bool {
    use crate::matrix::rank;
    let st = crate::rates::stacked_gain(&ch.h_sr, &ch.h_sd);
    rank(&ch.h_sr) + rank(&ch.h_sd) == rank(&st)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParallelSolution {
    pub rate: f64,
    /// Subchannels (0-based) where the relay decodes.
    pub decode_set: Vec<usize>,
    pub params: PdfJointParams,
}

/// Parallel aligned channel (diagonal `Z_R`, `Z_D`, `H_RD`): the relay
/// decodes exactly the subchannels where its noise is smaller. Those carry DF
/// signalling (`v_i = 0`); the rest carry direct-only signalling (`q_i = 0`),
/// with relay cooperation allowed on every subchannel. Powers across
/// subchannels are optimized jointly.
pub fn pdf_rate_parallel(a: &AlignedInstance, cfg: &MaxMinSolverConfig) -> Result<ParallelSolution> {
    cfg.validate()?;
    if !a.is_diagonal() {
        return Err(Error::NotDiagonal { field: "aligned instance" });
    }
    let n = a.dim();
    let zr: Vec<f64> = (0..n).map(|i| a.z_r.as_matrix()[(i, i)].re).collect();
    let zd: Vec<f64> = (0..n).map(|i| a.z_d.as_matrix()[(i, i)].re).collect();
    let hrd: Vec<_> = (0..n).map(|i| a.h_rd[(i, i)]).collect();
    let decode_set: Vec<usize> = (0..n).filter(|&i| zr[i] < zd[i]).collect();
    let one = |x: f64| CMatrix::from_element(1, 1, c(x, 0.0));
    // Block i: q_i (decoded) or v_i (direct); block n + i: 2×2 cooperation for (u_i, x_R,i).
    let mut dims = vec![1; n];
    dims.extend(std::iter::repeat_n(2, n));
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    for i in 0..n {
        let noise = if decode_set.contains(&i) { zr[i] } else { zd[i] };
        t1.push(LogDetTerm { coef: 1.0, offset: one(noise), maps: vec![(i, one(1.0))] });
        let gi = CMatrix::from_row_slice(1, 2, &[c(1.0, 0.0), hrd[i]]);
        t2.push(LogDetTerm { coef: 1.0, offset: one(zd[i]), maps: vec![(i, one(1.0)), (n + i, gi)] });
    }
    let mut source: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![0])).collect();
    source.extend((0..n).map(|i| (n + i, vec![0])));
    let relay: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (n + i, vec![1])).collect();
    let prog = Program {
        upper: vec![None; 2 * n],
        dims,
        objectives: vec![
            Objective { logdets: t1, ..Default::default() },
            Objective { logdets: t2, ..Default::default() },
        ],
        budgets: vec![
            interior::Budget { cap: a.p_s, members: source },
            interior::Budget { cap: a.p_r, members: relay },
        ],
    };
    let sol = interior::solve(&prog, &cfg.solve_options());
    let mut q = CMatrix::zeros(n, n);
    let mut c_v = CMatrix::zeros(n, n);
    let mut b = CMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let x = sol.blocks[i][(0, 0)];
        if decode_set.contains(&i) {
            q[(i, i)] = x;
        } else {
            c_v[(i, i)] = x;
        }
        let bi = &sol.blocks[n + i];
        let idx = [i, n + i];
        for r in 0..2 {
            for s in 0..2 {
                b[(idx[r], idx[s])] = bi[(r, s)];
            }
        }
    }
    let params = to_params(&Point { q, c_v, b, value: 0.0 });
    let terms = pdf_objective(&a.to_channel(), &params)?;
    if !sol.converged {
        return Err(Error::SolverNotConverged { best: terms.rate });
    }
    Ok(ParallelSolution { rate: terms.rate, decode_set, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::rayleigh_instance;
    use crate::matrix::max_abs_diff;
    use crate::rates::csb_rate;

    fn cfg() -> MaxMinSolverConfig {
        MaxMinSolverConfig::default()
    }

    fn aligned_scalar(z_r: f64, z_d: f64, p_r: f64) -> ChannelInstance {
        ChannelInstance::scalar(1.0, 1.0, 1.0, z_r, z_d, 1.0, p_r).unwrap()
    }

    #[test]
    fn objective_special_points() {
        let ch = ChannelInstance::scalar(4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let t = pdf_objective(&ch, &PdfJointParams::zeros(1, 1)).unwrap();
        assert_eq!(t.rate, 0.0);
        let (p2p, cs) = p2p_capacity(&ch.h_sd, &ch.z_d, 1.0).unwrap();
        let p = PdfJointParams { c_v: cs, ..PdfJointParams::zeros(1, 1) };
        assert!((pdf_objective(&ch, &p).unwrap().rate - p2p).abs() < 1e-12);
        // u = x_S: term1 is the relay mutual information log(1 + 4·C_{S|R}).
        let p = params_to_joint(&PdfInputParams {
            c_q: Hermitian::from_real_diagonal(&[0.5]),
            c_v: Hermitian::zeros(1),
            c_r: Hermitian::from_real_diagonal(&[1.0]),
            a: CMatrix::from_element(1, 1, c(0.5, 0.0)),
        });
        let t = pdf_objective(&ch, &p).unwrap();
        assert!((t.term1 - 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn params_to_joint_examples() {
        let p = params_to_joint(&PdfInputParams {
            c_q: Hermitian::from_real_diagonal(&[1.0]),
            c_v: Hermitian::zeros(1),
            c_r: Hermitian::from_real_diagonal(&[1.0]),
            a: CMatrix::from_element(1, 1, c(1.0, 0.0)),
        });
        let want = crate::matrix::cmatrix_from_real(&[&[2.0, 1.0], &[1.0, 1.0]]);
        assert!(max_abs_diff(p.c_joint.as_matrix(), &want) < 1e-15);
        let p = params_to_joint(&PdfInputParams {
            c_q: Hermitian::from_real_diagonal(&[2.0]),
            c_v: Hermitian::zeros(1),
            c_r: Hermitian::from_real_diagonal(&[3.0]),
            a: CMatrix::zeros(1, 1),
        });
        assert!(max_abs_diff(p.c_joint.as_matrix(), Hermitian::from_real_diagonal(&[2.0, 3.0]).as_matrix()) < 1e-15);
    }

    #[test]
    fn infeasible_params_rejected() {
        let ch = ChannelInstance::scalar(4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let p = PdfJointParams { c_v: Hermitian::from_real_diagonal(&[2.0]), ..PdfJointParams::zeros(1, 1) };
        assert!(matches!(pdf_objective(&ch, &p), Err(Error::InfeasibleParams(_))));
    }

    #[test]
    fn degraded_scalar_equals_df() {
        let ch = aligned_scalar(0.5, 1.0, 1.0);
        let pdf = pdf_rate_gaussian(&ch, &cfg()).unwrap();
        let df = df_rate(&ch, &cfg()).unwrap();
        assert!((pdf.rate - df.rate).abs() < 1e-4, "{} {}", pdf.rate, df.rate);
    }

    #[test]
    fn reversely_degraded_scalar_equals_p2p() {
        let ch = aligned_scalar(2.0, 1.0, 1.0);
        let pdf = pdf_rate_gaussian(&ch, &cfg()).unwrap();
        let p2p = p2p_capacity(&ch.h_sd, &ch.z_d, ch.p_s).unwrap().0;
        assert!((pdf.rate - p2p).abs() < 1e-4, "{} {}", pdf.rate, p2p);
        let silent = aligned_scalar(0.5, 1.0, 1e-12);
        let pdf = pdf_rate_gaussian(&silent, &cfg()).unwrap();
        assert!((pdf.rate - 1.0).abs() < 1e-4);
    }

    #[test]
    fn sandwich_on_random_mimo() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..3 {
            let ch = rayleigh_instance(&mut rng, 3, 2, 2, 10.0, 10.0);
            let pdf = pdf_rate_gaussian(&ch, &cfg()).unwrap();
            let df = df_rate(&ch, &cfg()).unwrap().rate;
            let csb = csb_rate(&ch, &cfg()).unwrap().rate;
            let p2p = p2p_capacity(&ch.h_sd, &ch.z_d, ch.p_s).unwrap().0;
            assert!(pdf.rate >= df.max(p2p) - 1e-4 && pdf.rate <= csb + 1e-4, "{df} {p2p} {} {csb}", pdf.rate);
            for s in &pdf.starts {
                for w in s.history.windows(2) {
                    assert!(w[1] >= w[0] - 1e-7, "{:?}", s.history);
                }
            }
        }
    }

    #[test]
    fn zf_examples() {
        let ch = ChannelInstance::new(
            crate::matrix::cmatrix_from_real(&[&[1.0, 0.0]]),
            crate::matrix::cmatrix_from_real(&[&[0.0, 1.0]]),
            crate::matrix::cmatrix_from_real(&[&[1.0]]),
            Hermitian::identity(1),
            Hermitian::identity(1),
            2.0,
            1.0,
        )
        .unwrap();
        assert!(zf_rank_condition(&ch));
        let zf = pdf_rate_zf(&ch, &cfg()).unwrap();
        let pdf = pdf_rate_gaussian(&ch, &cfg()).unwrap();
        assert!((zf.rate - pdf.rate).abs() < 1e-4, "{} {}", zf.rate, pdf.rate);
        let sc = ChannelInstance::scalar(4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(!zf_rank_condition(&sc));
        let zf = pdf_rate_zf(&sc, &cfg()).unwrap();
        assert_eq!(zf.params.c_v.trace(), 0.0);
        assert!(zf.rate <= pdf_rate_gaussian(&sc, &cfg()).unwrap().rate + 1e-4);
    }

    #[test]
    fn parallel_decode_rule() {
        let a = AlignedInstance::new(
            Hermitian::from_real_diagonal(&[0.5, 2.0]),
            Hermitian::identity(2),
            CMatrix::identity(2, 2),
            2.0,
            1.0,
        )
        .unwrap();
        let par = pdf_rate_parallel(&a, &cfg()).unwrap();
        assert_eq!(par.decode_set, vec![0]);
        let gen = pdf_rate_gaussian(&a.to_channel(), &cfg()).unwrap();
        assert!((par.rate - gen.rate).abs() < 1e-3, "{} {}", par.rate, gen.rate);
        let all = AlignedInstance { z_r: Hermitian::from_real_diagonal(&[0.5, 0.3]), ..a.clone() };
        let par = pdf_rate_parallel(&all, &cfg()).unwrap();
        assert_eq!(par.decode_set, vec![0, 1]);
        let df = df_rate(&all.to_channel(), &cfg()).unwrap().rate;
        assert!((par.rate - df).abs() < 1e-4);
        let full = AlignedInstance { h_rd: CMatrix::from_element(2, 2, c(1.0, 0.0)), ..a };
        assert_eq!(pdf_rate_parallel(&full, &cfg()).unwrap_err(), Error::NotDiagonal { field: "aligned instance" });
    }
}
