//! Point-to-point capacity, decode-and-forward rate and cut-set bound with
//! Gaussian inputs.
//!
//! The DF and cut-set max-min problems are solved over `(Q, B)` with the joint
//! input covariance written as `C = D_Sᴴ Q D_S + B`, `Q, B ⪰ 0`. Since
//! `Q ⪯ C_{S|R}` exactly when `C − D_Sᴴ Q D_S ⪰ 0`, replacing the conditional
//! covariance by `Q` inside the first log-det leaves the optimum unchanged and
//! makes every term a concave log-det of an affine map.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::{whitened_gains, ChannelInstance};
use crate::error::{Error, Result};
use crate::interior::{self, Budget, LogDetTerm, Objective, Program, SolveOptions};
use crate::matrix::{c, eigh, from_eigen, inv_sqrt, logdet_chol, pinv, CMatrix, Hermitian, Tolerance};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxMinSolverConfig {
    /// Inner-approximation rounds for the PDF solver and sweeps of the
    /// aligned-channel pattern search.
    pub max_iters: usize,
    /// Newton-step cap for every concave barrier solve.
    pub max_newton: usize,
    /// Random feasible starts for the nonconvex PDF problems.
    pub restarts: usize,
    /// Bits.
    pub rate_tol: f64,
    pub seed: u64,
}

impl Default for MaxMinSolverConfig {
    fn default() -> Self {
        MaxMinSolverConfig { max_iters: 200, max_newton: 600, restarts: 8, rate_tol: 1e-4, seed: 0 }
    }
}

impl MaxMinSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.max_newton == 0 || self.restarts == 0 {
            return Err(Error::InvalidConfig("max_iters, max_newton and restarts must be at least 1".into()));
        }
        if !(self.rate_tol > 0.0 && self.rate_tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("rate_tol must be positive, got {}", self.rate_tol)));
        }
        Ok(())
    }

    pub(crate) fn solve_options(&self) -> SolveOptions {
        SolveOptions { max_newton: self.max_newton, ..SolveOptions::default() }
    }
}

/// Joint covariance of `(x_S, x_R)`; the first `n_s` coordinates belong to the source.
#[derive(Clone, Debug, PartialEq)]
pub struct JointCovariance {
    pub c: Hermitian,
    pub n_s: usize,
}

impl JointCovariance {
    pub fn n_r(&self) -> usize {
        self.c.dim() - self.n_s
    }

    pub fn source(&self) -> Hermitian {
        Hermitian::symmetrize(&self.c.as_matrix().view((0, 0), (self.n_s, self.n_s)).into_owned())
    }

    pub fn relay(&self) -> Hermitian {
        let n = self.n_r();
        Hermitian::symmetrize(&self.c.as_matrix().view((self.n_s, self.n_s), (n, n)).into_owned())
    }

    pub fn cross(&self) -> CMatrix {
        self.c.as_matrix().view((0, self.n_s), (self.n_s, self.n_r())).into_owned()
    }

    /// Conditional covariance `C_SS − C_SR C_RR⁺ C_SRᴴ`.
    pub fn source_given_relay(&self) -> Hermitian {
        let csr = self.cross();
        let s = self.source().into_matrix() - &csr * pinv(self.relay().as_matrix()) * csr.adjoint();
        Hermitian::symmetrize(&s)
    }

    pub fn is_feasible(&self, p_s: f64, p_r: f64, tol: &Tolerance) -> bool {
        let slack = |p: f64| p * (1.0 + 1e-9) + 1e-12;
        self.c.is_psd(tol) && self.source().trace() <= slack(p_s) && self.relay().trace() <= slack(p_r)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateSolution {
    /// Bits.
    pub rate: f64,
    pub covariance: JointCovariance,
    /// Source part `Q` of the split `Č = D_Sᴴ Q D_S + B` found by the solver.
    pub innovation: Hermitian,
    pub newton_steps: usize,
}

/// Water-filling capacity of `y = H x + n`, `n ~ CN(0, Z)`, `tr C ≤ p`. Returns bits and the optimal covariance.
pub fn p2p_capacity(h_sd: &CMatrix, z_d: &Hermitian, p_s: f64) -> Result<(f64, Hermitian)> {
    if h_sd.nrows() != z_d.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} rows", z_d.dim()),
            found: format!("{} rows", h_sd.nrows()),
        });
    }
    let g = inv_sqrt(z_d)?.as_matrix() * h_sd;
    let (lam, v) = eigh(&(g.adjoint() * &g));
    let powers = water_fill(&lam, p_s);
    let rate = lam.iter().zip(&powers).map(|(l, p)| (1.0 + l * p).log2()).sum();
    Ok((rate, from_eigen(&powers, &v)))
}

/// Powers `max(μ − 1/λᵢ, 0)` summing to `p` (zero for nonpositive gains).
pub fn water_fill(gains: &[f64], p: f64) -> Vec<f64> {
    let mut active: Vec<(usize, f64)> = gains.iter().copied().enumerate().filter(|(_, g)| *g > 1e-300).collect();
    active.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut out = vec![0.0; gains.len()];
    let mut k = active.len();
    while k > 0 {
        let inv_sum: f64 = active[..k].iter().map(|(_, g)| 1.0 / g).sum();
        let mu = (p + inv_sum) / k as f64;
        if mu - 1.0 / active[k - 1].1 > 0.0 {
            for &(i, g) in &active[..k] {
                out[i] = mu - 1.0 / g;
            }
            return out;
        }
        k -= 1;
    }
    out
}

fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// `[H_SD, H_RD]`.
pub(crate) fn joint_gain(h_sd: &CMatrix, h_rd: &CMatrix) -> CMatrix {
    let mut g = CMatrix::zeros(h_sd.nrows(), h_sd.ncols() + h_rd.ncols());
    g.view_mut((0, 0), h_sd.shape()).copy_from(h_sd);
    g.view_mut((0, h_sd.ncols()), h_rd.shape()).copy_from(h_rd);
    g
}

/// `[H_SR; H_SD]`.
pub(crate) fn stacked_gain(h_sr: &CMatrix, h_sd: &CMatrix) -> CMatrix {
    let mut g = CMatrix::zeros(h_sr.nrows() + h_sd.nrows(), h_sr.ncols());
    g.view_mut((0, 0), h_sr.shape()).copy_from(h_sr);
    g.view_mut((h_sr.nrows(), 0), h_sd.shape()).copy_from(h_sd);
    g
}

pub(crate) fn logdet_term(coef: f64, maps: Vec<(usize, CMatrix)>) -> LogDetTerm {
    let m = maps[0].1.nrows();
    LogDetTerm { coef, offset: identity(m), maps }
}

/// Source budget over the listed blocks plus the source rows of `B`, relay budget on the rest of `B`.
pub(crate) fn power_budgets(n_s: usize, n_r: usize, source_blocks: &[usize], b_block: usize, p_s: f64, p_r: f64) -> Vec<Budget> {
    let mut members: Vec<(usize, Vec<usize>)> = source_blocks.iter().map(|&k| (k, (0..n_s).collect())).collect();
    members.push((b_block, (0..n_s).collect()));
    vec![
        Budget { cap: p_s, members },
        Budget { cap: p_r, members: vec![(b_block, (n_s..n_s + n_r).collect())] },
    ]
}

/// `D_Sᴴ Q D_S + B`.
pub(crate) fn lift(q: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut out = b.clone();
    let n_s = q.nrows();
    let mut view = out.view_mut((0, 0), (n_s, n_s));
    view += q;
    out
}

/// `(Q, B)` program with first-term gain `h1` (H_SR for DF, stacked for the cut-set bound).
fn qb_program(h1: &CMatrix, h_sd: &CMatrix, h_rd: &CMatrix, p_s: f64, p_r: f64) -> Program {
    let n_s = h1.ncols();
    let n_r = h_rd.ncols();
    let g = joint_gain(h_sd, h_rd);
    Program {
        dims: vec![n_s, n_s + n_r],
        upper: vec![None, None],
        objectives: vec![
            Objective { logdets: vec![logdet_term(1.0, vec![(0, h1.clone())])], ..Default::default() },
            Objective { logdets: vec![logdet_term(1.0, vec![(0, h_sd.clone()), (1, g)])], ..Default::default() },
        ],
        budgets: power_budgets(n_s, n_r, &[0], 1, p_s, p_r),
    }
}

fn logdet_bits(m: &CMatrix) -> Result<f64> {
    logdet_chol(&(m + m.adjoint()).scale(0.5))
        .map(|x| x / LN_2)
        .ok_or(Error::NotPositiveDefinite { min_eigenvalue: eigh(m).0[0] })
}

fn check_joint(ch: &ChannelInstance, cov: &JointCovariance) -> Result<()> {
    if cov.n_s != ch.n_s() || cov.c.dim() != ch.n_s() + ch.n_r() {
        return Err(Error::DimensionMismatch {
            expected: format!("joint covariance of size {}", ch.n_s() + ch.n_r()),
            found: format!("size {} with n_s = {}", cov.c.dim(), cov.n_s),
        });
    }
    Ok(())
}

/// `(I(x_S; y_R | x_R), I(x_S, x_R; y_D))` in bits for a joint Gaussian input.
pub fn df_objective(ch: &ChannelInstance, cov: &JointCovariance) -> Result<(f64, f64)> {
    check_joint(ch, cov)?;
    let (h_sr, h_sd, h_rd) = whitened_gains(ch)?;
    let cond = cov.source_given_relay();
    let t1 = logdet_bits(&(identity(ch.n_r()) + &h_sr * cond.as_matrix() * h_sr.adjoint()))?;
    let g = joint_gain(&h_sd, &h_rd);
    let t2 = logdet_bits(&(identity(ch.n_d()) + &g * cov.c.as_matrix() * g.adjoint()))?;
    Ok((t1, t2))
}

/// `(I(x_S; y_R, y_D | x_R), I(x_S, x_R; y_D))` in bits for a joint Gaussian input.
pub fn csb_objective(ch: &ChannelInstance, cov: &JointCovariance) -> Result<(f64, f64)> {
    check_joint(ch, cov)?;
    let (h_sr, h_sd, h_rd) = whitened_gains(ch)?;
    let cond = cov.source_given_relay();
    let st = stacked_gain(&h_sr, &h_sd);
    let t1 = logdet_bits(&(identity(st.nrows()) + &st * cond.as_matrix() * st.adjoint()))?;
    let g = joint_gain(&h_sd, &h_rd);
    let t2 = logdet_bits(&(identity(ch.n_d()) + &g * cov.c.as_matrix() * g.adjoint()))?;
    Ok((t1, t2))
}

fn solve_qb(
    ch: &ChannelInstance,
    h1: &CMatrix,
    h_sd: &CMatrix,
    h_rd: &CMatrix,
    cfg: &MaxMinSolverConfig,
    eval: fn(&ChannelInstance, &JointCovariance) -> Result<(f64, f64)>,
) -> Result<RateSolution> {
    cfg.validate()?;
    let prog = qb_program(h1, h_sd, h_rd, ch.p_s, ch.p_r);
    let sol = interior::solve(&prog, &cfg.solve_options());
    let cov = JointCovariance { c: Hermitian::symmetrize(&lift(&sol.blocks[0], &sol.blocks[1])), n_s: ch.n_s() };
    let (t1, t2) = eval(ch, &cov)?;
    let relaxed = sol.min_value() / LN_2;
    let rate = t1.min(t2).max(relaxed);
    if !sol.converged || !rate.is_finite() {
        return Err(Error::SolverNotConverged { best: rate });
    }
    let innovation = Hermitian::symmetrize(&sol.blocks[0]);
    Ok(RateSolution { rate, covariance: cov, innovation, newton_steps: sol.newton_steps })
}

/// Maximum DF rate `max min{I(x_S; y_R | x_R), I(x_S, x_R; y_D)}` over Gaussian inputs.
pub fn df_rate(ch: &ChannelInstance, cfg: &MaxMinSolverConfig) -> Result<RateSolution> {
    let (h_sr, h_sd, h_rd) = whitened_gains(ch)?;
    solve_qb(ch, &h_sr, &h_sd, &h_rd, cfg, df_objective)
}

/// Cut-set bound `max min{I(x_S; y_R, y_D | x_R), I(x_S, x_R; y_D)}` over Gaussian inputs.
pub fn csb_rate(ch: &ChannelInstance, cfg: &MaxMinSolverConfig) -> Result<RateSolution> {
    let (h_sr, h_sd, h_rd) = whitened_gains(ch)?;
    let st = stacked_gain(&h_sr, &h_sd);
    solve_qb(ch, &st, &h_sd, &h_rd, cfg, csb_objective)
}

/// Real scalar joint covariance with correlation `rho`, as used by the closed forms in tests.
pub fn scalar_joint(p_s: f64, p_r: f64, rho: f64) -> JointCovariance {
    let x = rho * (p_s * p_r).sqrt();
    let m = CMatrix::from_row_slice(2, 2, &[c(p_s, 0.0), c(x, 0.0), c(x, 0.0), c(p_r, 0.0)]);
    JointCovariance { c: Hermitian::symmetrize(&m), n_s: 1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{rayleigh_instance, whiten};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> MaxMinSolverConfig {
        MaxMinSolverConfig::default()
    }

    /// max over ρ ∈ [0, 1] of min{f1, f2}, by grid plus golden refinement.
    fn grid_max(f: impl Fn(f64) -> f64) -> f64 {
        let n = 4096;
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 0..=n {
            let r = i as f64 / n as f64;
            let v = f(r);
            if v > best.1 {
                best = (r, v);
            }
        }
        let (mut a, mut b) = ((best.0 - 1.0 / n as f64).max(0.0), (best.0 + 1.0 / n as f64).min(1.0));
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..100 {
            let x1 = b - g * (b - a);
            let x2 = a + g * (b - a);
            if f(x1) < f(x2) {
                a = x1;
            } else {
                b = x2;
            }
        }
        best.1.max(f(0.5 * (a + b)))
    }

    #[test]
    fn p2p_examples() {
        let one = |v: f64| CMatrix::from_element(1, 1, c(v, 0.0));
        let z = Hermitian::identity(1);
        assert!((p2p_capacity(&one(1.0), &z, 1.0).unwrap().0 - 1.0).abs() < 1e-14);
        assert!((p2p_capacity(&one(3.0), &z, 1.0).unwrap().0 - 10f64.log2()).abs() < 1e-14);
        let h = crate::matrix::cmatrix_from_real(&[&[2.0, 0.0], &[0.0, 1.0]]);
        let (r, cs) = p2p_capacity(&h, &Hermitian::identity(2), 1.0).unwrap();
        // Bisection on the water level μ: Σ max(μ − 1/λ, 0) = 1 with λ = {4, 1}.
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mu: f64 = 0.5 * (lo + hi);
            let used = (mu - 0.25f64).max(0.0) + (mu - 1.0f64).max(0.0);
            if used > 1.0 {
                hi = mu
            } else {
                lo = mu
            }
        }
        let want = (1.0 + 4.0 * (lo - 0.25)).log2() + (1.0 + (lo - 1.0)).log2();
        assert!((r - want).abs() < 1e-12);
        assert!((cs.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn df_scalar_worked_case() {
        let ch = ChannelInstance::scalar(4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let sol = df_rate(&ch, &cfg()).unwrap();
        let oracle = grid_max(|r| (5.0 - 4.0 * r * r).log2().min((3.0 + 2.0 * r).log2()));
        assert!((oracle - 2.0).abs() < 1e-9);
        assert!((sol.rate - oracle).abs() < 1e-6, "{} vs {}", sol.rate, oracle);
        assert!(sol.covariance.is_feasible(1.0, 1.0, &Tolerance::default()));
    }

    #[test]
    fn df_scalar_bottleneck_cases() {
        let ch = ChannelInstance::scalar(0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((df_rate(&ch, &cfg()).unwrap().rate - 1.5f64.log2()).abs() < 1e-6);
        let ch = ChannelInstance::scalar(4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1e-12).unwrap();
        assert!((df_rate(&ch, &cfg()).unwrap().rate - 1.0).abs() < 1e-5);
    }

    #[test]
    fn csb_scalar_and_dominance() {
        let ch = ChannelInstance::scalar(4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let sol = csb_rate(&ch, &cfg()).unwrap();
        let oracle = grid_max(|r| (1.0 + 5.0 * (1.0 - r * r)).log2().min((3.0 + 2.0 * r).log2()));
        assert!((sol.rate - oracle).abs() < 1e-6, "{} vs {}", sol.rate, oracle);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let ch = rayleigh_instance(&mut rng, 2, 2, 2, 3.0, 2.0);
            let df = df_rate(&ch, &cfg()).unwrap().rate;
            let csb = csb_rate(&ch, &cfg()).unwrap().rate;
            let p2p = p2p_capacity(&ch.h_sd, &ch.z_d, ch.p_s).unwrap().0;
            assert!(df <= csb + 1e-6 && p2p <= csb + 1e-6, "{df} {csb} {p2p}");
        }
    }

    #[test]
    fn whitening_leaves_df_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut ch = rayleigh_instance(&mut rng, 2, 2, 2, 1.0, 1.0);
        ch.z_r = crate::channel::random_pd(&mut rng, 2, 0.3);
        ch.z_d = crate::channel::random_pd(&mut rng, 2, 0.3);
        let a = df_rate(&ch, &cfg()).unwrap().rate;
        let b = df_rate(&whiten(&ch).unwrap(), &cfg()).unwrap().rate;
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn water_fill_sums_to_power() {
        let p = water_fill(&[3.0, 0.0, 0.5, 1e-3], 2.0);
        assert!((p.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert_eq!(p[1], 0.0);
    }
}
