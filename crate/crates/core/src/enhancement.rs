//! Channel-enhancement certificates for the aligned channel.
//!
//! For the wiretap-type subproblem `max log|C + Z_D| − log|C + Z_R|` over
//! `0 ⪯ C ⪯ S`, a maximizer `C★` comes with multipliers `Λ₁, Λ₂ ⪰ 0` such that
//!
//! ```text
//! (C★ + Z_D)⁻¹ + Λ₁ = (C★ + Z_R)⁻¹ + Λ₂,   C★ Λ₁ = 0,   (S − C★) Λ₂ = 0.
//! ```
//!
//! The enhanced noise `Z = (Z_D⁻¹ + Λ₁)⁻¹` satisfies `Z ⪯ Z_D` and `Z ⪯ Z_R`,
//! and the subproblem value equals `log|S + Z|/|Z| − log|S + Z_R|/|Z_D|`.
//! Replacing `Z_R` by `Z` yields a degraded channel whose DF rate at `C_Q = S`
//! matches the PDF value at `S`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::{classify, whiten, AlignedInstance, ChannelInstance, DegradednessClass};
use crate::error::{Error, Result};
use crate::matrix::{eigh, inv_pd, logdet_chol, loewner_leq, pinv, CMatrix, Hermitian, Tolerance};
use crate::pdf::{cooperative_value, pdf_objective, pdf_rate_gaussian, PdfJointParams};
use crate::rates::{df_objective, lift, JointCovariance, MaxMinSolverConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct KktMultipliers {
    pub lambda1: Hermitian,
    pub lambda2: Hermitian,
    /// Set when `S` is singular, so that the kernels of `C★` and `S − C★`
    /// intersect and the split of the multipliers on `ker S` is not unique.
    pub ambiguous: bool,
    pub stationarity: f64,
    pub cs1: f64,
    pub cs2: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub stationarity: f64,
    pub cs1: f64,
    pub cs2: f64,
    /// Bits.
    pub equiv1: f64,
    /// Bits.
    pub equiv2: f64,
    /// Bits.
    pub value_formula: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnhancementCertificate {
    pub c_v_star: Hermitian,
    pub lambda1: Hermitian,
    pub lambda2: Hermitian,
    pub z: Hermitian,
    /// Numerical subproblem value `log|C★ + Z_D| − log|C★ + Z_R|`, bits.
    pub wiretap_value: f64,
    pub ambiguous: bool,
    pub residuals: Residuals,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    /// `log|S + Z|/|Z| − log|S + Z_R|/|Z_D|`, bits.
    pub closed_form_value: f64,
    pub pass: bool,
}

impl VerificationReport {
    pub fn residuals(&self) -> Residuals {
        let get = |n: &str| self.checks.iter().find(|c| c.name == n).map_or(0.0, |c| c.residual);
        Residuals {
            stationarity: get("stationarity"),
            cs1: get("cs1"),
            cs2: get("cs2"),
            equiv1: get("equiv1"),
            equiv2: get("equiv2"),
            value_formula: get("value_formula"),
        }
    }
}

/// Residual threshold for the KKT and determinant identities.
pub const IDENTITY_THRESHOLD: f64 = 1e-6;
/// Bits.
pub const VALUE_THRESHOLD: f64 = 1e-5;

fn kernel_basis(m: &CMatrix, thr: f64) -> CMatrix {
    let (w, v) = eigh(m);
    let idx: Vec<usize> = (0..w.len()).filter(|&i| w[i] <= thr).collect();
    CMatrix::from_fn(m.nrows(), idx.len(), |r, j| v[(r, idx[j])])
}

/// Orthonormal basis of the part of span(`k`) orthogonal to span(`n0`).
fn complement_within(k: &CMatrix, n0: &CMatrix) -> CMatrix {
    if n0.ncols() == 0 || k.ncols() == 0 {
        return k.clone();
    }
    let proj = k - n0 * (n0.adjoint() * k);
    let (u, s, _) = crate::matrix::svd(&proj);
    let r = s.iter().filter(|&&x| x > 1e-8).count();
    CMatrix::from_fn(k.nrows(), r, |i, j| u[(i, j)])
}

fn hcat(parts: &[&CMatrix]) -> CMatrix {
    let n = parts[0].nrows();
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = CMatrix::zeros(n, cols);
    let mut at = 0;
    for p in parts {
        out.view_mut((0, at), (n, p.ncols())).copy_from(p);
        at += p.ncols();
    }
    out
}

fn sub(m: &CMatrix, r0: usize, c0: usize, r: usize, c: usize) -> CMatrix {
    m.view((r0, c0), (r, c)).into_owned()
}

fn psd_parts(m: &CMatrix) -> (CMatrix, CMatrix) {
    let (w, v) = eigh(m);
    let pos: Vec<f64> = w.iter().map(|x| x.max(0.0)).collect();
    let neg: Vec<f64> = w.iter().map(|x| (-x).max(0.0)).collect();
    (
        crate::matrix::from_eigen(&pos, &v).into_matrix(),
        crate::matrix::from_eigen(&neg, &v).into_matrix(),
    )
}

fn two_block(b: &CMatrix, top: &CMatrix, cross: &CMatrix, bottom: &CMatrix, nb: &CMatrix) -> CMatrix {
    let (p, q) = (top.nrows(), bottom.nrows());
    let mut m = CMatrix::zeros(p + q, p + q);
    m.view_mut((0, 0), (p, p)).copy_from(top);
    m.view_mut((0, p), (p, q)).copy_from(cross);
    m.view_mut((p, 0), (q, p)).copy_from(&cross.adjoint());
    m.view_mut((p, p), (q, q)).copy_from(bottom);
    let w = hcat(&[b, nb]);
    &w * m * w.adjoint()
}

fn herm(m: CMatrix) -> Hermitian {
    Hermitian::symmetrize(&m)
}

/// KKT multipliers supported on `ker C★` (Λ₁) and `ker(S − C★)` (Λ₂), fitted
/// to `G = (C★ + Z_R)⁻¹ − (C★ + Z_D)⁻¹` by least squares; whatever part of
/// `G` they cannot represent shows up in the stationarity residual. When `S`
/// is singular both supports contain `ker S` and the split there is not
/// unique; the smallest PSD-preserving split is returned and `ambiguous` is set.
pub fn extract_kkt(
    c_v_star: &Hermitian,
    s: &Hermitian,
    z_r: &Hermitian,
    z_d: &Hermitian,
    tol: &Tolerance,
) -> Result<KktMultipliers> {
    let n = s.dim();
    for (name, m) in [("C_V★", c_v_star), ("Z_R", z_r), ("Z_D", z_d)] {
        if m.dim() != n {
            return Err(Error::DimensionMismatch { expected: format!("{n}x{n} for {name}"), found: format!("{0}x{0}", m.dim()) });
        }
    }
    let c = c_v_star.as_matrix();
    let sm = s.as_matrix();
    let scale = s.norm2().max(f64::MIN_POSITIVE);
    let thr = tol.psd_eig * scale;
    let a_r = inv_pd(&(c + z_r.as_matrix())).ok_or(Error::NotPositiveDefinite { min_eigenvalue: f64::NAN })?;
    let a_d = inv_pd(&(c + z_d.as_matrix())).ok_or(Error::NotPositiveDefinite { min_eigenvalue: f64::NAN })?;
    let g = &a_r - &a_d;

    let n0 = kernel_basis(sm, thr);
    let k1 = complement_within(&kernel_basis(c, thr), &n0);
    let k2 = complement_within(&kernel_basis(&(sm - c), thr), &n0);
    let (d1, d2, d0) = (k1.ncols(), k2.ncols(), n0.ncols());
    let w = hcat(&[&k1, &k2, &n0]);
    let (lambda1, lambda2) = if w.ncols() == 0 {
        (CMatrix::zeros(n, n), CMatrix::zeros(n, n))
    } else {
        let wp = pinv(&w);
        let m = &wp * &g * wp.adjoint();
        let m11 = sub(&m, 0, 0, d1, d1);
        let m22 = sub(&m, d1, d1, d2, d2);
        let m00 = sub(&m, d1 + d2, d1 + d2, d0, d0);
        let m10 = sub(&m, 0, d1 + d2, d1, d0);
        let m20 = sub(&m, d1, d1 + d2, d2, d0);
        // On ker S only a − b = M₀₀ is fixed. Take the smallest b that keeps
        // both blocks PSD given their cross terms (Schur complements s1, s2).
        let s1 = m10.adjoint() * pinv(&m11) * &m10;
        let s2 = m20.adjoint() * pinv(&(-&m22)) * &m20;
        let (excess, _) = psd_parts(&herm(&s1 - &m00 - &s2).into_matrix());
        let b00 = herm(&s2 + excess).into_matrix();
        let a00 = herm(&m00 + &b00).into_matrix();
        (two_block(&k1, &m11, &m10, &a00, &n0), two_block(&k2, &(-m22), &(-m20), &b00, &n0))
    };
    let lambda1 = herm(lambda1);
    let lambda2 = herm(lambda2);
    let stationarity = (&a_d + lambda1.as_matrix() - &a_r - lambda2.as_matrix()).norm();
    let cs1 = (c * lambda1.as_matrix()).norm();
    let cs2 = ((sm - c) * lambda2.as_matrix()).norm();
    let out = KktMultipliers { lambda1, lambda2, ambiguous: d0 > 0, stationarity, cs1, cs2 };

    let limit = 100.0 * tol.residual;
    for (name, r) in [("stationarity", stationarity), ("cs1", cs1), ("cs2", cs2)] {
        if !(r <= limit) {
            return Err(Error::KktInfeasible(format!("{name} residual {r:e} exceeds {limit:e}")));
        }
    }
    for (name, l) in [("Lambda1", &out.lambda1), ("Lambda2", &out.lambda2)] {
        let lo = l.min_eigenvalue();
        if lo < -tol.psd_eig * l.norm2().max(1.0) {
            return Err(Error::KktInfeasible(format!("{name} has eigenvalue {lo:e}")));
        }
    }
    Ok(out)
}

/// `Z = (Z_D⁻¹ + Λ₁)⁻¹`.
pub fn build_enhanced_noise(lambda1: &Hermitian, z_d: &Hermitian) -> Result<Hermitian> {
    if lambda1.dim() != z_d.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0}", z_d.dim()),
            found: format!("{0}x{0}", lambda1.dim()),
        });
    }
    let zinv = z_d.inverse()?;
    zinv.add(lambda1).inverse()
}

fn ld(m: &CMatrix) -> Result<f64> {
    logdet_chol(&(m + m.adjoint()).scale(0.5)).map(|x| x / LN_2).ok_or(Error::NotPositiveDefinite { min_eigenvalue: f64::NAN })
}

/// `log|S + Z|/|Z| − log|S + Z_R|/|Z_D|` in bits.
pub fn closed_form_value(s: &Hermitian, z: &Hermitian, z_r: &Hermitian, z_d: &Hermitian) -> Result<f64> {
    let sm = s.as_matrix();
    Ok(ld(&(sm + z.as_matrix()))? - ld(z.as_matrix())? - ld(&(sm + z_r.as_matrix()))? + ld(z_d.as_matrix())?)
}

fn check(name: &str, residual: f64, threshold: f64) -> Check {
    Check { name: name.into(), residual, threshold, pass: residual <= threshold }
}

/// Checks every identity and domination of the certificate.
pub fn verify_enhancement(
    s: &Hermitian,
    cert: &EnhancementCertificate,
    z_r: &Hermitian,
    z_d: &Hermitian,
    tol: &Tolerance,
) -> Result<VerificationReport> {
    let c = cert.c_v_star.as_matrix();
    let z = cert.z.as_matrix();
    let sm = s.as_matrix();
    let a_r = inv_pd(&(c + z_r.as_matrix())).ok_or(Error::NotPositiveDefinite { min_eigenvalue: f64::NAN })?;
    let a_d = inv_pd(&(c + z_d.as_matrix())).ok_or(Error::NotPositiveDefinite { min_eigenvalue: f64::NAN })?;
    let stationarity = (&a_d + cert.lambda1.as_matrix() - &a_r - cert.lambda2.as_matrix()).norm();
    let cs1 = (c * cert.lambda1.as_matrix()).norm();
    let cs2 = ((sm - c) * cert.lambda2.as_matrix()).norm();
    let equiv2 = ((ld(&(c + z_d.as_matrix()))? - ld(z_d.as_matrix())?) - (ld(&(c + z))? - ld(z)?)).abs();
    let equiv1 = ((ld(&(c + z))? - ld(&(c + z_r.as_matrix()))?) - (ld(&(sm + z))? - ld(&(sm + z_r.as_matrix()))?)).abs();
    let closed = closed_form_value(s, &cert.z, z_r, z_d)?;
    let value_formula = (cert.wiretap_value - closed).abs();
    let gap = |a: &Hermitian, b: &Hermitian| (-b.sub(a).min_eigenvalue()).max(0.0);
    let leq_d = loewner_leq(&cert.z, z_d, tol)?;
    let leq_r = loewner_leq(&cert.z, z_r, tol)?;
    let mut checks = vec![
        check("stationarity", stationarity, IDENTITY_THRESHOLD),
        check("cs1", cs1, IDENTITY_THRESHOLD),
        check("cs2", cs2, IDENTITY_THRESHOLD),
        check("equiv1", equiv1, IDENTITY_THRESHOLD),
        check("equiv2", equiv2, IDENTITY_THRESHOLD),
        check("value_formula", value_formula, VALUE_THRESHOLD),
    ];
    let mut dom = |name: &str, ok: bool, r: f64| {
        checks.push(Check { name: name.into(), residual: r, threshold: tol.psd_eig, pass: ok });
    };
    dom("z_leq_zd", leq_d, gap(&cert.z, z_d));
    dom("z_leq_zr", leq_r, gap(&cert.z, z_r));
    let lam_ok = cert.lambda1.is_psd(tol) && cert.lambda2.is_psd(tol);
    let lam_gap = (-cert.lambda1.min_eigenvalue()).max(-cert.lambda2.min_eigenvalue()).max(0.0);
    dom("multipliers_psd", lam_ok, lam_gap);
    let pass = checks.iter().all(|c| c.pass);
    Ok(VerificationReport { checks, closed_form_value: closed, pass })
}

/// Builds and verifies the certificate for a numerical maximizer `C★`.
pub fn certify(
    s: &Hermitian,
    c_v_star: &Hermitian,
    wiretap_value: f64,
    z_r: &Hermitian,
    z_d: &Hermitian,
    tol: &Tolerance,
) -> Result<(EnhancementCertificate, VerificationReport)> {
    let kkt = extract_kkt(c_v_star, s, z_r, z_d, tol)?;
    let z = build_enhanced_noise(&kkt.lambda1, z_d)?;
    let mut cert = EnhancementCertificate {
        c_v_star: c_v_star.clone(),
        lambda1: kkt.lambda1,
        lambda2: kkt.lambda2,
        z,
        wiretap_value,
        ambiguous: kkt.ambiguous,
        residuals: Residuals::default(),
    };
    let report = verify_enhancement(s, &cert, z_r, z_d, tol)?;
    cert.residuals = report.residuals();
    Ok((cert, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnhancedDfReport {
    /// DF value of the enhanced channel at `C_Q = S`, bits.
    pub r_enhanced_df: f64,
    /// PDF value of the original channel at `(Q, C_V) = (S − C★, C★)`, bits.
    pub r_pdf_inner: f64,
    pub difference: f64,
    pub enhanced_class: DegradednessClass,
    pub pass: bool,
}

/// Compares the enhanced-channel DF value at `C_Q = S` with the achievable PDF
/// value at the innovation covariance `S`, both using the same cooperative
/// optimizer `(C_R, A)`.
pub fn enhanced_df_check(
    a: &AlignedInstance,
    s: &Hermitian,
    cert: &EnhancementCertificate,
    cfg: &MaxMinSolverConfig,
) -> Result<EnhancedDfReport> {
    let tol = Tolerance { rate: cfg.rate_tol, ..Tolerance::default() };
    let enhanced = AlignedInstance { z_r: cert.z.clone(), ..a.clone() };
    let enhanced_class = classify(&enhanced, &tol);
    let coop = cooperative_value(a, s, cfg)?;
    let n = a.dim();

    // DF on the enhanced channel with Q = S and the shared cooperation matrix.
    let joint = JointCovariance { c: Hermitian::symmetrize(&lift(s.as_matrix(), coop.b.as_matrix())), n_s: n };
    let (_, df_t2) = df_objective(&enhanced.to_channel(), &joint)?;
    let df_t1 = ld(&(s.as_matrix() + cert.z.as_matrix()))? - ld(cert.z.as_matrix())?;
    let r_enhanced_df = df_t1.min(df_t2);

    let q = s.sub(&cert.c_v_star);
    let params = PdfJointParams {
        c_joint: Hermitian::symmetrize(&lift(q.as_matrix(), coop.b.as_matrix())),
        q,
        c_v: cert.c_v_star.clone(),
    };
    let r_pdf_inner = pdf_objective(&a.to_channel(), &params)?.rate;
    let difference = (r_enhanced_df - r_pdf_inner).abs();
    let pass = difference < cfg.rate_tol && enhanced_class == DegradednessClass::Degraded;
    Ok(EnhancedDfReport { r_enhanced_df, r_pdf_inner, difference, enhanced_class, pass })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub eps: f64,
    /// PDF rate of the perturbed channel at the unperturbed optimizer, bits.
    pub rate_fixed: f64,
    /// Re-optimized PDF rate of the perturbed channel, bits.
    pub rate_reoptimized: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonTable {
    pub base_rate: f64,
    pub rows: Vec<EpsilonRow>,
}

/// PDF rates of `perturb_enhance(c, ε)` for each ε, at the fixed optimizer of
/// the unperturbed problem and (when `reoptimize`) re-solved from scratch.
/// The instance is whitened first.
pub fn epsilon_limit_check(
    ch: &ChannelInstance,
    eps_list: &[f64],
    cfg: &MaxMinSolverConfig,
    reoptimize: bool,
) -> Result<EpsilonTable> {
    let base = whiten(ch)?;
    let sol = pdf_rate_gaussian(&base, cfg)?;
    let mut rows = vec![EpsilonRow { eps: 0.0, rate_fixed: sol.rate, rate_reoptimized: Some(sol.rate) }];
    for &eps in eps_list {
        let pert = crate::channel::perturb_enhance(&base, eps)?;
        let rate_fixed = pdf_objective(&pert, &sol.params)?.rate;
        let rate_reoptimized = if reoptimize { Some(pdf_rate_gaussian(&pert, cfg)?.rate) } else { None };
        rows.push(EpsilonRow { eps, rate_fixed, rate_reoptimized });
    }
    Ok(EpsilonTable { base_rate: sol.rate, rows })
}
