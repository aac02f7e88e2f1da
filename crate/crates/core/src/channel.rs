//! Channel data model and the structural transforms: whitening, zero-padding,
//! singular-value perturbation, reduction to the aligned form, and
//! degradedness classification.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{c, condition_number, inv_sqrt, loewner_leq, svd, CMatrix, Hermitian, Tolerance};

/// Gaussian MIMO relay channel
/// `y_R = H_SR x_S + n_R`, `y_D = H_SD x_S + H_RD x_R + n_D`
/// with `tr C_S ≤ P_S` and `tr C_R ≤ P_R`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelInstance {
    pub h_sr: CMatrix,
    pub h_sd: CMatrix,
    pub h_rd: CMatrix,
    pub z_r: Hermitian,
    pub z_d: Hermitian,
    pub p_s: f64,
    pub p_r: f64,
}

/// Relay channel with identity source gains: `y_R = x_S + n_R`,
/// `y_D = x_S + H_RD x_R + n_D`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedInstance {
    pub z_r: Hermitian,
    pub z_d: Hermitian,
    pub h_rd: CMatrix,
    pub p_s: f64,
    pub p_r: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DegradednessClass {
    Degraded,
    ReverselyDegraded,
    General,
}

fn check_power(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::NonpositivePower { field, value })
    }
}

fn check_finite(field: &'static str, m: &CMatrix) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { field })
    }
}

fn check_shape(field: &'static str, m: &CMatrix, rows: usize, cols: usize) -> Result<()> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(Error::InvalidDimensions {
            field,
            detail: format!("expected {rows}x{cols}, found {}x{}", m.nrows(), m.ncols()),
        })
    }
}

fn check_noise(field: &'static str, z: &Hermitian) -> Result<()> {
    check_finite(field, z.as_matrix())?;
    let w = z.eigenvalues();
    let top = w.last().copied().unwrap_or(0.0);
    match w.first() {
        Some(&lo) if lo > 1e-12 * top.max(1e-300) && lo > 0.0 => Ok(()),
        _ => Err(Error::NoiseNotPd { field }),
    }
}

impl ChannelInstance {
    pub fn new(
        h_sr: CMatrix,
        h_sd: CMatrix,
        h_rd: CMatrix,
        z_r: Hermitian,
        z_d: Hermitian,
        p_s: f64,
        p_r: f64,
    ) -> Result<Self> {
        ChannelInstance { h_sr, h_sd, h_rd, z_r, z_d, p_s, p_r }.validate()
    }

    /// Real scalar channel with power gains `g_*` (amplitudes `√g`).
    pub fn scalar(g_sr: f64, g_sd: f64, g_rd: f64, z_r: f64, z_d: f64, p_s: f64, p_r: f64) -> Result<Self> {
        let m = |g: f64| CMatrix::from_element(1, 1, c(g.sqrt(), 0.0));
        ChannelInstance::new(
            m(g_sr),
            m(g_sd),
            m(g_rd),
            Hermitian::from_real_diagonal(&[z_r]),
            Hermitian::from_real_diagonal(&[z_d]),
            p_s,
            p_r,
        )
    }

    pub fn n_s(&self) -> usize {
        self.h_sr.ncols()
    }

    pub fn n_r(&self) -> usize {
        self.h_sr.nrows()
    }

    pub fn n_d(&self) -> usize {
        self.h_sd.nrows()
    }

    pub fn validate(self) -> Result<Self> {
        let (n_r, n_s) = self.h_sr.shape();
        let n_d = self.h_sd.nrows();
        if n_s == 0 || n_r == 0 || n_d == 0 {
            return Err(Error::InvalidDimensions {
                field: "H_SR",
                detail: "antenna counts must be positive".into(),
            });
        }
        check_finite("H_SR", &self.h_sr)?;
        check_finite("H_SD", &self.h_sd)?;
        check_finite("H_RD", &self.h_rd)?;
        check_shape("H_SD", &self.h_sd, n_d, n_s)?;
        check_shape("H_RD", &self.h_rd, n_d, n_r)?;
        check_shape("Z_R", self.z_r.as_matrix(), n_r, n_r)?;
        check_shape("Z_D", self.z_d.as_matrix(), n_d, n_d)?;
        check_noise("Z_R", &self.z_r)?;
        check_noise("Z_D", &self.z_d)?;
        check_power("P_S", self.p_s)?;
        check_power("P_R", self.p_r)?;
        Ok(self)
    }

    pub fn is_white(&self) -> bool {
        let id = |n: usize| CMatrix::identity(n, n);
        self.z_r.as_matrix() == &id(self.n_r()) && self.z_d.as_matrix() == &id(self.n_d())
    }

    pub fn is_square(&self) -> bool {
        self.n_s() == self.n_r() && self.n_r() == self.n_d()
    }
}

impl AlignedInstance {
    pub fn new(z_r: Hermitian, z_d: Hermitian, h_rd: CMatrix, p_s: f64, p_r: f64) -> Result<Self> {
        AlignedInstance { z_r, z_d, h_rd, p_s, p_r }.validate()
    }

    pub fn dim(&self) -> usize {
        self.z_r.dim()
    }

    pub fn validate(self) -> Result<Self> {
        let n = self.z_r.dim();
        if n == 0 {
            return Err(Error::InvalidDimensions { field: "Z_R", detail: "dimension must be positive".into() });
        }
        check_shape("Z_D", self.z_d.as_matrix(), n, n)?;
        check_shape("H_RD", &self.h_rd, n, n)?;
        check_finite("H_RD", &self.h_rd)?;
        check_noise("Z_R", &self.z_r)?;
        check_noise("Z_D", &self.z_d)?;
        check_power("P_S", self.p_s)?;
        check_power("P_R", self.p_r)?;
        Ok(self)
    }

    /// The same channel written with explicit identity source gains.
    pub fn to_channel(&self) -> ChannelInstance {
        let n = self.dim();
        ChannelInstance {
            h_sr: CMatrix::identity(n, n),
            h_sd: CMatrix::identity(n, n),
            h_rd: self.h_rd.clone(),
            z_r: self.z_r.clone(),
            z_d: self.z_d.clone(),
            p_s: self.p_s,
            p_r: self.p_r,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        let off = |m: &CMatrix| {
            (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)].norm() == 0.0))
        };
        off(self.z_r.as_matrix()) && off(self.z_d.as_matrix()) && off(&self.h_rd)
    }
}

/// Replaces both noise covariances by identities, absorbing `Z^{−1/2}` into the gains.
pub fn whiten(ch: &ChannelInstance) -> Result<ChannelInstance> {
    let tr = inv_sqrt(&ch.z_r)?;
    let td = inv_sqrt(&ch.z_d)?;
    Ok(ChannelInstance {
        h_sr: tr.as_matrix() * &ch.h_sr,
        h_sd: td.as_matrix() * &ch.h_sd,
        h_rd: td.as_matrix() * &ch.h_rd,
        z_r: Hermitian::identity(ch.n_r()),
        z_d: Hermitian::identity(ch.n_d()),
        p_s: ch.p_s,
        p_r: ch.p_r,
    })
}

fn embed(m: &CMatrix, n: usize) -> CMatrix {
    let mut out = CMatrix::zeros(n, n);
    out.view_mut((0, 0), m.shape()).copy_from(m);
    out
}

fn embed_noise(z: &Hermitian, n: usize) -> Hermitian {
    let mut out = CMatrix::identity(n, n);
    out.view_mut((0, 0), z.as_matrix().shape()).copy_from(z.as_matrix());
    Hermitian::symmetrize(&out)
}

/// Pads every gain to N×N, N = max(N_S, N_R, N_D), with zeros; padded noise
/// dimensions get unit variance.
pub fn square_augment(ch: &ChannelInstance) -> ChannelInstance {
    let n = ch.n_s().max(ch.n_r()).max(ch.n_d());
    ChannelInstance {
        h_sr: embed(&ch.h_sr, n),
        h_sd: embed(&ch.h_sd, n),
        h_rd: embed(&ch.h_rd, n),
        z_r: embed_noise(&ch.z_r, n),
        z_d: embed_noise(&ch.z_d, n),
        p_s: ch.p_s,
        p_r: ch.p_r,
    }
}

/// U·(Σ + εI)·Vᴴ from the full SVD of `h`.
pub fn perturb_gain(h: &CMatrix, eps: f64) -> CMatrix {
    let (rows, cols) = h.shape();
    let (u, s, v) = svd(h);
    let sig = CMatrix::from_fn(rows, cols, |i, j| if i == j { c(s[i] + eps, 0.0) } else { c(0.0, 0.0) });
    u * sig * v.adjoint()
}

/// Raises every singular value of H_SR and H_SD by ε; H_RD is left unchanged.
pub fn perturb_enhance(ch: &ChannelInstance, eps: f64) -> Result<ChannelInstance> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::NonpositiveEpsilon(eps));
    }
    Ok(ChannelInstance {
        h_sr: perturb_gain(&ch.h_sr, eps),
        h_sd: perturb_gain(&ch.h_sd, eps),
        ..ch.clone()
    })
}

const MAX_CONDITION: f64 = 1e12;

/// Premultiplies the relay equation by H_SR⁻¹ and the destination equation by
/// H_SD⁻¹: `Z_R' = H_SR⁻¹ Z_R H_SR⁻ᴴ`, `Z_D' = H_SD⁻¹ Z_D H_SD⁻ᴴ`,
/// `H_RD' = H_SD⁻¹ H_RD`.
pub fn to_aligned(ch: &ChannelInstance) -> Result<AlignedInstance> {
    if !ch.is_square() {
        return Err(Error::NotSquare { n_s: ch.n_s(), n_r: ch.n_r(), n_d: ch.n_d() });
    }
    let inv = |field: &'static str, h: &CMatrix| -> Result<CMatrix> {
        let condition = condition_number(h);
        if !(condition <= MAX_CONDITION) {
            return Err(Error::GainNotInvertible { field, condition });
        }
        h.clone().try_inverse().ok_or(Error::GainNotInvertible { field, condition })
    };
    let gr = inv("H_SR", &ch.h_sr)?;
    let gd = inv("H_SD", &ch.h_sd)?;
    Ok(AlignedInstance {
        z_r: ch.z_r.congruence(&gr),
        z_d: ch.z_d.congruence(&gd),
        h_rd: &gd * &ch.h_rd,
        p_s: ch.p_s,
        p_r: ch.p_r,
    })
}

pub fn classify(a: &AlignedInstance, tol: &Tolerance) -> DegradednessClass {
    if loewner_leq(&a.z_r, &a.z_d, tol).unwrap_or(false) {
        DegradednessClass::Degraded
    } else if loewner_leq(&a.z_d, &a.z_r, tol).unwrap_or(false) {
        DegradednessClass::ReverselyDegraded
    } else {
        DegradednessClass::General
    }
}

/// Gains of the whitened channel without materializing the instance.
pub(crate) fn whitened_gains(ch: &ChannelInstance) -> Result<(CMatrix, CMatrix, CMatrix)> {
    if ch.is_white() {
        return Ok((ch.h_sr.clone(), ch.h_sd.clone(), ch.h_rd.clone()));
    }
    let w = whiten(ch)?;
    Ok((w.h_sr, w.h_sd, w.h_rd))
}

/// Matrix with i.i.d. CN(0, 1) entries.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        c(s * a, s * b)
    })
}

/// Rayleigh-fading instance: i.i.d. CN(0, 1) gains, unit noise.
pub fn rayleigh_instance<R: Rng + ?Sized>(
    rng: &mut R,
    n_s: usize,
    n_r: usize,
    n_d: usize,
    p_s: f64,
    p_r: f64,
) -> ChannelInstance {
    let h_sr = complex_gaussian(rng, n_r, n_s);
    let h_sd = complex_gaussian(rng, n_d, n_s);
    let h_rd = complex_gaussian(rng, n_d, n_r);
    ChannelInstance {
        h_sr,
        h_sd,
        h_rd,
        z_r: Hermitian::identity(n_r),
        z_d: Hermitian::identity(n_d),
        p_s,
        p_r,
    }
}

/// Random positive definite matrix `G Gᴴ/n + floor·I`.
pub fn random_pd<R: Rng + ?Sized>(rng: &mut R, n: usize, floor: f64) -> Hermitian {
    let g = complex_gaussian(rng, n, n);
    Hermitian::symmetrize(&((&g * g.adjoint()).scale(1.0 / n as f64) + CMatrix::identity(n, n).scale(floor)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::max_abs_diff;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_unit() -> ChannelInstance {
        ChannelInstance::scalar(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn validate_examples() {
        assert!(scalar_unit().validate().is_ok());
        let mut bad = scalar_unit();
        bad.z_r = Hermitian::zeros(1);
        assert_eq!(bad.validate().unwrap_err(), Error::NoiseNotPd { field: "Z_R" });
        let mut bad = scalar_unit();
        bad.h_sd = CMatrix::zeros(1, 2);
        assert!(matches!(bad.validate(), Err(Error::InvalidDimensions { field: "H_SD", .. })));
        let mut bad = scalar_unit();
        bad.p_r = 0.0;
        assert!(matches!(bad.validate(), Err(Error::NonpositivePower { field: "P_R", .. })));
    }

    #[test]
    fn whiten_scalar() {
        let ch = ChannelInstance::scalar(4.0, 1.0, 1.0, 4.0, 1.0, 1.0, 1.0).unwrap();
        let w = whiten(&ch).unwrap();
        assert!((w.h_sr[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!((w.z_r.as_matrix()[(0, 0)].re - 1.0).abs() < 1e-15);
        let u = scalar_unit();
        assert_eq!(whiten(&u).unwrap(), u);
    }

    #[test]
    fn square_augment_pads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = rayleigh_instance(&mut rng, 2, 1, 1, 1.0, 1.0);
        let sq = square_augment(&ch);
        assert!(sq.is_square() && sq.n_s() == 2);
        assert_eq!(sq.h_sr[(1, 0)], c(0.0, 0.0));
        assert_eq!(sq.h_sr[(0, 1)], ch.h_sr[(0, 1)]);
        assert_eq!(sq.z_r.as_matrix(), &CMatrix::identity(2, 2));
        let sq2 = square_augment(&sq);
        assert_eq!(sq2, sq);
    }

    #[test]
    fn perturb_scalar_and_dominance() {
        let ch = ChannelInstance::scalar(0.0, 4.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let p = perturb_enhance(&ch, 0.1).unwrap();
        assert!((p.h_sr[(0, 0)].norm() - 0.1).abs() < 1e-15);
        assert!((p.h_sd[(0, 0)].norm() - 2.1).abs() < 1e-14);
        assert_eq!(perturb_enhance(&ch, 0.0).unwrap_err(), Error::NonpositiveEpsilon(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = rayleigh_instance(&mut rng, 2, 2, 2, 1.0, 1.0);
        let p = perturb_enhance(&ch, 1e-2).unwrap();
        let gram = |h: &CMatrix| Hermitian::symmetrize(&(h.adjoint() * h));
        let tol = Tolerance::default();
        assert!(loewner_leq(&gram(&ch.h_sr), &gram(&p.h_sr), &tol).unwrap());
        assert!(loewner_leq(&gram(&ch.h_sd), &gram(&p.h_sd), &tol).unwrap());
        assert!((&p.h_sr - &ch.h_sr).norm() <= 1e-2 * 2f64.sqrt() + 1e-12);
    }

    #[test]
    fn to_aligned_examples() {
        let ch = ChannelInstance::scalar(4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let a = to_aligned(&ch).unwrap();
        assert!((a.z_r.as_matrix()[(0, 0)].re - 0.25).abs() < 1e-15);
        assert!((a.z_d.as_matrix()[(0, 0)].re - 1.0).abs() < 1e-15);
        let id = AlignedInstance::new(Hermitian::identity(2), Hermitian::identity(2), CMatrix::identity(2, 2), 1.0, 1.0)
            .unwrap()
            .to_channel();
        let a = to_aligned(&id).unwrap();
        assert!(max_abs_diff(a.z_r.as_matrix(), &CMatrix::identity(2, 2)) < 1e-15);
        let sing = ChannelInstance::scalar(0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(to_aligned(&sing), Err(Error::GainNotInvertible { field: "H_SR", .. })));
    }

    #[test]
    fn classify_examples() {
        let tol = Tolerance::default();
        let mk = |zr: &[f64]| {
            AlignedInstance::new(
                Hermitian::from_real_diagonal(zr),
                Hermitian::identity(zr.len()),
                CMatrix::identity(zr.len(), zr.len()),
                1.0,
                1.0,
            )
            .unwrap()
        };
        assert_eq!(classify(&mk(&[0.5, 0.5]), &tol), DegradednessClass::Degraded);
        assert_eq!(classify(&mk(&[2.0, 2.0]), &tol), DegradednessClass::ReverselyDegraded);
        assert_eq!(classify(&mk(&[0.5, 2.0]), &tol), DegradednessClass::General);
        assert_eq!(classify(&mk(&[1.0, 1.0]), &tol), DegradednessClass::Degraded);
    }
}
