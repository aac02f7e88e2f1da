//! Instance files, result records and ensemble tables.

use std::fmt::Write as _;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{rayleigh_instance, AlignedInstance, ChannelInstance, DegradednessClass};
use crate::enhancement::{EnhancementCertificate, Residuals};
use crate::error::{Error, Result};
use crate::matrix::{c, CMatrix, Hermitian};
use crate::pdf::{pdf_rate_gaussian, pdf_rate_zf};
use crate::rates::{csb_rate, df_rate, p2p_capacity, MaxMinSolverConfig};

pub const INSTANCE_SCHEMA: &str = "relay-pdf/instance/1";
pub const RESULT_SCHEMA: &str = "relay-pdf/result/1";
pub const ENSEMBLE_SCHEMA: &str = "relay-pdf/ensemble/1";

/// Rows of `[re, im]` pairs.
pub type MatrixJson = Vec<Vec<[f64; 2]>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    General,
    Aligned,
}

/// On-disk layout of an instance. Aligned files omit `H_SR` and `H_SD`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schema_version: String,
    pub kind: InstanceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(rename = "H_SR", default, skip_serializing_if = "Option::is_none")]
    pub h_sr: Option<MatrixJson>,
    #[serde(rename = "H_SD", default, skip_serializing_if = "Option::is_none")]
    pub h_sd: Option<MatrixJson>,
    #[serde(rename = "H_RD")]
    pub h_rd: MatrixJson,
    #[serde(rename = "Z_R")]
    pub z_r: MatrixJson,
    #[serde(rename = "Z_D")]
    pub z_d: MatrixJson,
    #[serde(rename = "P_S")]
    pub p_s: f64,
    #[serde(rename = "P_R")]
    pub p_r: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Instance {
    General(ChannelInstance),
    Aligned(AlignedInstance),
}

impl Instance {
    /// The instance as a general channel (aligned channels get identity source gains).
    pub fn channel(&self) -> ChannelInstance {
        match self {
            Instance::General(ch) => ch.clone(),
            Instance::Aligned(a) => a.to_channel(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledInstance {
    pub label: Option<String>,
    pub instance: Instance,
}

pub fn matrix_to_json(m: &CMatrix) -> MatrixJson {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn matrix_from_json(field: &str, rows: &MatrixJson) -> Result<CMatrix> {
    let invalid = |detail: String| Error::Validation { field: field.to_string(), detail };
    let r = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    if r == 0 || cols == 0 {
        return Err(invalid("matrix must have at least one row and one column".into()));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != cols) {
        return Err(invalid(format!("row {i} has {} entries, expected {cols}", rows[i].len())));
    }
    for (i, row) in rows.iter().enumerate() {
        if let Some(j) = row.iter().position(|z| !z[0].is_finite() || !z[1].is_finite()) {
            return Err(invalid(format!("entry [{i}][{j}] is not finite")));
        }
    }
    Ok(CMatrix::from_fn(r, cols, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

fn hermitian_from_json(field: &str, rows: &MatrixJson) -> Result<Hermitian> {
    let m = matrix_from_json(field, rows)?;
    Hermitian::new(m).map_err(|e| Error::Validation { field: field.to_string(), detail: e.to_string() })
}

fn field_error(e: Error) -> Error {
    let field = match &e {
        Error::InvalidDimensions { field, .. }
        | Error::NoiseNotPd { field }
        | Error::FieldNotHermitian { field }
        | Error::NonFinite { field }
        | Error::NonpositivePower { field, .. } => field.to_string(),
        _ => return e,
    };
    Error::Validation { field, detail: e.to_string() }
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance, label: Option<String>) -> Self {
        match inst {
            Instance::General(ch) => InstanceFile {
                schema_version: INSTANCE_SCHEMA.into(),
                kind: InstanceKind::General,
                label,
                h_sr: Some(matrix_to_json(&ch.h_sr)),
                h_sd: Some(matrix_to_json(&ch.h_sd)),
                h_rd: matrix_to_json(&ch.h_rd),
                z_r: matrix_to_json(ch.z_r.as_matrix()),
                z_d: matrix_to_json(ch.z_d.as_matrix()),
                p_s: ch.p_s,
                p_r: ch.p_r,
            },
            Instance::Aligned(a) => InstanceFile {
                schema_version: INSTANCE_SCHEMA.into(),
                kind: InstanceKind::Aligned,
                label,
                h_sr: None,
                h_sd: None,
                h_rd: matrix_to_json(&a.h_rd),
                z_r: matrix_to_json(a.z_r.as_matrix()),
                z_d: matrix_to_json(a.z_d.as_matrix()),
                p_s: a.p_s,
                p_r: a.p_r,
            },
        }
    }

    pub fn to_instance(&self) -> Result<LabeledInstance> {
        if self.schema_version != INSTANCE_SCHEMA {
            return Err(Error::Validation {
                field: "schema_version".into(),
                detail: format!("unsupported version {:?}, expected {INSTANCE_SCHEMA:?}", self.schema_version),
            });
        }
        let h_rd = matrix_from_json("H_RD", &self.h_rd)?;
        let z_r = hermitian_from_json("Z_R", &self.z_r)?;
        let z_d = hermitian_from_json("Z_D", &self.z_d)?;
        let instance = match self.kind {
            InstanceKind::General => {
                let need = |field: &str, m: &Option<MatrixJson>| -> Result<CMatrix> {
                    match m {
                        Some(rows) => matrix_from_json(field, rows),
                        None => Err(Error::Validation { field: field.into(), detail: "missing for a general instance".into() }),
                    }
                };
                let h_sr = need("H_SR", &self.h_sr)?;
                let h_sd = need("H_SD", &self.h_sd)?;
                Instance::General(ChannelInstance::new(h_sr, h_sd, h_rd, z_r, z_d, self.p_s, self.p_r).map_err(field_error)?)
            }
            InstanceKind::Aligned => {
                for (field, m) in [("H_SR", &self.h_sr), ("H_SD", &self.h_sd)] {
                    if m.is_some() {
                        return Err(Error::Validation { field: field.into(), detail: "not allowed in an aligned instance".into() });
                    }
                }
                Instance::Aligned(AlignedInstance::new(z_r, z_d, h_rd, self.p_s, self.p_r).map_err(field_error)?)
            }
        };
        Ok(LabeledInstance { label: self.label.clone(), instance })
    }
}

pub fn parse_instance(text: &str, origin: &str) -> Result<LabeledInstance> {
    let file: InstanceFile = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("{origin}:{}:{}: {e}", e.line(), e.column())))?;
    file.to_instance().map_err(|e| match e {
        Error::Validation { field, detail } => Error::Validation { field, detail: format!("{detail} (in {origin})") },
        other => other,
    })
}

pub fn load_instance(path: &Path) -> Result<LabeledInstance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_instance(&text, &path.display().to_string())
}

pub fn instance_to_string(inst: &Instance, label: Option<String>) -> String {
    let mut s = serde_json::to_string_pretty(&InstanceFile::from_instance(inst, label)).expect("instance serializes");
    s.push('\n');
    s
}

pub fn save_instance(path: &Path, inst: &Instance, label: Option<String>) -> Result<()> {
    std::fs::write(path, instance_to_string(inst, label)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    P2p,
    Df,
    Csb,
    Pdf,
    Zf,
}

impl Bound {
    pub const ALL: [Bound; 5] = [Bound::P2p, Bound::Df, Bound::Csb, Bound::Pdf, Bound::Zf];

    pub fn parse_list(s: &str) -> Result<Vec<Bound>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let b = match part {
                "p2p" => Bound::P2p,
                "df" => Bound::Df,
                "csb" => Bound::Csb,
                "pdf" => Bound::Pdf,
                "zf" => Bound::Zf,
                other => {
                    return Err(Error::Validation {
                        field: "--bounds".into(),
                        detail: format!("unknown bound {other:?} (expected p2p, df, csb, pdf, zf)"),
                    })
                }
            };
            if !out.contains(&b) {
                out.push(b);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub converged: bool,
    pub newton_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure_code: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OrderingFlags {
    /// `max(P2P, DF) − tol ≤ PDF ≤ CSB + tol`, when all four are present.
    pub sandwich: Option<bool>,
    pub pdf_equals_p2p: Option<bool>,
    pub pdf_equals_df: Option<bool>,
    pub zf_below_pdf: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub wiretap_value: f64,
    pub ambiguous: bool,
    pub c_v_star: MatrixJson,
    pub lambda1: MatrixJson,
    pub lambda2: MatrixJson,
    pub z: MatrixJson,
    pub residuals: Residuals,
}

impl From<&EnhancementCertificate> for CertificateSummary {
    fn from(c: &EnhancementCertificate) -> Self {
        CertificateSummary {
            wiretap_value: c.wiretap_value,
            ambiguous: c.ambiguous,
            c_v_star: matrix_to_json(c.c_v_star.as_matrix()),
            lambda1: matrix_to_json(c.lambda1.as_matrix()),
            lambda2: matrix_to_json(c.lambda2.as_matrix()),
            z: matrix_to_json(c.z.as_matrix()),
            residuals: c.residuals,
        }
    }
}

/// Output of the `rates` command. Rates are in bits; absent fields were not requested or failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: String,
    pub label: Option<String>,
    pub n_s: usize,
    pub n_r: usize,
    pub n_d: usize,
    pub r_p2p: Option<f64>,
    pub r_df: Option<f64>,
    pub r_csb: Option<f64>,
    pub r_pdf: Option<f64>,
    pub r_pdf_zf: Option<f64>,
    pub diagnostics: std::collections::BTreeMap<String, SolverDiagnostics>,
    pub flags: OrderingFlags,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<DegradednessClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSummary>,
}

impl ResultRecord {
    /// First solver failure, if any.
    pub fn failure(&self) -> Option<(&str, &SolverDiagnostics)> {
        self.diagnostics.iter().find(|(_, d)| !d.converged).map(|(k, d)| (k.as_str(), d))
    }
}

fn diag_of<T>(r: &Result<T>, steps: impl Fn(&T) -> usize) -> SolverDiagnostics {
    match r {
        Ok(v) => SolverDiagnostics { converged: true, newton_steps: steps(v), ..Default::default() },
        Err(e) => SolverDiagnostics {
            converged: false,
            newton_steps: 0,
            failure_code: Some(e.code().into()),
            message: Some(e.to_string()),
        },
    }
}

/// Computes the requested bounds. Solver failures are recorded, not raised.
pub fn compute_rates(
    ch: &ChannelInstance,
    bounds: &[Bound],
    cfg: &MaxMinSolverConfig,
    label: Option<String>,
) -> ResultRecord {
    let mut rec = ResultRecord {
        schema_version: RESULT_SCHEMA.into(),
        label,
        n_s: ch.n_s(),
        n_r: ch.n_r(),
        n_d: ch.n_d(),
        r_p2p: None,
        r_df: None,
        r_csb: None,
        r_pdf: None,
        r_pdf_zf: None,
        diagnostics: Default::default(),
        flags: OrderingFlags::default(),
        class: None,
        certificate: None,
    };
    for &b in bounds {
        match b {
            Bound::P2p => {
                let r = p2p_capacity(&ch.h_sd, &ch.z_d, ch.p_s);
                rec.diagnostics.insert("p2p".into(), diag_of(&r, |_| 0));
                rec.r_p2p = r.ok().map(|x| x.0);
            }
            Bound::Df => {
                let r = df_rate(ch, cfg);
                rec.diagnostics.insert("df".into(), diag_of(&r, |s| s.newton_steps));
                rec.r_df = r.ok().map(|x| x.rate);
            }
            Bound::Csb => {
                let r = csb_rate(ch, cfg);
                rec.diagnostics.insert("csb".into(), diag_of(&r, |s| s.newton_steps));
                rec.r_csb = r.ok().map(|x| x.rate);
            }
            Bound::Pdf => {
                let r = pdf_rate_gaussian(ch, cfg);
                rec.diagnostics.insert("pdf".into(), diag_of(&r, |s| s.newton_steps));
                rec.r_pdf = r.ok().map(|x| x.rate);
            }
            Bound::Zf => {
                let r = pdf_rate_zf(ch, cfg);
                rec.diagnostics.insert("zf".into(), diag_of(&r, |s| s.newton_steps));
                rec.r_pdf_zf = r.ok().map(|x| x.rate);
            }
        }
    }
    let tol = cfg.rate_tol;
    let close = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| (a - b).abs() <= tol);
    rec.flags.pdf_equals_p2p = close(rec.r_pdf, rec.r_p2p);
    rec.flags.pdf_equals_df = close(rec.r_pdf, rec.r_df);
    rec.flags.zf_below_pdf = rec.r_pdf_zf.zip(rec.r_pdf).map(|(z, p)| z <= p + tol);
    rec.flags.sandwich = match (rec.r_p2p, rec.r_df, rec.r_pdf, rec.r_csb) {
        (Some(p2p), Some(df), Some(pdf), Some(csb)) => Some(p2p.max(df) - tol <= pdf && pdf <= csb + tol),
        _ => None,
    };
    rec
}

/// Rayleigh ensemble settings. Powers default to 10 (10 dB at unit noise).
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub n_s: usize,
    pub n_r: usize,
    pub n_d: usize,
    pub count: usize,
    pub seed: u64,
    pub p_s: f64,
    pub p_r: f64,
    pub solver: MaxMinSolverConfig,
}

impl EnsembleConfig {
    pub fn new(n_s: usize, n_r: usize, n_d: usize, count: usize, seed: u64) -> Self {
        EnsembleConfig { n_s, n_r, n_d, count, seed, p_s: 10.0, p_r: 10.0, solver: MaxMinSolverConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleRow {
    pub label: String,
    pub seed: u64,
    pub r_p2p: Option<f64>,
    pub r_df: Option<f64>,
    pub r_csb: Option<f64>,
    pub r_pdf: Option<f64>,
    pub r_pdf_zf: Option<f64>,
    /// Error code of the first failed solver, or `sandwich_violation`.
    pub failure_code: Option<String>,
}

impl EnsembleRow {
    pub fn gap_csb_pdf(&self) -> Option<f64> {
        self.r_csb.zip(self.r_pdf).map(|(c, p)| c - p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary {
    pub mean_p2p: f64,
    pub mean_df: f64,
    pub mean_csb: f64,
    pub mean_pdf: f64,
    pub mean_zf: f64,
    pub mean_gap_csb_pdf: f64,
    pub mean_gap_csb_df: f64,
    /// Rows with every rate present.
    pub complete: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleResult {
    pub config: EnsembleConfig,
    pub rows: Vec<EnsembleRow>,
}

/// Seed of instance `index`, drawn from stream `index` of the base generator.
pub fn instance_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

pub fn ensemble_row(cfg: &EnsembleConfig, index: usize) -> EnsembleRow {
    let seed = instance_seed(cfg.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = rayleigh_instance(&mut rng, cfg.n_s, cfg.n_r, cfg.n_d, cfg.p_s, cfg.p_r);
    let solver = MaxMinSolverConfig { seed, ..cfg.solver.clone() };
    let rec = compute_rates(&ch, &Bound::ALL, &solver, None);
    let failure_code = match rec.failure() {
        Some((_, d)) => d.failure_code.clone(),
        None if rec.flags.sandwich == Some(false) => Some("sandwich_violation".into()),
        None => None,
    };
    EnsembleRow {
        label: format!("rayleigh-{index:04}"),
        seed,
        r_p2p: rec.r_p2p,
        r_df: rec.r_df,
        r_csb: rec.r_csb,
        r_pdf: rec.r_pdf,
        r_pdf_zf: rec.r_pdf_zf,
        failure_code,
    }
}

pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleResult> {
    if cfg.count == 0 {
        return Err(Error::Validation { field: "--count".into(), detail: "must be at least 1".into() });
    }
    if cfg.n_s == 0 || cfg.n_r == 0 || cfg.n_d == 0 {
        return Err(Error::Validation { field: "--dims".into(), detail: "antenna counts must be positive".into() });
    }
    cfg.solver.validate()?;
    let rows = (0..cfg.count).map(|i| ensemble_row(cfg, i)).collect();
    Ok(EnsembleResult { config: cfg.clone(), rows })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl EnsembleResult {
    /// Means over rows where every rate is present.
    pub fn summary(&self) -> EnsembleSummary {
        let complete: Vec<&EnsembleRow> = self
            .rows
            .iter()
            .filter(|r| r.r_p2p.is_some() && r.r_df.is_some() && r.r_csb.is_some() && r.r_pdf.is_some() && r.r_pdf_zf.is_some())
            .collect();
        let m = |f: &dyn Fn(&EnsembleRow) -> f64| mean(complete.iter().map(|r| f(r)));
        EnsembleSummary {
            mean_p2p: m(&|r| r.r_p2p.unwrap()),
            mean_df: m(&|r| r.r_df.unwrap()),
            mean_csb: m(&|r| r.r_csb.unwrap()),
            mean_pdf: m(&|r| r.r_pdf.unwrap()),
            mean_zf: m(&|r| r.r_pdf_zf.unwrap()),
            mean_gap_csb_pdf: m(&|r| r.r_csb.unwrap() - r.r_pdf.unwrap()),
            mean_gap_csb_df: m(&|r| r.r_csb.unwrap() - r.r_df.unwrap()),
            complete: complete.len(),
            failed: self.rows.iter().filter(|r| r.failure_code.is_some()).count(),
        }
    }

    /// One row per instance and a trailing `summary` row. Missing rates are empty.
    pub fn to_csv(&self) -> String {
        let c = &self.config;
        let num = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.12}"));
        let flag = |x: Option<f64>| if x.is_some() { "1" } else { "0" };
        let mut out = String::from(
            "label,N_S,N_R,N_D,r_p2p,r_df,r_csb,r_pdf,r_pdf_zf,gap_csb_pdf,conv_df,conv_csb,conv_pdf,conv_zf,failure_code,seed\n",
        );
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.label,
                c.n_s,
                c.n_r,
                c.n_d,
                num(r.r_p2p),
                num(r.r_df),
                num(r.r_csb),
                num(r.r_pdf),
                num(r.r_pdf_zf),
                num(r.gap_csb_pdf()),
                flag(r.r_df),
                flag(r.r_csb),
                flag(r.r_pdf),
                flag(r.r_pdf_zf),
                r.failure_code.as_deref().unwrap_or(""),
                r.seed
            )
            .expect("writing to a String");
        }
        let s = self.summary();
        let count = |f: &dyn Fn(&EnsembleRow) -> bool| self.rows.iter().filter(|r| f(r)).count();
        writeln!(
            out,
            "summary,{},{},{},{:.12},{:.12},{:.12},{:.12},{:.12},{:.12},{},{},{},{},failed={},{}",
            c.n_s,
            c.n_r,
            c.n_d,
            s.mean_p2p,
            s.mean_df,
            s.mean_csb,
            s.mean_pdf,
            s.mean_zf,
            s.mean_gap_csb_pdf,
            count(&|r| r.r_df.is_some()),
            count(&|r| r.r_csb.is_some()),
            count(&|r| r.r_pdf.is_some()),
            count(&|r| r.r_pdf_zf.is_some()),
            s.failed,
            c.seed
        )
        .expect("writing to a String");
        out
    }

    /// Long-form table `label,scheme,rate_bits` for external plotting.
    pub fn to_plot_data(&self) -> String {
        let mut out = String::from("label,scheme,rate_bits\n");
        for r in &self.rows {
            for (scheme, v) in
                [("p2p", r.r_p2p), ("df", r.r_df), ("csb", r.r_csb), ("pdf", r.r_pdf), ("pdf_zf", r.r_pdf_zf)]
            {
                if let Some(v) = v {
                    writeln!(out, "{},{scheme},{v:.12}", r.label).expect("writing to a String");
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian, random_pd};
    use proptest::prelude::*;

    const SCALAR: &str = r#"{
        "schema_version": "relay-pdf/instance/1",
        "kind": "general",
        "H_SR": [[[2.0, 0.0]]],
        "H_SD": [[[1.0, 0.0]]],
        "H_RD": [[[1.0, 0.0]]],
        "Z_R": [[[1.0, 0.0]]],
        "Z_D": [[[1.0, 0.0]]],
        "P_S": 1.0,
        "P_R": 1.0
    }"#;

    #[test]
    fn minimal_scalar_file() {
        let li = parse_instance(SCALAR, "scalar.json").unwrap();
        let Instance::General(ch) = li.instance else { panic!("expected general") };
        assert_eq!(ch.n_s(), 1);
        assert_eq!(ch.h_sr[(0, 0)], c(2.0, 0.0));
        assert_eq!(li.label, None);
    }

    #[test]
    fn non_hermitian_noise_names_field() {
        let text = SCALAR.replace(r#""Z_R": [[[1.0, 0.0]]]"#, r#""Z_R": [[[1.0, 0.5]]]"#);
        match parse_instance(&text, "bad.json") {
            Err(Error::Validation { field, detail }) => {
                assert_eq!(field, "Z_R");
                assert!(detail.contains("bad.json"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_location() {
        let err = parse_instance("{\n  \"kind\": ", "x.json").unwrap_err();
        match err {
            Error::Parse(msg) => assert!(msg.starts_with("x.json:2:"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_rows_and_missing_gains() {
        let ragged = SCALAR.replace(r#""H_RD": [[[1.0, 0.0]]]"#, r#""H_RD": [[[1.0, 0.0]], []]"#);
        assert!(matches!(parse_instance(&ragged, "r"), Err(Error::Validation { field, .. }) if field == "H_RD"));
        let missing = SCALAR.replace(r#""H_SD": [[[1.0, 0.0]]],"#, "");
        assert!(matches!(parse_instance(&missing, "m"), Err(Error::Validation { field, .. }) if field == "H_SD"));
        let power = SCALAR.replace(r#""P_R": 1.0"#, r#""P_R": -1.0"#);
        assert!(matches!(parse_instance(&power, "p"), Err(Error::Validation { field, .. }) if field == "P_R"));
        let version = SCALAR.replace("instance/1", "instance/9");
        assert!(matches!(parse_instance(&version, "v"), Err(Error::Validation { field, .. }) if field == "schema_version"));
    }

    #[test]
    fn aligned_file_round_trip() {
        let a = AlignedInstance::new(
            Hermitian::from_real_diagonal(&[1.0, 2.0]),
            Hermitian::from_real_diagonal(&[2.0, 1.0]),
            CMatrix::identity(2, 2),
            3.0,
            0.5,
        )
        .unwrap();
        let text = instance_to_string(&Instance::Aligned(a.clone()), Some("al".into()));
        let back = parse_instance(&text, "t").unwrap();
        assert_eq!(back.instance, Instance::Aligned(a));
        assert_eq!(back.label.as_deref(), Some("al"));
    }

    #[test]
    fn save_and_load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        let ch = ChannelInstance::scalar(4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        save_instance(&path, &Instance::General(ch.clone()), None).unwrap();
        assert_eq!(load_instance(&path).unwrap().instance, Instance::General(ch));
        assert!(matches!(load_instance(&dir.path().join("none.json")), Err(Error::Io(_))));
    }

    #[test]
    fn bound_list_parsing() {
        assert_eq!(Bound::parse_list("df, pdf,df").unwrap(), vec![Bound::Df, Bound::Pdf]);
        assert!(Bound::parse_list("dff").is_err());
    }

    #[test]
    fn silent_relay_flags_pdf_equal_p2p() {
        let ch = ChannelInstance::scalar(4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1e-12).unwrap();
        let rec = compute_rates(&ch, &Bound::ALL, &MaxMinSolverConfig::default(), None);
        assert_eq!(rec.flags.pdf_equals_p2p, Some(true));
        assert_eq!(rec.flags.sandwich, Some(true));
        assert!(rec.failure().is_none());
    }

    #[test]
    fn ensemble_is_deterministic_and_seeds_differ() {
        let cfg = EnsembleConfig::new(1, 1, 1, 2, 9);
        let a = run_ensemble(&cfg).unwrap();
        let b = run_ensemble(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_ne!(a.rows[0].seed, a.rows[1].seed);
        assert_eq!(a.to_csv().lines().count(), 4);
        assert_eq!(a.to_plot_data().lines().count(), 11);
        assert!(run_ensemble(&EnsembleConfig::new(1, 1, 1, 0, 9)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn general_round_trip_is_bit_identical(seed in any::<u64>(), n_s in 1usize..4, n_r in 1usize..4, n_d in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = ChannelInstance::new(
                complex_gaussian(&mut rng, n_r, n_s),
                complex_gaussian(&mut rng, n_d, n_s),
                complex_gaussian(&mut rng, n_d, n_r),
                random_pd(&mut rng, n_r, 0.1),
                random_pd(&mut rng, n_d, 0.1),
                1.0 + (seed % 7) as f64 / 3.0,
                0.1 + (seed % 5) as f64,
            )
            .unwrap();
            let inst = Instance::General(ch);
            let back = parse_instance(&instance_to_string(&inst, Some("p".into())), "p").unwrap();
            prop_assert_eq!(back.instance, inst);
        }
    }
}
