//! Command line front end: `rates`, `verify` and `ensemble`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::channel::{classify, perturb_enhance, square_augment, to_aligned, whiten, AlignedInstance, DegradednessClass};
use crate::enhancement::{enhanced_df_check, epsilon_limit_check, EnhancedDfReport, EpsilonTable, VerificationReport};
use crate::error::{Error, Result};
use crate::io::{
    compute_rates, load_instance, matrix_to_json, run_ensemble, Bound, CertificateSummary, EnsembleConfig, Instance,
    MatrixJson,
};
use crate::matrix::{Hermitian, Tolerance};
use crate::pdf::{inner_wiretap_solve, pdf_rate_gaussian};
use crate::rates::MaxMinSolverConfig;

pub const VERIFY_SCHEMA: &str = "relay-pdf/verify/1";
const EPS_TABLE: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

#[derive(Debug, Parser)]
#[command(name = "relay-pdf", version, about = "Achievable rates and bounds for Gaussian MIMO relay channels")]
pub struct Cli {
    /// Rate tolerance in bits used for equality and ordering flags.
    #[arg(long, global = true, default_value_t = 1e-4)]
    pub tol_rate: f64,
    /// Seed for randomized solver starts and ensembles.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute rates and bounds for one instance file.
    Rates {
        instance: PathBuf,
        /// Comma-separated subset of p2p, df, csb, pdf, zf.
        #[arg(long, default_value = "p2p,df,csb,pdf,zf")]
        bounds: String,
    },
    /// Build and check the channel-enhancement certificate of an instance.
    Verify {
        instance: PathBuf,
        /// Gain perturbation used to align a general instance.
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        /// Also tabulate PDF rates of perturbed channels for ε in 1e-1..1e-4.
        #[arg(long)]
        eps_table: bool,
        /// Re-solve every perturbed channel in the ε table.
        #[arg(long, requires = "eps_table")]
        reoptimize: bool,
    },
    /// Rayleigh-fading ensemble written as CSV.
    Ensemble {
        /// Antenna counts as NSxNRxND.
        #[arg(long, default_value = "2x1x1")]
        dims: String,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 10.0)]
        p_s: f64,
        #[arg(long, default_value_t = 10.0)]
        p_r: f64,
        /// Long-form `label,scheme,rate_bits` table for plotting.
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
}

pub fn parse_dims(s: &str) -> Result<(usize, usize, usize)> {
    let bad = || Error::Validation { field: "--dims".into(), detail: format!("expected NSxNRxND, got {s:?}") };
    let parts: Vec<usize> = s.split('x').map(|p| p.trim().parse::<usize>().map_err(|_| bad())).collect::<Result<_>>()?;
    match parts[..] {
        [a, b, c] if a > 0 && b > 0 && c > 0 => Ok((a, b, c)),
        _ => Err(bad()),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyOutput {
    pub schema_version: String,
    pub label: Option<String>,
    /// ε applied before alignment; `None` for instances given in aligned form.
    pub eps: Option<f64>,
    pub aligned_dim: usize,
    pub class: DegradednessClass,
    pub s: MatrixJson,
    pub wiretap_value: f64,
    pub closed_form_value: f64,
    pub certificate: CertificateSummary,
    pub report: VerificationReport,
    pub enhanced_df: EnhancedDfReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_table: Option<EpsilonTable>,
    pub pass: bool,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("records serialize");
    s.push('\n');
    s
}

fn solver_config(cli: &Cli) -> Result<MaxMinSolverConfig> {
    let cfg = MaxMinSolverConfig { rate_tol: cli.tol_rate, seed: cli.seed, ..MaxMinSolverConfig::default() };
    cfg.validate()?;
    Ok(cfg)
}

/// Runs `verify` on an aligned instance and returns the structured output.
pub fn verify_aligned(
    a: &AlignedInstance,
    cfg: &MaxMinSolverConfig,
    label: Option<String>,
    eps: Option<f64>,
) -> Result<VerifyOutput> {
    let tol = Tolerance { rate: cfg.rate_tol, ..Tolerance::default() };
    let sol = pdf_rate_gaussian(&a.to_channel(), cfg)?;
    let s = Hermitian::symmetrize(&(sol.params.q.as_matrix() + sol.params.c_v.as_matrix()));
    let w = inner_wiretap_solve(&s, &a.z_r, &a.z_d, cfg)?;
    let enhanced_df = enhanced_df_check(a, &s, &w.certificate, cfg)?;
    Ok(VerifyOutput {
        schema_version: VERIFY_SCHEMA.into(),
        label,
        eps,
        aligned_dim: a.dim(),
        class: classify(a, &tol),
        s: matrix_to_json(s.as_matrix()),
        wiretap_value: w.value,
        closed_form_value: w.report.closed_form_value,
        certificate: CertificateSummary::from(&w.certificate),
        pass: w.report.pass && enhanced_df.pass,
        report: w.report,
        enhanced_df,
        epsilon_table: None,
    })
}

fn run_command(cli: &Cli) -> Result<i32> {
    let cfg = solver_config(cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Rates { instance, bounds } => {
            let bounds = Bound::parse_list(bounds)?;
            let li = load_instance(instance)?;
            let mut rec = compute_rates(&li.instance.channel(), &bounds, &cfg, li.label);
            if let Instance::Aligned(a) = &li.instance {
                rec.class = Some(classify(a, &Tolerance { rate: cfg.rate_tol, ..Tolerance::default() }));
            }
            emit(out, &to_json(&rec))?;
            if let Some((name, d)) = rec.failure() {
                eprintln!("{name}: {}", d.message.as_deref().unwrap_or("solver failure"));
                return Ok(3);
            }
            Ok(0)
        }
        Command::Verify { instance, eps, eps_table, reoptimize } => {
            let li = load_instance(instance)?;
            let (a, base, eps_used) = match &li.instance {
                Instance::Aligned(a) => (a.clone(), a.to_channel(), None),
                Instance::General(ch) => {
                    let base = square_augment(&whiten(ch)?);
                    (to_aligned(&perturb_enhance(&base, *eps)?)?, base, Some(*eps))
                }
            };
            let mut v = verify_aligned(&a, &cfg, li.label, eps_used)?;
            if *eps_table {
                v.epsilon_table = Some(epsilon_limit_check(&base, &EPS_TABLE, &cfg, *reoptimize)?);
            }
            emit(out, &to_json(&v))?;
            if !v.pass {
                let failed: Vec<&str> = v.report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
                eprintln!("verification failed: checks {failed:?}, enhanced DF difference {:e}", v.enhanced_df.difference);
                return Ok(Error::CertificateMismatch { residual: v.enhanced_df.difference }.exit_code());
            }
            Ok(0)
        }
        Command::Ensemble { dims, count, p_s, p_r, plot_data } => {
            let (n_s, n_r, n_d) = parse_dims(dims)?;
            let ens = EnsembleConfig { p_s: *p_s, p_r: *p_r, solver: cfg, ..EnsembleConfig::new(n_s, n_r, n_d, *count, cli.seed) };
            let res = run_ensemble(&ens)?;
            emit(out, &res.to_csv())?;
            if let Some(p) = plot_data {
                emit(Some(p), &res.to_plot_data())?;
            }
            Ok(0)
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_command(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_parsing() {
        assert_eq!(parse_dims("2x1x3").unwrap(), (2, 1, 3));
        assert!(parse_dims("2x1").is_err());
        assert!(parse_dims("0x1x1").is_err());
        assert!(parse_dims("axbxc").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_with_args(["relay-pdf", "frobnicate"]), 2);
        assert_eq!(main_with_args(["relay-pdf", "ensemble", "--dims", "2x2"]), 2);
        assert_eq!(main_with_args(["relay-pdf", "--tol-rate=-1", "ensemble"]), 2);
    }

    #[test]
    fn scalar_relay_better_certificate_has_z_one() {
        let a = AlignedInstance::new(
            Hermitian::from_real_diagonal(&[1.0]),
            Hermitian::from_real_diagonal(&[2.0]),
            nalgebra::DMatrix::identity(1, 1),
            1.0,
            1.0,
        )
        .unwrap();
        let v = verify_aligned(&a, &MaxMinSolverConfig::default(), None, None).unwrap();
        assert!(v.pass, "{v:?}");
        assert!((v.certificate.z[0][0][0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equal_noise_certificate_is_trivial() {
        let z = Hermitian::from_real_diagonal(&[1.5, 0.5]);
        let a = AlignedInstance::new(z.clone(), z.clone(), nalgebra::DMatrix::identity(2, 2), 2.0, 1.0).unwrap();
        let v = verify_aligned(&a, &MaxMinSolverConfig::default(), None, None).unwrap();
        assert!(v.pass, "{v:?}");
        assert_eq!(v.certificate.z, matrix_to_json(z.as_matrix()));
    }
}
