use std::path::Path;
use std::process::{Command, Output};

use relay_pdf::channel::{AlignedInstance, ChannelInstance};
use relay_pdf::io::{save_instance, Instance, ResultRecord};
use relay_pdf::matrix::{CMatrix, Hermitian};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relay-pdf")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn scalar_aligned(dir: &Path, name: &str, z_r: f64, z_d: f64) -> String {
    let a = AlignedInstance::new(
        Hermitian::from_real_diagonal(&[z_r]),
        Hermitian::from_real_diagonal(&[z_d]),
        CMatrix::identity(1, 1),
        1.0,
        1.0,
    )
    .unwrap();
    let p = dir.join(name);
    save_instance(&p, &Instance::Aligned(a), Some(name.into())).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn rates_on_worked_scalar_case() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.json");
    let ch = ChannelInstance::scalar(4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    save_instance(&p, &Instance::General(ch), None).unwrap();
    let out = run(&["rates", p.to_str().unwrap(), "--bounds", "p2p,df"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rec: ResultRecord = serde_json::from_slice(&out.stdout).unwrap();
    assert!((rec.r_df.unwrap() - 2.0).abs() < 1e-4);
    assert!((rec.r_p2p.unwrap() - 1.0).abs() < 1e-12);
    assert!(rec.r_csb.is_none());
}

#[test]
fn rates_flags_silent_relay_and_degraded() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("silent.json");
    let ch = ChannelInstance::scalar(4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1e-12).unwrap();
    save_instance(&p, &Instance::General(ch), None).unwrap();
    let v = json(&run(&["rates", p.to_str().unwrap()]));
    assert_eq!(v["flags"]["pdf_equals_p2p"], true);

    let deg = scalar_aligned(dir.path(), "deg.json", 0.5, 1.0);
    let out = run(&["rates", &deg, "--out", dir.path().join("r.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(v["flags"]["pdf_equals_df"], true);
    assert_eq!(v["class"], "Degraded");
    assert_eq!(v["label"], "deg.json");
}

#[test]
fn verify_scalar_aligned_cases() {
    let dir = tempfile::tempdir().unwrap();
    let p = scalar_aligned(dir.path(), "a.json", 1.0, 2.0);
    let out = run(&["verify", &p]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["pass"], true);
    assert!((v["certificate"]["z"][0][0][0].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let p = scalar_aligned(dir.path(), "b.json", 1.5, 1.5);
    let v = json(&run(&["verify", &p]));
    assert_eq!(v["pass"], true);
    assert_eq!(v["certificate"]["z"][0][0][0].as_f64().unwrap(), 1.5);
}

#[test]
fn verify_general_instance_with_eps_table() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.json");
    let h = |rows: &[&[f64]]| relay_pdf::matrix::cmatrix_from_real(rows);
    let ch = ChannelInstance::new(
        h(&[&[1.0, 0.3], &[0.2, 0.8]]),
        h(&[&[0.5, 0.1], &[-0.4, 0.9]]),
        h(&[&[0.7, 0.0], &[0.1, 0.6]]),
        Hermitian::identity(2),
        Hermitian::identity(2),
        2.0,
        1.0,
    )
    .unwrap();
    save_instance(&p, &Instance::General(ch), None).unwrap();
    let out = run(&["verify", p.to_str().unwrap(), "--eps", "1e-2", "--eps-table"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["eps"], 1e-2);
    assert_eq!(v["epsilon_table"]["rows"].as_array().unwrap().len(), 5);
    for c in v["report"]["checks"].as_array().unwrap() {
        assert_eq!(c["pass"], true, "{c}");
    }
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = run(&["rates", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse_error"));

    let out = run(&["verify", bad.to_str().unwrap(), "--eps", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let p = scalar_aligned(dir.path(), "a.json", 1.0, 2.0);
    let out = run(&["verify", &p, "--eps", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["rates", &p, "--bounds", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bounds"));
}

#[test]
fn ensemble_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let plot = dir.path().join("plot.csv");
    let args = |out: &Path| {
        vec!["ensemble".to_string(), "--dims".into(), "2x1x1".into(), "--count".into(), "2".into(), "--seed".into(), "5".into(), "--out".into(), out.to_str().unwrap().into()]
    };
    let mut first = args(&a);
    first.extend(["--plot-data".into(), plot.to_str().unwrap().into()]);
    let first: Vec<&str> = first.iter().map(String::as_str).collect();
    assert_eq!(run(&first).status.code(), Some(0));
    let second = args(&b);
    let second: Vec<&str> = second.iter().map(String::as_str).collect();
    assert_eq!(run(&second).status.code(), Some(0));
    let csv = std::fs::read_to_string(&a).unwrap();
    assert_eq!(csv, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("label,N_S,N_R,N_D,r_p2p,r_df,r_csb,r_pdf,r_pdf_zf,gap_csb_pdf"));
    assert!(lines[3].starts_with("summary,2,1,1,"));
    assert_eq!(std::fs::read_to_string(&plot).unwrap().lines().count(), 11);
}
