use std::path::Path;
use std::process::Command;

use levy_pide::pricing::config::RunConfig;
use levy_pide::PideError;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levy-pide"))
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

const SMALL: &str = "[market]\nspot = 100.0\nstrike = 100.0\nmaturity_years = 1.0\nrate_per_annum = 0.05\nsigma = 0.2\noption = \"call\"\n\
[measure]\nfamily = \"merton\"\nintensity_per_annum = 0.5\njump_mean = -0.1\njump_std = 0.2\n[grid]\npoints = 256\n[scheme]\nsteps = 50\n";

#[test]
fn price_output_is_bit_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let mut outs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let st = bin()
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .arg("--seedless")
            .arg("price")
            .status()
            .unwrap();
        assert!(st.success());
        outs.push(csv_files(&out));
    }
    assert!(!outs[0].is_empty());
    assert_eq!(outs[0], outs[1]);
    assert!(dir.path().join("a/manifest.toml").exists());
    let price = String::from_utf8(outs[0][0].1.clone()).unwrap();
    assert!(price.starts_with("# levy-pide "));
}

#[test]
fn missing_sigma_names_the_key() {
    let text = SMALL.replace("sigma = 0.2\n", "");
    match RunConfig::parse(&text) {
        Err(PideError::Config { key, .. }) => assert_eq!(key, "market.sigma"),
        other => panic!("expected a config error, got {other:?}"),
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .arg("price")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("market.sigma"));
}

#[test]
fn xi_probe_writes_order_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("xi.toml");
    let text =
        format!("{SMALL}[shift]\nrho = 0.02\nstrategy = \"sin\"\namplitude = 0.5\nfrequency = 1.0\nphase = 0.3\n");
    std::fs::write(&cfg, text).unwrap();
    let st = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .arg("xi-probe")
        .status()
        .unwrap();
    assert!(st.success());
    let order = std::fs::read_to_string(dir.path().join("xi_order.csv")).unwrap();
    assert_eq!(order.lines().count(), 3);
}

#[test]
fn bessel_diagnostic_reports_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("--out")
        .arg(dir.path())
        .arg("diagnose")
        .arg("bessel")
        .output()
        .unwrap();
    assert!(matches!(out.status.code(), Some(0) | Some(1)));
    assert!(dir.path().join("bessel_mass.csv").exists());
}
