use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use csl_xray::fit::fit_alpha_poisson;
use csl_xray::limit::{alpha_to_lambda, AmplitudeEstimate, LimitAssumptions, LimitReport};
use csl_xray::report::{ComparisonTable, Envelope, FitReport};
use csl_xray::spectrum::load_spectrum_file;
use csl_xray::{ClosureReport, ConstantsMode, MaterialSpec, PhysicalConstants};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_csl-xray"));
    c.env("SOURCE_DATE_EPOCH", "1700000000");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic_ge_alpha110.csv")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn limit_of(json: &str) -> f64 {
    let env: Envelope<LimitReport> = serde_json::from_str(json).unwrap();
    env.body.validate().unwrap();
    env.body.lambda_upper_per_s
}

#[test]
fn fit_fixture_within_two_sigma() {
    let out = ok(&["fit", s(&fixture())]);
    let env: Envelope<FitReport> = serde_json::from_str(&out).unwrap();
    let r = env.body.validated().unwrap();
    assert!((r.fit.alpha_hat - 110.0).abs() <= 2.0 * r.fit.alpha_err);
    assert_eq!(r.alternative.unwrap().method, csl_xray::FitMethod::Wls);
    assert_eq!(env.manifest.subcommand, "fit");
    assert_eq!(env.manifest.timestamp, "2023-11-14T22:13:20Z");
}

#[test]
fn fit_window_keeps_contained_bins() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    ok(&["--output", d, "--seed", "3", "simulate", "--e-min", "2", "--e-max", "60", "--bins", "58"]);
    let csv = dir.path().join("spectrum.csv");
    let out = ok(&["fit", s(&csv), "--window", "4.5:48.5"]);
    let env: Envelope<FitReport> = serde_json::from_str(&out).unwrap();
    // bins [2,3],...,[59,60]: contained ones are [5,6] .. [47,48]
    let spectrum = load_spectrum_file(&csv, None, None).unwrap();
    let inner = spectrum.restrict_range(4.5, 48.5).unwrap();
    assert_eq!(inner.n_bins(), 43);
    assert_eq!(env.body.fit.ndf, 42);
    assert_eq!(env.body.fit.window, (4.5, 48.5));
    assert_eq!(env.body.fit.alpha_hat, fit_alpha_poisson(&inner).unwrap().alpha_hat);
}

#[test]
fn fit_plot_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["--output", s(dir.path()), "--plot", "fit", s(&fixture())]);
    let svg = std::fs::read_to_string(dir.path().join("fit.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    assert!(dir.path().join("fit.json").exists());
}

#[test]
fn missing_input_exits_2() {
    let out = run(&["fit", "/definitely/not/here.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no such input"));
}

#[test]
fn degenerate_fit_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    ok(&["--output", d, "simulate", "--lambda", "0", "--background", "0"]);
    let text = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert!(text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("e_low"))
        .all(|l| l.ends_with(",0")));
    let out = run(&["fit", s(&dir.path().join("spectrum.csv"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn limit_examples() {
    let four = limit_of(&ok(&["limit", "--alpha", "110", "--exposure", "80", "--electrons", "4"]));
    assert!(((four - 1.4e-17) / 1.4e-17).abs() < 0.10);
    let mp = limit_of(&ok(&[
        "--constants-mode", "paper-compat", "limit", "--alpha", "110", "--exposure", "80",
        "--electrons", "22", "--mass-prop",
    ]));
    assert!(((mp - 8.5e-12) / 8.5e-12).abs() < 0.10);
    let twenty_two = limit_of(&ok(&["limit", "--alpha", "110", "--exposure", "80", "--electrons", "22"]));
    assert!((twenty_two / four - 2.0 / 11.0).abs() < 1e-12);
}

#[test]
fn limit_usage_errors() {
    let zero = run(&["limit", "--alpha", "110", "--exposure", "80", "--electrons", "0"]);
    assert_eq!(zero.status.code(), Some(2));
    let no_alpha = run(&["limit", "--exposure", "80"]);
    assert_eq!(no_alpha.status.code(), Some(2));
    let cl = run(&["limit", "--alpha", "110", "--exposure", "80", "--cl", "plus-1sigma"]);
    assert_eq!(cl.status.code(), Some(2));
}

#[test]
fn fit_then_limit_equals_library_composition() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    ok(&["--output", d, "fit", s(&fixture()), "--window", "4.5:48.5"]);
    let fit_json = dir.path().join("fit.json");
    let out = ok(&[
        "--constants-mode", "paper-compat", "limit", "--fit", s(&fit_json), "--quasi-free-factor",
        "22", "--cl", "plus-1p645sigma",
    ]);
    let cli = limit_of(&out);

    let spectrum = load_spectrum_file(&fixture(), None, None).unwrap().restrict_range(4.5, 48.5).unwrap();
    let f = fit_alpha_poisson(&spectrum).unwrap();
    let assumptions = LimitAssumptions {
        n_quasi_free: 22,
        mass_proportional: false,
        constants_mode: ConstantsMode::PaperCompat,
        cl_mode: csl_xray::ClMode::Plus1p645Sigma,
        exposure_kg_day: 80.0,
    };
    let lib = alpha_to_lambda(
        AmplitudeEstimate::with_sigma(f.alpha_hat, f.alpha_err),
        &assumptions,
        &MaterialSpec::germanium(),
        &PhysicalConstants::paper_compat(),
    )
    .unwrap();
    assert_eq!(cli, lib.lambda_upper);
}

#[test]
fn simulate_is_byte_identical_for_same_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&["--output", s(d.path()), "--seed", "42", "simulate"]);
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("spectrum.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(ok(&["--seed", "42", "simulate"]).as_bytes(), read(&a).as_slice());
}

#[test]
fn closure_report_and_trial_dump() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    ok(&["--output", d, "--seed", "8", "closure", "--trials", "200", "--cl", "plus-1p645sigma", "--dump-trials"]);
    let text = std::fs::read_to_string(dir.path().join("closure.json")).unwrap();
    let env: Envelope<ClosureReport> = serde_json::from_str(&text).unwrap();
    let r = env.body;
    assert_eq!(r.n_trials, 200);
    assert!(((r.mean_alpha - 110.0) / 110.0).abs() < 0.01);
    assert!(r.coverage.unwrap() >= 0.90);
    assert!((0.8..=1.2).contains(&r.pull_std));
    assert!(r.rng.contains("ChaCha8"));
    let dump = std::fs::read_to_string(dir.path().join("closure_trials.csv")).unwrap();
    assert_eq!(dump.lines().next(), Some("trial,alpha_hat,lambda_upper"));
    assert_eq!(dump.lines().count(), 201);

    // identical manifests → identical output, regardless of thread count
    let again = tempfile::tempdir().unwrap();
    ok(&["--output", s(again.path()), "--seed", "8", "closure", "--trials", "200", "--cl", "plus-1p645sigma", "--sequential"]);
    let other: Envelope<ClosureReport> =
        serde_json::from_str(&std::fs::read_to_string(again.path().join("closure.json")).unwrap()).unwrap();
    assert_eq!(other.body, r);
}

#[test]
fn compare_renders_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    ok(&["--output", d, "--constants-mode", "paper-compat", "limit", "--alpha", "110", "--exposure", "80", "--electrons", "22"]);
    let report = dir.path().join("limit.json");
    let text = ok(&["compare", s(&report)]);
    let csl = text.lines().find(|l| l.starts_with("lambda_CSL")).unwrap();
    assert!(csl.contains("2.2e-17") && csl.contains("EXCLUDED"), "{csl}");

    let out = tempfile::tempdir().unwrap();
    ok(&["--output", s(out.path()), "compare", s(&report)]);
    let csv = std::fs::read_to_string(out.path().join("compare.csv")).unwrap();
    let table = ComparisonTable::from_csv(&csv).unwrap();
    assert_eq!(table.rows.len(), 10);
    assert_eq!(table.to_text(), std::fs::read_to_string(out.path().join("compare.txt")).unwrap());
    assert_eq!(table.to_csv().unwrap(), csv);
}

#[test]
fn compare_boundary_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("limit.json");
    let mut report: serde_json::Value =
        serde_json::from_str(&ok(&["limit", "--alpha", "110", "--exposure", "80"])).unwrap();
    report["lambda_upper_per_s"] = serde_json::json!(1e-16);
    std::fs::write(&path, report.to_string()).unwrap();
    let text = ok(&["compare", s(&path)]);
    let qmsl = text.lines().find(|l| l.starts_with("lambda_QMSL")).unwrap();
    assert!(qmsl.contains("BOUNDARY") && qmsl.contains("0.00"), "{qmsl}");
}

#[test]
fn compare_rejects_malformed_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"lambda_upper_per_s\": \"oops\"}").unwrap();
    assert_eq!(run(&["compare", s(&path)]).status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"constants_mode": "paper-compat", "alpha": 110, "exposure_kg_day": 80, "electrons": 22,
            "constants": {"m_e_kev": 511.0}}"#,
    )
    .unwrap();
    let from_file = limit_of(&ok(&["--config", s(&cfg), "limit"]));
    assert!(((from_file - 2.5e-18) / 2.5e-18).abs() < 0.10);
    let overridden = limit_of(&ok(&["--config", s(&cfg), "limit", "--electrons", "4"]));
    assert!((overridden / from_file - 22.0 / 4.0).abs() < 1e-12);

    std::fs::write(&cfg, r#"{"unknown_key": 1}"#).unwrap();
    assert_eq!(run(&["--config", s(&cfg), "limit"]).status.code(), Some(2));
}

#[test]
fn report_subcommand_writes_everything() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["--output", s(dir.path()), "--plot", "report", s(&fixture()), "--window", "4.5:48.5", "--electrons", "22"]);
    for f in ["report.json", "compare.txt", "compare.csv", "fit.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(v["limit"]["n_quasi_free"], 22);
    assert!(v["manifest"]["config"]["window"].is_string());
}
