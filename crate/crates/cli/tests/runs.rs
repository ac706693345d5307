use kraichnan_cli::{parse_config, run_experiment, ExperimentConfig, FAILED_MARKER};
use std::path::Path;

fn config(text: &str, out: &Path) -> ExperimentConfig {
    let overrides = [("output_dir".to_string(), out.display().to_string())];
    parse_config(text, &overrides).unwrap()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn constants_summary_for_the_richardson_point() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment=constants\nmodel.d=2\nmodel.alpha=0.5\nmodel.eta=1\nmodel.kernel_mode=self_similar\nmodel.c=1\n";
    let status = run_experiment(&config(text, dir.path())).unwrap();
    assert_eq!(status.exit_code(), 0);
    let s = summary(dir.path());
    let v = &s["values"];
    assert!((v["beta"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((v["delta_star"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((v["k_ric"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(s["passed"], true);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["model.alpha"], "0.5");
    assert_eq!(manifest["config_hash"], s["config_hash"]);
}

#[test]
fn full_kernel_constants_cross_check() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment=constants\nmodel.d=3\nmodel.alpha=0.3\nmodel.eta=1\n";
    run_experiment(&config(text, dir.path())).unwrap();
    let s = summary(dir.path());
    assert_eq!(s["checks"][0]["name"], "c_tilde_closed_vs_quadrature");
    assert_eq!(s["checks"][0]["passed"], true);
}

#[test]
fn regime_grid_matches_the_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config("experiment=regime\nmodel.d=2\n", dir.path())).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("regime.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("# format_version=1 config_hash="));
    assert_eq!(lines.next().unwrap(), "alpha,eta,t1,t2,regime");
    assert_eq!(lines.count(), 2500);
    assert_eq!(summary(dir.path())["passed"], true);
}

#[test]
fn reruns_are_byte_identical() {
    let text =
        "experiment=mc\nmodel.d=2\nmodel.alpha=0.5\nmodel.eta=1\nmodel.kernel_mode=self_similar\n\
                mc.n_paths=2000\nmc.t_end=0.5\nseed=17\n";
    let a = tempfile::tempdir().unwrap();
    let names = ["moments.csv", "summary.json", "manifest.json"];
    let read = |dir: &Path| names.map(|n| std::fs::read(dir.join(n)).unwrap());
    run_experiment(&config(text, a.path())).unwrap();
    let first = read(a.path());
    run_experiment(&config(text, a.path())).unwrap();
    for (name, (x, y)) in names.iter().zip(first.iter().zip(read(a.path()).iter())) {
        assert_eq!(x, y, "{name} differs");
    }
    let other = tempfile::tempdir().unwrap();
    run_experiment(&config(&text.replace("seed=17", "seed=18"), other.path())).unwrap();
    assert_ne!(
        std::fs::read(a.path().join("moments.csv")).unwrap(),
        std::fs::read(other.path().join("moments.csv")).unwrap()
    );
}

#[test]
fn threshold_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        "experiment=kernel\nmodel.d=2\nmodel.alpha=0.5\nmodel.eta=1\nthresholds.kernel_rel=1e-12\n";
    let status = run_experiment(&config(text, dir.path())).unwrap();
    assert_eq!(status.exit_code(), 2);
    assert_eq!(summary(dir.path())["passed"], false);
}

#[test]
fn errors_leave_a_failed_marker() {
    let dir = tempfile::tempdir().unwrap();
    // ends before the first requested fit sample, so the balance has no data
    let text = "experiment=yaglom\nmodel.d=2\nmodel.alpha=0.5\nmodel.eta=1\nsolver.t_end=0.001\n\
                grid.h_min=1e-3\nyaglom.t_lo=0.5\n";
    assert!(run_experiment(&config(text, dir.path())).is_err());
    assert!(dir.path().join(FAILED_MARKER).exists());
    assert!(dir.path().join("manifest.json").exists());
    assert!(!dir.path().join("summary.json").exists());
}

#[test]
fn pde_run_on_the_coalescing_side_keeps_its_energy() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment=pde\nmodel.d=2\nmodel.alpha=0.9\nmodel.eta=0.2\ngrid.h_min=1e-3\n";
    let status = run_experiment(&config(text, dir.path())).unwrap();
    assert_eq!(status.exit_code(), 0);
    let obs = std::fs::read_to_string(dir.path().join("observables.csv")).unwrap();
    assert!(obs.lines().nth(1).unwrap().starts_with("t,energy"));
}
