//! Reproducible experiment runner for `kraichnan-core`.
//!
//! A run resolves its configuration, computes one experiment and writes
//! `manifest.json`, the experiment CSVs and `summary.json` into the output
//! directory. Every file is written atomically and carries the format
//! version and the configuration hash, so reruns are byte-identical.

pub mod config;
pub mod error;
pub mod experiments;

pub use config::{parse_config, parse_override, Experiment, ExperimentConfig};
pub use error::{ConfigError, RunError};
pub use experiments::{Check, Outcome};

use kraichnan_core::io::write_atomic;
use kraichnan_core::{classify_regime, ConstantsReport, IsotropicKernel};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

/// Name of the marker written when a run aborts with an error.
pub const FAILED_MARKER: &str = "FAILED";

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Passed,
    ThresholdFailed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Passed => 0,
            Status::ThresholdFailed => 2,
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    format_version: u32,
    experiment: Experiment,
    version: &'static str,
    seed: u64,
    config_hash: String,
    config: &'a BTreeMap<String, String>,
    constants: Option<ConstantsReport>,
}

#[derive(Serialize)]
struct Summary<'a> {
    format_version: u32,
    experiment: Experiment,
    config_hash: String,
    passed: bool,
    checks: &'a [Check],
    values: &'a BTreeMap<String, f64>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(io_error)
}

fn io_error(e: kraichnan_core::Error) -> RunError {
    match e {
        kraichnan_core::Error::Io(e) => RunError::Io(e),
        other => RunError::Core {
            context: "writing outputs".into(),
            source: other,
        },
    }
}

fn constants_report(cfg: &ExperimentConfig) -> Option<ConstantsReport> {
    let p = cfg.model?;
    let k = IsotropicKernel::with_tolerance(p, cfg.kernel_tol).ok()?;
    let regime = classify_regime(p.alpha, p.eta, p.d).ok()?;
    Some(ConstantsReport::new(k.constants(), regime))
}

/// Runs the configured experiment and writes its artifacts.
///
/// On error whatever was already written stays in place and a `FAILED`
/// marker holding the error message is added.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Status, RunError> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    let marker = dir.join(FAILED_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker)?;
    }
    let result = run_inner(cfg);
    if let Err(e) = &result {
        // best effort: the original error matters more than a failed marker
        let _ = write_atomic(&marker, format!("{e}\n").as_bytes());
    }
    result
}

fn run_inner(cfg: &ExperimentConfig) -> Result<Status, RunError> {
    let dir = &cfg.output_dir;
    let hash = cfg.hash();
    let manifest = Manifest {
        format_version: cfg.format_version,
        experiment: cfg.experiment,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_hash: hash.clone(),
        config: &cfg.resolved,
        constants: constants_report(cfg),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;

    log::info!("running {} (config {})", cfg.experiment, &hash[..12]);
    let outcome = experiments::run(cfg)?;
    let preamble = format!("format_version={} config_hash={hash}", cfg.format_version);
    for (name, table) in outcome.tables.iter() {
        let table = table.clone().with_preamble(preamble.clone());
        table.write(&dir.join(name)).map_err(io_error)?;
    }
    for c in &outcome.checks {
        log::info!(
            "{}: {} (threshold {}) {}",
            c.name,
            c.value,
            c.threshold,
            if c.passed { "pass" } else { "FAIL" }
        );
    }
    let passed = outcome.passed();
    let summary = Summary {
        format_version: cfg.format_version,
        experiment: cfg.experiment,
        config_hash: hash,
        passed,
        checks: &outcome.checks,
        values: &outcome.values,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(if passed {
        Status::Passed
    } else {
        Status::ThresholdFailed
    })
}
