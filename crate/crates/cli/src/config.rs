//! Flat `key=value` experiment configuration.
//!
//! Files hold one `key=value` pair per line; `#` starts a comment and dotted
//! prefixes (`model.alpha`) group keys into sections. Command-line overrides
//! are applied on top of the file, then every known key without a value gets
//! its default, so the resolved map always lists the complete configuration.

use crate::error::ConfigError;
use kraichnan_core::dispersion::McConfig;
use kraichnan_core::radial_pde::{Mode, OuterBc, PdeConfig};
use kraichnan_core::{KernelMode, ModelParams};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Constants,
    Kernel,
    Regime,
    Pde,
    Mc,
    Yaglom,
    Dirac,
    Sweep,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Self::Constants,
        Self::Kernel,
        Self::Regime,
        Self::Pde,
        Self::Mc,
        Self::Yaglom,
        Self::Dirac,
        Self::Sweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Constants => "constants",
            Self::Kernel => "kernel",
            Self::Regime => "regime",
            Self::Pde => "pde",
            Self::Mc => "mc",
            Self::Yaglom => "yaglom",
            Self::Dirac => "dirac",
            Self::Sweep => "sweep",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| {
                "one of constants, kernel, regime, pde, mc, yaglom, dirac, sweep".to_string()
            })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a value came from, for error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    CommandLine,
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::CommandLine => f.write_str("command line"),
            Origin::Default => f.write_str("default"),
        }
    }
}

/// Known keys and their defaults; `None` marks a required key.
const SCHEMA: &[(&str, Option<&str>)] = &[
    ("experiment", None),
    ("format_version", Some("1")),
    ("seed", Some("0")),
    ("output_dir", Some("out")),
    ("model.d", None),
    ("model.alpha", None),
    ("model.eta", None),
    ("model.m", Some("1")),
    ("model.trace_c0", Some("auto")),
    ("model.kernel_mode", Some("full_kraichnan")),
    ("model.c", Some("1")),
    ("kernel.r_min", Some("1e-6")),
    ("kernel.r_max", Some("10")),
    ("kernel.n", Some("61")),
    ("kernel.tol", Some("1e-8")),
    ("regime.n_alpha", Some("50")),
    ("regime.n_eta", Some("50")),
    ("grid.h_min", Some("1e-4")),
    ("grid.r_max", Some("20")),
    ("grid.growth", Some("1.05")),
    ("grid.cap", Some("auto")),
    ("solver.kappa", Some("0")),
    ("solver.mode", Some("transport")),
    ("solver.theta", Some("1")),
    ("solver.outer_bc", Some("dirichlet_zero")),
    ("solver.dt_max", Some("0.01")),
    ("solver.dt_min", Some("1e-8")),
    ("solver.dt_rel", Some("0.001")),
    ("solver.t_end", Some("1")),
    ("solver.t_first", Some("0.001")),
    ("solver.per_decade", Some("10")),
    ("solver.seminorm_delta", Some("0.05")),
    ("solver.seminorm_l", Some("0.1")),
    ("solver.fit_lo", Some("auto")),
    ("solver.fit_hi", Some("auto")),
    ("solver.correlation_length", Some("1")),
    ("datum.kind", Some("gaussian")),
    ("datum.width", Some("1")),
    ("yaglom.t_lo", Some("0.001")),
    ("yaglom.t_hi", Some("1")),
    ("dirac.t_lo", Some("1")),
    ("dirac.t_hi", Some("100")),
    ("mc.n_paths", Some("10000")),
    ("mc.r0", Some("0.01")),
    ("mc.t_end", Some("1")),
    ("mc.dt_max", Some("0.01")),
    ("mc.eps_dt", Some("0.1")),
    ("mc.floor_eps", Some("1e-8")),
    ("mc.t_first", Some("0.001")),
    ("mc.per_decade", Some("5")),
    ("mc.keep_samples", Some("false")),
    ("sweep.alphas", Some("0.25,0.5,0.75")),
    ("thresholds.constants_rel", Some("1e-6")),
    ("thresholds.kernel_rel", Some("0.01")),
    ("thresholds.energy_drift", Some("0.005")),
    ("thresholds.exponent_rel", Some("0.05")),
    ("thresholds.mass_rel", Some("1e-6")),
    ("thresholds.yaglom_residual", Some("0.03")),
    ("thresholds.mc_sigma", Some("3")),
    ("thresholds.richardson_rel", Some("0.05")),
    ("thresholds.richardson_prefactor", Some("0.9")),
    ("thresholds.dirac_rel", Some("0.07")),
];

/// Experiment-specific defaults that replace the generic ones.
fn experiment_defaults(e: Experiment) -> &'static [(&'static str, &'static str)] {
    match e {
        Experiment::Dirac => &[
            ("grid.h_min", "1e-6"),
            ("grid.r_max", "1e5"),
            ("grid.growth", "1.04"),
            ("grid.cap", "1e5"),
            ("solver.mode", "continuity_divfree"),
            ("solver.outer_bc", "homogeneous_neumann"),
            ("solver.t_end", "100"),
            ("solver.dt_max", "0.5"),
            ("datum.width", "1.4142135623730951e-4"),
            ("model.kernel_mode", "self_similar"),
        ],
        Experiment::Yaglom => &[
            ("model.kernel_mode", "self_similar"),
            ("grid.h_min", "1e-6"),
            ("grid.growth", "1.03"),
            ("solver.fit_lo", "1e-5"),
            ("solver.fit_hi", "1e-4"),
            ("solver.per_decade", "20"),
            ("datum.width", "1.4142135623730951"),
        ],
        Experiment::Sweep => &[
            ("model.kernel_mode", "self_similar"),
            ("grid.r_max", "30"),
            ("solver.fit_lo", "1e-4"),
            ("solver.fit_hi", "1e-3"),
            ("solver.t_first", "0.01"),
            ("solver.per_decade", "5"),
            ("datum.kind", "exponential"),
        ],
        _ => &[],
    }
}

fn required_for(key: &str, e: Experiment) -> bool {
    match key {
        "model.alpha" | "model.eta" => e != Experiment::Regime,
        _ => true,
    }
}

/// Initial profile shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatumKind {
    /// `exp(-r²/(2w²))`.
    Gaussian,
    /// `exp(-r/w)`, a kink at the origin.
    Exponential,
    /// `exp(-sqrt(r/w))`.
    RootExponential,
}

impl FromStr for DatumKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "exponential" => Ok(Self::Exponential),
            "root_exponential" => Ok(Self::RootExponential),
            _ => Err("one of gaussian, exponential, root_exponential".into()),
        }
    }
}

impl DatumKind {
    pub fn eval(self, r: f64, w: f64) -> f64 {
        match self {
            Self::Gaussian => (-r * r / (2.0 * w * w)).exp(),
            Self::Exponential => (-r / w).exp(),
            Self::RootExponential => (-(r / w).sqrt()).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub h_min: f64,
    pub r_max: f64,
    pub growth: f64,
    pub cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSpec {
    pub pde: PdeConfig,
    pub t_end: f64,
    pub t_first: f64,
    pub per_decade: usize,
    pub datum: DatumKind,
    pub datum_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    pub constants_rel: f64,
    pub kernel_rel: f64,
    pub energy_drift: f64,
    pub exponent_rel: f64,
    pub mass_rel: f64,
    pub yaglom_residual: f64,
    pub mc_sigma: f64,
    pub richardson_rel: f64,
    pub richardson_prefactor: f64,
    pub dirac_rel: f64,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// `None` only for the regime sweep, which needs just `d`.
    pub model: Option<ModelParams>,
    pub d: usize,
    pub kernel_r: (f64, f64, usize),
    pub kernel_tol: f64,
    pub regime_grid: (usize, usize),
    pub grid: GridSpec,
    pub solver: SolverSpec,
    pub yaglom_window: (f64, f64),
    pub dirac_window: (f64, f64),
    pub mc: McConfig,
    pub mc_t_first: f64,
    pub mc_per_decade: usize,
    pub sweep_alphas: Vec<f64>,
    pub thresholds: Thresholds,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub format_version: u32,
    /// Every key with its resolved value.
    pub resolved: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// SHA-256 of the resolved configuration, excluding `output_dir`.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self
            .resolved
            .iter()
            .filter(|(k, _)| k.as_str() != "output_dir")
        {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn model(&self) -> Result<ModelParams, ConfigError> {
        self.model.ok_or(ConfigError::Missing {
            key: "model.alpha".into(),
        })
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    origin: Origin,
}

/// Splits a file into entries, rejecting duplicates and malformed lines.
fn parse_lines(text: &str) -> Result<BTreeMap<String, Entry>, ConfigError> {
    let mut out: BTreeMap<String, Entry> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            text: raw.to_string(),
        })?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                text: raw.to_string(),
            });
        }
        if let Some(prev) = out.get(&key) {
            let Origin::Line(first) = prev.origin else {
                unreachable!()
            };
            return Err(ConfigError::Duplicate {
                key,
                first,
                second: line,
            });
        }
        out.insert(
            key,
            Entry {
                value: value.trim().to_string(),
                origin: Origin::Line(line),
            },
        );
    }
    Ok(out)
}

/// Parses a `key=value` override such as `model.alpha=0.5`.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::Syntax {
        line: 0,
        text: s.to_string(),
    })?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

struct Resolver {
    entries: BTreeMap<String, Entry>,
}

impl Resolver {
    fn entry(&self, key: &str) -> &Entry {
        &self.entries[key]
    }

    fn parse<T: FromStr>(&self, key: &str, expected: &str) -> Result<T, ConfigError> {
        let e = self.entry(key);
        e.value.parse().map_err(|_| ConfigError::Type {
            key: key.into(),
            expected: expected.into(),
            value: e.value.clone(),
            origin: e.origin,
        })
    }

    fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.parse(key, "a number")
    }

    fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.parse(key, "a nonnegative integer")
    }

    fn auto_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        if self.entry(key).value == "auto" {
            Ok(None)
        } else {
            self.f64(key).map(Some)
        }
    }

    fn choice<T: FromStr<Err = String>>(&self, key: &str) -> Result<T, ConfigError> {
        let e = self.entry(key);
        e.value
            .parse()
            .map_err(|expected: String| ConfigError::Type {
                key: key.into(),
                expected,
                value: e.value.clone(),
                origin: e.origin,
            })
    }

    fn domain(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::Domain {
            key: key.into(),
            origin: self.entry(key).origin,
            message: msg.into(),
        }
    }
}

/// Resolves a configuration from file text plus overrides (later wins).
pub fn parse_config(
    text: &str,
    overrides: &[(String, String)],
) -> Result<ExperimentConfig, ConfigError> {
    let mut entries = parse_lines(text)?;
    for (k, v) in overrides {
        entries.insert(
            k.clone(),
            Entry {
                value: v.clone(),
                origin: Origin::CommandLine,
            },
        );
    }
    for (key, entry) in &entries {
        if !SCHEMA.iter().any(|(k, _)| k == key) {
            return Err(ConfigError::UnknownKey {
                key: key.clone(),
                origin: entry.origin,
            });
        }
    }
    let experiment_entry = entries
        .get("experiment")
        .ok_or_else(|| ConfigError::Missing {
            key: "experiment".into(),
        })?;
    let experiment: Experiment =
        experiment_entry
            .value
            .parse()
            .map_err(|expected| ConfigError::Type {
                key: "experiment".into(),
                expected,
                value: experiment_entry.value.clone(),
                origin: experiment_entry.origin,
            })?;
    for (key, default) in SCHEMA {
        if entries.contains_key(*key) {
            continue;
        }
        let specific = experiment_defaults(experiment)
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v);
        match specific.or(*default) {
            Some(v) => {
                entries.insert(
                    key.to_string(),
                    Entry {
                        value: v.to_string(),
                        origin: Origin::Default,
                    },
                );
            }
            None if required_for(key, experiment) => {
                return Err(ConfigError::Missing {
                    key: key.to_string(),
                })
            }
            None => {}
        }
    }
    build(experiment, Resolver { entries })
}

fn build(experiment: Experiment, r: Resolver) -> Result<ExperimentConfig, ConfigError> {
    let format_version: u32 = r.parse("format_version", "an integer")?;
    if format_version != FORMAT_VERSION {
        return Err(r.domain(
            "format_version",
            format!("only format_version {FORMAT_VERSION} is supported"),
        ));
    }
    let seed: u64 = r.parse("seed", "an unsigned 64-bit integer")?;
    let d = r.usize("model.d")?;
    if d < 2 {
        return Err(r.domain("model.d", format!("d must be at least 2, got {d}")));
    }
    let model = if r.entries.contains_key("model.alpha") && r.entries.contains_key("model.eta") {
        let kernel_mode: KernelMode = r.choice_core("model.kernel_mode")?;
        let trace_c0 = r.auto_f64("model.trace_c0")?.unwrap_or(2.0 * d as f64);
        let p = ModelParams {
            d,
            alpha: r.f64("model.alpha")?,
            eta: r.f64("model.eta")?,
            m: r.f64("model.m")?,
            trace_c0,
            kernel_mode,
            self_similar_c: r.f64("model.c")?,
        };
        p.validate().map_err(|e| domain_of(&r, &e.to_string()))?;
        Some(p)
    } else {
        None
    };

    let grid = GridSpec {
        h_min: r.f64("grid.h_min")?,
        r_max: r.f64("grid.r_max")?,
        growth: r.f64("grid.growth")?,
        cap: r.auto_f64("grid.cap")?,
    };
    let fit_lo = r.auto_f64("solver.fit_lo")?;
    let fit_hi = r.auto_f64("solver.fit_hi")?;
    let fit_window = match (fit_lo, fit_hi) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => {
            return Err(r.domain(
                "solver.fit_lo",
                "set both solver.fit_lo and solver.fit_hi, or neither",
            ))
        }
    };
    let pde = PdeConfig {
        kappa: r.f64("solver.kappa")?,
        mode: r.choice_core::<Mode>("solver.mode")?,
        theta: r.f64("solver.theta")?,
        outer_bc: r.choice_core::<OuterBc>("solver.outer_bc")?,
        dt_max: r.f64("solver.dt_max")?,
        dt_min: r.f64("solver.dt_min")?,
        dt_rel: r.f64("solver.dt_rel")?,
        observable_times: Vec::new(),
        seminorm_delta: r.f64("solver.seminorm_delta")?,
        seminorm_l: r.f64("solver.seminorm_l")?,
        fit_window,
        correlation_length: r.f64("solver.correlation_length")?,
    };
    pde.validate()
        .map_err(|e| r.domain("solver.kappa", e.to_string()))?;
    let solver = SolverSpec {
        pde,
        t_end: r.f64("solver.t_end")?,
        t_first: r.f64("solver.t_first")?,
        per_decade: r.usize("solver.per_decade")?,
        datum: r.choice("datum.kind")?,
        datum_width: r.f64("datum.width")?,
    };
    if !(solver.t_first > 0.0 && solver.t_end >= solver.t_first) {
        return Err(r.domain("solver.t_first", "need 0 < solver.t_first <= solver.t_end"));
    }
    if solver.per_decade == 0 {
        return Err(r.domain("solver.per_decade", "must be positive"));
    }

    let mc = McConfig {
        n_paths: r.usize("mc.n_paths")?,
        r0: r.f64("mc.r0")?,
        t_end: r.f64("mc.t_end")?,
        dt_max: r.f64("mc.dt_max")?,
        eps_dt: r.f64("mc.eps_dt")?,
        floor_eps: r.f64("mc.floor_eps")?,
        master_seed: seed,
        sample_times: Vec::new(),
        moment_orders: Vec::new(),
        keep_samples: r.parse("mc.keep_samples", "true or false")?,
    };
    if experiment == Experiment::Mc {
        mc.validate()
            .map_err(|e| r.domain("mc.n_paths", e.to_string()))?;
    }
    let kernel_r = (
        r.f64("kernel.r_min")?,
        r.f64("kernel.r_max")?,
        r.usize("kernel.n")?,
    );
    if !(kernel_r.0 > 0.0 && kernel_r.1 > kernel_r.0 && kernel_r.2 >= 2) {
        return Err(r.domain(
            "kernel.r_min",
            "need 0 < kernel.r_min < kernel.r_max and kernel.n >= 2",
        ));
    }
    let mc_t_first = r.f64("mc.t_first")?;
    let mc_per_decade = r.usize("mc.per_decade")?;

    let sweep_alphas = r
        .entry("sweep.alphas")
        .value
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| ConfigError::Type {
            key: "sweep.alphas".into(),
            expected: "a comma-separated list of numbers".into(),
            value: r.entry("sweep.alphas").value.clone(),
            origin: r.entry("sweep.alphas").origin,
        })?;

    let thresholds = Thresholds {
        constants_rel: r.f64("thresholds.constants_rel")?,
        kernel_rel: r.f64("thresholds.kernel_rel")?,
        energy_drift: r.f64("thresholds.energy_drift")?,
        exponent_rel: r.f64("thresholds.exponent_rel")?,
        mass_rel: r.f64("thresholds.mass_rel")?,
        yaglom_residual: r.f64("thresholds.yaglom_residual")?,
        mc_sigma: r.f64("thresholds.mc_sigma")?,
        richardson_rel: r.f64("thresholds.richardson_rel")?,
        richardson_prefactor: r.f64("thresholds.richardson_prefactor")?,
        dirac_rel: r.f64("thresholds.dirac_rel")?,
    };

    let resolved = r
        .entries
        .iter()
        .map(|(k, e)| (k.clone(), e.value.clone()))
        .collect();
    Ok(ExperimentConfig {
        experiment,
        model,
        d,
        kernel_r,
        kernel_tol: r.f64("kernel.tol")?,
        regime_grid: (r.usize("regime.n_alpha")?, r.usize("regime.n_eta")?),
        grid,
        solver,
        yaglom_window: (r.f64("yaglom.t_lo")?, r.f64("yaglom.t_hi")?),
        dirac_window: (r.f64("dirac.t_lo")?, r.f64("dirac.t_hi")?),
        mc,
        mc_t_first,
        mc_per_decade,
        sweep_alphas,
        thresholds,
        output_dir: PathBuf::from(&r.entry("output_dir").value),
        seed,
        format_version,
        resolved,
    })
}

/// Maps a core validation message like "alpha must lie in (0,1)" back to
/// the config key it is about.
fn domain_of(r: &Resolver, message: &str) -> ConfigError {
    let key = ["alpha", "eta", "trace_c0", "self_similar_c", "m ", "d "]
        .iter()
        .zip([
            "model.alpha",
            "model.eta",
            "model.trace_c0",
            "model.c",
            "model.m",
            "model.d",
        ])
        .find(|(needle, _)| message.contains(*needle))
        .map(|(_, k)| k)
        .unwrap_or("model.alpha");
    let message = message.strip_prefix("invalid input: ").unwrap_or(message);
    r.domain(key, message)
}

impl Resolver {
    /// Parses a core enum; its own error message lists the accepted names.
    fn choice_core<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.entry(key).value.parse().map_err(|err: T::Err| {
            let msg = err.to_string();
            self.domain(key, msg.strip_prefix("invalid input: ").unwrap_or(&msg))
        })
    }
}
