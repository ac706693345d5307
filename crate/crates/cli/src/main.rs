use clap::{Parser, Subcommand};
use kraichnan_cli::{
    parse_config, parse_override, run_experiment, ConfigError, Experiment, RunError,
};
use std::path::PathBuf;
use std::process::ExitCode;

/// Numerical experiments on the Kraichnan passive-scalar model.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; affects speed only, never results.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Small-scale constants and regime of one parameter point.
    Constants,
    /// Structure functions b_L, b_N on a log grid.
    Kernel,
    /// Regime classification over an (alpha, eta) grid.
    Regime,
    /// One run of the radial correlation equation.
    Pde,
    /// Monte Carlo pair dispersion.
    Mc,
    /// Dissipation balance along a PDE run.
    Yaglom,
    /// Decay of G_t(0) from a near-Dirac datum.
    Dirac,
    /// PDE runs over a list of alpha values.
    Sweep,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Constants => Experiment::Constants,
            Command::Kernel => Experiment::Kernel,
            Command::Regime => Experiment::Regime,
            Command::Pde => Experiment::Pde,
            Command::Mc => Experiment::Mc,
            Command::Yaglom => Experiment::Yaglom,
            Command::Dirac => Experiment::Dirac,
            Command::Sweep => Experiment::Sweep,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<i32, RunError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ConfigError::Domain {
                key: "threads".into(),
                origin: kraichnan_cli::config::Origin::CommandLine,
                message: e.to_string(),
            })?;
    }
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(ConfigError::Io)?,
        None => String::new(),
    };
    let mut overrides = vec![(
        "experiment".to_string(),
        Experiment::from(cli.command).to_string(),
    )];
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(out) = &cli.out {
        overrides.push(("output_dir".into(), out.display().to_string()));
    }
    for s in &cli.set {
        overrides.push(parse_override(s)?);
    }
    let cfg = parse_config(&text, &overrides)?;
    Ok(run_experiment(&cfg)?.exit_code())
}
