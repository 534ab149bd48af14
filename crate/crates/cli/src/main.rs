//! `nsdi` command-line driver.
//!
//! Exit status: 0 success, 2 invalid configuration, 3 numerical failure,
//! 4 some sweep points failed.

mod commands;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nsdi::config::RunConfig;
use nsdi::Error;

#[derive(Parser, Debug)]
#[command(
    name = "nsdi",
    version,
    about = "Two-electron strong-field double ionization simulator"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Configuration sources, applied in order: defaults, file, flags, `--set`.
#[derive(Args, Debug, Clone, Default)]
struct Overrides {
    /// Configuration file of `section.key = value` lines.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Peak field amplitudes, comma separated.
    #[arg(long, global = true, value_name = "F0[,F0...]")]
    f0: Option<String>,
    #[arg(long, global = true)]
    omega: Option<String>,
    #[arg(long, global = true)]
    phi: Option<String>,
    /// Number of uniformly spaced carrier-envelope phases; 0 uses `--phi`.
    #[arg(long = "phi-count", global = true)]
    phi_count: Option<String>,
    #[arg(long = "n-cycles", global = true)]
    n_cycles: Option<String>,
    #[arg(long = "n-points", global = true)]
    n_points: Option<String>,
    #[arg(long, global = true)]
    dx: Option<String>,
    #[arg(long, global = true)]
    dt: Option<String>,
    #[arg(long, global = true, value_name = "length|velocity")]
    gauge: Option<String>,
    #[arg(short, long, global = true)]
    output: Option<String>,
    #[arg(short = 'j', long, global = true, env = "NSDI_WORKERS")]
    workers: Option<String>,
    /// Any configuration key; repeatable.
    #[arg(short = 's', long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Reuse a relaxed state written by `ground` instead of relaxing again.
    #[arg(long, global = true)]
    ground: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Relax the field-free ground state and store it.
    Ground,
    /// Flux yields over the F0 list, with F_sat and F_max.
    Yields,
    /// Double-ionization momentum distributions per (F0, phi).
    Momenta,
    /// Recoil-ion momentum spectra, CEP-averaged when phi-count > 0.
    Ionmom,
    /// Rate-equation yields over the F0 list.
    Rates,
    /// Run a command for every point of a parameter grid.
    Sweep {
        #[arg(value_enum)]
        target: Target,
        /// `KEY=V1,V2,...`; repeat for a product grid.
        #[arg(long = "vary", value_name = "KEY=V1,V2,...", required = true)]
        vary: Vec<String>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Ground,
    Yields,
    Momenta,
    Ionmom,
    Rates,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Ground => "ground",
            Target::Yields => "yields",
            Target::Momenta => "momenta",
            Target::Ionmom => "ionmom",
            Target::Rates => "rates",
        }
    }
}

/// Failure of a command, with its exit status.
#[derive(Debug)]
pub enum Failure {
    Sim(Error),
    /// Number of failed points and the total.
    Partial(usize, usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Sim(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Sim(Error::Io(e))
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Sim(Error::Validation(_)) => 2,
            Failure::Sim(_) => 3,
            Failure::Partial(..) => 4,
        }
    }

    /// Single line: `nsdi: <kind>: <message>`.
    fn line(&self) -> String {
        let msg = match self {
            Failure::Sim(e) => e.to_string(),
            Failure::Partial(bad, all) => format!("sweep: {bad} of {all} points failed"),
        };
        format!("nsdi: {}", msg.replace('\n', " "))
    }
}

fn build_config(o: &Overrides) -> Result<RunConfig, Error> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::parse(&std::fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    let flags = [
        ("pulse.f0", &o.f0),
        ("pulse.omega", &o.omega),
        ("pulse.phi", &o.phi),
        ("pulse.phi_count", &o.phi_count),
        ("pulse.n_cycles", &o.n_cycles),
        ("grid.n_points", &o.n_points),
        ("grid.dx", &o.dx),
        ("run.dt", &o.dt),
        ("run.gauge", &o.gauge),
        ("run.output", &o.output),
        ("run.workers", &o.workers),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    for kv in &o.set {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(Error::Validation(format!(
                "--set expects KEY=VALUE, got {kv:?}"
            )));
        };
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = build_config(&cli.overrides)?;
    cfg.validate_rates()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;
    let ground = cli.overrides.ground.as_deref();
    pool.install(|| match cli.command {
        Command::Ground => commands::run_target(Target::Ground, &cfg, ground),
        Command::Yields => commands::run_target(Target::Yields, &cfg, ground),
        Command::Momenta => commands::run_target(Target::Momenta, &cfg, ground),
        Command::Ionmom => commands::run_target(Target::Ionmom, &cfg, ground),
        Command::Rates => commands::run_target(Target::Rates, &cfg, ground),
        Command::Sweep { target, vary } => sweep::run_sweep(target, &cfg, &vary, ground),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.code())
        }
    }
}
