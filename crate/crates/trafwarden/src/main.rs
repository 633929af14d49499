use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use trafwarden_core::trace::{self, CommandTrace, TraceError};
use trafwarden_core::{load_scenario, run_headless, ConfigError, ControlMode, ScenarioConfig};

mod server;

#[derive(Parser)]
#[command(
    name = "trafwarden",
    version,
    about = "Gesture-directed intersection simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Policy {
    RoundRobin,
    QueuePriority,
}

impl From<Policy> for ControlMode {
    fn from(p: Policy) -> Self {
        match p {
            Policy::RoundRobin => ControlMode::RoundRobin,
            Policy::QueuePriority => ControlMode::QueuePriority,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Mode {
    WizardOfOz,
    RoundRobin,
    QueuePriority,
}

impl From<Mode> for ControlMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::WizardOfOz => ControlMode::WizardOfOz,
            Mode::RoundRobin => ControlMode::RoundRobin,
            Mode::QueuePriority => ControlMode::QueuePriority,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario headless and write metrics.csv and trace.txt
    Run {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Policy,
        /// Overrides the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Serve a live session to operator consoles over WebSocket at /ws
    Serve {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// State broadcasts per second
        #[arg(long, default_value_t = 20.0)]
        fps: f64,
        /// Simulated seconds per wall-clock second
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long, value_enum, default_value = "wizard_of_oz")]
        mode: Mode,
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the command trace and metrics once the scenario ends
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Re-run a recorded trace and print its metrics
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

/// Input problems exit with 2, everything else with 3.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<TraceError> for Failure {
    fn from(e: TraceError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn scenario(path: Option<&Path>, seed: Option<u64>) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = match path {
        Some(p) => load_scenario(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            scenario: path,
            policy,
            seed,
            out_dir,
        } => {
            let cfg = scenario(path.as_deref(), seed)?;
            let run = run_headless(&cfg, policy.into(), cfg.seed);
            write_file(&out_dir, "metrics.csv", &run.csv)?;
            write_file(&out_dir, "trace.txt", &run.trace)?;
            print!("{}", run.csv);
        }
        Command::Serve {
            scenario: path,
            bind,
            fps,
            speed,
            mode,
            seed,
            out_dir,
        } => {
            let cfg = scenario(path.as_deref(), seed)?;
            if !(fps > 0.0 && speed > 0.0) {
                return Err(Failure::Config(anyhow::anyhow!(
                    "--fps and --speed must be positive"
                )));
            }
            let opts = server::ServeOptions {
                bind,
                fps,
                speed,
                mode: mode.into(),
                out_dir,
            };
            let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
            rt.block_on(server::serve(cfg, opts))?;
        }
        Command::Replay {
            trace: trace_path,
            scenario: path,
            seed,
            out_dir,
        } => {
            let cfg = scenario(path.as_deref(), seed)?;
            let text = fs::read_to_string(&trace_path)
                .with_context(|| format!("reading {}", trace_path.display()))
                .map_err(Failure::Config)?;
            let recorded = CommandTrace::parse(&text)?;
            let report = trace::replay(&cfg, &recorded)?;
            let csv = report.to_csv();
            if let Some(dir) = out_dir {
                write_file(&dir, "metrics.csv", &csv)?;
            }
            print!("{csv}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TRAFWARDEN_LOG", "info"))
        .init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
