use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use codrive_core::config::{ScenarioConfig, ScenarioKind};
use codrive_core::gateway::{build_backend, BackendConfig, BackendMode};
use codrive_core::harness::{run_batch, success_rate, BatchSpec, RunFlags};
use codrive_core::metrics::{render_report, report};

#[derive(Parser)]
#[command(name = "codrive", version, about = "Cooperative driving batches with LLM-backed CAV decisions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded batch of episodes and write traces.
    Run(RunArgs),
    /// Summarize the traces in a run directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Conflict-area radius for PET (m).
        #[arg(long, default_value_t = 5.0)]
        pet_radius: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: ScenarioKind,
    /// stub, adversarial-stub or remote.
    #[arg(long, default_value = "stub")]
    backend: BackendMode,
    /// Memories retrieved per decision.
    #[arg(long, default_value_t = 2)]
    shots: usize,
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long)]
    no_negotiation: bool,
    #[arg(long)]
    no_memory: bool,
    /// Start every episode from the initial memory and do not save it.
    #[arg(long)]
    isolated_memory: bool,
    /// Let the backend confirm tie-break passing orders.
    #[arg(long)]
    llm_coordinator: bool,
    #[arg(long)]
    memory_db: Option<PathBuf>,
    /// Scenario TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Chat-completions URL for the remote backend.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "gpt-4o-mini")]
    model: String,
    #[arg(long, default_value_t = 2)]
    retries: u32,
}

fn run(args: RunArgs) -> Result<()> {
    let base = match &args.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(kind) = base.kind {
        if kind != args.scenario {
            log::warn!("config file is for {kind}; running {}", args.scenario);
        }
    }
    let mut backend_cfg = BackendConfig::new(args.backend);
    backend_cfg.endpoint = args.endpoint;
    backend_cfg.model = args.model;
    backend_cfg.retry_budget = args.retries;
    backend_cfg.backoff = Duration::from_millis(500);
    let backend = build_backend(&backend_cfg).context("building backend")?;
    let spec = BatchSpec {
        kind: args.scenario,
        base,
        seeds: args.seeds,
        flags: RunFlags {
            negotiation: !args.no_negotiation,
            memory: !args.no_memory,
            shots: args.shots,
            llm_coordinator: args.llm_coordinator,
            isolated_memory: args.isolated_memory,
        },
        out_dir: args.out,
        memory_db: args.memory_db,
    };
    let results = run_batch(&spec, backend.as_ref())?;
    println!(
        "{} episodes, success rate {:.3}; traces in {}",
        results.len(),
        success_rate(&results),
        spec.out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Report { input, pet_radius } => report(&input, pet_radius).map(|r| print!("{}", render_report(&r))).map_err(Into::into),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
