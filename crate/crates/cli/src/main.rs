use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pamlab::experiments::{emit, run, Experiment, ExperimentConfig, SUMMARY_FILE};
use pamlab::{PamError, Result};

#[derive(Parser)]
#[command(name = "pamlab", version, about = "Parabolic Anderson model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Universality class of a potential (or of the built-in catalog)
    Classify(Common),
    /// Scale functions alpha and beta along a time grid
    Scales(Common),
    /// Annealed moments, centred rates and intermittency ratios
    Moments(Common),
    /// Almost-sure growth rates for fixed potential realisations
    Quenched(Common),
    /// Variational constants and their minimisers
    Variational(Common),
    /// Self-intersection local times of the simple random walk
    Selfint(Common),
    /// Shape of potential and solution on high-mass samples
    #[command(name = "heuristic_profile", alias = "heuristic-profile")]
    HeuristicProfile(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration
    #[arg(long)]
    config: PathBuf,
    /// master seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (Experiment, Common) {
        match self {
            Command::Classify(c) => (Experiment::Classify, c),
            Command::Scales(c) => (Experiment::Scales, c),
            Command::Moments(c) => (Experiment::Moments, c),
            Command::Quenched(c) => (Experiment::Quenched, c),
            Command::Variational(c) => (Experiment::Variational, c),
            Command::Selfint(c) => (Experiment::Selfint, c),
            Command::HeuristicProfile(c) => (Experiment::HeuristicProfile, c),
        }
    }
}

/// Reads the config file, fills in the subcommand and applies overrides.
/// The document as written is kept for the metadata echo.
fn load_config(experiment: Experiment, args: &Common) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config)?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let mut doc = raw.clone();
    let Some(obj) = doc.as_object_mut() else {
        return Err(PamError::InvalidInput("config must be a JSON object".into()));
    };
    match obj.get("experiment").and_then(|v| v.as_str()) {
        Some(name) if name != experiment.as_str() => {
            return Err(PamError::InvalidInput(format!(
                "config is for `{name}` but the subcommand is `{}`",
                experiment.as_str()
            )));
        }
        _ => {
            obj.insert("experiment".into(), experiment.as_str().into());
        }
    }
    if let Some(seed) = args.seed {
        obj.insert("seed".into(), seed.into());
    }
    if let Some(out) = &args.out {
        obj.insert("out".into(), out.to_string_lossy().into_owned().into());
    }
    let mut cfg: ExperimentConfig = serde_json::from_value(doc)?;
    cfg.raw = Some(raw);
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    let (experiment, args) = cli.command.split();
    if let Some(k) = args.threads {
        if k == 0 {
            return Err(PamError::InvalidInput("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| PamError::InvalidInput(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(experiment, &args)?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out").join(experiment.as_str()));
    let mut result = run(&cfg)?;
    if args.seed.is_some() || args.out.is_some() {
        result.meta("cli_overrides", serde_json::json!({ "seed": args.seed, "out": args.out }));
    }
    emit(&result, &dir)?;
    let summary = dir.join(SUMMARY_FILE);
    if let Some(verdict) = result.metadata.get("verdict").and_then(|v| v.as_array()) {
        let parts: Vec<&str> = verdict.iter().filter_map(|v| v.as_str()).collect();
        println!("{} (report: {})", parts.join(", "), summary.display());
    } else {
        println!("{} done: {}", experiment.as_str(), summary.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_io() {
                1
            } else if e.is_validation() {
                2
            } else {
                3
            };
            ExitCode::from(code)
        }
    }
}
