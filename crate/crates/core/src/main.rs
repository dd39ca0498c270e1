use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shaping_horde::config::{load_config, RunManifest};
use shaping_horde::harness::{run_experiment, ExperimentConfig, Scenario};
use shaping_horde::io::{read_records, summary_text, write_outputs};
use shaping_horde::stats::{learning_curves, summarize};
use shaping_horde::verify;
use shaping_horde::voting::{TieBreak, VotingMethod};

#[derive(Parser)]
#[command(
    name = "shaping-horde",
    version,
    about = "Off-policy ensembles of shaped Greedy-GQ(λ) learners on mountain car"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write records, summaries, curves and a manifest.
    Run(RunArgs),
    /// Check the implementation against its reference oracles.
    Verify,
    /// Recompute the summary table from a records CSV.
    Summarize {
        records: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        window_fraction: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file.
    #[arg(long, conflicts_with = "manifest")]
    config: Option<PathBuf>,
    /// Manifest of an earlier run to reproduce.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "manifest")]
    scenario: Option<Scenario>,
    #[arg(long, conflicts_with = "manifest")]
    runs: Option<u64>,
    #[arg(long, conflicts_with = "manifest")]
    episodes: Option<u32>,
    #[arg(long, conflicts_with = "manifest")]
    eval_interval: Option<u32>,
    #[arg(long, conflicts_with = "manifest")]
    step_cap: Option<u32>,
    #[arg(long, conflicts_with = "manifest")]
    seed: Option<u64>,
    #[arg(long, value_enum, conflicts_with = "manifest")]
    voting: Option<VotingMethod>,
    #[arg(long, value_enum, conflicts_with = "manifest")]
    ensemble_ties: Option<TieBreak>,
    /// Output directory.
    #[arg(long, env = "SHAPING_HORDE_OUT", default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core. Never changes results.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, String> {
        if let Some(path) = &self.manifest {
            return RunManifest::load(path).map(|m| m.config).map_err(|e| e.to_string());
        }
        let mut cfg = match &self.config {
            Some(path) => load_config(path).map_err(|e| e.to_string())?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.scenario {
            cfg.scenario = s;
        }
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = self.$field { cfg.$field = v; })*};
        }
        set!(runs, episodes, eval_interval, step_cap, seed, voting, ensemble_ties);
        cfg.validate().map_err(|e| format!("invalid configuration: {e}"))?;
        Ok(cfg)
    }
}

fn run(args: &RunArgs) -> Result<(), String> {
    let cfg = args.config()?;
    let output = run_experiment(&cfg, args.jobs).map_err(|e| e.to_string())?;
    for d in &output.diagnostics {
        eprintln!("run {} diverged in episode {}: {}", d.run_id, d.episode, d.message);
    }
    if !output.diagnostics.is_empty() {
        eprintln!("{} of {} runs diverged and are excluded", output.diagnostics.len(), cfg.runs);
    }
    let summary = summarize(&output.records, cfg.window_fraction).map_err(|e| e.to_string())?;
    let curves = learning_curves(&output.records);
    write_outputs(&args.out, &cfg, &output, &summary, &curves).map_err(|e| e.to_string())?;
    print!("{}", summary_text(&summary, &output.diagnostics));
    println!("outputs written to {}", args.out.display());
    Ok(())
}

fn verify_all() -> Result<(), String> {
    let results = verify::run_all();
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(format!("{failed} of {} properties failed", results.len()))
    }
}

fn summarize_file(path: &PathBuf, window_fraction: f64) -> Result<(), String> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let records = read_records(file).map_err(|e| e.to_string())?;
    let summary = summarize(&records, window_fraction).map_err(|e| e.to_string())?;
    print!("{}", summary_text(&summary, &[]));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Verify => verify_all(),
        Command::Summarize { records, window_fraction } => summarize_file(records, *window_fraction),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
