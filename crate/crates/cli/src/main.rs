use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use motif_crf::{run_stage, Error, RunConfig, Stage};

/// Motif transformation labelling and CRF inference pipeline.
#[derive(Debug, Parser)]
#[command(name = "motif-crf", version)]
struct Cli {
    /// ingest, segment, label, features, graph, fit, infer, clrtest,
    /// simulate, report or all
    stage: String,
    /// Flat key=value configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input directory: raw tables for ingest, earlier artifacts otherwise.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory for this stage's artifacts.
    #[arg(long = "out")]
    output: PathBuf,
    /// Overrides `seed` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `period` from the configuration.
    #[arg(long)]
    period: Option<String>,
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, Error> {
    let stage: Stage = cli.stage.parse()?;
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(period) = &cli.period {
        config.period = Some(period.clone());
    }
    run_stage(stage, &config, &cli.input, &cli.output)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = serde_json::json!({
                "stage": cli.stage,
                "error": e.kind(),
                "message": e.to_string(),
                "exit_code": e.exit_code(),
            });
            eprintln!("{record}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
