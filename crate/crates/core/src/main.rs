use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use explgame_core::cli::commands::{cmd_attack, cmd_fit, cmd_run, cmd_sweep, Overrides};
use explgame_core::cli::CliError;

#[derive(Parser)]
#[command(name = "explgame", version, about = "Explanation-variance signaling game")]
struct Cli {
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress the summary line.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate GBM parameters from a `t,variance` series.
    Fit { series: PathBuf },
    /// Play one game and write trace, curves and report.
    Run { config: PathBuf },
    /// Repeat `run` over values of one numeric config key.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Evaluate the membership attack only.
    Attack { config: PathBuf },
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
    };
    match &cli.command {
        Command::Fit { series } => {
            let fit = cmd_fit(series, &overrides)?;
            println!("{}", serde_json::to_string(&fit).expect("plain struct serializes"));
        }
        Command::Run { config } => {
            let summary = cmd_run(config, &overrides)?;
            if !cli.quiet {
                println!("{}", summary.line());
            }
        }
        Command::Sweep {
            config,
            param,
            values,
            workers,
        } => {
            let rows = cmd_sweep(config, param, values, *workers, &overrides)?;
            if !cli.quiet {
                for row in &rows {
                    match &row.outcome {
                        Ok(s) => println!("{}={} {}", param, row.param_value, s.line()),
                        Err(kind) => println!("{}={} error={}", param, row.param_value, kind),
                    }
                }
            }
        }
        Command::Attack { config } => {
            let result = cmd_attack(config, &overrides)?;
            if !cli.quiet {
                println!(
                    "tp={} fn={} tpr={} threshold={}",
                    result.tp, result.fn_, result.tpr, result.threshold
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
