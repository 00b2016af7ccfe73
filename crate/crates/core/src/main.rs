use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use reclab::cli::{run_experiment, validate_config};

#[derive(Parser)]
#[command(name = "reclab", version, about = "Recurrence statistics laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and print it with every default filled in.
    Validate { config: PathBuf },
    /// Run the experiment a config describes.
    Run {
        config: PathBuf,
        /// Output directory (overrides run.output).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides run.master_seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Run even if the target sequence fails validation.
        #[arg(long)]
        override_assumption1: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => validate_config(&config).map(|cfg| {
            print!("{}", cfg.to_text());
        }),
        Command::Run {
            config,
            out,
            seed,
            override_assumption1,
        } => validate_config(&config).and_then(|mut cfg| {
            if let Some(out) = out {
                cfg.output = out;
            }
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            cfg.override_assumption1 |= override_assumption1;
            let manifest = run_experiment(&cfg)?;
            println!(
                "{}: {} artifact(s) in {} ({:.2}s)",
                manifest.experiment,
                manifest.artifacts.len(),
                manifest.output.display(),
                manifest.wall_clock_seconds
            );
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
