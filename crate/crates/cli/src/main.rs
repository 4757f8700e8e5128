use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ranlab_cli::app::{self, Jobs, RunError};

#[derive(Parser)]
#[command(name = "ranlab", about = "Deterministic radio-network learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        config: PathBuf,
        /// Override a config value by dotted path, e.g. `beam.alpha=0.25`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Worker threads for per-seed jobs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check a config file without running it.
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print the version.
    Version,
}

fn fail(e: RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Version => {
            println!("ranlab {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
        Command::Validate { config, set } => match app::load(&config, &set) {
            Ok(loaded) => {
                print!("{}", app::validation_report(&loaded));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e.into()),
        },
        Command::Run { config, set, jobs } => {
            let jobs = match Jobs::new(jobs) {
                Ok(j) => j,
                Err(e) => return fail(e.into()),
            };
            let loaded = match app::load(&config, &set) {
                Ok(l) => l,
                Err(e) => return fail(e.into()),
            };
            match app::run(&loaded.config, jobs) {
                Ok(m) => {
                    println!(
                        "wrote {} files to {} (config hash {})",
                        m.seeds.iter().map(|s| s.files.len()).sum::<usize>() + m.aggregate_files.len() + 1,
                        loaded.config.output_dir.display(),
                        m.config_hash
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
