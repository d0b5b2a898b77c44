use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use donorsim::{run, NoiseChoice, RunSpec};

#[derive(Parser)]
#[command(
    name = "donorsim",
    about = "Pulse-level simulator and analysis toolkit for a donor-cluster spin register",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a registered scenario and write CSV artifacts plus results.json.
    Run {
        /// Scenario name (see `donorsim list`).
        scenario: String,
        /// Device description in TOML; defaults to the built-in register.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for every stochastic element of the scenario.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Noise sources to enable for gate execution.
        #[arg(long, value_enum, default_value_t = NoiseChoice::None)]
        noise: NoiseChoice,
        /// Size of the rayon thread pool (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the registered scenarios.
    List,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("DONORSIM_LOG")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            let width =
                donorsim::scenarios::REGISTRY.iter().map(|s| s.name.len()).max().unwrap_or(0);
            for s in donorsim::scenarios::REGISTRY {
                println!("{:width$}  {}", s.name, s.about);
            }
            ExitCode::SUCCESS
        }
        Command::Run { scenario, config, seed, out, noise, threads } => {
            if let Some(n) = threads {
                // Ignore the error if a global pool already exists.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            let spec = RunSpec {
                scenario,
                config_path: config,
                seed,
                out_dir: out,
                noise,
                threads,
            };
            match run(&spec) {
                Ok(report) => {
                    println!("wrote {}", report.results_path.display());
                    for a in &report.artifacts {
                        println!("  {}", a.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
