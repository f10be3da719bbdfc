use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adaptor_lab::scenario::{self, library, runner};

/// Adapted multipliers and propagation estimates: scenario runner.
#[derive(Parser)]
#[command(name = "adaptor-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the shipped scenarios.
    List,
    /// Run a scenario document (a path, or the name of a shipped scenario).
    Run {
        config: String,
        #[arg(long, env = "ADAPTOR_LAB_OUT", default_value = "runs")]
        out_dir: PathBuf,
        #[arg(long)]
        grid_n: Option<usize>,
        #[arg(long)]
        tmax: Option<f64>,
    },
    /// Render the summary of a stored run.
    Report {
        run_id: String,
        #[arg(long, env = "ADAPTOR_LAB_OUT", default_value = "runs")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for (name, description) in scenario::list_scenarios() {
                let tag = if library::find_shipped(&name).is_some_and(|s| s.negative) { " [negative]" } else { "" };
                println!("{name:<30} {description}{tag}");
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, out_dir, grid_n, tmax } => {
            let parsed = library::load_scenario(&config).and_then(|c| runner::with_overrides(c, grid_n, tmax));
            let config = match parsed {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(if e.is_config() { 2 } else { 1 });
                }
            };
            match scenario::run_scenario(&config, &out_dir) {
                Ok(artifact) => {
                    print!("{}", runner::render_manifest(&artifact.manifest));
                    println!("\nartifacts in {}", artifact.dir.display());
                    ExitCode::from(artifact.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Report { run_id, out_dir } => match scenario::report(&out_dir, &run_id) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
