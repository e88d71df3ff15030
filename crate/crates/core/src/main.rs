use clap::{Parser, Subcommand};
use graphmf::runner;
use std::path::PathBuf;
use std::process::ExitCode;

const THREADS_ENV: &str = "GRAPHMF_THREADS";

#[derive(Parser)]
#[command(name = "graphmf", version, about = "Interacting diffusions on random graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment plan and write result tables.
    Run {
        /// Path to a JSON plan file.
        #[arg(long)]
        plan: PathBuf,
        /// Master seed; overrides nothing in the plan, every scenario
        /// seed is derived from it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads (defaults to GRAPHMF_THREADS, then all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Single-threaded, byte-stable output mode.
        #[arg(long)]
        strict: bool,
        /// Output directory (defaults to the plan's output_dir, then
        /// results/<plan name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List registered kernels, laws, test functions and estimators.
    Describe {
        /// Emit the machine-readable JSON listing instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Re-evaluate the pass/fail verdict of an existing output directory.
    Check {
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_threads(requested: Option<usize>) -> Result<(), String> {
    let n = if let Some(n) = requested {
        n
    } else if let Ok(v) = std::env::var(THREADS_ENV) {
        v.parse::<usize>()
            .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?
    } else {
        0 // rayon default: all cores
    };
    if requested == Some(0) {
        return Err("--threads must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("acceptance checks failed");
            ExitCode::from(1)
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Run {
            plan,
            seed,
            threads,
            strict,
            out,
        } => {
            init_threads(threads)?;
            let raw = std::fs::read_to_string(&plan)
                .map_err(|e| format!("reading {}: {e}", plan.display()))?;
            let plan = runner::ExperimentPlan::from_json(&raw).map_err(|e| e.to_string())?;
            let out_dir = out.unwrap_or_else(|| runner::default_out_dir(&plan));
            let summary = runner::run_experiment(&plan, seed, &out_dir, strict)
                .map_err(|e| e.to_string())?;
            for c in &summary.checks {
                println!(
                    "{}: {} (value {:.6e}, threshold {:.6e})",
                    c.name,
                    if c.pass { "pass" } else { "FAIL" },
                    c.value,
                    c.threshold
                );
            }
            for f in &summary.failed_scenarios {
                eprintln!("scenario failed: {f}");
            }
            println!("results written to {}", out_dir.display());
            Ok(summary.all_pass)
        }
        Command::Describe { json } => {
            let listing = runner::describe_registry();
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&listing).map_err(|e| e.to_string())?
                );
            } else {
                println!("drift kernels:");
                for k in &listing.drift_kernels {
                    println!("  {} (params: {})", k.name, k.params.len());
                }
                println!("diffusion kernels:");
                for k in &listing.diffusion_kernels {
                    println!("  {}", k.name);
                }
                println!("initial laws:");
                for n in &listing.initial_laws {
                    println!("  {n}");
                }
                println!("test functions:");
                for n in &listing.test_functions {
                    println!("  {n}");
                }
                println!("edge models:");
                for n in &listing.edge_models {
                    println!("  {n}");
                }
                println!("estimators:");
                for n in &listing.estimators {
                    println!("  {n}");
                }
            }
            Ok(true)
        }
        Command::Check { out } => {
            let summary = runner::check_outputs(&out).map_err(|e| e.to_string())?;
            for c in &summary.checks {
                println!("{}: {}", c.name, if c.pass { "pass" } else { "FAIL" });
            }
            Ok(summary.all_pass)
        }
    }
}
