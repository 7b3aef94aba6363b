use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ntd_core::harness::output::write_atomic;
use ntd_core::harness::{
    cmd_analyze, cmd_run, cmd_sweep, load_problem, RunAlgorithm, RunOptions, SweepConfig,
};
use ntd_core::operators::DEFAULT_N_MAX;
use ntd_core::solvers::{DEFAULT_MAX_ITERS, DEFAULT_TOL};
use ntd_core::StepSizeSchedule;

#[derive(Parser)]
#[command(
    name = "ntd",
    version,
    about = "Multi-step off-policy TD analysis and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Horizons, fixed points and error bounds as JSON.
    Analyze {
        /// Builtin id (twostate, baird-star, random-k?states=..) or a problem JSON file.
        #[arg(long)]
        problem: String,
        /// Largest horizon scanned for the Hurwitz horizon.
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        n_max: usize,
        /// Extra horizons to report.
        #[arg(long = "n", value_delimiter = ',')]
        n: Vec<usize>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one algorithm and write its trace as CSV.
    Run {
        /// Builtin id (twostate, baird-star, random-k?states=..) or a problem JSON file.
        #[arg(long)]
        problem: String,
        /// NPVI, GD_I, GD_II, SYSTEM, NTD or NGTD.
        #[arg(long)]
        algo: String,
        /// Horizon.
        #[arg(long)]
        n: usize,
        /// Seed for NTD/NGTD.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, env = "NTD_OUT_DIR", default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a grid of (algorithm, n, seed) cells in parallel.
    Sweep {
        /// Builtin id (twostate, baird-star, random-k?states=..) or a problem JSON file.
        #[arg(long)]
        problem: String,
        /// Comma-separated algorithms.
        #[arg(long = "algo", value_delimiter = ',', required = true)]
        algos: Vec<String>,
        /// Comma-separated horizons.
        #[arg(long = "n", value_delimiter = ',', required = true)]
        n: Vec<usize>,
        /// Comma-separated seeds for the stochastic algorithms.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Output directory.
        #[arg(long, env = "NTD_OUT_DIR", default_value = ".")]
        out: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Fixed step size for SYSTEM; certified automatically when absent.
    #[arg(long)]
    alpha: Option<f64>,
    /// Stochastic schedule α_i = a / (b + i)^c.
    #[arg(long, default_value = "0.5,1000,1")]
    schedule: String,
    /// Stochastic iterations.
    #[arg(long, default_value_t = 200_000)]
    iters: usize,
    /// Stochastic trace logging period.
    #[arg(long, default_value_t = 1000)]
    log_every: usize,
    /// Initial θ; one value is broadcast to every feature.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    theta0: Option<Vec<f64>>,
    /// Iteration cap for deterministic solvers.
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// Residual tolerance for deterministic solvers.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

impl CommonArgs {
    fn options(&self, seed: u64) -> Result<RunOptions> {
        Ok(RunOptions {
            alpha: self.alpha,
            schedule: StepSizeSchedule::parse(&self.schedule)?,
            iters: self.iters,
            seed,
            stream: 0,
            log_every: self.log_every,
            theta0: self.theta0.clone(),
            max_iters: self.max_iters,
            tol: self.tol,
        })
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                // a closed pipe (`| head`) is not a failure
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x:e}"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze {
            problem,
            n_max,
            n,
            out,
        } => {
            let spec = load_problem(&problem)?;
            let report = cmd_analyze(&spec, n_max, &n)?;
            emit(out.as_deref(), &serde_json::to_string_pretty(&report)?)
        }
        Command::Run {
            problem,
            algo,
            n,
            seed,
            out,
            common,
        } => {
            let spec = load_problem(&problem)?;
            let algorithm: RunAlgorithm = algo.parse()?;
            let outcome = cmd_run(&spec, algorithm, n, &common.options(seed.unwrap_or(0))?)?;
            let file = match (algorithm.is_stochastic(), seed) {
                (true, Some(s)) => format!("{}_n{n}_seed{s}.csv", algorithm.name()),
                _ => format!("{}_n{n}.csv", algorithm.name()),
            };
            let path = out.join(file);
            write_atomic(&path, outcome.csv.as_bytes())
                .with_context(|| format!("writing {}", path.display()))?;
            println!("algorithm={} n={n}", algorithm.name());
            println!("verdict={}", outcome.verdict.name());
            println!("iterations={}", outcome.iterations);
            println!("final_residual={}", fmt_opt(outcome.final_residual));
            println!("final_distance={:e}", outcome.final_distance);
            if outcome.mu.is_some() {
                println!("mu={} L={}", fmt_opt(outcome.mu), fmt_opt(outcome.lip));
            }
            if let Some(c) = outcome.step_certified {
                println!("step_size={} certified={c}", fmt_opt(outcome.step_size));
            }
            println!("csv={}", path.display());
            Ok(())
        }
        Command::Sweep {
            problem,
            algos,
            n,
            seeds,
            out,
            jobs,
            common,
        } => {
            let spec = load_problem(&problem)?;
            let algorithms = algos
                .iter()
                .map(|a| a.parse::<RunAlgorithm>())
                .collect::<Result<Vec<_>, _>>()?;
            let config = SweepConfig {
                n_values: n,
                algorithms,
                seeds,
                output_dir: out.clone(),
                jobs,
                options: common.options(0)?,
            };
            let summary = cmd_sweep(&spec, &config)?;
            for cell in &summary.cells {
                let seed = cell.seed.map_or_else(|| "-".to_string(), |s| s.to_string());
                match (&cell.verdict, &cell.error) {
                    (Some(v), _) => println!(
                        "{} n={} seed={seed} {} distance={}",
                        cell.algorithm.name(),
                        cell.n,
                        v.name(),
                        fmt_opt(cell.final_distance)
                    ),
                    (None, e) => println!(
                        "{} n={} seed={seed} error: {}",
                        cell.algorithm.name(),
                        cell.n,
                        e.as_deref().unwrap_or("unknown")
                    ),
                }
            }
            println!(
                "summary={}",
                out.join(ntd_core::harness::commands::SUMMARY_FILE)
                    .display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
