use std::path::PathBuf;
use std::process::ExitCode;

use bsdej_lab::experiment::{run_file, Command, Overrides};
use clap::{Args, Parser, Subcommand};

/// Experiments on second-order BSDEs with jumps.
///
/// Exit status: 0 when every check passes, 2 on a config error, 3 when a
/// check fails.
#[derive(Parser)]
#[command(name = "bsdej-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory of the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Sub {
    /// Reference and controlled path summaries.
    Simulate(Common),
    /// Classical solution under each control of the family.
    SolveBsdej(Common),
    /// Second-order solution over the family.
    #[command(name = "solve-2bsdej")]
    Solve2bsdej(Common),
    /// Semilinear and Bellman lattice solutions.
    SolvePide(Common),
    /// Gap between the Bellman solution and the best constant control.
    CompareRepresentation(Common),
    /// K processes, minimum condition and norms.
    CheckK(Common),
    /// Inequality constants, negative moments and decompositions.
    AppendixChecks(Common),
    /// Refinement table.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Number of refinement levels (at least 2).
        #[arg(long)]
        levels: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common, levels) = match cli.command {
        Sub::Simulate(c) => (Command::Simulate, c, None),
        Sub::SolveBsdej(c) => (Command::SolveBsdej, c, None),
        Sub::Solve2bsdej(c) => (Command::Solve2bsdej, c, None),
        Sub::SolvePide(c) => (Command::SolvePide, c, None),
        Sub::CompareRepresentation(c) => (Command::CompareRepresentation, c, None),
        Sub::CheckK(c) => (Command::CheckK, c, None),
        Sub::AppendixChecks(c) => (Command::AppendixChecks, c, None),
        Sub::Convergence { common, levels } => (Command::Convergence, common, levels),
    };
    let overrides = Overrides { seed: common.seed, out: common.out.clone(), levels };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.workers {
        if n == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run_file(cmd, &common.config, &overrides)) {
        Ok(report) => {
            for c in &report.summary.checks {
                let status = if c.passed { "pass" } else { "FAIL" };
                if c.detail.is_empty() {
                    println!("{status} {}", c.name);
                } else {
                    println!("{status} {}: {}", c.name, c.detail);
                }
            }
            println!("wrote {} files to {}", report.summary.files.len() + 1, report.output_dir.display());
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
