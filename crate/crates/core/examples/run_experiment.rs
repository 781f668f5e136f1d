//! Runs a config-driven experiment in-process and prints its checks.
//!
//! `cargo run --example run_experiment -- examples/configs/uncertain_volatility.toml solve-2bsdej`

use bsdej_lab::experiment::{run, config_hash, Command, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "examples/configs/heat_convergence.toml".into());
    let cmd = match args.next().as_deref().unwrap_or("convergence") {
        "simulate" => Command::Simulate,
        "solve-bsdej" => Command::SolveBsdej,
        "solve-2bsdej" => Command::Solve2bsdej,
        "solve-pide" => Command::SolvePide,
        "compare-representation" => Command::CompareRepresentation,
        "check-k" => Command::CheckK,
        "appendix-checks" => Command::AppendixChecks,
        "convergence" => Command::Convergence,
        other => return Err(format!("unknown command {other}").into()),
    };
    let text = std::fs::read_to_string(&path)?;
    let cfg = ExperimentConfig::from_toml_str(&text)?;
    let out = run(cmd, &cfg, &config_hash(&text))?;
    for c in &out.checks {
        println!("{} {} {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    for (name, body) in &out.files {
        println!("--- {name} ({} lines)", body.lines().count());
    }
    if let Some(table) = out.files.get("convergence.csv") {
        print!("{table}");
    }
    Ok(())
}
