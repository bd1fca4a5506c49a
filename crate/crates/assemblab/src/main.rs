use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use assemblab::bench::{run_benchmark, BenchOptions};
use assemblab::config::BenchConfig;

/// Runs a matrix of assembly configurations and writes timing, balance and
/// equivalence reports.
#[derive(Debug, Parser)]
#[command(name = "assemblab", version)]
struct Cli {
    /// Run specification (key = value lines).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory for reports, traces and dumps.
    #[arg(long, value_name = "DIR", default_value = "assemblab-out")]
    out: PathBuf,
    /// Overrides the seed given in the config.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// One step per configuration: checks only, no timing rows.
    #[arg(long)]
    verify_only: bool,
    /// Write coordinate dumps of every rank matrix and right-hand side.
    #[arg(long)]
    dump_matrices: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match BenchConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let opts = BenchOptions { seed: cli.seed, verify_only: cli.verify_only, dump_matrices: cli.dump_matrices };
    let summary = match run_benchmark(&config, &cli.out, &opts) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for note in &summary.skipped {
        eprintln!("skipped: {note}");
    }
    for c in &summary.checks {
        println!(
            "{:<48} max_rel={:.3e} violations={} ledger={} {}",
            c.config,
            c.max_rel,
            c.violations,
            if c.ledger_ok { "ok" } else { "BAD" },
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    for s in &summary.solver {
        println!(
            "solver {:<16} iterations={} max_error={:.3e} {}",
            s.strategy,
            s.iterations,
            s.max_error,
            if s.pass { "PASS" } else { "FAIL" }
        );
    }
    for r in &summary.report.rows {
        println!(
            "{} {} chunk={} {}x{} dlb={} {:<8} median={:.6}s lb={:.3}",
            r.mesh, r.strategy, r.chunk, r.ranks_per_node, r.lanes_per_rank, r.dlb, r.phase, r.median_s, r.lb_measured
        );
    }
    if summary.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
