//! Benchmark driver: runs every configuration of a [`BenchConfig`], checks
//! each against the sequential reference and writes the reports.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use assemblab_core::assembly::{assemble_sequential, compare_systems, RankLayout, COMPARE_FLOOR, COMPARE_TOLERANCE};
use assemblab_core::kernels::{KernelParams, WorkModel};
use assemblab_core::mesh::{build_node_to_elem, generate_box_mesh, NodeToElem};
use assemblab_core::metrics::{lb_measured, lb_theoretical_counts, lb_theoretical_weighted, median};
use assemblab_core::partition::{partition_weighted_greedy, RankPartition};
use assemblab_core::sparse::{CsrMatrix, Rhs};
use assemblab_core::Mesh;

use crate::assembly::{AssemblyConfig, RankSetup, Strategy};
use crate::config::BenchConfig;
use crate::dlb::{run_hybrid_step, LedgerEvent, NodeConfig, Phase, PhaseRecord, StepInput};
use crate::error::{Error, Result};
use crate::io::{self, Report, ReportRow};
use crate::validate::manufactured_linear;

#[derive(Debug, Clone, Default)]
pub struct BenchOptions {
    /// Replaces the configured seed.
    pub seed: Option<u64>,
    /// One step per configuration, no timing report rows.
    pub verify_only: bool,
    pub dump_matrices: bool,
}

/// Outcome of one configuration's checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub config: String,
    pub strategy: String,
    pub chunk: usize,
    pub nodes: usize,
    pub ranks_per_node: usize,
    pub lanes_per_rank: usize,
    pub dlb: String,
    /// Worst entrywise relative difference against the reference, over all
    /// ranks and steps.
    pub max_rel: f64,
    pub subgrid_max_rel: f64,
    pub violations: u64,
    pub ledger_ok: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverRow {
    pub strategy: String,
    pub iterations: usize,
    pub max_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct BenchSummary {
    pub report: Report,
    pub checks: Vec<CheckRow>,
    pub solver: Vec<SolverRow>,
    /// Notes about combinations that were not run.
    pub skipped: Vec<String>,
}

impl BenchSummary {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass) && self.solver.iter().all(|s| s.pass)
    }
}

pub const SOLVER_TOLERANCE: f64 = 1e-10;

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

/// Replays a ledger log starting from `lanes_per_rank` tokens per rank.
/// Fails if a rank lends tokens it does not hold or a token leaves its node.
/// Returns the final ownership counts.
pub fn replay_ledger(events: &[LedgerEvent], cfg: &NodeConfig, n_ranks: usize) -> Result<Vec<usize>> {
    let mut owned = vec![cfg.lanes_per_rank; n_ranks];
    for ev in events {
        let bad = |m: &str| Error::Protocol(format!("ledger event at {} ns: {m}", ev.t_ns));
        if ev.from_rank >= n_ranks || ev.to_rank >= n_ranks {
            return Err(bad("unknown rank"));
        }
        if ev.from_rank / cfg.ranks_per_node != ev.to_rank / cfg.ranks_per_node {
            return Err(bad("token moved across nodes"));
        }
        if owned[ev.from_rank] < ev.tokens {
            return Err(bad("rank gives more tokens than it holds"));
        }
        owned[ev.from_rank] -= ev.tokens;
        owned[ev.to_rank] += ev.tokens;
    }
    Ok(owned)
}

/// Worst entrywise relative difference between two vectors.
fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| assemblab_core::assembly::relative_difference(*x, *y, COMPARE_FLOOR))
        .fold(0.0, f64::max)
}

struct Reference {
    partition: RankPartition,
    systems: Vec<(CsrMatrix, Rhs)>,
    layouts: Vec<RankLayout>,
    subgrid: Vec<Vec<f64>>,
}

fn reference(mesh: &Mesh, n_ranks: usize, weights: &[f64], params: &KernelParams, field: &[f64]) -> Result<Reference> {
    let partition = partition_weighted_greedy(mesh, n_ranks, weights)?;
    let mut systems = Vec::with_capacity(n_ranks);
    let mut layouts = Vec::with_capacity(n_ranks);
    let mut subgrid = Vec::with_capacity(n_ranks);
    for r in 0..n_ranks {
        let layout = RankLayout::new(mesh, partition.rank_elements(r));
        systems.push(assemble_sequential(mesh, &layout, params)?);
        subgrid.push(
            partition
                .rank_elements(r)
                .iter()
                .map(|&e| assemblab_core::kernels::element_subgrid(mesh, e, field, params.work))
                .collect(),
        );
        layouts.push(layout);
    }
    Ok(Reference { partition, systems, layouts, subgrid })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Runs the whole configuration matrix and writes everything under `out`.
pub fn run_benchmark(config: &BenchConfig, out: &Path, opts: &BenchOptions) -> Result<BenchSummary> {
    let seed = opts.seed.unwrap_or(config.seed);
    let mesh = generate_box_mesh(config.nx, config.ny, config.nz, config.layers)?;
    let n2e = build_node_to_elem(&mesh);
    let weights = config.weights.kind_weights().element_weights(&mesh);
    let work = WorkModel::new(config.repeat)?;
    let params = KernelParams { source: config.source, work };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field: Vec<f64> = (0..mesh.nnode()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let label = config.mesh_label();
    fs::create_dir_all(out)?;

    let mut summary =
        BenchSummary { report: Report { seed, rows: Vec::new() }, checks: Vec::new(), solver: Vec::new(), skipped: Vec::new() };

    for &(rpn, lpr) in &config.node_configs {
        let n_ranks = config.nodes * rpn;
        let reference = reference(&mesh, n_ranks, &weights, &params, &field)?;
        let lb_w = lb_theoretical_weighted(&reference.partition, &weights);
        let lb_nw = lb_theoretical_counts(&reference.partition);
        if opts.dump_matrices {
            for r in 0..n_ranks {
                let stem = out.join("matrices").join(format!("reference_n{}_{rpn}x{lpr}_rank{r}", config.nodes));
                io::write_coo(create(&stem.with_extension("coo"))?, &reference.systems[r].0, &reference.layouts[r].numbering)?;
                io::write_rhs(create(&stem.with_extension("rhs"))?, &reference.systems[r].1, &reference.layouts[r].numbering)?;
            }
        }

        for &strategy in &config.strategies {
            // The sequential loop ignores chunking; run it once.
            let chunks: &[usize] = if strategy.is_parallel() { &config.chunks } else { &config.chunks[..1] };
            for &chunk in chunks {
                for &dlb in &config.dlb {
                    if dlb && !strategy.is_parallel() {
                        summary.skipped.push(format!("{strategy} with dlb=on: no lane-level parallelism to balance"));
                        continue;
                    }
                    let node = NodeConfig::new(rpn, lpr, dlb)?;
                    let run = RunSpec { config, mesh: &mesh, n2e: &n2e, params: &params, field: &field, seed, strategy, chunk, node };
                    let (check, rows) = run_one(&run, &reference, &label, (lb_w, lb_nw), out, opts)?;
                    summary.checks.push(check);
                    summary.report.rows.extend(rows);
                }
            }
        }
    }

    // Solver validation on a single rank, every configured strategy.
    let lanes = config.node_configs.iter().map(|c| c.1).max().unwrap_or(1);
    let mut iterations = None;
    for &strategy in &config.strategies {
        let cfg = AssemblyConfig::new(strategy, config.chunks[0], lanes)?;
        let check = manufactured_linear(&mesh, &n2e, &cfg, work)?;
        let first = *iterations.get_or_insert(check.iterations);
        summary.solver.push(SolverRow {
            strategy: strategy.to_string(),
            iterations: check.iterations,
            max_error: check.max_error,
            pass: check.max_error <= SOLVER_TOLERANCE && check.iterations == first,
        });
    }

    summary.report.write_csv(create(&out.join("report.csv"))?)?;
    summary.report.write_json(create(&out.join("report.json"))?)?;
    io::write_csv(create(&out.join("equivalence.csv"))?, &summary.checks)?;
    io::write_csv(create(&out.join("solver.csv"))?, &summary.solver)?;
    Ok(summary)
}

struct RunSpec<'a> {
    config: &'a BenchConfig,
    mesh: &'a Mesh,
    n2e: &'a NodeToElem,
    params: &'a KernelParams,
    field: &'a [f64],
    seed: u64,
    strategy: Strategy,
    chunk: usize,
    node: NodeConfig,
}

fn run_one(
    run: &RunSpec<'_>,
    reference: &Reference,
    mesh_label: &str,
    (lb_w, lb_nw): (f64, f64),
    out: &Path,
    opts: &BenchOptions,
) -> Result<(CheckRow, Vec<ReportRow>)> {
    let RunSpec { config, mesh, n2e, params, field, seed, strategy, chunk, node } = *run;
    let n_ranks = config.nodes * node.ranks_per_node;
    let name = format!(
        "{strategy}_c{chunk}_n{}_{}x{}_dlb{}",
        config.nodes,
        node.ranks_per_node,
        node.lanes_per_rank,
        on_off(node.dlb_enabled)
    );
    let setups = (0..n_ranks)
        .map(|r| RankSetup::new(mesh, n2e, reference.partition.rank_elements(r), strategy, chunk))
        .collect::<Result<Vec<_>>>()?;
    io::write_csv(create(&out.join("partitions").join(format!("{name}.csv")))?, &io::partition_rows(&reference.partition, &setups))?;

    let (warmup, steps) = if opts.verify_only { (0, 1) } else { (config.warmup, config.steps) };
    let mut check = CheckRow {
        config: name.clone(),
        strategy: strategy.to_string(),
        chunk,
        nodes: config.nodes,
        ranks_per_node: node.ranks_per_node,
        lanes_per_rank: node.lanes_per_rank,
        dlb: on_off(node.dlb_enabled).into(),
        max_rel: 0.0,
        subgrid_max_rel: 0.0,
        violations: 0,
        ledger_ok: true,
        pass: false,
    };
    let mut timing: Vec<PhaseRecord> = Vec::new();
    let mut ledger: Vec<LedgerEvent> = Vec::new();
    let mut makespans: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut last_trace = Vec::new();
    for step in 0..warmup + steps {
        let input = StepInput { mesh, setups: &setups, params, field, step, seed: Some(seed.wrapping_add(step as u64)) };
        let outcome = run_hybrid_step(&input, &node)?;
        for (r, rank) in outcome.ranks.iter().enumerate() {
            let (ra, rb) = &reference.systems[r];
            let diff = compare_systems((ra, rb), (&rank.assembled.matrix, &rank.assembled.rhs), COMPARE_FLOOR);
            check.max_rel = match diff {
                Some(d) if !d.max_rel.is_nan() => check.max_rel.max(d.max_rel),
                _ => f64::INFINITY,
            };
            check.subgrid_max_rel = check.subgrid_max_rel.max(max_rel(&reference.subgrid[r], &rank.subgrid));
            check.violations += rank.assembled.violations;
        }
        let final_owned = replay_ledger(&outcome.ledger, &node, n_ranks);
        check.ledger_ok &= matches!(final_owned, Ok(o) if o.iter().all(|&t| t == node.lanes_per_rank));
        if step >= warmup {
            makespans[0].push(outcome.makespan[0]);
            makespans[1].push(outcome.makespan[1]);
            timing.extend(outcome.timing.iter().copied());
            ledger.extend(outcome.ledger.iter().copied());
        }
        if step + 1 == warmup + steps {
            last_trace = outcome.ranks[0].assembled.trace.clone();
        }
        if opts.dump_matrices && step == 0 {
            for (r, rank) in outcome.ranks.iter().enumerate() {
                let stem = out.join("matrices").join(format!("{name}_rank{r}"));
                io::write_coo(create(&stem.with_extension("coo"))?, &rank.assembled.matrix, &reference.layouts[r].numbering)?;
                io::write_rhs(create(&stem.with_extension("rhs"))?, &rank.assembled.rhs, &reference.layouts[r].numbering)?;
            }
        }
    }
    check.pass = check.max_rel <= COMPARE_TOLERANCE
        && check.subgrid_max_rel <= COMPARE_TOLERANCE
        && check.violations == 0
        && check.ledger_ok;

    io::write_trace(create(&out.join("traces").join(format!("{name}.csv")))?, &last_trace)?;
    io::write_ledger(create(&out.join("ledger").join(format!("{name}.csv")))?, &ledger)?;
    io::write_phases(create(&out.join("phases").join(format!("{name}.csv")))?, &timing)?;

    let mut rows = Vec::new();
    if !opts.verify_only {
        for (k, phase) in [Phase::Assembly, Phase::Subgrid].into_iter().enumerate() {
            let per_rank: Vec<f64> = (0..n_ranks)
                .map(|r| {
                    let t: Vec<f64> =
                        timing.iter().filter(|p| p.rank == r && p.phase == phase).map(|p| p.seconds).collect();
                    median(&t).unwrap_or(0.0)
                })
                .collect();
            rows.push(ReportRow {
                mesh: mesh_label.to_string(),
                nelem: mesh.nelem(),
                strategy: strategy.to_string(),
                dlb: on_off(node.dlb_enabled).into(),
                nodes: config.nodes,
                ranks_per_node: node.ranks_per_node,
                lanes_per_rank: node.lanes_per_rank,
                chunk,
                phase: phase.name().into(),
                median_s: median(&makespans[k]).unwrap_or(0.0),
                lb_measured: lb_measured(&per_rank).unwrap_or(f64::NAN),
                lb_w,
                lb_nw,
            });
        }
    }
    Ok((check, rows))
}
