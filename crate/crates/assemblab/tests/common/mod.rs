#![allow(dead_code)]

use std::sync::atomic::{AtomicU32, Ordering};
use std::time::Instant;

use assemblab::pool::{LaneControl, RunOptions, TraceEvent};
use assemblab::scheduler::{run_commutative_on, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random exclusion sets over `resources` ids, 1 to 4 per task.
pub fn random_exclusions(seed: u64, tasks: usize, resources: usize) -> Vec<(Vec<usize>, i64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..tasks)
        .map(|_| {
            let k = rng.random_range(1..=4);
            let set = (0..k).map(|_| rng.random_range(0..resources)).collect();
            (set, rng.random_range(0..8))
        })
        .collect()
}

#[derive(Debug)]
pub struct StressResult {
    pub instrumented_violations: u64,
    pub observed_violations: u32,
    pub runs_per_task: Vec<u32>,
    pub trace_overlaps: usize,
    pub events: usize,
    pub max_concurrency: usize,
}

impl StressResult {
    pub fn ok(&self) -> bool {
        self.instrumented_violations == 0
            && self.observed_violations == 0
            && self.trace_overlaps == 0
            && self.runs_per_task.iter().all(|&r| r == 1)
    }
}

/// Runs a random exclusion graph and checks it with counters kept outside
/// the engine: per-resource occupancy, runs per task, and trace overlap.
pub fn scheduler_stress(seed: u64, tasks: usize, resources: usize, lanes: usize) -> assemblab::Result<StressResult> {
    let specs = random_exclusions(seed, tasks, resources);
    let occupancy: Vec<AtomicU32> = (0..resources).map(|_| AtomicU32::new(0)).collect();
    let observed = AtomicU32::new(0);
    let runs: Vec<AtomicU32> = (0..tasks).map(|_| AtomicU32::new(0)).collect();
    let list: Vec<Task> = specs
        .iter()
        .enumerate()
        .map(|(id, (set, prio))| {
            let (occupancy, observed, runs) = (&occupancy, &observed, &runs);
            let mut distinct = set.clone();
            distinct.sort_unstable();
            distinct.dedup();
            Task::new(id, set.clone(), *prio, move |_| {
                runs[id].fetch_add(1, Ordering::SeqCst);
                for &r in &distinct {
                    if occupancy[r].fetch_add(1, Ordering::SeqCst) != 0 {
                        observed.fetch_add(1, Ordering::SeqCst);
                    }
                }
                // Hand the processor to other lanes while holding the set.
                std::thread::yield_now();
                std::hint::black_box((0..200u64).sum::<u64>());
                for &r in &distinct {
                    occupancy[r].fetch_sub(1, Ordering::SeqCst);
                }
            })
        })
        .collect();
    let control = LaneControl::fixed(lanes)?;
    let trace = run_commutative_on(&list, &control, Some(seed), &RunOptions::default())?;
    let overlaps = exclusion_overlaps(&trace.events, &specs);
    Ok(StressResult {
        instrumented_violations: trace.total_violations(),
        max_concurrency: trace.max_concurrency(),
        observed_violations: observed.load(Ordering::SeqCst),
        runs_per_task: runs.iter().map(|r| r.load(Ordering::SeqCst)).collect(),
        trace_overlaps: overlaps,
        events: trace.events.len(),
    })
}

/// Pairs of trace intervals that share a resource and overlap in time.
pub fn exclusion_overlaps(events: &[TraceEvent], specs: &[(Vec<usize>, i64)]) -> usize {
    let mut per_resource: std::collections::HashMap<usize, Vec<(u64, u64)>> = Default::default();
    for e in events {
        let mut set = specs[e.task].0.clone();
        set.sort_unstable();
        set.dedup();
        for r in set {
            per_resource.entry(r).or_default().push((e.start_ns, e.end_ns));
        }
    }
    let mut bad = 0;
    for spans in per_resource.values_mut() {
        spans.sort_unstable();
        bad += spans.windows(2).filter(|w| w[0].1 > w[1].0).count();
    }
    bad
}

pub fn elapsed_ns(epoch: Instant) -> u64 {
    epoch.elapsed().as_nanos() as u64
}

use assemblab::assembly::{assemble_rank, AssemblyConfig, Strategy};
use assemblab::core::assembly::{assemble_sequential, compare_systems, RankLayout, COMPARE_FLOOR};
use assemblab::core::kernels::KernelParams;
use assemblab::core::mesh::NodeToElem;
use assemblab::core::Mesh;

pub const PARALLEL: [Strategy; 4] = [Strategy::Atomic, Strategy::Coloring, Strategy::LocalPartition, Strategy::Multidep];

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub strategy: Strategy,
    pub lanes: usize,
    pub chunk: usize,
    /// Infinite when the sparsity patterns differ.
    pub max_rel: f64,
    pub violations: u64,
}

/// Every parallel strategy over `lanes x chunks`, compared with the
/// sequential assembly of the same elements.
pub fn equivalence_sweep(
    mesh: &Mesh,
    n2e: &NodeToElem,
    elements: &[usize],
    lanes: &[usize],
    chunks: &[usize],
) -> assemblab::Result<Vec<SweepRow>> {
    let params = KernelParams::default();
    let layout = RankLayout::new(mesh, elements);
    let (a, b) = assemble_sequential(mesh, &layout, &params)?;
    let mut rows = Vec::new();
    for strategy in PARALLEL {
        for &chunk in chunks {
            for &l in lanes {
                let out = assemble_rank(mesh, n2e, elements, &AssemblyConfig::new(strategy, chunk, l)?, &params)?;
                let max_rel = compare_systems((&a, &b), (&out.matrix, &out.rhs), COMPARE_FLOOR).map_or(f64::INFINITY, |d| d.max_rel);
                rows.push(SweepRow { strategy, lanes: l, chunk, max_rel, violations: out.violations });
            }
        }
    }
    Ok(rows)
}

use assemblab::dlb::{run_synthetic, NodeConfig};
use std::time::Duration;

/// Best-of-three makespans with balancing off and on for one node of
/// single-lane ranks.
pub fn synthetic_makespans(units: &[usize], unit: Duration) -> assemblab::Result<(f64, f64)> {
    let (mut off, mut on) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..3 {
        off = off.min(run_synthetic(&NodeConfig::new(units.len(), 1, false)?, units, unit)?.makespan);
        on = on.min(run_synthetic(&NodeConfig::new(units.len(), 1, true)?, units, unit)?.makespan);
    }
    Ok((off, on))
}
