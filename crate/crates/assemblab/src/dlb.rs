//! Lend-when-idle load balancing between virtual ranks sharing a node.
//!
//! Every rank drives its own lane pool with capacity for the whole node.
//! A rank that reaches the blocking call lends the lane tokens it holds to
//! the co-located rank with the most unclaimed work; when the last rank of
//! the node arrives all tokens go back home. Reclamation happens at unit
//! boundaries: a lent lane finishes the unit it is running.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::Serialize;

use assemblab_core::kernels::KernelParams;
use assemblab_core::Mesh;

use crate::assembly::{assemble, subgrid_loop, Assembled, RankSetup, Strategy};
use crate::error::{Error, Result};
use crate::pool::{nanos_since, Block, LaneControl, PhasedLoop, RunOptions, DEFAULT_WATCHDOG};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NodeConfig {
    pub ranks_per_node: usize,
    pub lanes_per_rank: usize,
    pub dlb_enabled: bool,
}

impl NodeConfig {
    pub fn new(ranks_per_node: usize, lanes_per_rank: usize, dlb_enabled: bool) -> Result<Self> {
        if ranks_per_node == 0 || lanes_per_rank == 0 {
            return Err(Error::Config("ranks_per_node and lanes_per_rank must be at least 1".into()));
        }
        Ok(NodeConfig { ranks_per_node, lanes_per_rank, dlb_enabled })
    }

    /// Lanes available on the node.
    pub fn capacity(&self) -> usize {
        self.ranks_per_node * self.lanes_per_rank
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LedgerAction {
    Lend,
    Retrieve,
}

impl LedgerAction {
    pub fn name(self) -> &'static str {
        match self {
            LedgerAction::Lend => "lend",
            LedgerAction::Retrieve => "retrieve",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LedgerEvent {
    pub t_ns: u64,
    pub event: LedgerAction,
    pub from_rank: usize,
    pub to_rank: usize,
    pub tokens: usize,
}

/// Lane tokens of one node, each with a home rank and a current owner.
#[derive(Debug, Clone)]
pub struct CoreLedger {
    home: Vec<usize>,
    owner: Vec<usize>,
    events: Vec<LedgerEvent>,
}

impl CoreLedger {
    /// `lanes_per_rank` tokens homed at each of `ranks`.
    pub fn new(ranks: &[usize], lanes_per_rank: usize) -> Self {
        let home: Vec<usize> = ranks.iter().flat_map(|&r| std::iter::repeat_n(r, lanes_per_rank)).collect();
        CoreLedger { owner: home.clone(), home, events: Vec::new() }
    }

    pub fn capacity(&self) -> usize {
        self.home.len()
    }

    pub fn owned_by(&self, rank: usize) -> usize {
        self.owner.iter().filter(|&&o| o == rank).count()
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<LedgerEvent> {
        std::mem::take(&mut self.events)
    }

    /// Moves every token `from` holds to `to`; returns how many moved.
    pub fn lend(&mut self, from: usize, to: usize, t_ns: u64) -> usize {
        let mut moved = 0;
        for o in self.owner.iter_mut().filter(|o| **o == from) {
            *o = to;
            moved += 1;
        }
        if moved > 0 {
            self.events.push(LedgerEvent { t_ns, event: LedgerAction::Lend, from_rank: from, to_rank: to, tokens: moved });
        }
        moved
    }

    /// Returns every token to its home rank, one event per (holder, home) pair.
    pub fn retrieve_all(&mut self, t_ns: u64) {
        let mut moves: Vec<(usize, usize)> = self
            .owner
            .iter()
            .zip(&self.home)
            .filter(|(o, h)| o != h)
            .map(|(&o, &h)| (o, h))
            .collect();
        moves.sort_unstable();
        for group in moves.chunk_by(|a, b| a == b) {
            let (holder, home) = group[0];
            self.events.push(LedgerEvent {
                t_ns,
                event: LedgerAction::Retrieve,
                from_rank: holder,
                to_rank: home,
                tokens: group.len(),
            });
        }
        self.owner.clone_from(&self.home);
    }

    /// Every token is held by exactly one of the node's ranks.
    pub fn is_conserved(&self) -> bool {
        let mut ranks = self.home.clone();
        ranks.sort_unstable();
        ranks.dedup();
        ranks.iter().map(|&r| self.owned_by(r)).sum::<usize>() == self.capacity()
    }
}

struct Rendezvous {
    arrived: Vec<bool>,
    count: usize,
    generation: u64,
    aborted: bool,
    ledger: CoreLedger,
}

/// The ranks of one node, their lane pools and the rendezvous they meet at.
pub struct Node {
    cfg: NodeConfig,
    ranks: Vec<usize>,
    lanes: Vec<LaneControl>,
    progress: Vec<Arc<AtomicUsize>>,
    state: Mutex<Rendezvous>,
    cvar: Condvar,
    epoch: Instant,
    watchdog: Duration,
}

impl Node {
    pub fn new(cfg: NodeConfig, ranks: Vec<usize>, epoch: Instant) -> Result<Self> {
        if ranks.len() != cfg.ranks_per_node {
            return Err(Error::Config(format!("node expects {} ranks, got {}", cfg.ranks_per_node, ranks.len())));
        }
        let lanes = ranks.iter().map(|_| LaneControl::new(cfg.lanes_per_rank, cfg.capacity())).collect::<Result<_>>()?;
        let state = Rendezvous {
            arrived: vec![false; ranks.len()],
            count: 0,
            generation: 0,
            aborted: false,
            ledger: CoreLedger::new(&ranks, cfg.lanes_per_rank),
        };
        Ok(Node {
            progress: ranks.iter().map(|_| Arc::new(AtomicUsize::new(0))).collect(),
            cfg,
            ranks,
            lanes,
            state: Mutex::new(state),
            cvar: Condvar::new(),
            epoch,
            watchdog: DEFAULT_WATCHDOG,
        })
    }

    pub fn lanes(&self, local: usize) -> &LaneControl {
        &self.lanes[local]
    }

    /// Pool options for rank `local`, publishing its unclaimed work.
    pub fn run_options(&self, local: usize) -> RunOptions {
        RunOptions { epoch: self.epoch, watchdog: self.watchdog, progress: Some(Arc::clone(&self.progress[local])) }
    }

    /// Enters the simulated blocking call for rank `local` and returns once
    /// every rank of the node has entered it. Returns the release time.
    pub fn blocking_call(&self, local: usize) -> Result<u64> {
        let mut st = self.state.lock().unwrap();
        if st.aborted {
            return Err(Error::Protocol("node aborted by another rank".into()));
        }
        if st.arrived[local] {
            return Err(Error::Protocol(format!("rank {} entered the blocking call twice", self.ranks[local])));
        }
        st.arrived[local] = true;
        st.count += 1;
        let now = nanos_since(self.epoch);

        if st.count == self.ranks.len() {
            st.ledger.retrieve_all(now);
            for l in &self.lanes {
                l.resize_lanes(self.cfg.lanes_per_rank)?;
            }
            st.arrived.iter_mut().for_each(|a| *a = false);
            st.count = 0;
            st.generation += 1;
            self.cvar.notify_all();
            return Ok(now);
        }

        if self.cfg.dlb_enabled {
            let target = (0..self.ranks.len())
                .filter(|&r| !st.arrived[r])
                .map(|r| (self.progress[r].load(Ordering::SeqCst), r))
                .filter(|&(left, _)| left > 0)
                .max_by_key(|&(left, r)| (left, std::cmp::Reverse(r)));
            if let Some((_, to)) = target {
                let (from_id, to_id) = (self.ranks[local], self.ranks[to]);
                st.ledger.lend(from_id, to_id, now);
                self.lanes[to].resize_lanes(st.ledger.owned_by(to_id))?;
            }
        }

        let generation = st.generation;
        while st.generation == generation && !st.aborted {
            let (guard, timeout) = self.cvar.wait_timeout(st, self.watchdog).unwrap();
            st = guard;
            if timeout.timed_out() && st.generation == generation {
                st.aborted = true;
                self.cvar.notify_all();
                return Err(Error::Protocol("rendezvous timed out".into()));
            }
        }
        if st.generation == generation {
            return Err(Error::Protocol("node aborted by another rank".into()));
        }
        Ok(nanos_since(self.epoch))
    }

    /// Releases every waiting rank with an error; used when a rank fails.
    pub fn abort(&self) {
        self.state.lock().unwrap().aborted = true;
        self.cvar.notify_all();
    }

    pub fn ledger_snapshot(&self) -> CoreLedger {
        self.state.lock().unwrap().ledger.clone()
    }

    fn take_events(&self) -> Vec<LedgerEvent> {
        self.state.lock().unwrap().ledger.take_events()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Assembly,
    Subgrid,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Assembly => "assembly",
            Phase::Subgrid => "subgrid",
        }
    }
}

/// Elapsed seconds of one rank in one phase of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseRecord {
    pub step: usize,
    pub rank: usize,
    pub phase: Phase,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RankOutcome {
    pub rank: usize,
    pub assembled: Assembled,
    pub subgrid: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Indexed by rank.
    pub ranks: Vec<RankOutcome>,
    pub timing: Vec<PhaseRecord>,
    /// All nodes, sorted by time.
    pub ledger: Vec<LedgerEvent>,
    /// Time until the last rank of any node left each phase's blocking call.
    pub makespan: [f64; 2],
}

impl StepOutcome {
    pub fn phase_times(&self, phase: Phase) -> Vec<f64> {
        let mut v: Vec<(usize, f64)> =
            self.timing.iter().filter(|r| r.phase == phase).map(|r| (r.rank, r.seconds)).collect();
        v.sort_by_key(|p| p.0);
        v.into_iter().map(|p| p.1).collect()
    }
}

/// Checks the rank count against the node layout and the strategy against
/// the balancing mode. Returns the number of nodes.
pub fn check_layout(n_ranks: usize, cfg: &NodeConfig, strategy: Strategy) -> Result<usize> {
    if n_ranks == 0 || !n_ranks.is_multiple_of(cfg.ranks_per_node) {
        return Err(Error::Config(format!(
            "{n_ranks} ranks cannot be split into nodes of {} ranks",
            cfg.ranks_per_node
        )));
    }
    if cfg.dlb_enabled && !strategy.is_parallel() {
        return Err(Error::Config(format!("strategy {strategy} has no lane-level parallelism to balance")));
    }
    Ok(n_ranks / cfg.ranks_per_node)
}

fn seconds(ns: u64) -> f64 {
    ns as f64 * 1e-9
}

struct AbortOnPanic<'a>(&'a Node);

impl Drop for AbortOnPanic<'_> {
    fn drop(&mut self) {
        if std::thread::panicking() {
            self.0.abort();
        }
    }
}

/// Runs `body(node, local, global_rank)` for every rank of every node
/// concurrently. A failing rank aborts its node so the others return.
fn run_ranks<T: Send>(
    cfg: &NodeConfig,
    n_ranks: usize,
    epoch: Instant,
    body: impl Fn(&Node, usize, usize) -> Result<T> + Sync,
) -> Result<(Vec<T>, Vec<LedgerEvent>)> {
    let nodes: Vec<Node> = (0..n_ranks / cfg.ranks_per_node)
        .map(|n| Node::new(*cfg, (n * cfg.ranks_per_node..(n + 1) * cfg.ranks_per_node).collect(), epoch))
        .collect::<Result<_>>()?;
    let results: Vec<Result<T>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..n_ranks)
            .map(|rank| {
                let node = &nodes[rank / cfg.ranks_per_node];
                let body = &body;
                s.spawn(move || {
                    let _guard = AbortOnPanic(node);
                    let out = body(node, rank % cfg.ranks_per_node, rank);
                    if out.is_err() {
                        node.abort();
                    }
                    out
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("rank thread panicked")).collect()
    });
    // Report the root cause rather than the abort it triggered in others.
    let mut outs = Vec::with_capacity(n_ranks);
    let mut first_err = None;
    for r in results {
        match r {
            Ok(v) => outs.push(v),
            Err(Error::Protocol(m)) if m.contains("aborted") => {
                first_err.get_or_insert(Error::Protocol(m));
            }
            Err(e) => return Err(e),
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    let mut ledger: Vec<LedgerEvent> = nodes.iter().flat_map(|n| n.take_events()).collect();
    // Stable, so each node keeps its own event order.
    ledger.sort_by_key(|e| e.t_ns);
    Ok((outs, ledger))
}

/// Inputs of one hybrid step.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub mesh: &'a Mesh,
    /// One setup per rank; ranks `k*R..(k+1)*R` share node `k`.
    pub setups: &'a [RankSetup],
    pub params: &'a KernelParams,
    /// Nodal field read by the subgrid loop.
    pub field: &'a [f64],
    pub step: usize,
    pub seed: Option<u64>,
}

/// One step of every rank: element assembly, blocking call, subgrid loop,
/// blocking call. Lanes are lent at each blocking call when enabled.
pub fn run_hybrid_step(input: &StepInput<'_>, cfg: &NodeConfig) -> Result<StepOutcome> {
    let strategy = input.setups.first().map(|s| s.strategy).unwrap_or(Strategy::Sequential);
    if input.setups.iter().any(|s| s.strategy != strategy) {
        return Err(Error::Config("all ranks of a step must use one strategy".into()));
    }
    check_layout(input.setups.len(), cfg, strategy)?;
    let epoch = Instant::now();
    let (per_rank, ledger) = run_ranks(cfg, input.setups.len(), epoch, |node, local, rank| {
        let setup = &input.setups[rank];
        let opts = node.run_options(local);
        let lanes = node.lanes(local);
        let t0 = nanos_since(epoch);
        let assembled = assemble(input.mesh, setup, input.params, lanes, &opts, input.seed)?;
        let t_asm = nanos_since(epoch) - t0;
        let released = node.blocking_call(local)?;
        let t1 = nanos_since(epoch).max(released);
        let pool = strategy.is_parallel().then_some((lanes, &opts));
        let subgrid = subgrid_loop(input.mesh, &setup.chunking, input.field, input.params.work, pool)?;
        let t_sub = nanos_since(epoch) - t1;
        let done = node.blocking_call(local)?;
        Ok((RankOutcome { rank, assembled, subgrid }, [t_asm, t_sub], [released, done.saturating_sub(released)]))
    })?;
    let mut timing = Vec::with_capacity(per_rank.len() * 2);
    let mut makespan = [0.0f64; 2];
    let mut ranks = Vec::with_capacity(per_rank.len());
    for (out, times, spans) in per_rank {
        for (phase, t) in [Phase::Assembly, Phase::Subgrid].into_iter().zip(times) {
            timing.push(PhaseRecord { step: input.step, rank: out.rank, phase, seconds: seconds(t) });
        }
        makespan[0] = makespan[0].max(seconds(spans[0]));
        makespan[1] = makespan[1].max(seconds(spans[1]));
        ranks.push(out);
    }
    Ok(StepOutcome { ranks, timing, ledger, makespan })
}

/// Outcome of the synthetic imbalance benchmark.
#[derive(Debug, Clone)]
pub struct SyntheticOutcome {
    /// Seconds until every rank has entered the blocking call.
    pub makespan: f64,
    /// Seconds until each rank finished its own units.
    pub rank_done: Vec<f64>,
    pub ledger: Vec<LedgerEvent>,
}

/// Each rank runs `units[rank]` units of `unit` duration (sleeping, so lanes
/// do not compete for processors) and then enters the blocking call.
pub fn run_synthetic(cfg: &NodeConfig, units: &[usize], unit: Duration) -> Result<SyntheticOutcome> {
    check_layout(units.len(), cfg, Strategy::Atomic)?;
    let epoch = Instant::now();
    let (per_rank, ledger) = run_ranks(cfg, units.len(), epoch, |node, local, rank| {
        PhasedLoop::new(vec![units[rank]], |_: Block, _| std::thread::sleep(unit))
            .run(node.lanes(local), &node.run_options(local))?;
        let done = nanos_since(epoch);
        let released = node.blocking_call(local)?;
        Ok((done, released))
    })?;
    Ok(SyntheticOutcome {
        makespan: per_rank.iter().map(|p| seconds(p.1)).fold(0.0, f64::max),
        rank_done: per_rank.iter().map(|p| seconds(p.0)).collect(),
        ledger,
    })
}
