//! Resizable worker pool shared by the dynamic element loops and the
//! commutative task scheduler.
//!
//! A pool run spawns `capacity` workers. Worker `i` only claims work while
//! `i < target`, so lending lanes to a rank is a change of `target`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

type Waker = Arc<dyn Fn() + Send + Sync>;

/// Number of active lanes of one engine, adjustable while it runs.
pub struct LaneControl {
    capacity: usize,
    target: AtomicUsize,
    waker: Mutex<Option<Waker>>,
}

impl std::fmt::Debug for LaneControl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LaneControl").field("capacity", &self.capacity).field("target", &self.lanes()).finish()
    }
}

impl LaneControl {
    /// `lanes` active out of `capacity` available workers.
    pub fn new(lanes: usize, capacity: usize) -> Result<Self> {
        if lanes == 0 || lanes > capacity {
            return Err(Error::InvalidArgument(format!("lanes must be in 1..={capacity}, got {lanes}")));
        }
        Ok(LaneControl { capacity, target: AtomicUsize::new(lanes), waker: Mutex::new(None) })
    }

    pub fn fixed(lanes: usize) -> Result<Self> {
        Self::new(lanes, lanes)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn lanes(&self) -> usize {
        self.target.load(Ordering::SeqCst)
    }

    /// Changes the active lane count. Running units finish on their lane;
    /// lanes above the new count claim nothing further.
    pub fn resize_lanes(&self, lanes: usize) -> Result<()> {
        if lanes == 0 {
            return Err(Error::InvalidArgument("lane count must be at least 1".into()));
        }
        if lanes > self.capacity {
            return Err(Error::InvalidArgument(format!("lane count {lanes} exceeds capacity {}", self.capacity)));
        }
        self.target.store(lanes, Ordering::SeqCst);
        let waker = self.waker.lock().unwrap().clone();
        if let Some(w) = waker {
            w();
        }
        Ok(())
    }

    fn attach(&self, waker: Waker) -> Result<()> {
        let mut slot = self.waker.lock().unwrap();
        if slot.is_some() {
            return Err(Error::InvalidArgument("lane control already drives a running pool".into()));
        }
        *slot = Some(waker);
        Ok(())
    }

    fn detach(&self) {
        *self.waker.lock().unwrap() = None;
    }
}

/// One executed unit of work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct TraceEvent {
    pub task: usize,
    pub lane: usize,
    pub start_ns: u64,
    pub end_ns: u64,
}

pub const DEFAULT_WATCHDOG: Duration = Duration::from_secs(30);

/// Settings shared by every pool run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Time origin for trace timestamps.
    pub epoch: Instant,
    /// Abort when no unit completes for this long.
    pub watchdog: Duration,
    /// Unclaimed units, published for lending decisions.
    pub progress: Option<Arc<AtomicUsize>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { epoch: Instant::now(), watchdog: DEFAULT_WATCHDOG, progress: None }
    }
}

pub(crate) fn nanos_since(epoch: Instant) -> u64 {
    epoch.elapsed().as_nanos() as u64
}

pub(crate) enum Pick<U> {
    Run(U),
    Wait,
    Done,
}

/// Scheduling policy of a pool run. `pick` and `finish` run under the pool
/// lock; `execute` runs outside it.
pub(crate) trait Plan: Sync {
    type Unit: Copy + Send;
    type State: Send + 'static;

    fn pick(&self, state: &mut Self::State) -> Pick<Self::Unit>;
    fn finish(&self, state: &mut Self::State, unit: Self::Unit);
    fn execute(&self, unit: Self::Unit, lane: usize);
    fn unit_id(&self, unit: Self::Unit) -> usize;
    fn remaining(&self, state: &Self::State) -> usize;
    fn total(&self) -> usize;
}

struct Shared<S> {
    plan_state: S,
    running: usize,
    completed: usize,
    last_progress: Instant,
    failure: Option<Error>,
    trace: Vec<TraceEvent>,
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

/// Runs `plan` to completion on the lanes of `lanes`, returning the trace in
/// completion order.
pub(crate) fn run_plan<P: Plan>(plan: &P, state: P::State, lanes: &LaneControl, opts: &RunOptions) -> Result<Vec<TraceEvent>> {
    let shared = Arc::new((
        Mutex::new(Shared {
            plan_state: state,
            running: 0,
            completed: 0,
            last_progress: Instant::now(),
            failure: None,
            trace: Vec::with_capacity(plan.total()),
        }),
        Condvar::new(),
    ));
    let waker: Waker = {
        let shared = Arc::clone(&shared);
        Arc::new(move || {
            let _guard = shared.0.lock().unwrap();
            shared.1.notify_all();
        })
    };
    lanes.attach(waker)?;
    let publish = |st: &Shared<P::State>| {
        if let Some(p) = &opts.progress {
            p.store(plan.remaining(&st.plan_state), Ordering::SeqCst);
        }
    };
    publish(&shared.0.lock().unwrap());

    std::thread::scope(|scope| {
        for lane in 0..lanes.capacity() {
            let shared = &shared;
            scope.spawn(move || {
                let (lock, cvar) = &**shared;
                let mut st = lock.lock().unwrap();
                loop {
                    if st.failure.is_some() {
                        return;
                    }
                    if st.completed == plan.total() {
                        cvar.notify_all();
                        return;
                    }
                    let pick = if lane < lanes.lanes() { plan.pick(&mut st.plan_state) } else { Pick::Wait };
                    match pick {
                        Pick::Done => {
                            if st.running == 0 {
                                cvar.notify_all();
                                return;
                            }
                        }
                        Pick::Run(unit) => {
                            st.running += 1;
                            publish(&st);
                            drop(st);
                            let start_ns = nanos_since(opts.epoch);
                            let outcome = catch_unwind(AssertUnwindSafe(|| plan.execute(unit, lane)));
                            let end_ns = nanos_since(opts.epoch);
                            st = lock.lock().unwrap();
                            st.running -= 1;
                            if let Err(payload) = outcome {
                                st.failure = Some(Error::TaskPanicked {
                                    task: plan.unit_id(unit),
                                    message: panic_message(payload.as_ref()),
                                });
                                cvar.notify_all();
                                return;
                            }
                            plan.finish(&mut st.plan_state, unit);
                            st.completed += 1;
                            st.last_progress = Instant::now();
                            st.trace.push(TraceEvent { task: plan.unit_id(unit), lane, start_ns, end_ns });
                            cvar.notify_all();
                            continue;
                        }
                        Pick::Wait => {}
                    }
                    let (guard, _) = cvar.wait_timeout(st, opts.watchdog).unwrap();
                    st = guard;
                    if st.failure.is_none()
                        && st.completed < plan.total()
                        && st.last_progress.elapsed() >= opts.watchdog
                    {
                        st.failure = Some(Error::Deadlock {
                            completed: st.completed,
                            total: plan.total(),
                            trace: std::mem::take(&mut st.trace),
                        });
                        cvar.notify_all();
                        return;
                    }
                }
            });
        }
    });
    lanes.detach();

    // A concurrent resize may still hold a clone of the waker, so take the
    // results out instead of unwrapping the Arc.
    let mut st = shared.0.lock().unwrap();
    if let Some(p) = &opts.progress {
        p.store(0, Ordering::SeqCst);
    }
    match st.failure.take() {
        Some(e) => Err(e),
        None => Ok(std::mem::take(&mut st.trace)),
    }
}

/// Phased dynamic loop: each phase is a number of blocks handed out through
/// a shared monotone cursor; a phase starts once every block of the previous
/// one has finished.
pub(crate) struct PhasedLoop<F> {
    phases: Vec<usize>,
    total: usize,
    body: F,
}

/// Block `index` of phase `phase`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Block {
    pub phase: usize,
    pub index: usize,
    pub id: usize,
}

pub(crate) struct LoopState {
    phase: usize,
    cursor: usize,
    in_flight: usize,
    issued: usize,
}

impl<F: Fn(Block, usize) + Sync> PhasedLoop<F> {
    pub fn new(phases: Vec<usize>, body: F) -> Self {
        let total = phases.iter().sum();
        PhasedLoop { phases, total, body }
    }

    pub fn run(&self, lanes: &LaneControl, opts: &RunOptions) -> Result<Vec<TraceEvent>> {
        run_plan(self, LoopState { phase: 0, cursor: 0, in_flight: 0, issued: 0 }, lanes, opts)
    }
}

impl<F: Fn(Block, usize) + Sync> Plan for PhasedLoop<F> {
    type Unit = Block;
    type State = LoopState;

    fn pick(&self, st: &mut LoopState) -> Pick<Block> {
        loop {
            if st.phase >= self.phases.len() {
                return Pick::Done;
            }
            if st.cursor < self.phases[st.phase] {
                let b = Block { phase: st.phase, index: st.cursor, id: st.issued };
                st.cursor += 1;
                st.issued += 1;
                st.in_flight += 1;
                return Pick::Run(b);
            }
            if st.in_flight > 0 {
                return Pick::Wait;
            }
            st.phase += 1;
            st.cursor = 0;
        }
    }

    fn finish(&self, st: &mut LoopState, _unit: Block) {
        st.in_flight -= 1;
    }

    fn execute(&self, unit: Block, lane: usize) {
        (self.body)(unit, lane)
    }

    fn unit_id(&self, unit: Block) -> usize {
        unit.id
    }

    fn remaining(&self, st: &LoopState) -> usize {
        self.total - st.issued
    }

    fn total(&self) -> usize {
        self.total
    }
}
