//! Task engine with commutative exclusion sets and priorities.
//!
//! Tasks whose exclusion sets intersect never run at the same time, in any
//! order. Resources are taken all-or-nothing under the engine lock, so a
//! task either holds its whole set or nothing and no lock cycle can form.
//! Among the ready tasks whose sets are free, the one with the highest
//! priority starts first; ties go to the lowest task id, or to a seeded
//! random key when a seed is given.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, HashSet};
#[cfg(feature = "instrument")]
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pool::{run_plan, LaneControl, Pick, Plan, RunOptions, TraceEvent};

type Payload<'a> = Box<dyn Fn(usize) + Send + Sync + 'a>;

pub struct Task<'a> {
    pub id: usize,
    /// Resource ids; must contain at least one.
    pub exclusion: Vec<usize>,
    pub priority: i64,
    /// Called with the lane index the task runs on.
    pub work: Payload<'a>,
}

impl<'a> Task<'a> {
    pub fn new(id: usize, exclusion: Vec<usize>, priority: i64, work: impl Fn(usize) + Send + Sync + 'a) -> Self {
        Task { id, exclusion, priority, work: Box::new(work) }
    }
}

impl std::fmt::Debug for Task<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Task")
            .field("id", &self.id)
            .field("exclusion", &self.exclusion)
            .field("priority", &self.priority)
            .finish_non_exhaustive()
    }
}

/// What ran where and when, plus the per-resource overlap counters.
#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    /// In completion order.
    pub events: Vec<TraceEvent>,
    /// `(resource id, violations)`; empty without the `instrument` feature.
    pub violations: Vec<(usize, u64)>,
}

impl RunTrace {
    pub fn total_violations(&self) -> u64 {
        self.violations.iter().map(|v| v.1).sum()
    }

    /// Events sorted by start time.
    pub fn by_start(&self) -> Vec<TraceEvent> {
        let mut v = self.events.clone();
        v.sort_by_key(|e| (e.start_ns, e.task));
        v
    }

    /// Largest number of events running at one instant.
    pub fn max_concurrency(&self) -> usize {
        concurrency(&self.events)
    }
}

/// Largest number of overlapping half-open intervals.
pub fn concurrency(events: &[TraceEvent]) -> usize {
    let mut edges: Vec<(u64, i32)> = events.iter().flat_map(|e| [(e.start_ns, 1), (e.end_ns, -1)]).collect();
    // Ends sort before starts at equal times.
    edges.sort();
    let mut cur = 0i32;
    let mut best = 0i32;
    for (_, d) in edges {
        cur += d;
        best = best.max(cur);
    }
    best as usize
}

struct TaskPlan<'t, 'a> {
    tasks: &'t [Task<'a>],
    /// Dense resource indices per task.
    resources: Vec<Vec<usize>>,
    #[cfg(feature = "instrument")]
    occupancy: Vec<AtomicU64>,
    #[cfg(feature = "instrument")]
    violations: Vec<AtomicU64>,
}

struct TaskState {
    ready: BTreeSet<(Reverse<i64>, u64, usize)>,
    held: Vec<bool>,
}

impl Plan for TaskPlan<'_, '_> {
    type Unit = usize;
    type State = TaskState;

    fn pick(&self, st: &mut TaskState) -> Pick<usize> {
        if st.ready.is_empty() {
            return Pick::Done;
        }
        let found = st.ready.iter().find(|k| self.resources[k.2].iter().all(|&r| !st.held[r])).copied();
        match found {
            Some(key) => {
                st.ready.remove(&key);
                for &r in &self.resources[key.2] {
                    st.held[r] = true;
                }
                Pick::Run(key.2)
            }
            None => Pick::Wait,
        }
    }

    fn finish(&self, st: &mut TaskState, t: usize) {
        for &r in &self.resources[t] {
            st.held[r] = false;
        }
    }

    fn execute(&self, t: usize, lane: usize) {
        #[cfg(feature = "instrument")]
        for &r in &self.resources[t] {
            if self.occupancy[r].fetch_add(1, Ordering::SeqCst) > 0 {
                self.violations[r].fetch_add(1, Ordering::SeqCst);
            }
        }
        (self.tasks[t].work)(lane);
        #[cfg(feature = "instrument")]
        for &r in &self.resources[t] {
            self.occupancy[r].fetch_sub(1, Ordering::SeqCst);
        }
    }

    fn unit_id(&self, t: usize) -> usize {
        self.tasks[t].id
    }

    fn remaining(&self, st: &TaskState) -> usize {
        st.ready.len()
    }

    fn total(&self) -> usize {
        self.tasks.len()
    }
}

/// Runs every task once on a fixed pool of `lanes`.
pub fn run_commutative(tasks: &[Task<'_>], lanes: usize, seed: Option<u64>) -> Result<RunTrace> {
    let control = LaneControl::fixed(lanes)?;
    run_commutative_on(tasks, &control, seed, &RunOptions::default())
}

/// Runs every task once on a resizable lane pool.
pub fn run_commutative_on(
    tasks: &[Task<'_>],
    lanes: &LaneControl,
    seed: Option<u64>,
    opts: &RunOptions,
) -> Result<RunTrace> {
    let mut ids = HashSet::with_capacity(tasks.len());
    let mut dense: HashMap<usize, usize> = HashMap::new();
    let mut resource_ids = Vec::new();
    let mut resources = Vec::with_capacity(tasks.len());
    for t in tasks {
        if t.exclusion.is_empty() {
            return Err(Error::InvalidArgument(format!("task {} has an empty exclusion set", t.id)));
        }
        if !ids.insert(t.id) {
            return Err(Error::InvalidArgument(format!("duplicate task id {}", t.id)));
        }
        let mut rs: Vec<usize> = t
            .exclusion
            .iter()
            .map(|&r| {
                *dense.entry(r).or_insert_with(|| {
                    resource_ids.push(r);
                    resource_ids.len() - 1
                })
            })
            .collect();
        rs.sort_unstable();
        rs.dedup();
        resources.push(rs);
    }
    let nres = resource_ids.len();

    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let ready = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let tie = match rng.as_mut() {
                Some(r) => r.random::<u64>(),
                None => t.id as u64,
            };
            (Reverse(t.priority), tie, i)
        })
        .collect();

    let plan = TaskPlan {
        tasks,
        resources,
        #[cfg(feature = "instrument")]
        occupancy: (0..nres).map(|_| AtomicU64::new(0)).collect(),
        #[cfg(feature = "instrument")]
        violations: (0..nres).map(|_| AtomicU64::new(0)).collect(),
    };
    let events = run_plan(&plan, TaskState { ready, held: vec![false; nres] }, lanes, opts)?;

    #[cfg(feature = "instrument")]
    let violations = resource_ids.iter().zip(&plan.violations).map(|(&r, v)| (r, v.load(Ordering::SeqCst))).collect();
    #[cfg(not(feature = "instrument"))]
    let violations = Vec::new();
    Ok(RunTrace { events, violations })
}
