//! The five assembly paths over one rank's elements.

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use assemblab_core::assembly::{assemble_sequential, RankLayout};
use assemblab_core::kernels::{element_subgrid, element_system, KernelParams, WorkModel};
use assemblab_core::mesh::NodeToElem;
use assemblab_core::partition::{
    build_chunk_graph, chunk_elements, color_elements, split_with_separators, ChunkGraph, Chunking, Coloring,
    SeparatorSplit,
};
use assemblab_core::sparse::{CsrMatrix, Rhs};
use assemblab_core::Mesh;

use crate::error::{Error, Result};
use crate::pool::{Block, LaneControl, PhasedLoop, RunOptions, TraceEvent};
use crate::scheduler::{run_commutative_on, Task};
use crate::shared::{SharedSystem, SharedValues, UpdateMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Sequential,
    Atomic,
    Coloring,
    LocalPartition,
    Multidep,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::Sequential, Strategy::Atomic, Strategy::Coloring, Strategy::LocalPartition, Strategy::Multidep];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Sequential => "sequential",
            Strategy::Atomic => "atomic",
            Strategy::Coloring => "coloring",
            Strategy::LocalPartition => "localpartition",
            Strategy::Multidep => "multidep",
        }
    }

    /// Whether the element loop runs on more than one lane.
    pub fn is_parallel(self) -> bool {
        self != Strategy::Sequential
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', '-'], "");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblyConfig {
    pub strategy: Strategy,
    pub chunk_size: usize,
    pub lanes: usize,
}

impl AssemblyConfig {
    pub fn new(strategy: Strategy, chunk_size: usize, lanes: usize) -> Result<Self> {
        if chunk_size == 0 {
            return Err(Error::InvalidArgument("chunk_size must be at least 1".into()));
        }
        if lanes == 0 {
            return Err(Error::InvalidArgument("lanes must be at least 1".into()));
        }
        Ok(AssemblyConfig { strategy, chunk_size, lanes })
    }
}

/// Strategy-specific preprocessing of a rank's elements.
#[derive(Debug, Clone)]
pub enum Schedule {
    Plain,
    Coloring(Coloring),
    Separators(SeparatorSplit),
    Graph(ChunkGraph),
}

/// Everything a rank needs before its element loop can run.
#[derive(Debug, Clone)]
pub struct RankSetup {
    pub strategy: Strategy,
    pub layout: RankLayout,
    pub chunking: Chunking,
    pub schedule: Schedule,
}

impl RankSetup {
    pub fn new(mesh: &Mesh, n2e: &NodeToElem, elements: &[usize], strategy: Strategy, chunk_size: usize) -> Result<Self> {
        let layout = RankLayout::new(mesh, elements);
        let chunking = chunk_elements(elements, chunk_size)?;
        let schedule = match strategy {
            Strategy::Sequential | Strategy::Atomic => Schedule::Plain,
            Strategy::Coloring => {
                let c = color_elements(mesh, n2e, elements);
                if cfg!(debug_assertions) {
                    c.validate(mesh)?;
                }
                Schedule::Coloring(c)
            }
            Strategy::LocalPartition => {
                let s = split_with_separators(mesh, &chunking);
                if cfg!(debug_assertions) {
                    s.validate(mesh)?;
                }
                Schedule::Separators(s)
            }
            Strategy::Multidep => Schedule::Graph(build_chunk_graph(mesh, &chunking)),
        };
        Ok(RankSetup { strategy, layout, chunking, schedule })
    }
}

/// Result of one rank assembly.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub matrix: CsrMatrix,
    pub rhs: Rhs,
    /// Units executed by the lanes; empty for the sequential path.
    pub trace: Vec<TraceEvent>,
    /// Exclusion overlaps seen by the task engine.
    pub violations: u64,
}

struct Scatter<'a> {
    mesh: &'a Mesh,
    layout: &'a RankLayout,
    params: &'a KernelParams,
    system: SharedSystem,
    error: Mutex<Option<Error>>,
}

impl<'a> Scatter<'a> {
    fn new(mesh: &'a Mesh, layout: &'a RankLayout, params: &'a KernelParams) -> Self {
        let system = SharedSystem::new(layout.pattern.nnz(), layout.numbering.len());
        Scatter { mesh, layout, params, system, error: Mutex::new(None) }
    }

    fn elements(&self, elements: &[usize], mode: UpdateMode) {
        for &e in elements {
            let step = element_system(self.mesh, e, self.params)
                .and_then(|sys| self.layout.scatter_map(self.mesh, e).map(|map| (sys, map)));
            match step {
                Ok((sys, map)) => self.system.scatter(&map, &sys, mode),
                Err(err) => {
                    self.error.lock().unwrap().get_or_insert(err.into());
                    return;
                }
            }
        }
    }

    fn finish(self, trace: Vec<TraceEvent>, violations: u64) -> Result<Assembled> {
        if let Some(e) = self.error.into_inner().unwrap() {
            return Err(e);
        }
        let (matrix, rhs) = self.system.into_system(&self.layout.pattern);
        Ok(Assembled { matrix, rhs, trace, violations })
    }
}

fn blocks(len: usize, size: usize) -> usize {
    len.div_ceil(size)
}

fn block_slice(items: &[usize], size: usize, index: usize) -> &[usize] {
    let lo = index * size;
    &items[lo..(lo + size).min(items.len())]
}

/// Assembles a rank with the setup's strategy on the lanes of `lanes`.
/// `seed` randomizes task tie-breaks for the multidependence path.
pub fn assemble(
    mesh: &Mesh,
    setup: &RankSetup,
    params: &KernelParams,
    lanes: &LaneControl,
    opts: &RunOptions,
    seed: Option<u64>,
) -> Result<Assembled> {
    let chunking = &setup.chunking;
    match (&setup.schedule, setup.strategy) {
        (_, Strategy::Sequential) => {
            let (matrix, rhs) = assemble_sequential(mesh, &setup.layout, params)?;
            Ok(Assembled { matrix, rhs, trace: Vec::new(), violations: 0 })
        }
        (_, Strategy::Atomic) => assemble_atomic_mode(mesh, setup, params, lanes, opts, UpdateMode::Indivisible),
        (Schedule::Coloring(coloring), Strategy::Coloring) => {
            let size = chunking.chunk_size();
            let scatter = Scatter::new(mesh, &setup.layout, params);
            let phases = (0..coloring.n_colors()).map(|c| blocks(coloring.color_elements(c).len(), size)).collect();
            let trace = PhasedLoop::new(phases, |b: Block, _| {
                scatter.elements(block_slice(coloring.color_elements(b.phase), size, b.index), UpdateMode::Exclusive)
            })
            .run(lanes, opts)?;
            scatter.finish(trace, 0)
        }
        (Schedule::Separators(split), Strategy::LocalPartition) => {
            let scatter = Scatter::new(mesh, &setup.layout, params);
            let mut phases = vec![split.interior.len()];
            if !split.separator.is_empty() {
                phases.push(1);
            }
            let trace = PhasedLoop::new(phases, |b: Block, _| {
                let els = if b.phase == 0 { &split.interior[b.index] } else { &split.separator };
                scatter.elements(els, UpdateMode::Exclusive)
            })
            .run(lanes, opts)?;
            scatter.finish(trace, 0)
        }
        (Schedule::Graph(graph), Strategy::Multidep) => {
            let scatter = Scatter::new(mesh, &setup.layout, params);
            let tasks: Vec<Task> = (0..chunking.nsubd())
                .map(|c| {
                    let scatter = &scatter;
                    Task::new(c, graph.neighbors(c).to_vec(), graph.nneig(c) as i64, move |_| {
                        scatter.elements(chunking.chunk(c), UpdateMode::Exclusive)
                    })
                })
                .collect();
            let trace = run_commutative_on(&tasks, lanes, seed, opts)?;
            let violations = trace.total_violations();
            drop(tasks);
            scatter.finish(trace.events, violations)
        }
        (_, s) => Err(Error::InvalidArgument(format!("setup was not prepared for strategy {s}"))),
    }
}

/// The dynamic chunk loop of the atomic path with a chosen update mode.
/// [`UpdateMode::Unprotected`] loses updates under contention and exists only
/// to check that comparisons against the reference can see a race.
pub fn assemble_atomic_mode(
    mesh: &Mesh,
    setup: &RankSetup,
    params: &KernelParams,
    lanes: &LaneControl,
    opts: &RunOptions,
    mode: UpdateMode,
) -> Result<Assembled> {
    let scatter = Scatter::new(mesh, &setup.layout, params);
    let trace = PhasedLoop::new(vec![setup.chunking.nsubd()], |b: Block, _| {
        scatter.elements(setup.chunking.chunk(b.index), mode)
    })
    .run(lanes, opts)?;
    scatter.finish(trace, 0)
}

/// One-shot assembly of `elements` with a fixed lane pool.
pub fn assemble_rank(
    mesh: &Mesh,
    n2e: &NodeToElem,
    elements: &[usize],
    config: &AssemblyConfig,
    params: &KernelParams,
) -> Result<Assembled> {
    let setup = RankSetup::new(mesh, n2e, elements, config.strategy, config.chunk_size)?;
    let lanes = LaneControl::fixed(config.lanes)?;
    assemble(mesh, &setup, params, &lanes, &RunOptions::default(), None)
}

/// Element-indexed subgrid-scale analog over a rank, in rank element order.
/// Each element writes only its own slot, so no scatter protection is needed.
pub fn subgrid_loop(
    mesh: &Mesh,
    chunking: &Chunking,
    field: &[f64],
    work: WorkModel,
    lanes: Option<(&LaneControl, &RunOptions)>,
) -> Result<Vec<f64>> {
    let elements = chunking.elements();
    let Some((lanes, opts)) = lanes else {
        return Ok(elements.iter().map(|&e| element_subgrid(mesh, e, field, work)).collect());
    };
    let out = SharedValues::zeros(elements.len());
    PhasedLoop::new(vec![chunking.nsubd()], |b: Block, _| {
        for pos in chunking.range(b.index) {
            out.set(pos, element_subgrid(mesh, elements[pos], field, work));
        }
    })
    .run(lanes, opts)?;
    Ok(out.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use assemblab_core::mesh::{build_node_to_elem, generate_box_mesh};

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("Local_Partition".parse::<Strategy>().unwrap(), Strategy::LocalPartition);
        assert!("greedy".parse::<Strategy>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AssemblyConfig::new(Strategy::Atomic, 0, 1).is_err());
        assert!(AssemblyConfig::new(Strategy::Atomic, 1, 0).is_err());
    }

    #[test]
    fn lanes_one_atomic_is_bitwise_sequential() {
        let mesh = generate_box_mesh(3, 3, 3, 1).unwrap();
        let n2e = build_node_to_elem(&mesh);
        let els: Vec<usize> = (0..mesh.nelem()).collect();
        let p = KernelParams::default();
        let seq = assemble_rank(&mesh, &n2e, &els, &AssemblyConfig::new(Strategy::Sequential, 7, 1).unwrap(), &p).unwrap();
        let at = assemble_rank(&mesh, &n2e, &els, &AssemblyConfig::new(Strategy::Atomic, 7, 1).unwrap(), &p).unwrap();
        assert_eq!(seq.matrix, at.matrix);
        assert_eq!(seq.rhs, at.rhs);
    }

    #[test]
    fn subgrid_parallel_matches_serial() {
        let mesh = generate_box_mesh(3, 2, 3, 1).unwrap();
        let els: Vec<usize> = (0..mesh.nelem()).rev().collect();
        let chunking = chunk_elements(&els, 5).unwrap();
        let field: Vec<f64> = mesh.coords().iter().map(|p| p[0] - 2.0 * p[2]).collect();
        let serial = subgrid_loop(&mesh, &chunking, &field, WorkModel::default(), None).unwrap();
        let lanes = LaneControl::fixed(3).unwrap();
        let par =
            subgrid_loop(&mesh, &chunking, &field, WorkModel::default(), Some((&lanes, &RunOptions::default()))).unwrap();
        assert_eq!(serial, par);
    }
}
