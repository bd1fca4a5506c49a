//! Rank partitions, chunking, chunk graphs, element coloring and separators.
//!
//! Ties are always broken towards the lowest index so every structure here is
//! a deterministic function of its inputs.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{invalid, Error, Result};
use crate::mesh::{build_element_adjacency, ElementAdjacency, ElementKind, Mesh, NodeToElem};

/// Per-kind element weights for the partitioner. The default assigns each
/// element its number of quadrature points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KindWeights([f64; 4]);

impl KindWeights {
    pub fn gauss_points() -> Self {
        KindWeights(ElementKind::ALL.map(|k| k.gauss_count() as f64))
    }

    pub fn uniform() -> Self {
        KindWeights([1.0; 4])
    }

    pub fn with(mut self, kind: ElementKind, weight: f64) -> Self {
        self.0[kind.index()] = weight;
        self
    }

    pub fn get(&self, kind: ElementKind) -> f64 {
        self.0[kind.index()]
    }

    pub fn element_weights(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.kinds().iter().map(|&k| self.get(k)).collect()
    }
}

impl Default for KindWeights {
    fn default() -> Self {
        Self::gauss_points()
    }
}

/// Disjoint, exhaustive assignment of elements to ranks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankPartition {
    rank_of: Vec<usize>,
    elements: Vec<Vec<usize>>,
}

impl RankPartition {
    /// Builds a partition from an element-to-rank map. Per-rank element
    /// lists are in increasing element order.
    pub fn from_rank_of(rank_of: Vec<usize>, n_ranks: usize) -> Result<Self> {
        let mut elements = vec![Vec::new(); n_ranks];
        for (e, &r) in rank_of.iter().enumerate() {
            if r >= n_ranks {
                return Err(invalid(format!("element {e} assigned to rank {r} of {n_ranks}")));
            }
            elements[r].push(e);
        }
        Ok(RankPartition { rank_of, elements })
    }

    pub fn n_ranks(&self) -> usize {
        self.elements.len()
    }

    pub fn rank_of(&self, e: usize) -> usize {
        self.rank_of[e]
    }

    pub fn rank_elements(&self, rank: usize) -> &[usize] {
        &self.elements[rank]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.elements.iter().map(Vec::len).collect()
    }

    pub fn weight_sums(&self, weights: &[f64]) -> Vec<f64> {
        self.elements.iter().map(|els| els.iter().map(|&e| weights[e]).sum()).collect()
    }
}

fn lexi_less(a: [f64; 3], b: [f64; 3]) -> bool {
    for d in 0..3 {
        if a[d] != b[d] {
            return a[d] < b[d];
        }
    }
    false
}

/// Greedy graph-growth partition balancing the per-rank weight sums.
///
/// Ranks are grown one after another by breadth-first search over the
/// node-sharing graph, each seeded at the unassigned element with the
/// smallest centroid (x, then y, then z). A rank stops growing once its
/// weight reaches `remaining_weight / remaining_ranks`, or when the next
/// element would overshoot that target by more than it currently falls
/// short. The last rank takes the rest. A refinement pass then moves or
/// swaps single elements out of the heaviest rank while that strictly lowers
/// the pairwise maximum.
pub fn partition_weighted_greedy(mesh: &Mesh, n_ranks: usize, weights: &[f64]) -> Result<RankPartition> {
    let nelem = mesh.nelem();
    if n_ranks == 0 {
        return Err(invalid("n_ranks must be at least 1"));
    }
    if n_ranks > nelem {
        return Err(invalid(format!("n_ranks ({n_ranks}) exceeds element count ({nelem})")));
    }
    if weights.len() != nelem {
        return Err(invalid("one weight per element required"));
    }
    if let Some(e) = weights.iter().position(|w| !(*w > 0.0)) {
        return Err(invalid(format!("element {e} has a non-positive weight")));
    }
    let adj = build_element_adjacency(mesh);
    let centroids: Vec<[f64; 3]> = (0..nelem).map(|e| mesh.centroid(e)).collect();

    const UNASSIGNED: usize = usize::MAX;
    let mut rank_of = vec![UNASSIGNED; nelem];
    let mut remaining_weight: f64 = weights.iter().sum();
    let mut unassigned = nelem;
    let mut queued = vec![false; nelem];

    for rank in 0..n_ranks {
        let ranks_left = n_ranks - rank;
        if ranks_left == 1 {
            for r in rank_of.iter_mut().filter(|r| **r == UNASSIGNED) {
                *r = rank;
            }
            break;
        }
        let target = remaining_weight / ranks_left as f64;
        // Leave at least one element for each later rank.
        let max_take = unassigned - (ranks_left - 1);
        let mut acc = 0.0;
        let mut taken = 0;
        let mut frontier: VecDeque<usize> = VecDeque::new();
        'grow: while taken < max_take && acc < target {
            if frontier.is_empty() {
                let mut seed = None;
                for e in 0..nelem {
                    if rank_of[e] == UNASSIGNED && seed.is_none_or(|s: usize| lexi_less(centroids[e], centroids[s])) {
                        seed = Some(e);
                    }
                }
                match seed {
                    Some(s) => {
                        queued[s] = true;
                        frontier.push_back(s);
                    }
                    None => break 'grow,
                }
            }
            while let Some(e) = frontier.pop_front() {
                queued[e] = false;
                if rank_of[e] != UNASSIGNED {
                    continue;
                }
                let w = weights[e];
                if taken > 0 && acc + w - target > target - acc {
                    break 'grow;
                }
                rank_of[e] = rank;
                acc += w;
                taken += 1;
                for &f in adj.neighbors(e) {
                    if rank_of[f] == UNASSIGNED && !queued[f] {
                        queued[f] = true;
                        frontier.push_back(f);
                    }
                }
                if taken >= max_take || acc >= target {
                    break 'grow;
                }
            }
        }
        for e in frontier {
            queued[e] = false;
        }
        remaining_weight -= acc;
        unassigned -= taken;
    }

    refine(&adj, &mut rank_of, n_ranks, weights);
    RankPartition::from_rank_of(rank_of, n_ranks)
}

/// Lowers the heaviest rank by single moves or pairwise swaps with the other
/// ranks. Only element weights matter for balance, so each distinct weight
/// is represented by one element, preferring one adjacent to the other rank
/// so parts stay compact.
type Candidate = (f64, bool, usize, Option<usize>);

fn refine(adj: &ElementAdjacency, rank_of: &mut [usize], n_ranks: usize, weights: &[f64]) {
    if n_ranks < 2 {
        return;
    }
    let mut load = vec![0.0; n_ranks];
    let mut count = vec![0usize; n_ranks];
    for (e, &r) in rank_of.iter().enumerate() {
        load[r] += weights[e];
        count[r] += 1;
    }
    // One element per distinct weight of `rank`, adjacent to `toward` if any.
    let representatives = |rank_of: &[usize], rank: usize, toward: usize| {
        let mut reps: Vec<(usize, bool)> = Vec::new();
        for e in (0..rank_of.len()).filter(|&e| rank_of[e] == rank) {
            let touching = adj.neighbors(e).iter().any(|&f| rank_of[f] == toward);
            match reps.iter_mut().find(|(r, _)| weights[*r] == weights[e]) {
                Some(slot) if touching && !slot.1 => *slot = (e, true),
                Some(_) => {}
                None => reps.push((e, touching)),
            }
        }
        reps
    };
    let max_rounds = 4 * rank_of.len();
    for _ in 0..max_rounds {
        let heavy = (0..n_ranks).fold(0, |best, r| if load[r] > load[best] { r } else { best });
        let mut others: Vec<usize> = (0..n_ranks).filter(|&r| r != heavy).collect();
        others.sort_by(|&a, &b| load[a].total_cmp(&load[b]).then(a.cmp(&b)));
        let mut applied = false;
        for &light in &others {
            let current = load[heavy];
            let heavy_reps = representatives(rank_of, heavy, light);
            // (new pairwise max, adjacent, moved element, swapped element)
            let mut best: Option<Candidate> = None;
            let consider = |best: &mut Option<Candidate>, cand: Candidate| {
                if cand.0 < current && best.is_none_or(|b| cand.0 < b.0 || (cand.0 == b.0 && cand.1 && !b.1)) {
                    *best = Some(cand);
                }
            };
            if count[heavy] > 1 {
                for &(e, touching) in &heavy_reps {
                    let w = weights[e];
                    consider(&mut best, ((load[heavy] - w).max(load[light] + w), touching, e, None));
                }
            }
            if best.is_none() {
                let diff = load[heavy] - load[light];
                for &(f, _) in &representatives(rank_of, light, heavy) {
                    for &(e, touching) in &heavy_reps {
                        let delta = weights[e] - weights[f];
                        if delta > 0.0 && delta < diff {
                            consider(&mut best, ((load[heavy] - delta).max(load[light] + delta), touching, e, Some(f)));
                        }
                    }
                }
            }
            if let Some((_, _, e, swap)) = best {
                rank_of[e] = light;
                load[heavy] -= weights[e];
                load[light] += weights[e];
                match swap {
                    Some(f) => {
                        rank_of[f] = heavy;
                        load[light] -= weights[f];
                        load[heavy] += weights[f];
                    }
                    None => {
                        count[heavy] -= 1;
                        count[light] += 1;
                    }
                }
                applied = true;
                break;
            }
        }
        if !applied {
            break;
        }
    }
}

/// Contiguous chunks of a rank's element list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunking {
    chunk_size: usize,
    elements: Vec<usize>,
}

impl Chunking {
    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    /// Number of chunks (subdomains).
    pub fn nsubd(&self) -> usize {
        self.elements.len().div_ceil(self.chunk_size)
    }

    pub fn range(&self, c: usize) -> Range<usize> {
        let start = c * self.chunk_size;
        start..(start + self.chunk_size).min(self.elements.len())
    }

    pub fn chunk(&self, c: usize) -> &[usize] {
        &self.elements[self.range(c)]
    }

    pub fn chunk_of_position(&self, pos: usize) -> usize {
        pos / self.chunk_size
    }

    pub fn elements(&self) -> &[usize] {
        &self.elements
    }
}

pub fn chunk_elements(elements: &[usize], chunk_size: usize) -> Result<Chunking> {
    if chunk_size == 0 {
        return Err(invalid("chunk_size must be at least 1"));
    }
    Ok(Chunking { chunk_size, elements: elements.to_vec() })
}

/// Chunk neighbor lists (each list sorted and containing the chunk itself).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkGraph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl ChunkGraph {
    pub fn nchunks(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, c: usize) -> &[usize] {
        &self.neighbors[self.offsets[c]..self.offsets[c + 1]]
    }

    pub fn nneig(&self, c: usize) -> usize {
        self.offsets[c + 1] - self.offsets[c]
    }
}

/// For each node touched by the chunking, the distinct chunks touching it.
fn node_chunks(mesh: &Mesh, chunking: &Chunking) -> (Vec<usize>, Vec<usize>) {
    let mut last = vec![usize::MAX; mesh.nnode()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for c in 0..chunking.nsubd() {
        for &e in chunking.chunk(c) {
            for &n in mesh.nodes(e) {
                if last[n] != c {
                    last[n] = c;
                    pairs.push((n, c));
                }
            }
        }
    }
    let mut offsets = vec![0usize; mesh.nnode() + 1];
    for &(n, _) in &pairs {
        offsets[n + 1] += 1;
    }
    for n in 0..mesh.nnode() {
        offsets[n + 1] += offsets[n];
    }
    let mut fill = offsets.clone();
    let mut chunks = vec![0; pairs.len()];
    for (n, c) in pairs {
        chunks[fill[n]] = c;
        fill[n] += 1;
    }
    (offsets, chunks)
}

pub fn build_chunk_graph(mesh: &Mesh, chunking: &Chunking) -> ChunkGraph {
    let (noff, nch) = node_chunks(mesh, chunking);
    let nsubd = chunking.nsubd();
    let mut offsets = Vec::with_capacity(nsubd + 1);
    offsets.push(0);
    let mut neighbors = Vec::new();
    let mut mark = vec![usize::MAX; nsubd];
    for c in 0..nsubd {
        let start = neighbors.len();
        mark[c] = c;
        neighbors.push(c);
        for &e in chunking.chunk(c) {
            for &n in mesh.nodes(e) {
                for &d in &nch[noff[n]..noff[n + 1]] {
                    if mark[d] != c {
                        mark[d] = c;
                        neighbors.push(d);
                    }
                }
            }
        }
        neighbors[start..].sort_unstable();
        offsets.push(neighbors.len());
    }
    ChunkGraph { offsets, neighbors }
}

/// Element colors for one rank; same-colored elements share no node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    color_of: Vec<(usize, usize)>,
    by_color: Vec<Vec<usize>>,
}

impl Coloring {
    pub fn n_colors(&self) -> usize {
        self.by_color.len()
    }

    /// Elements of color `c`, in rank order.
    pub fn color_elements(&self, c: usize) -> &[usize] {
        &self.by_color[c]
    }

    /// `(element, color)` pairs in rank order.
    pub fn assignments(&self) -> &[(usize, usize)] {
        &self.color_of
    }

    /// Checks that no two elements of a color share a node.
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        let mut owner = vec![usize::MAX; mesh.nnode()];
        for (c, els) in self.by_color.iter().enumerate() {
            for &e in els {
                for &n in mesh.nodes(e) {
                    if owner[n] == c {
                        return Err(Error::Safety(format!("color {c}: node {n} shared inside the color")));
                    }
                    owner[n] = c;
                }
            }
        }
        Ok(())
    }
}

/// First-fit greedy coloring of the node-sharing graph, in rank order.
pub fn color_elements(mesh: &Mesh, n2e: &NodeToElem, elements: &[usize]) -> Coloring {
    let mut color = vec![usize::MAX; mesh.nelem()];
    let mut forbidden: Vec<usize> = Vec::new();
    let mut color_of = Vec::with_capacity(elements.len());
    let mut by_color: Vec<Vec<usize>> = Vec::new();
    for &e in elements {
        // forbidden[c] == e marks color c as taken by a neighbor of e.
        for &n in mesh.nodes(e) {
            for &f in n2e.elements_of(n) {
                let c = color[f];
                if c != usize::MAX {
                    forbidden[c] = e;
                }
            }
        }
        let c = forbidden.iter().position(|&m| m != e).unwrap_or(forbidden.len());
        if c == forbidden.len() {
            forbidden.push(usize::MAX);
            by_color.push(Vec::new());
        }
        color[e] = c;
        color_of.push((e, c));
        by_color[c].push(e);
    }
    Coloring { color_of, by_color }
}

/// Interior chunks with the separator elements taken out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeparatorSplit {
    pub interior: Vec<Vec<usize>>,
    pub separator: Vec<usize>,
}

impl SeparatorSplit {
    /// Checks that distinct interior chunks are node-disjoint.
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        let mut owner = vec![usize::MAX; mesh.nnode()];
        for (c, els) in self.interior.iter().enumerate() {
            for &e in els {
                for &n in mesh.nodes(e) {
                    if owner[n] != usize::MAX && owner[n] != c {
                        return Err(Error::Safety(format!(
                            "interior chunks {} and {c} share node {n}",
                            owner[n]
                        )));
                    }
                    owner[n] = c;
                }
            }
        }
        Ok(())
    }
}

/// Separator = every element with a node touched by two or more chunks.
pub fn split_with_separators(mesh: &Mesh, chunking: &Chunking) -> SeparatorSplit {
    let (noff, _) = node_chunks(mesh, chunking);
    let shared = |n: usize| noff[n + 1] - noff[n] >= 2;
    let mut interior = Vec::with_capacity(chunking.nsubd());
    let mut separator = Vec::new();
    for c in 0..chunking.nsubd() {
        let mut inner = Vec::new();
        for &e in chunking.chunk(c) {
            if mesh.nodes(e).iter().any(|&n| shared(n)) {
                separator.push(e);
            } else {
                inner.push(e);
            }
        }
        interior.push(inner);
    }
    SeparatorSplit { interior, separator }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_node_to_elem, generate_box_mesh};
    use crate::metrics::{lb_theoretical_counts, lb_theoretical_weighted};

    fn tets(cells: &[[usize; 4]], nnode: usize) -> Mesh {
        // Node n sits on a twisted curve so any 4 distinct nodes in the
        // given order form a valid tet after orientation fixing.
        let coords: Vec<[f64; 3]> = (0..nnode).map(|n| {
            let t = n as f64;
            [t, t * t, t * t * t]
        }).collect();
        let fixed: Vec<[usize; 4]> = cells
            .iter()
            .map(|c| {
                let p = |i: usize| coords[c[i]];
                let d = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
                let (a, b, cc) = (d(p(1), p(0)), d(p(2), p(0)), d(p(3), p(0)));
                let det = a[0] * (b[1] * cc[2] - b[2] * cc[1]) - a[1] * (b[0] * cc[2] - b[2] * cc[0])
                    + a[2] * (b[0] * cc[1] - b[1] * cc[0]);
                if det > 0.0 { *c } else { [c[0], c[2], c[1], c[3]] }
            })
            .collect();
        Mesh::new(coords, fixed.iter().map(|c| (ElementKind::Tet4, *c))).unwrap()
    }

    #[test]
    fn four_element_weighted_split_is_optimal() {
        // A chain of tets: 0-1 share a node, 1-2 share a node, 2-3 share a node.
        let m = tets(&[[0, 1, 2, 3], [3, 4, 5, 6], [6, 7, 8, 9], [9, 10, 11, 12]], 13);
        let w = [1.0, 1.0, 2.0, 2.0];
        let p = partition_weighted_greedy(&m, 2, &w).unwrap();
        let mut sums = p.weight_sums(&w);
        sums.sort_by(f64::total_cmp);
        assert_eq!(sums, vec![3.0, 3.0]);
        assert_eq!(lb_theoretical_weighted(&p, &w), 1.0);

        // Brute force over all 2-partitions: the best max part weight is 3.
        let best = (1..15u32)
            .map(|mask| {
                let a: f64 = (0..4).filter(|i| mask >> i & 1 == 1).map(|i| w[i]).sum();
                a.max(6.0 - a)
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best, 3.0);
    }

    #[test]
    fn single_rank_takes_everything() {
        let m = generate_box_mesh(3, 3, 3, 1).unwrap();
        let w = KindWeights::default().element_weights(&m);
        let p = partition_weighted_greedy(&m, 1, &w).unwrap();
        assert_eq!(p.rank_elements(0).len(), m.nelem());
    }

    #[test]
    fn uniform_two_way_split_is_balanced() {
        let m = generate_box_mesh(6, 6, 6, 2).unwrap();
        let w = KindWeights::uniform().element_weights(&m);
        let p = partition_weighted_greedy(&m, 2, &w).unwrap();
        assert!(lb_theoretical_counts(&p) >= 0.9, "{:?}", p.counts());
    }

    #[test]
    fn partition_errors() {
        let m = generate_box_mesh(1, 1, 1, 0).unwrap();
        assert!(partition_weighted_greedy(&m, 2, &[1.0]).is_err());
        assert!(partition_weighted_greedy(&m, 0, &[1.0]).is_err());
        assert!(partition_weighted_greedy(&m, 1, &[0.0]).is_err());
    }

    #[test]
    fn many_ranks_are_nonempty_and_exhaustive() {
        let m = generate_box_mesh(4, 3, 3, 1).unwrap();
        let w = KindWeights::default().element_weights(&m);
        for n in [2, 3, 7, 16, m.nelem()] {
            let p = partition_weighted_greedy(&m, n, &w).unwrap();
            assert!(p.counts().iter().all(|&c| c > 0), "n_ranks={n}");
            assert_eq!(p.counts().iter().sum::<usize>(), m.nelem());
        }
    }

    #[test]
    fn chunk_counts() {
        let els: Vec<usize> = (0..1000).collect();
        assert_eq!(chunk_elements(&els, 100).unwrap().nsubd(), 10);
        let els: Vec<usize> = (0..1005).collect();
        let ch = chunk_elements(&els, 100).unwrap();
        assert_eq!(ch.nsubd(), 11);
        assert_eq!(ch.chunk(10).len(), 5);
        // Largest rank in the 256-partition respiratory run: 2004 chunks of 100.
        let els: Vec<usize> = (0..200_400).collect();
        assert_eq!(chunk_elements(&els, 100).unwrap().nsubd(), 2004);
        assert!(chunk_elements(&els, 0).is_err());
    }

    #[test]
    fn chunk_graph_small_cases() {
        let m = tets(&[[0, 1, 2, 3], [4, 5, 6, 7]], 8);
        let one = chunk_elements(&[0, 1], 2).unwrap();
        let g = build_chunk_graph(&m, &one);
        assert_eq!(g.neighbors(0), &[0]);
        assert_eq!(g.nneig(0), 1);
        let two = chunk_elements(&[0, 1], 1).unwrap();
        let g = build_chunk_graph(&m, &two);
        assert_eq!(g.neighbors(0), &[0]);
        assert_eq!(g.neighbors(1), &[1]);
    }

    #[test]
    fn coloring_small_cases() {
        let m = tets(&[[0, 1, 2, 3], [1, 2, 3, 4]], 5);
        let n2e = build_node_to_elem(&m);
        assert_eq!(color_elements(&m, &n2e, &[0, 1]).n_colors(), 2);
        let m = tets(&[[0, 1, 2, 3], [4, 5, 6, 7], [8, 9, 10, 11]], 12);
        let n2e = build_node_to_elem(&m);
        assert_eq!(color_elements(&m, &n2e, &[0, 1, 2]).n_colors(), 1);
    }

    #[test]
    fn coloring_on_generated_mesh() {
        let m = generate_box_mesh(2, 2, 3, 1).unwrap();
        let n2e = build_node_to_elem(&m);
        let adj = build_element_adjacency(&m);
        let els: Vec<usize> = (0..m.nelem()).collect();
        let col = color_elements(&m, &n2e, &els);
        col.validate(&m).unwrap();
        assert!(col.n_colors() <= 1 + adj.max_degree());
    }

    #[test]
    fn separator_small_cases() {
        let m = tets(&[[0, 1, 2, 3], [3, 4, 5, 6], [7, 8, 9, 10]], 11);
        let one = chunk_elements(&[0, 1, 2], 3).unwrap();
        assert!(split_with_separators(&m, &one).separator.is_empty());
        // Chunks {0} and {1, 2} share node 3: both elements holding it go.
        let two = chunk_elements(&[0, 1, 2], 1).unwrap();
        let split = split_with_separators(&m, &two);
        assert_eq!(split.separator, vec![0, 1]);
        assert_eq!(split.interior, vec![vec![], vec![], vec![2]]);
        split.validate(&m).unwrap();
    }
}
