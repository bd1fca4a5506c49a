//! Rank layout and the sequential reference assembly loop.

use alloc::vec::Vec;

use crate::error::Result;
use crate::kernels::{element_system, ElementSystem, KernelParams};
use crate::mesh::Mesh;
use crate::sparse::{build_sparsity, CsrMatrix, LocalNumbering, Rhs, ScatterMap};

/// The elements a rank owns together with its local numbering and zeroed
/// sparsity pattern.
#[derive(Debug, Clone)]
pub struct RankLayout {
    pub elements: Vec<usize>,
    pub numbering: LocalNumbering,
    pub pattern: CsrMatrix,
}

impl RankLayout {
    pub fn new(mesh: &Mesh, elements: &[usize]) -> Self {
        let numbering = LocalNumbering::new(mesh, elements);
        let pattern = build_sparsity(mesh, elements, &numbering);
        RankLayout { elements: elements.to_vec(), numbering, pattern }
    }

    pub fn scatter_map(&self, mesh: &Mesh, e: usize) -> Result<ScatterMap> {
        ScatterMap::new(mesh, e, &self.numbering, &self.pattern)
    }
}

/// Adds one element system into plain storage.
pub fn scatter_add(values: &mut [f64], rhs: &mut [f64], map: &ScatterMap, sys: &ElementSystem) {
    for i in 0..map.n {
        for j in 0..map.n {
            values[map.pos[i][j]] += sys.ae[i][j];
        }
        rhs[map.rows[i]] += sys.be[i];
    }
}

/// Assembles `elements` (a subset of the layout's elements) into the given
/// storage, in order.
pub fn assemble_into(
    mesh: &Mesh,
    layout: &RankLayout,
    elements: &[usize],
    params: &KernelParams,
    values: &mut [f64],
    rhs: &mut [f64],
) -> Result<()> {
    for &e in elements {
        let sys = element_system(mesh, e, params)?;
        let map = layout.scatter_map(mesh, e)?;
        scatter_add(values, rhs, &map, &sys);
    }
    Ok(())
}

/// The plain element loop: compute each element system and scatter it.
pub fn assemble_sequential(mesh: &Mesh, layout: &RankLayout, params: &KernelParams) -> Result<(CsrMatrix, Rhs)> {
    let mut a = layout.pattern.zeroed_like();
    let mut b = Rhs::zeros(layout.numbering.len());
    assemble_into(mesh, layout, &layout.elements, params, &mut a.values, &mut b.0)?;
    Ok((a, b))
}

/// Worst entrywise relative difference between two systems with the same
/// pattern, `|x - y| / max(|x|, |y|, floor)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Difference {
    pub max_rel: f64,
    /// Storage index of the worst matrix entry, or `nnz + i` for rhs row `i`.
    pub worst_index: usize,
}

pub const COMPARE_TOLERANCE: f64 = 1e-12;
pub const COMPARE_FLOOR: f64 = 1e-300;

pub fn relative_difference(x: f64, y: f64, floor: f64) -> f64 {
    if x == y {
        return 0.0;
    }
    (x - y).abs() / x.abs().max(y.abs()).max(floor)
}

/// Entrywise comparison of two assembled systems. Returns `None` when the
/// patterns or sizes differ.
pub fn compare_systems(a: (&CsrMatrix, &Rhs), b: (&CsrMatrix, &Rhs), floor: f64) -> Option<Difference> {
    if !a.0.same_pattern(b.0) || a.1.len() != b.1.len() {
        return None;
    }
    let mut diff = Difference { max_rel: 0.0, worst_index: 0 };
    let pairs = a.0.values.iter().zip(&b.0.values).chain(a.1 .0.iter().zip(&b.1 .0));
    for (k, (x, y)) in pairs.enumerate() {
        let d = relative_difference(*x, *y, floor);
        if d > diff.max_rel || d.is_nan() {
            diff = Difference { max_rel: d, worst_index: k };
        }
    }
    Some(diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_box_mesh;

    #[test]
    fn single_element_equals_its_system() {
        let m = generate_box_mesh(1, 1, 1, 0).unwrap();
        let layout = RankLayout::new(&m, &[0]);
        let params = KernelParams::default();
        let (a, b) = assemble_sequential(&m, &layout, &params).unwrap();
        let sys = element_system(&m, 0, &params).unwrap();
        let local: Vec<usize> = m.nodes(0).iter().map(|&g| layout.numbering.local(g).unwrap()).collect();
        for i in 0..8 {
            assert_eq!(b.0[local[i]], sys.be[i]);
            for j in 0..8 {
                assert_eq!(a.get(local[i], local[j]).unwrap(), sys.ae[i][j]);
            }
        }
    }

    #[test]
    fn disjoint_elements_independent_of_order() {
        let m = generate_box_mesh(1, 1, 3, 0).unwrap();
        // Elements 0 and 2 share no node.
        let fwd = RankLayout::new(&m, &[0, 2]);
        let rev = RankLayout::new(&m, &[2, 0]);
        let p = KernelParams::default();
        assert_eq!(assemble_sequential(&m, &fwd, &p).unwrap(), assemble_sequential(&m, &rev, &p).unwrap());
    }

    #[test]
    fn rhs_total_is_sum_of_element_loads() {
        let m = generate_box_mesh(6, 6, 5, 1).unwrap();
        assert!(m.nelem() > 1000);
        let els: Vec<usize> = (0..m.nelem()).collect();
        let layout = RankLayout::new(&m, &els);
        let p = KernelParams { source: 1.5, ..Default::default() };
        let (_, b) = assemble_sequential(&m, &layout, &p).unwrap();
        let expected: f64 = els.iter().map(|&e| element_system(&m, e, &p).unwrap().rhs().iter().sum::<f64>()).sum();
        let total: f64 = b.0.iter().sum();
        assert!((total - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn compare_detects_perturbation() {
        let m = generate_box_mesh(2, 2, 2, 1).unwrap();
        let els: Vec<usize> = (0..m.nelem()).collect();
        let layout = RankLayout::new(&m, &els);
        let (a, b) = assemble_sequential(&m, &layout, &KernelParams::default()).unwrap();
        assert_eq!(compare_systems((&a, &b), (&a, &b), COMPARE_FLOOR).unwrap().max_rel, 0.0);
        let mut a2 = a.clone();
        a2.values[3] *= 1.0 + 1e-6;
        let d = compare_systems((&a, &b), (&a2, &b), COMPARE_FLOOR).unwrap();
        assert!(d.max_rel > COMPARE_TOLERANCE);
        assert_eq!(d.worst_index, 3);
        let other = RankLayout::new(&m, &els[..3]);
        let (c, d2) = assemble_sequential(&m, &other, &KernelParams::default()).unwrap();
        assert!(compare_systems((&a, &b), (&c, &d2), COMPARE_FLOOR).is_none());
    }
}
