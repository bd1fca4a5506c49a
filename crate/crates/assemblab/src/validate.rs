//! Manufactured-solution check of an assembled single-rank system.

use assemblab_core::kernels::{KernelParams, WorkModel};
use assemblab_core::mesh::NodeToElem;
use assemblab_core::sparse::LocalNumbering;
use assemblab_core::verify::{apply_dirichlet, cg_solve, BcSet, CgOptions};
use assemblab_core::Mesh;

use crate::assembly::{assemble_rank, AssemblyConfig};
use crate::error::Result;

/// Nodes on the faces of the mesh's bounding box.
pub fn box_boundary(mesh: &Mesh) -> Vec<bool> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in mesh.coords() {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    mesh.coords().iter().map(|p| (0..3).any(|d| p[d] == lo[d] || p[d] == hi[d])).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverCheck {
    pub iterations: usize,
    /// Max-norm error against the exact field.
    pub max_error: f64,
    /// Nodal solution in ascending global node order.
    pub solution: Vec<f64>,
}

/// Assembles the whole mesh as one rank with `config`, imposes `u = x+y+z`
/// on the box boundary with zero source and solves with CG.
pub fn manufactured_linear(mesh: &Mesh, n2e: &NodeToElem, config: &AssemblyConfig, work: WorkModel) -> Result<SolverCheck> {
    let elements: Vec<usize> = (0..mesh.nelem()).collect();
    let params = KernelParams { source: 0.0, work };
    let mut out = assemble_rank(mesh, n2e, &elements, config, &params)?;
    let exact = |g: usize| mesh.coords()[g].iter().sum::<f64>();
    let boundary = box_boundary(mesh);
    let numbering = LocalNumbering::new(mesh, &elements);
    let mut bcs = BcSet::new();
    for (l, &g) in numbering.globals().iter().enumerate() {
        if boundary[g] {
            bcs.insert(l, exact(g));
        }
    }
    apply_dirichlet(&mut out.matrix, &mut out.rhs, &bcs)?;
    let sol = cg_solve(&out.matrix, &out.rhs, CgOptions { tol: 1e-13, ..Default::default() })?;
    let max_error = sol.x.iter().zip(numbering.globals()).map(|(u, &g)| (u - exact(g)).abs()).fold(0.0, f64::max);
    Ok(SolverCheck { iterations: sol.iterations, max_error, solution: sol.x })
}
