//! Dirichlet conditions and a conjugate-gradient solver used to validate
//! assembled systems against manufactured solutions.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::sparse::{CsrMatrix, Rhs};

/// Prescribed values keyed by local row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BcSet(pub BTreeMap<usize, f64>);

impl BcSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, node: usize, value: f64) {
        self.0.insert(node, value);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Turns constrained rows into identity rows and eliminates the matching
/// columns into the right-hand side, keeping the matrix symmetric. The
/// sparsity pattern is unchanged; eliminated entries are stored zeros.
pub fn apply_dirichlet(a: &mut CsrMatrix, b: &mut Rhs, bcs: &BcSet) -> Result<()> {
    let n = a.nrows();
    if let Some((&node, _)) = bcs.0.iter().find(|(&k, _)| k >= n) {
        return Err(Error::UnknownNode(node));
    }
    if bcs.is_empty() {
        return Ok(());
    }
    let mut fixed = vec![None; n];
    for (&k, &v) in &bcs.0 {
        fixed[k] = Some(v);
    }
    for i in 0..n {
        let range = a.row_ptr[i]..a.row_ptr[i + 1];
        if let Some(g) = fixed[i] {
            for p in range {
                a.values[p] = if a.col_idx[p] == i { 1.0 } else { 0.0 };
            }
            b.0[i] = g;
        } else {
            for p in range {
                if let Some(g) = fixed[a.col_idx[p]] {
                    b.0[i] -= a.values[p] * g;
                    a.values[p] = 0.0;
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Relative tolerance on the residual 2-norm.
    pub tol: f64,
    pub max_iter: usize,
    pub jacobi: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { tol: 1e-12, max_iter: 10_000, jacobi: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Residual 2-norm after each iteration, starting with the initial one.
    pub residual_history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cg_solve(a: &CsrMatrix, b: &Rhs, opts: CgOptions) -> Result<CgSolution> {
    cg_solve_observed(a, b, opts, |_, _| {})
}

/// CG from a zero initial guess; `observe(k, x_k)` is called after every
/// iteration. Stops when `||r|| <= tol * ||b||`.
pub fn cg_solve_observed(
    a: &CsrMatrix,
    b: &Rhs,
    opts: CgOptions,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<CgSolution> {
    let n = a.nrows();
    if b.len() != n {
        return Err(invalid("rhs length differs from matrix size"));
    }
    let inv_diag: Option<Vec<f64>> = if opts.jacobi {
        let d = a.diagonal();
        if let Some(i) = d.iter().position(|v| !(*v > 0.0)) {
            return Err(invalid(alloc::format!("non-positive diagonal at row {i}")));
        }
        Some(d.iter().map(|v| 1.0 / v).collect())
    } else {
        None
    };
    let precondition = |r: &[f64], z: &mut [f64]| match &inv_diag {
        Some(d) => z.iter_mut().zip(r).zip(d).for_each(|((z, r), d)| *z = r * d),
        None => z.copy_from_slice(r),
    };

    let mut x = vec![0.0; n];
    let mut r = b.0.clone();
    let mut z = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let b_norm = libm::sqrt(dot(&b.0, &b.0));
    let target = opts.tol * b_norm;
    let mut history = vec![b_norm];
    if b_norm == 0.0 {
        return Ok(CgSolution { x, iterations: 0, residual_history: history });
    }
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for k in 1..=opts.max_iter {
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(invalid("matrix is not positive definite along a search direction"));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let r_norm = libm::sqrt(dot(&r, &r));
        history.push(r_norm);
        observe(k, &x);
        if r_norm <= target {
            return Ok(CgSolution { x, iterations: k, residual_history: history });
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Convergence { iterations: opts.max_iter, residual_history: history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> CsrMatrix {
        CsrMatrix { row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    /// 1D Laplacian, tridiagonal [-1, 2, -1].
    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(1)..(i + 2).min(n) {
                col_idx.push(j);
                values.push(if i == j { 2.0 } else { -1.0 });
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { row_ptr, col_idx, values }
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = identity(5);
        let b = Rhs(vec![1.0, -2.0, 3.0, 0.5, 4.0]);
        let sol = cg_solve(&a, &b, CgOptions::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.x, b.0);
    }

    #[test]
    fn empty_bcs_leave_system_alone() {
        let mut a = laplace_1d(6);
        let mut b = Rhs(vec![1.0; 6]);
        let (a0, b0) = (a.clone(), b.clone());
        apply_dirichlet(&mut a, &mut b, &BcSet::new()).unwrap();
        assert_eq!((a, b), (a0, b0));
    }

    #[test]
    fn all_fixed_gives_identity() {
        let mut a = laplace_1d(4);
        let mut b = Rhs(vec![9.0; 4]);
        let mut bcs = BcSet::new();
        for (i, v) in [1.0, 2.0, 3.0, 4.0].into_iter().enumerate() {
            bcs.insert(i, v);
        }
        apply_dirichlet(&mut a, &mut b, &bcs).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a.get(i, j).unwrap_or(0.0), if i == j { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(b.0, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn unknown_bc_node_is_rejected() {
        let mut a = laplace_1d(3);
        let mut b = Rhs(vec![0.0; 3]);
        let mut bcs = BcSet::new();
        bcs.insert(7, 1.0);
        assert_eq!(apply_dirichlet(&mut a, &mut b, &bcs), Err(Error::UnknownNode(7)));
    }

    #[test]
    fn dirichlet_keeps_symmetry_and_solves_linear_profile() {
        let n = 20;
        let mut a = laplace_1d(n);
        let mut b = Rhs(vec![0.0; n]);
        let mut bcs = BcSet::new();
        bcs.insert(0, 1.0);
        bcs.insert(n - 1, 20.0);
        apply_dirichlet(&mut a, &mut b, &bcs).unwrap();
        assert!(a.asymmetry() <= 1e-14);
        let sol = cg_solve(&a, &b, CgOptions::default()).unwrap();
        for (i, v) in sol.x.iter().enumerate() {
            assert!((v - (i + 1) as f64).abs() < 1e-10);
        }
        let pre = cg_solve(&a, &b, CgOptions { jacobi: true, ..Default::default() }).unwrap();
        for (u, v) in sol.x.iter().zip(&pre.x) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn convergence_failure_carries_history() {
        let a = laplace_1d(50);
        let b = Rhs(vec![1.0; 50]);
        match cg_solve(&a, &b, CgOptions { max_iter: 3, ..Default::default() }) {
            Err(Error::Convergence { iterations, residual_history }) => {
                assert_eq!(iterations, 3);
                assert_eq!(residual_history.len(), 4);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }
}
