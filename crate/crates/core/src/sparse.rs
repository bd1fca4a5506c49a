//! CSR storage for one rank's assembled system.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::MAX_NODES;

/// Rank-local node numbering: local rows are the rank's nodes in increasing
/// global order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalNumbering {
    global_of: Vec<usize>,
    local_of: Vec<usize>,
}

impl LocalNumbering {
    pub fn new(mesh: &Mesh, elements: &[usize]) -> Self {
        let mut used = vec![false; mesh.nnode()];
        for &e in elements {
            for &n in mesh.nodes(e) {
                used[n] = true;
            }
        }
        let mut local_of = vec![usize::MAX; mesh.nnode()];
        let mut global_of = Vec::new();
        for (n, _) in used.iter().enumerate().filter(|(_, u)| **u) {
            local_of[n] = global_of.len();
            global_of.push(n);
        }
        LocalNumbering { global_of, local_of }
    }

    pub fn len(&self) -> usize {
        self.global_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global_of.is_empty()
    }

    pub fn global(&self, local: usize) -> usize {
        self.global_of[local]
    }

    pub fn globals(&self) -> &[usize] {
        &self.global_of
    }

    pub fn local(&self, global: usize) -> Option<usize> {
        self.local_of.get(global).copied().filter(|&l| l != usize::MAX)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Storage position of entry `(row, col)`.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let start = self.row_ptr[row];
        self.col_idx[start..self.row_ptr[row + 1]].binary_search(&col).ok().map(|p| start + p)
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.position(row, col).map(|p| self.values[p])
    }

    pub fn zeroed_like(&self) -> Self {
        CsrMatrix { row_ptr: self.row_ptr.clone(), col_idx: self.col_idx.clone(), values: vec![0.0; self.nnz()] }
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows()) {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows()).map(|i| self.get(i, i).unwrap_or(0.0)).collect()
    }

    /// Largest `|a_ij - a_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let t = self.get(j, i).unwrap_or(0.0);
                worst = worst.max((v - t).abs());
            }
        }
        worst
    }
}

/// Right-hand side over the rank's local nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Rhs(pub Vec<f64>);

impl Rhs {
    pub fn zeros(n: usize) -> Self {
        Rhs(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Zeroed CSR whose pattern is the node pairs co-occurring in one of the
/// rank's elements, in local numbering.
pub fn build_sparsity(mesh: &Mesh, elements: &[usize], numbering: &LocalNumbering) -> CsrMatrix {
    let n = numbering.len();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &e in elements {
        for &a in mesh.nodes(e) {
            let la = numbering.local_of[a];
            for &b in mesh.nodes(e) {
                rows[la].push(numbering.local_of[b]);
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::new();
    for mut r in rows {
        r.sort_unstable();
        r.dedup();
        col_idx.extend_from_slice(&r);
        row_ptr.push(col_idx.len());
    }
    let nnz = col_idx.len();
    CsrMatrix { row_ptr, col_idx, values: vec![0.0; nnz] }
}

/// Where an element's local matrix and vector land in the rank storage.
#[derive(Debug, Clone, Copy)]
pub struct ScatterMap {
    pub n: usize,
    pub rows: [usize; MAX_NODES],
    pub pos: [[usize; MAX_NODES]; MAX_NODES],
}

impl ScatterMap {
    pub fn new(mesh: &Mesh, e: usize, numbering: &LocalNumbering, pattern: &CsrMatrix) -> Result<Self> {
        let nodes = mesh.nodes(e);
        let mut map = ScatterMap { n: nodes.len(), rows: [0; MAX_NODES], pos: [[0; MAX_NODES]; MAX_NODES] };
        for (i, &g) in nodes.iter().enumerate() {
            map.rows[i] = numbering.local(g).ok_or(Error::UnknownNode(g))?;
        }
        for i in 0..map.n {
            for j in 0..map.n {
                let (r, c) = (map.rows[i], map.rows[j]);
                map.pos[i][j] = pattern.position(r, c).ok_or(Error::MissingEntry { row: r, col: c })?;
            }
        }
        Ok(map)
    }
}
