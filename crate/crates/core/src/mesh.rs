//! Hybrid unstructured meshes and their connectivity graphs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::kernels::jacobian_det;
use crate::quadrature::{gauss_rule, MAX_NODES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElementKind {
    Tet4,
    Pyr5,
    Pri6,
    Hex8,
}

impl ElementKind {
    pub const ALL: [ElementKind; 4] = [Self::Tet4, Self::Pyr5, Self::Pri6, Self::Hex8];

    pub const fn node_count(self) -> usize {
        match self {
            Self::Tet4 => 4,
            Self::Pyr5 => 5,
            Self::Pri6 => 6,
            Self::Hex8 => 8,
        }
    }

    /// Number of quadrature points used by the element kernel.
    pub fn gauss_count(self) -> usize {
        gauss_rule(self).len()
    }

    pub const fn tag(self) -> &'static str {
        match self {
            Self::Tet4 => "TET4",
            Self::Pyr5 => "PYR5",
            Self::Pri6 => "PRI6",
            Self::Hex8 => "HEX8",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub(crate) const fn index(self) -> usize {
        match self {
            Self::Tet4 => 0,
            Self::Pyr5 => 1,
            Self::Pri6 => 2,
            Self::Hex8 => 3,
        }
    }
}

impl core::fmt::Display for ElementKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Node coordinates of one element, gathered into a fixed buffer.
#[derive(Debug, Clone, Copy)]
pub struct ElementCoords {
    pub len: usize,
    pub xyz: [[f64; 3]; MAX_NODES],
}

impl ElementCoords {
    pub fn as_slice(&self) -> &[[f64; 3]] {
        &self.xyz[..self.len]
    }
}

/// A hybrid mesh with flat connectivity storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    coords: Vec<[f64; 3]>,
    kinds: Vec<ElementKind>,
    offsets: Vec<usize>,
    connectivity: Vec<usize>,
}

impl Mesh {
    /// Builds a mesh, checking node indices, distinctness within each
    /// element, and a positive Jacobian at every quadrature point.
    pub fn new<I, N>(coords: Vec<[f64; 3]>, elements: I) -> Result<Self>
    where
        I: IntoIterator<Item = (ElementKind, N)>,
        N: AsRef<[usize]>,
    {
        let mut mesh = Mesh { coords, kinds: Vec::new(), offsets: vec![0], connectivity: Vec::new() };
        for (kind, nodes) in elements {
            mesh.push_element(kind, nodes.as_ref())?;
        }
        mesh.check_geometry()?;
        Ok(mesh)
    }

    fn push_element(&mut self, kind: ElementKind, nodes: &[usize]) -> Result<()> {
        let e = self.kinds.len();
        if nodes.len() != kind.node_count() {
            return Err(Error::InvalidMesh(format!(
                "element {e}: {kind} needs {} nodes, got {}",
                kind.node_count(),
                nodes.len()
            )));
        }
        for (i, &n) in nodes.iter().enumerate() {
            if n >= self.coords.len() {
                return Err(Error::InvalidMesh(format!("element {e}: node {n} out of range")));
            }
            if nodes[..i].contains(&n) {
                return Err(Error::InvalidMesh(format!("element {e}: repeated node {n}")));
            }
        }
        self.kinds.push(kind);
        self.connectivity.extend_from_slice(nodes);
        self.offsets.push(self.connectivity.len());
        Ok(())
    }

    fn check_geometry(&self) -> Result<()> {
        for e in 0..self.nelem() {
            let kind = self.kind(e);
            let xyz = self.element_coords(e);
            for g in gauss_rule(kind) {
                let det = jacobian_det(kind, xyz.as_slice(), g.point);
                if !(det > 0.0) {
                    return Err(Error::Geometry { element: e, det });
                }
            }
        }
        Ok(())
    }

    pub fn nnode(&self) -> usize {
        self.coords.len()
    }

    pub fn nelem(&self) -> usize {
        self.kinds.len()
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn kind(&self, e: usize) -> ElementKind {
        self.kinds[e]
    }

    pub fn kinds(&self) -> &[ElementKind] {
        &self.kinds
    }

    pub fn nodes(&self, e: usize) -> &[usize] {
        &self.connectivity[self.offsets[e]..self.offsets[e + 1]]
    }

    pub fn elements(&self) -> impl Iterator<Item = (ElementKind, &[usize])> + '_ {
        (0..self.nelem()).map(move |e| (self.kind(e), self.nodes(e)))
    }

    pub fn element_coords(&self, e: usize) -> ElementCoords {
        let mut out = ElementCoords { len: 0, xyz: [[0.0; 3]; MAX_NODES] };
        for &n in self.nodes(e) {
            out.xyz[out.len] = self.coords[n];
            out.len += 1;
        }
        out
    }

    pub fn centroid(&self, e: usize) -> [f64; 3] {
        let nodes = self.nodes(e);
        let mut c = [0.0; 3];
        for &n in nodes {
            for d in 0..3 {
                c[d] += self.coords[n][d];
            }
        }
        c.map(|v| v / nodes.len() as f64)
    }

    /// Number of elements of each kind, indexed like [`ElementKind::ALL`].
    pub fn kind_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for k in &self.kinds {
            counts[k.index()] += 1;
        }
        counts
    }

    /// Reorders elements: element `i` of the result is element `order[i]`
    /// of `self`. Used to build scrambled meshes for property tests.
    pub fn permute_elements(&self, order: &[usize]) -> Result<Mesh> {
        if order.len() != self.nelem() {
            return Err(invalid("permutation length differs from element count"));
        }
        let mut seen = vec![false; self.nelem()];
        for &e in order {
            if e >= self.nelem() || core::mem::replace(&mut seen[e], true) {
                return Err(invalid("not a permutation"));
            }
        }
        let mut mesh = Mesh {
            coords: self.coords.clone(),
            kinds: Vec::with_capacity(self.nelem()),
            offsets: vec![0],
            connectivity: Vec::with_capacity(self.connectivity.len()),
        };
        for &e in order {
            mesh.push_element(self.kind(e), self.nodes(e))?;
        }
        Ok(mesh)
    }
}

/// Thickness of each boundary-layer (prism) sheet relative to a core cell.
pub const LAYER_THICKNESS: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Hex,
    Prism,
    Transition,
    Core,
}

struct BoxGrid {
    nx: usize,
    ny: usize,
    nz: usize,
    layers: usize,
    all_hex: bool,
}

impl BoxGrid {
    fn node(&self, i: usize, j: usize, k: usize) -> usize {
        i + (self.nx + 1) * (j + (self.ny + 1) * k)
    }

    fn cell(&self, i: usize, _j: usize, k: usize) -> Cell {
        if self.all_hex || i == self.nx - 1 {
            Cell::Hex
        } else if k < self.layers {
            Cell::Prism
        } else if k == self.layers {
            Cell::Transition
        } else {
            Cell::Core
        }
    }

    fn neighbor(&self, i: usize, j: usize, k: usize, axis: usize, up: bool) -> Option<Cell> {
        let mut c = [i as isize, j as isize, k as isize];
        c[axis] += if up { 1 } else { -1 };
        let dims = [self.nx, self.ny, self.nz];
        if c.iter().zip(dims).any(|(&v, d)| v < 0 || v >= d as isize) {
            return None;
        }
        Some(self.cell(c[0] as usize, c[1] as usize, c[2] as usize))
    }
}

/// Whether a cell face stays a quadrilateral (pyramid base) or is split into
/// two triangles (tetrahedron bases). Both cells sharing a face agree, which
/// keeps the mesh conforming.
fn face_is_quad(this: Cell, neighbor: Option<Cell>, horizontal: bool) -> bool {
    match neighbor {
        Some(Cell::Hex) => true,
        Some(Cell::Prism) => !horizontal,
        _ => !horizontal && this == Cell::Transition,
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Generates a box of `nx * ny * nz` cells with a boundary-layer structure:
/// `layers` thin prism sheets on the `z = 0` face, one transition sheet of
/// pyramids and tetrahedra, a tetrahedral core above, and a hexahedral
/// block along the `x = nx` wall. Transition and core cells get a center
/// node; each of their faces becomes a pyramid (quad face) or two tetrahedra
/// (triangulated face). When `nx < 2` or `ny < 2` every cell is a hexahedron.
///
/// Element order follows the sheets: prisms, transition, core, hex wall.
pub fn generate_box_mesh(nx: usize, ny: usize, nz: usize, layers: usize) -> Result<Mesh> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(invalid("box dimensions must be at least 1"));
    }
    if layers >= nz {
        return Err(invalid(format!("layers ({layers}) must be below nz ({nz})")));
    }
    let grid = BoxGrid { nx, ny, nz, layers, all_hex: nx < 2 || ny < 2 };

    let mut z = Vec::with_capacity(nz + 1);
    z.push(0.0);
    for k in 0..nz {
        let dz = if k < layers { LAYER_THICKNESS } else { 1.0 };
        z.push(z[k] + dz);
    }
    let mut coords = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for zk in &z {
        for j in 0..=ny {
            for i in 0..=nx {
                coords.push([i as f64, j as f64, *zk]);
            }
        }
    }

    let mut elements: Vec<(ElementKind, Vec<usize>)> = Vec::new();
    let cells_of = |want: Cell| {
        let mut v = Vec::new();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    if grid.cell(i, j, k) == want {
                        v.push((i, j, k));
                    }
                }
            }
        }
        v
    };

    for (i, j, k) in cells_of(Cell::Prism) {
        // Split along the diagonal through the lowest-numbered corner, which
        // is the same rule the center-node cells use for their faces.
        let b = [grid.node(i, j, k), grid.node(i + 1, j, k), grid.node(i + 1, j + 1, k), grid.node(i, j + 1, k)];
        let t = [
            grid.node(i, j, k + 1),
            grid.node(i + 1, j, k + 1),
            grid.node(i + 1, j + 1, k + 1),
            grid.node(i, j + 1, k + 1),
        ];
        elements.push((ElementKind::Pri6, vec![b[0], b[1], b[2], t[0], t[1], t[2]]));
        elements.push((ElementKind::Pri6, vec![b[0], b[2], b[3], t[0], t[2], t[3]]));
    }

    for sheet in [Cell::Transition, Cell::Core] {
        for (i, j, k) in cells_of(sheet) {
            let center = coords.len();
            coords.push([i as f64 + 0.5, j as f64 + 0.5, 0.5 * (z[k] + z[k + 1])]);
            let corner = |a: usize, b: usize, c: usize| grid.node(i + a, j + b, k + c);
            // (face corners in cyclic order, axis, upper side)
            let faces = [
                ([corner(0, 0, 0), corner(0, 1, 0), corner(0, 1, 1), corner(0, 0, 1)], 0, false),
                ([corner(1, 0, 0), corner(1, 1, 0), corner(1, 1, 1), corner(1, 0, 1)], 0, true),
                ([corner(0, 0, 0), corner(1, 0, 0), corner(1, 0, 1), corner(0, 0, 1)], 1, false),
                ([corner(0, 1, 0), corner(1, 1, 0), corner(1, 1, 1), corner(0, 1, 1)], 1, true),
                ([corner(0, 0, 0), corner(1, 0, 0), corner(1, 1, 0), corner(0, 1, 0)], 2, false),
                ([corner(0, 0, 1), corner(1, 0, 1), corner(1, 1, 1), corner(0, 1, 1)], 2, true),
            ];
            for (quad, axis, up) in faces {
                let neighbor = grid.neighbor(i, j, k, axis, up);
                if face_is_quad(sheet, neighbor, axis == 2) {
                    let n = cross(sub(coords[quad[1]], coords[quad[0]]), sub(coords[quad[3]], coords[quad[0]]));
                    let base = if dot(n, sub(coords[center], coords[quad[0]])) > 0.0 {
                        quad
                    } else {
                        [quad[0], quad[3], quad[2], quad[1]]
                    };
                    elements.push((ElementKind::Pyr5, vec![base[0], base[1], base[2], base[3], center]));
                } else {
                    let m = (0..4).min_by_key(|&a| quad[a]).unwrap_or(0);
                    let q = |o: usize| quad[(m + o) % 4];
                    for tri in [[q(0), q(1), q(2)], [q(0), q(2), q(3)]] {
                        let vol = dot(
                            cross(sub(coords[tri[1]], coords[tri[0]]), sub(coords[tri[2]], coords[tri[0]])),
                            sub(coords[center], coords[tri[0]]),
                        );
                        let tet =
                            if vol > 0.0 { [tri[0], tri[1], tri[2], center] } else { [tri[0], tri[2], tri[1], center] };
                        elements.push((ElementKind::Tet4, tet.to_vec()));
                    }
                }
            }
        }
    }

    for (i, j, k) in cells_of(Cell::Hex) {
        elements.push((
            ElementKind::Hex8,
            vec![
                grid.node(i, j, k),
                grid.node(i + 1, j, k),
                grid.node(i + 1, j + 1, k),
                grid.node(i, j + 1, k),
                grid.node(i, j, k + 1),
                grid.node(i + 1, j, k + 1),
                grid.node(i + 1, j + 1, k + 1),
                grid.node(i, j + 1, k + 1),
            ],
        ));
    }

    Mesh::new(coords, elements)
}

/// Node to element multimap in compressed form. Element lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeToElem {
    offsets: Vec<usize>,
    elems: Vec<usize>,
}

impl NodeToElem {
    pub fn elements_of(&self, node: usize) -> &[usize] {
        &self.elems[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn nnode(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Total number of (node, element) incidences.
    pub fn total_len(&self) -> usize {
        self.elems.len()
    }
}

pub fn build_node_to_elem(mesh: &Mesh) -> NodeToElem {
    let mut counts = vec![0usize; mesh.nnode() + 1];
    for e in 0..mesh.nelem() {
        for &n in mesh.nodes(e) {
            counts[n + 1] += 1;
        }
    }
    for n in 0..mesh.nnode() {
        counts[n + 1] += counts[n];
    }
    let offsets = counts;
    let mut fill = offsets.clone();
    let mut elems = vec![0; offsets[mesh.nnode()]];
    // Elements are visited in increasing order, so every list ends up sorted.
    for e in 0..mesh.nelem() {
        for &n in mesh.nodes(e) {
            elems[fill[n]] = e;
            fill[n] += 1;
        }
    }
    NodeToElem { offsets, elems }
}

/// Element neighbor lists: two elements are adjacent iff they share a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementAdjacency {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl ElementAdjacency {
    pub fn neighbors(&self, e: usize) -> &[usize] {
        &self.neighbors[self.offsets[e]..self.offsets[e + 1]]
    }

    pub fn nelem(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn degree(&self, e: usize) -> usize {
        self.offsets[e + 1] - self.offsets[e]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.nelem()).map(|e| self.degree(e)).max().unwrap_or(0)
    }
}

pub fn build_element_adjacency(mesh: &Mesh) -> ElementAdjacency {
    build_element_adjacency_with(mesh, &build_node_to_elem(mesh))
}

pub fn build_element_adjacency_with(mesh: &Mesh, n2e: &NodeToElem) -> ElementAdjacency {
    let mut offsets = Vec::with_capacity(mesh.nelem() + 1);
    offsets.push(0);
    let mut neighbors = Vec::new();
    let mut mark = vec![usize::MAX; mesh.nelem()];
    for e in 0..mesh.nelem() {
        let start = neighbors.len();
        mark[e] = e;
        for &n in mesh.nodes(e) {
            for &f in n2e.elements_of(n) {
                if mark[f] != e {
                    mark[f] = e;
                    neighbors.push(f);
                }
            }
        }
        neighbors[start..].sort_unstable();
        offsets.push(neighbors.len());
    }
    ElementAdjacency { offsets, neighbors }
}
