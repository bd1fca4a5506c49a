//! Element kernels: scalar diffusion stiffness/load by Gauss quadrature and
//! an element-local subgrid-scale style update.

use core::hint::black_box;

use crate::error::{invalid, Error, Result};
use crate::mesh::{ElementKind, Mesh};
use crate::quadrature::{gauss_rule, shape_functions, ShapeEval, MAX_NODES};

/// Dense element matrix and right-hand side. Only the leading
/// `n x n` block is meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementSystem {
    pub n: usize,
    pub ae: [[f64; MAX_NODES]; MAX_NODES],
    pub be: [f64; MAX_NODES],
}

impl ElementSystem {
    pub fn zero(n: usize) -> Self {
        ElementSystem { n, ae: [[0.0; MAX_NODES]; MAX_NODES], be: [0.0; MAX_NODES] }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.ae[i][j]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.be[..self.n]
    }
}

/// Synthetic cost knob: the kernel is recomputed `repeat_factor` times to
/// emulate expensive constitutive evaluations. Results do not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkModel {
    repeat_factor: u32,
}

impl WorkModel {
    pub fn new(repeat_factor: u32) -> Result<Self> {
        if repeat_factor == 0 {
            return Err(invalid("repeat_factor must be at least 1"));
        }
        Ok(WorkModel { repeat_factor })
    }

    pub fn repeat_factor(&self) -> u32 {
        self.repeat_factor
    }
}

impl Default for WorkModel {
    fn default() -> Self {
        WorkModel { repeat_factor: 1 }
    }
}

/// Inputs shared by every element of an assembly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub source: f64,
    pub work: WorkModel,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { source: 1.0, work: WorkModel::default() }
    }
}

/// Jacobian `J[r][c] = d x_r / d xi_c` at a reference point.
fn jacobian(coords: &[[f64; 3]], s: &ShapeEval) -> [[f64; 3]; 3] {
    let mut j = [[0.0; 3]; 3];
    for (x, dn) in coords.iter().zip(&s.dn) {
        for r in 0..3 {
            for c in 0..3 {
                j[r][c] += x[r] * dn[c];
            }
        }
    }
    j
}

fn det3(j: &[[f64; 3]; 3]) -> f64 {
    j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
}

pub fn jacobian_det(kind: ElementKind, coords: &[[f64; 3]], point: [f64; 3]) -> f64 {
    det3(&jacobian(coords, &shape_functions(kind, point)))
}

/// Physical-space shape function gradients and the Jacobian determinant at
/// one quadrature point.
struct PointGeometry {
    grad: [[f64; 3]; MAX_NODES],
    det: f64,
}

fn point_geometry(kind: ElementKind, coords: &[[f64; 3]], s: &ShapeEval) -> PointGeometry {
    let j = jacobian(coords, s);
    let det = det3(&j);
    // Cofactor matrix: inv(J) = cof(J)^T / det, and grad = inv(J)^T dN.
    let cof = [
        [j[1][1] * j[2][2] - j[1][2] * j[2][1], j[1][2] * j[2][0] - j[1][0] * j[2][2], j[1][0] * j[2][1] - j[1][1] * j[2][0]],
        [j[0][2] * j[2][1] - j[0][1] * j[2][2], j[0][0] * j[2][2] - j[0][2] * j[2][0], j[0][1] * j[2][0] - j[0][0] * j[2][1]],
        [j[0][1] * j[1][2] - j[0][2] * j[1][1], j[0][2] * j[1][0] - j[0][0] * j[1][2], j[0][0] * j[1][1] - j[0][1] * j[1][0]],
    ];
    let mut grad = [[0.0; 3]; MAX_NODES];
    for a in 0..kind.node_count() {
        let d = s.dn[a];
        for r in 0..3 {
            grad[a][r] = (cof[r][0] * d[0] + cof[r][1] * d[1] + cof[r][2] * d[2]) / det;
        }
    }
    PointGeometry { grad, det }
}

/// Non-positive Jacobian found while integrating an element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BadJacobian {
    pub det: f64,
}

fn diffusion_once(kind: ElementKind, coords: &[[f64; 3]], source: f64) -> core::result::Result<ElementSystem, BadJacobian> {
    let n = kind.node_count();
    let mut sys = ElementSystem::zero(n);
    for g in gauss_rule(kind) {
        let s = shape_functions(kind, g.point);
        let geo = point_geometry(kind, coords, &s);
        if !(geo.det > 0.0) {
            return Err(BadJacobian { det: geo.det });
        }
        let dv = g.weight * geo.det;
        for i in 0..n {
            let gi = geo.grad[i];
            for jn in 0..n {
                let gj = geo.grad[jn];
                sys.ae[i][jn] += dv * (gi[0] * gj[0] + gi[1] * gj[1] + gi[2] * gj[2]);
            }
            sys.be[i] += dv * source * s.n[i];
        }
    }
    Ok(sys)
}

/// Element stiffness `A_ij = sum_g w_g |J_g| grad(phi_i) . grad(phi_j)` and
/// load `b_i = sum_g w_g |J_g| f phi_i` for `-lap(u) = f`.
pub fn compute_element_diffusion(
    coords: &[[f64; 3]],
    kind: ElementKind,
    source: f64,
) -> core::result::Result<ElementSystem, BadJacobian> {
    diffusion_once(kind, coords, source)
}

/// Element system of mesh element `e`, recomputed `work.repeat_factor()`
/// times.
pub fn element_system(mesh: &Mesh, e: usize, params: &KernelParams) -> Result<ElementSystem> {
    let kind = mesh.kind(e);
    let xyz = mesh.element_coords(e);
    let mut sys = diffusion_once(kind, xyz.as_slice(), params.source);
    for _ in 1..params.work.repeat_factor() {
        sys = black_box(diffusion_once(kind, black_box(xyz.as_slice()), params.source));
    }
    sys.map_err(|b| Error::Geometry { element: e, det: b.det })
}

pub fn element_volume(mesh: &Mesh, e: usize) -> Result<f64> {
    let kind = mesh.kind(e);
    let xyz = mesh.element_coords(e);
    let mut vol = 0.0;
    for g in gauss_rule(kind) {
        let det = jacobian_det(kind, xyz.as_slice(), g.point);
        if !(det > 0.0) {
            return Err(Error::Geometry { element: e, det });
        }
        vol += g.weight * det;
    }
    Ok(vol)
}

/// Scaling of the stabilization parameter `tau = TAU_SCALE * h^2`, with
/// `h` the cube root of the element volume.
pub const TAU_SCALE: f64 = 1.0 / 12.0;

/// Element-local subgrid-scale analog: `-tau_e * <u>_e`, where `<u>_e` is the
/// quadrature average of the interpolated nodal field over the element.
/// Reads nodal values only and produces one value per element, so an element
/// loop over it needs no scatter.
pub fn subgrid_update(coords: &[[f64; 3]], kind: ElementKind, nodal: &[f64]) -> f64 {
    let n = kind.node_count();
    let mut vol = 0.0;
    let mut integral = 0.0;
    for g in gauss_rule(kind) {
        let s = shape_functions(kind, g.point);
        let dv = g.weight * det3(&jacobian(coords, &s));
        let uh: f64 = s.n[..n].iter().zip(nodal).map(|(a, b)| a * b).sum();
        vol += dv;
        integral += dv * uh;
    }
    let h = libm::cbrt(vol);
    -TAU_SCALE * h * h * integral / vol
}

/// [`subgrid_update`] for mesh element `e`, gathering from a global nodal
/// field.
pub fn element_subgrid(mesh: &Mesh, e: usize, field: &[f64], work: WorkModel) -> f64 {
    let nodes = mesh.nodes(e);
    let mut local = [0.0; MAX_NODES];
    for (slot, &n) in local.iter_mut().zip(nodes) {
        *slot = field[n];
    }
    let xyz = mesh.element_coords(e);
    let mut v = subgrid_update(xyz.as_slice(), mesh.kind(e), &local[..nodes.len()]);
    for _ in 1..work.repeat_factor() {
        v = black_box(subgrid_update(black_box(xyz.as_slice()), mesh.kind(e), &local[..nodes.len()]));
    }
    v
}
