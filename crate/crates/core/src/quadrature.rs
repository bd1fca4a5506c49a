//! Reference-element quadrature rules and isoparametric shape functions.
//!
//! Reference elements:
//! - `Tet4`: unit simplex, `xi, eta, zeta >= 0`, `xi + eta + zeta <= 1`.
//! - `Pri6`: unit triangle in `(xi, eta)` times `zeta` in `[-1, 1]`.
//! - `Hex8`: the cube `[-1, 1]^3`.
//! - `Pyr5`: a hexahedron `[-1, 1]^3` whose four top nodes are collapsed onto
//!   the apex, so it shares the hexahedron's reference cube and 2x2x2 rule.

use crate::mesh::ElementKind;

/// Upper bound on nodes per element across all kinds.
pub const MAX_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussPoint {
    pub point: [f64; 3],
    pub weight: f64,
}

const G: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)

const fn gp(point: [f64; 3], weight: f64) -> GaussPoint {
    GaussPoint { point, weight }
}

const HEX_RULE: [GaussPoint; 8] = [
    gp([-G, -G, -G], 1.0),
    gp([G, -G, -G], 1.0),
    gp([G, G, -G], 1.0),
    gp([-G, G, -G], 1.0),
    gp([-G, -G, G], 1.0),
    gp([G, -G, G], 1.0),
    gp([G, G, G], 1.0),
    gp([-G, G, G], 1.0),
];

const TET_A: f64 = 0.585_410_196_624_968_5;
const TET_B: f64 = 0.138_196_601_125_010_5;
const TET_W: f64 = 1.0 / 24.0;

const TET_RULE: [GaussPoint; 4] = [
    gp([TET_B, TET_B, TET_B], TET_W),
    gp([TET_A, TET_B, TET_B], TET_W),
    gp([TET_B, TET_A, TET_B], TET_W),
    gp([TET_B, TET_B, TET_A], TET_W),
];

const T1: f64 = 1.0 / 6.0;
const T2: f64 = 2.0 / 3.0;
const PRI_W: f64 = 1.0 / 6.0;

const PRI_RULE: [GaussPoint; 6] = [
    gp([T1, T1, -G], PRI_W),
    gp([T2, T1, -G], PRI_W),
    gp([T1, T2, -G], PRI_W),
    gp([T1, T1, G], PRI_W),
    gp([T2, T1, G], PRI_W),
    gp([T1, T2, G], PRI_W),
];

/// Quadrature points and weights for `kind`; the weights sum to the volume
/// of the reference element.
pub fn gauss_rule(kind: ElementKind) -> &'static [GaussPoint] {
    match kind {
        ElementKind::Tet4 => &TET_RULE,
        ElementKind::Pri6 => &PRI_RULE,
        ElementKind::Hex8 | ElementKind::Pyr5 => &HEX_RULE,
    }
}

/// Shape function values and reference-coordinate derivatives at one point.
/// Only the first `kind.node_count()` entries are meaningful.
#[derive(Debug, Clone, Copy)]
pub struct ShapeEval {
    pub n: [f64; MAX_NODES],
    pub dn: [[f64; 3]; MAX_NODES],
}

const HEX_SIGNS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

pub fn shape_functions(kind: ElementKind, p: [f64; 3]) -> ShapeEval {
    let mut out = ShapeEval { n: [0.0; MAX_NODES], dn: [[0.0; 3]; MAX_NODES] };
    let [x, y, z] = p;
    match kind {
        ElementKind::Tet4 => {
            out.n[..4].copy_from_slice(&[1.0 - x - y - z, x, y, z]);
            out.dn[0] = [-1.0, -1.0, -1.0];
            out.dn[1] = [1.0, 0.0, 0.0];
            out.dn[2] = [0.0, 1.0, 0.0];
            out.dn[3] = [0.0, 0.0, 1.0];
        }
        ElementKind::Pri6 => {
            let tri = [1.0 - x - y, x, y];
            let dtri = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
            for (level, s) in [(0, -1.0), (3, 1.0)] {
                let h = 0.5 * (1.0 + s * z);
                for a in 0..3 {
                    out.n[level + a] = tri[a] * h;
                    out.dn[level + a] = [dtri[a][0] * h, dtri[a][1] * h, tri[a] * 0.5 * s];
                }
            }
        }
        ElementKind::Hex8 => {
            for (a, s) in HEX_SIGNS.iter().enumerate() {
                let (fx, fy, fz) = (1.0 + s[0] * x, 1.0 + s[1] * y, 1.0 + s[2] * z);
                out.n[a] = 0.125 * fx * fy * fz;
                out.dn[a] = [0.125 * s[0] * fy * fz, 0.125 * fx * s[1] * fz, 0.125 * fx * fy * s[2]];
            }
        }
        ElementKind::Pyr5 => {
            // Base nodes are the bottom hexahedron nodes; the apex carries the
            // sum of the four collapsed top nodes, (1 + zeta) / 2.
            for (a, s) in HEX_SIGNS[..4].iter().enumerate() {
                let (fx, fy, fz) = (1.0 + s[0] * x, 1.0 + s[1] * y, 1.0 - z);
                out.n[a] = 0.125 * fx * fy * fz;
                out.dn[a] = [0.125 * s[0] * fy * fz, 0.125 * fx * s[1] * fz, -0.125 * fx * fy];
            }
            out.n[4] = 0.5 * (1.0 + z);
            out.dn[4] = [0.0, 0.0, 0.5];
        }
    }
    out
}

/// Volume of the reference element (sum of the rule weights).
pub fn reference_volume(kind: ElementKind) -> f64 {
    match kind {
        ElementKind::Tet4 => 1.0 / 6.0,
        ElementKind::Pri6 => 1.0,
        ElementKind::Hex8 | ElementKind::Pyr5 => 8.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weight_sum(kind: ElementKind) -> f64 {
        gauss_rule(kind).iter().map(|g| g.weight).sum()
    }

    #[test]
    fn rule_sizes_and_volumes() {
        assert_eq!(gauss_rule(ElementKind::Hex8).len(), 8);
        assert!((weight_sum(ElementKind::Hex8) - 8.0).abs() < 1e-15);
        assert_eq!(gauss_rule(ElementKind::Tet4).len(), 4);
        assert!((weight_sum(ElementKind::Tet4) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(gauss_rule(ElementKind::Pri6).len(), 6);
        assert!((weight_sum(ElementKind::Pri6) - 1.0).abs() < 1e-15);
        for kind in ElementKind::ALL {
            assert_eq!(gauss_rule(kind).len(), kind.gauss_count());
            assert!((weight_sum(kind) - reference_volume(kind)).abs() < 1e-15);
        }
    }

    #[test]
    fn partition_of_unity_everywhere() {
        let pts = [[0.1, 0.2, 0.3], [0.25, 0.25, -0.5], [0.0, 0.0, 0.0], [-0.3, 0.7, 0.2]];
        for kind in ElementKind::ALL {
            for p in pts {
                let s = shape_functions(kind, p);
                let nn = kind.node_count();
                let sum: f64 = s.n[..nn].iter().sum();
                assert!((sum - 1.0).abs() < 1e-14, "{kind:?}");
                for c in 0..3 {
                    let d: f64 = s.dn[..nn].iter().map(|g| g[c]).sum();
                    assert!(d.abs() < 1e-14, "{kind:?} component {c}");
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        let p = [0.21, 0.13, 0.34];
        for kind in ElementKind::ALL {
            let s = shape_functions(kind, p);
            for c in 0..3 {
                let mut lo = p;
                let mut hi = p;
                lo[c] -= h;
                hi[c] += h;
                let (sl, sh) = (shape_functions(kind, lo), shape_functions(kind, hi));
                for a in 0..kind.node_count() {
                    let fd = (sh.n[a] - sl.n[a]) / (2.0 * h);
                    assert!((fd - s.dn[a][c]).abs() < 1e-8, "{kind:?} node {a} dir {c}");
                }
            }
        }
    }

    #[test]
    fn interpolation_is_nodal() {
        // Reference node coordinates for the non-degenerate kinds.
        let tet = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for (a, p) in tet.iter().enumerate() {
            let s = shape_functions(ElementKind::Tet4, *p);
            for b in 0..4 {
                assert!((s.n[b] - f64::from(u8::from(a == b))).abs() < 1e-15);
            }
        }
        for (a, p) in HEX_SIGNS.iter().enumerate() {
            let s = shape_functions(ElementKind::Hex8, *p);
            for b in 0..8 {
                assert!((s.n[b] - f64::from(u8::from(a == b))).abs() < 1e-15);
            }
        }
    }
}
