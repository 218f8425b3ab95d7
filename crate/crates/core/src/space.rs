//! Fully discontinuous vector-valued P2 space.
//!
//! Reference triangle: `(0,0), (1,0), (0,1)`. Local nodes 0–2 are the
//! vertices of the stored triangle in order; node `3 + i` is the midpoint of
//! the edge opposite vertex `i`. Global dof of `(triangle t, node k,
//! component c)` is `12 t + 2 k + c`, so each element owns a contiguous
//! block of twelve.

use thiserror::Error;

use crate::mesh::{Mesh, Point};

pub const NODES: usize = 6;
pub const LOCAL_DOFS: usize = 12;

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("field built on mesh generation {field}, mesh is generation {mesh}")]
    GenerationMismatch { field: u64, mesh: u64 },
    #[error("coefficient vector has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
}

/// Reference nodes in local order.
pub const REFERENCE_NODES: [[f64; 2]; NODES] = [
    [0.0, 0.0],
    [1.0, 0.0],
    [0.0, 1.0],
    [0.5, 0.5],
    [0.0, 0.5],
    [0.5, 0.0],
];

fn barycentric(p: [f64; 2]) -> [f64; 3] {
    [1.0 - p[0] - p[1], p[0], p[1]]
}

/// Gradients of the barycentric coordinates with respect to `(ξ, η)`.
const BARY_GRAD: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

pub fn shape_eval(p: [f64; 2]) -> [f64; NODES] {
    let l = barycentric(p);
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
        4.0 * l[0] * l[1],
    ]
}

pub fn shape_grad(p: [f64; 2]) -> [[f64; 2]; NODES] {
    let l = barycentric(p);
    let g = BARY_GRAD;
    let mut out = [[0.0; 2]; NODES];
    for d in 0..2 {
        for i in 0..3 {
            out[i][d] = (4.0 * l[i] - 1.0) * g[i][d];
        }
        out[3][d] = 4.0 * (g[1][d] * l[2] + l[1] * g[2][d]);
        out[4][d] = 4.0 * (g[2][d] * l[0] + l[2] * g[0][d]);
        out[5][d] = 4.0 * (g[0][d] * l[1] + l[0] * g[1][d]);
    }
    out
}

/// Reference Hessians (constant for quadratics).
pub fn shape_hessian() -> [Mat2; NODES] {
    let g = BARY_GRAD;
    let outer = |a: [f64; 2], b: [f64; 2]| -> Mat2 {
        [
            [a[0] * b[0] + b[0] * a[0], a[0] * b[1] + b[0] * a[1]],
            [a[1] * b[0] + b[1] * a[0], a[1] * b[1] + b[1] * a[1]],
        ]
    };
    let scale = |m: Mat2, s: f64| -> Mat2 { [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]] };
    [
        scale(outer(g[0], g[0]), 2.0),
        scale(outer(g[1], g[1]), 2.0),
        scale(outer(g[2], g[2]), 2.0),
        scale(outer(g[1], g[2]), 4.0),
        scale(outer(g[2], g[0]), 4.0),
        scale(outer(g[0], g[1]), 4.0),
    ]
}

/// Affine map from the reference triangle onto a physical triangle.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap {
    pub origin: Point,
    /// Columns are `p1 - p0` and `p2 - p0`.
    pub jacobian: Mat2,
    pub inverse: Mat2,
    pub det: f64,
}

impl AffineMap {
    pub fn new(points: [Point; 3]) -> Self {
        let [p0, p1, p2] = points;
        let j = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inverse = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
        Self {
            origin: p0,
            jacobian: j,
            inverse,
            det,
        }
    }

    pub fn of_triangle(mesh: &Mesh, t: usize) -> Self {
        Self::new(mesh.triangle_points(t))
    }

    pub fn to_physical(&self, p: [f64; 2]) -> Point {
        let j = self.jacobian;
        [
            self.origin[0] + j[0][0] * p[0] + j[0][1] * p[1],
            self.origin[1] + j[1][0] * p[0] + j[1][1] * p[1],
        ]
    }

    pub fn to_reference(&self, x: Point) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        let k = self.inverse;
        [k[0][0] * d[0] + k[0][1] * d[1], k[1][0] * d[0] + k[1][1] * d[1]]
    }

    /// Physical gradient `J^{-T} ∇_ξ`.
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let k = self.inverse;
        [k[0][0] * g[0] + k[1][0] * g[1], k[0][1] * g[0] + k[1][1] * g[1]]
    }

    /// Physical Hessian `J^{-T} H J^{-1}`.
    pub fn push_hessian(&self, h: Mat2) -> Mat2 {
        let k = self.inverse;
        let mut out = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let mut s = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        s += k[i][a] * h[i][j] * k[j][b];
                    }
                }
                out[a][b] = s;
            }
        }
        out
    }
}

/// Physical shape-function gradients at a reference point.
pub fn physical_shape_grad(map: &AffineMap, p: [f64; 2]) -> [[f64; 2]; NODES] {
    let mut g = shape_grad(p);
    for gi in g.iter_mut() {
        *gi = map.push_gradient(*gi);
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    num_triangles: usize,
    generation: u64,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        Self {
            num_triangles: mesh.num_triangles(),
            generation: mesh.generation(),
        }
    }

    pub fn num_dofs(&self) -> usize {
        LOCAL_DOFS * self.num_triangles
    }

    pub fn num_triangles(&self) -> usize {
        self.num_triangles
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    #[inline]
    pub fn dof(&self, t: usize, node: usize, comp: usize) -> usize {
        LOCAL_DOFS * t + 2 * node + comp
    }

    pub fn element_dofs(&self, t: usize) -> std::ops::Range<usize> {
        LOCAL_DOFS * t..LOCAL_DOFS * (t + 1)
    }

    pub fn check(&self, mesh: &Mesh) -> Result<(), SpaceError> {
        if self.generation != mesh.generation() || self.num_triangles != mesh.num_triangles() {
            return Err(SpaceError::GenerationMismatch {
                field: self.generation,
                mesh: mesh.generation(),
            });
        }
        Ok(())
    }
}

/// Coefficient vector over a [`DofMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    pub coeffs: Vec<f64>,
    generation: u64,
}

impl DiscreteField {
    pub fn new(dofmap: &DofMap, coeffs: Vec<f64>) -> Result<Self, SpaceError> {
        if coeffs.len() != dofmap.num_dofs() {
            return Err(SpaceError::LengthMismatch {
                got: coeffs.len(),
                expected: dofmap.num_dofs(),
            });
        }
        Ok(Self {
            coeffs,
            generation: dofmap.generation(),
        })
    }

    pub fn zeros(dofmap: &DofMap) -> Self {
        Self {
            coeffs: vec![0.0; dofmap.num_dofs()],
            generation: dofmap.generation(),
        }
    }

    /// Nodal interpolant of `u` on every element.
    pub fn interpolate<F: Fn(Point) -> Vec2>(mesh: &Mesh, dofmap: &DofMap, u: F) -> Self {
        let mut coeffs = vec![0.0; dofmap.num_dofs()];
        for t in 0..mesh.num_triangles() {
            let map = AffineMap::of_triangle(mesh, t);
            for (k, node) in REFERENCE_NODES.iter().enumerate() {
                let v = u(map.to_physical(*node));
                coeffs[dofmap.dof(t, k, 0)] = v[0];
                coeffs[dofmap.dof(t, k, 1)] = v[1];
            }
        }
        Self {
            coeffs,
            generation: dofmap.generation(),
        }
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    fn check(&self, mesh: &Mesh) -> Result<(), SpaceError> {
        if self.generation != mesh.generation() || self.coeffs.len() != LOCAL_DOFS * mesh.num_triangles() {
            return Err(SpaceError::GenerationMismatch {
                field: self.generation,
                mesh: mesh.generation(),
            });
        }
        Ok(())
    }

    pub fn local(&self, t: usize) -> &[f64] {
        &self.coeffs[LOCAL_DOFS * t..LOCAL_DOFS * (t + 1)]
    }

    pub fn eval(&self, mesh: &Mesh, t: usize, p: [f64; 2]) -> Result<Vec2, SpaceError> {
        self.check(mesh)?;
        Ok(eval_local(self.local(t), p))
    }

    /// Physical gradient `G[i][j] = ∂u_i/∂x_j`.
    pub fn eval_grad(&self, mesh: &Mesh, t: usize, p: [f64; 2]) -> Result<Mat2, SpaceError> {
        self.check(mesh)?;
        let map = AffineMap::of_triangle(mesh, t);
        Ok(grad_local(self.local(t), &map, p))
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

pub fn eval_local(local: &[f64], p: [f64; 2]) -> Vec2 {
    let n = shape_eval(p);
    let mut u = [0.0; 2];
    for k in 0..NODES {
        u[0] += n[k] * local[2 * k];
        u[1] += n[k] * local[2 * k + 1];
    }
    u
}

pub fn grad_local(local: &[f64], map: &AffineMap, p: [f64; 2]) -> Mat2 {
    let g = physical_shape_grad(map, p);
    let mut out = [[0.0; 2]; 2];
    for k in 0..NODES {
        for c in 0..2 {
            for d in 0..2 {
                out[c][d] += local[2 * k + c] * g[k][d];
            }
        }
    }
    out
}

/// Physical Hessians of both components, `H[c][a][b] = ∂²u_c/∂x_a∂x_b`.
pub fn hessian_local(local: &[f64], map: &AffineMap) -> [Mat2; 2] {
    let hs = shape_hessian();
    let mut out = [[[0.0; 2]; 2]; 2];
    for (k, h) in hs.iter().enumerate() {
        let ph = map.push_hessian(*h);
        for c in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    out[c][a][b] += local[2 * k + c] * ph[a][b];
                }
            }
        }
    }
    out
}

/// Sampling grid used for L∞ norms: the 28 barycentric lattice points with
/// denominator 6 per triangle.
pub fn triangle_sampling_grid() -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(28);
    for j in 0..=6 {
        for i in 0..=(6 - j) {
            pts.push([i as f64 / 6.0, j as f64 / 6.0]);
        }
    }
    pts
}

/// Seven equispaced parameters on `[0, 1]` for edge L∞ norms.
pub fn edge_sampling_params() -> [f64; 7] {
    [0.0, 1.0 / 6.0, 2.0 / 6.0, 0.5, 4.0 / 6.0, 5.0 / 6.0, 1.0]
}

/// Reference coordinates of the point at parameter `s` along local edge
/// `le` of a triangle, traversed from vertex `le+1` to vertex `le+2`.
pub fn reference_edge_point(le: usize, s: f64) -> [f64; 2] {
    let a = REFERENCE_NODES[(le + 1) % 3];
    let b = REFERENCE_NODES[(le + 2) % 3];
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

/// Local node indices `(start, end, midpoint)` of local edge `le`.
pub fn edge_nodes(le: usize) -> [usize; 3] {
    [(le + 1) % 3, (le + 2) % 3, 3 + le]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{unit_square_initial_mesh, MarkedSet};

    #[test]
    fn partition_of_unity_and_duality() {
        for p in triangle_sampling_grid() {
            let s: f64 = shape_eval(p).iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
            let g = shape_grad(p);
            let gs = g.iter().fold([0.0, 0.0], |a, b| [a[0] + b[0], a[1] + b[1]]);
            assert!(gs[0].abs() < 1e-13 && gs[1].abs() < 1e-13);
        }
        for (j, node) in REFERENCE_NODES.iter().enumerate() {
            let v = shape_eval(*node);
            for (i, vi) in v.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((vi - expect).abs() < 1e-15);
            }
        }
        let c = shape_grad([1.0 / 3.0, 1.0 / 3.0]);
        let s = c.iter().fold([0.0, 0.0], |a, b| [a[0] + b[0], a[1] + b[1]]);
        assert!(s[0].abs() < 1e-15 && s[1].abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = [0.2, 0.3];
        let h = 1e-6;
        let g = shape_grad(p);
        for d in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[d] += h;
            pm[d] -= h;
            let (vp, vm) = (shape_eval(pp), shape_eval(pm));
            for k in 0..NODES {
                assert!(((vp[k] - vm[k]) / (2.0 * h) - g[k][d]).abs() < 1e-8);
            }
        }
        let hs = shape_hessian();
        for a in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[a] += h;
            pm[a] -= h;
            let (gp, gm) = (shape_grad(pp), shape_grad(pm));
            for k in 0..NODES {
                for b in 0..2 {
                    assert!(((gp[k][b] - gm[k][b]) / (2.0 * h) - hs[k][a][b]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn zero_field_is_zero() {
        let m = unit_square_initial_mesh();
        let d = DofMap::new(&m);
        let f = DiscreteField::zeros(&d);
        assert_eq!(f.eval(&m, 2, [0.3, 0.3]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn linear_field_has_identity_gradient() {
        let m = unit_square_initial_mesh().refine_nvb(&MarkedSet::new(vec![0])).unwrap();
        let d = DofMap::new(&m);
        let f = DiscreteField::interpolate(&m, &d, |x| x);
        for t in 0..m.num_triangles() {
            for p in [[0.1, 0.2], [0.5, 0.5], [0.0, 1.0]] {
                let g = f.eval_grad(&m, t, p).unwrap();
                assert!((g[0][0] - 1.0).abs() < 1e-12 && g[0][1].abs() < 1e-12);
                assert!(g[1][0].abs() < 1e-12 && (g[1][1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_gradient_is_exact() {
        let m = unit_square_initial_mesh().refine_nvb(&MarkedSet::all(4)).unwrap();
        let d = DofMap::new(&m);
        let f = DiscreteField::interpolate(&m, &d, |x| [x[0] * x[0], 0.0]);
        for t in 0..m.num_triangles() {
            let map = AffineMap::of_triangle(&m, t);
            for p in triangle_sampling_grid() {
                let x = map.to_physical(p);
                let g = f.eval_grad(&m, t, p).unwrap();
                assert!((g[0][0] - 2.0 * x[0]).abs() <= 1e-12);
                let h = hessian_local(f.local(t), &map);
                assert!((h[0][0][0] - 2.0).abs() < 1e-11 && h[0][1][1].abs() < 1e-11);
            }
        }
    }

    #[test]
    fn generation_mismatch_detected() {
        let m0 = unit_square_initial_mesh();
        let m1 = m0.refine_nvb(&MarkedSet::all(4)).unwrap();
        let f = DiscreteField::zeros(&DofMap::new(&m0));
        assert!(matches!(
            f.eval(&m1, 0, [0.0, 0.0]),
            Err(SpaceError::GenerationMismatch { .. })
        ));
        assert!(DiscreteField::new(&DofMap::new(&m0), vec![0.0; 5]).is_err());
    }

    #[test]
    fn affine_round_trip() {
        let m = unit_square_initial_mesh();
        let map = AffineMap::of_triangle(&m, 1);
        let p = [0.25, 0.6];
        let back = map.to_reference(map.to_physical(p));
        assert!((back[0] - p[0]).abs() < 1e-15 && (back[1] - p[1]).abs() < 1e-15);
        assert!((map.det - 0.5).abs() < 1e-15);
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(triangle_sampling_grid().len(), 28);
        assert_eq!(reference_edge_point(0, 0.0), [1.0, 0.0]);
        assert_eq!(reference_edge_point(0, 1.0), [0.0, 1.0]);
        assert_eq!(edge_nodes(1), [2, 0, 4]);
    }
}
