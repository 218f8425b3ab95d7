//! Interior-penalty DG discretization of linear elasticity.
//!
//! The bilinear form is
//!
//! ```text
//! M(u, v) = Σ_T ∫_T Ξ(u) : ε(v)
//!         − Σ_e ∫_e [[v]] : {{Ξ(u)}}
//!         + θ Σ_e ∫_e [[u]] : {{Ξ(v)}}
//!         + Σ_e η/h_e ∫_e [[u]] : [[v]]
//! ```
//!
//! over interior and Dirichlet edges, with θ = −1 (SIPG), +1 (NIPG) or
//! 0 (IIPG). On Dirichlet edges the jump is taken against the datum,
//! `[[u]] = (u − g_D) ⊗ n`, which moves the datum terms into the load vector.
//! Matrix rows are test functions: `A[i][j] = M(φ_j, φ_i)`.

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{BlockSparse, SparseRow, BLOCK};
use crate::mesh::{BoundaryTag, Edge, Mesh, Point, GEOM_TOL};
use crate::problems::{hooke_stress, Lame, ProblemSpec};
use crate::quadrature::{quadrature_edge, quadrature_triangle};
use crate::space::{
    edge_nodes, physical_shape_grad, shape_eval, AffineMap, DiscreteField, DofMap, Mat2, SpaceError, Vec2,
    LOCAL_DOFS, NODES,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("non-finite {what} at ({x}, {y})")]
    NonFiniteData { what: &'static str, x: f64, y: f64 },
    #[error("penalty must be positive, got {0}")]
    NonPositivePenalty(f64),
    #[error("triangle {0} has more than one contact edge")]
    MultipleContactEdges(usize),
    #[error("penalty {penalty} is below the coercivity floor (smallest eigenvalue {eigenvalue:e})")]
    NotCoercive { penalty: f64, eigenvalue: f64 },
    #[error("eigenvalue computation failed")]
    Eigen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgVariant {
    Sipg,
    Nipg,
    Iipg,
}

impl DgVariant {
    pub fn theta(self) -> f64 {
        match self {
            DgVariant::Sipg => -1.0,
            DgVariant::Nipg => 1.0,
            DgVariant::Iipg => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DgVariant::Sipg => "sipg",
            DgVariant::Nipg => "nipg",
            DgVariant::Iipg => "iipg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sipg" => Some(DgVariant::Sipg),
            "nipg" => Some(DgVariant::Nipg),
            "iipg" => Some(DgVariant::Iipg),
            _ => None,
        }
    }
}

pub const DEFAULT_PENALTY: f64 = 40.0;

/// How the penalty parameter is made dimensionally consistent with the material.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyScaling {
    /// Penalty coefficient is η·μ.
    #[default]
    Shear,
    /// Penalty coefficient is η.
    Unscaled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgMethod {
    pub variant: DgVariant,
    pub penalty: f64,
    pub scaling: PenaltyScaling,
}

impl DgMethod {
    pub fn new(variant: DgVariant, penalty: f64) -> Result<Self, AssemblyError> {
        if !(penalty > 0.0 && penalty.is_finite()) {
            return Err(AssemblyError::NonPositivePenalty(penalty));
        }
        Ok(Self {
            variant,
            penalty,
            scaling: PenaltyScaling::default(),
        })
    }

    pub fn sipg() -> Self {
        Self {
            variant: DgVariant::Sipg,
            penalty: DEFAULT_PENALTY,
            scaling: PenaltyScaling::default(),
        }
    }

    pub fn with_scaling(self, scaling: PenaltyScaling) -> Self {
        Self { scaling, ..self }
    }

    /// Coefficient multiplying `[[u]]:[[v]]/h` in the assembled form.
    pub fn effective_penalty(&self, lame: Lame) -> f64 {
        match self.scaling {
            PenaltyScaling::Shear => self.penalty * lame.mu,
            PenaltyScaling::Unscaled => self.penalty,
        }
    }

    pub fn theta(&self) -> f64 {
        self.variant.theta()
    }
}

/// Selects which parts of the bilinear form to assemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormTerms {
    pub volume: bool,
    pub consistency: bool,
    /// Coefficient of the symmetrizing term.
    pub theta: f64,
    /// Penalty coefficient η (0 disables the penalty term).
    pub penalty: f64,
}

impl FormTerms {
    pub fn full(method: DgMethod, lame: Lame) -> Self {
        Self {
            volume: true,
            consistency: true,
            theta: method.theta(),
            penalty: method.effective_penalty(lame),
        }
    }

    pub fn penalty_only(penalty: f64) -> Self {
        Self {
            volume: false,
            consistency: false,
            theta: 0.0,
            penalty,
        }
    }
}

/// Assembled `A u = b`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: BlockSparse,
    pub rhs: Vec<f64>,
}

/// Edges carrying jump terms: interior and Dirichlet.
pub fn is_jump_edge(edge: &Edge) -> bool {
    matches!(edge.tag, BoundaryTag::Interior | BoundaryTag::Dirichlet)
}

/// Point at parameter `s ∈ [0,1]` along the edge, from its lower- to its
/// higher-numbered vertex.
pub fn edge_point(mesh: &Mesh, edge: &Edge, s: f64) -> Point {
    let a = mesh.vertices()[edge.vertices[0]];
    let b = mesh.vertices()[edge.vertices[1]];
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

fn stress_times_normal(s: Mat2, n: Vec2) -> Vec2 {
    [s[0][0] * n[0] + s[0][1] * n[1], s[1][0] * n[0] + s[1][1] * n[1]]
}

/// Per local dof: its vector value and the traction `Ξ(φ) n` at one point.
struct TraceBasis {
    value: [Vec2; LOCAL_DOFS],
    traction: [Vec2; LOCAL_DOFS],
}

fn trace_basis(map: &AffineMap, x: Point, n: Vec2, lame: Lame) -> TraceBasis {
    let p = map.to_reference(x);
    let vals = shape_eval(p);
    let grads = physical_shape_grad(map, p);
    let mut value = [[0.0; 2]; LOCAL_DOFS];
    let mut traction = [[0.0; 2]; LOCAL_DOFS];
    for k in 0..NODES {
        for c in 0..2 {
            let i = 2 * k + c;
            value[i][c] = vals[k];
            let mut g = [[0.0; 2]; 2];
            g[c] = grads[k];
            traction[i] = stress_times_normal(hooke_stress(g, lame), n);
        }
    }
    TraceBasis { value, traction }
}

fn dot2(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Element stiffness `∫_T Ξ(φ_j) : ε(φ_i)`.
pub fn element_stiffness(mesh: &Mesh, t: usize, lame: Lame) -> [f64; BLOCK * BLOCK] {
    let map = AffineMap::of_triangle(mesh, t);
    let rule = quadrature_triangle(2).expect("degree 2 available");
    let mut k = [0.0; BLOCK * BLOCK];
    for (p, w) in rule.iter() {
        let grads = physical_shape_grad(&map, p);
        let wdet = w * map.det;
        let mut gmat = [[[0.0; 2]; 2]; LOCAL_DOFS];
        for node in 0..NODES {
            for c in 0..2 {
                gmat[2 * node + c][c] = grads[node];
            }
        }
        let stress: Vec<Mat2> = gmat.iter().map(|g| hooke_stress(*g, lame)).collect();
        for i in 0..LOCAL_DOFS {
            let gi = gmat[i];
            let eps = [
                [gi[0][0], 0.5 * (gi[0][1] + gi[1][0])],
                [0.5 * (gi[0][1] + gi[1][0]), gi[1][1]],
            ];
            for j in 0..LOCAL_DOFS {
                let s = stress[j];
                let contraction = s[0][0] * eps[0][0] + 2.0 * s[0][1] * eps[0][1] + s[1][1] * eps[1][1];
                k[i * BLOCK + j] += wdet * contraction;
            }
        }
    }
    k
}

/// Edge contribution as up to four blocks `(test side, trial side)`.
struct EdgeBlocks {
    tris: Vec<usize>,
    blocks: Vec<[f64; BLOCK * BLOCK]>,
}

fn edge_blocks(mesh: &Mesh, e: usize, lame: Lame, terms: FormTerms) -> EdgeBlocks {
    let edge = &mesh.edges()[e];
    let tris: Vec<usize> = edge.triangles.iter().map(|&(t, _)| t).collect();
    let sides = tris.len();
    let maps: Vec<AffineMap> = tris.iter().map(|&t| AffineMap::of_triangle(mesh, t)).collect();
    let mean = if sides == 2 { 0.5 } else { 1.0 };
    let sign = [1.0, -1.0];
    let rule = quadrature_edge(5).expect("degree 5 available");
    let n = edge.normal;
    let mut blocks = vec![[0.0; BLOCK * BLOCK]; sides * sides];
    for (q, w) in rule.iter() {
        let x = edge_point(mesh, edge, q[0]);
        let wl = w * edge.length;
        let traces: Vec<TraceBasis> = maps.iter().map(|m| trace_basis(m, x, n, lame)).collect();
        for si in 0..sides {
            for sj in 0..sides {
                let blk = &mut blocks[si * sides + sj];
                let (ti, tj) = (&traces[si], &traces[sj]);
                for i in 0..LOCAL_DOFS {
                    let ji = [sign[si] * ti.value[i][0], sign[si] * ti.value[i][1]];
                    let mi = [mean * ti.traction[i][0], mean * ti.traction[i][1]];
                    for j in 0..LOCAL_DOFS {
                        let jj = [sign[sj] * tj.value[j][0], sign[sj] * tj.value[j][1]];
                        let mj = [mean * tj.traction[j][0], mean * tj.traction[j][1]];
                        let mut v = 0.0;
                        if terms.consistency {
                            v -= dot2(ji, mj);
                        }
                        if terms.theta != 0.0 {
                            v += terms.theta * dot2(jj, mi);
                        }
                        if terms.penalty != 0.0 {
                            v += terms.penalty / edge.length * dot2(ji, jj);
                        }
                        blk[i * BLOCK + j] += wl * v;
                    }
                }
            }
        }
    }
    EdgeBlocks { tris, blocks }
}

/// Assembles the selected terms of the bilinear form.
pub fn assemble_matrix(mesh: &Mesh, dofmap: &DofMap, lame: Lame, terms: FormTerms) -> Result<BlockSparse, AssemblyError> {
    dofmap.check(mesh)?;
    let mut a = BlockSparse::for_mesh(mesh);
    if terms.volume {
        let locals: Vec<_> = (0..mesh.num_triangles())
            .into_par_iter()
            .map(|t| element_stiffness(mesh, t, lame))
            .collect();
        for (t, k) in locals.iter().enumerate() {
            a.add_block(t, t, k);
        }
    }
    let jump_edges: Vec<usize> = (0..mesh.num_edges()).filter(|&e| is_jump_edge(&mesh.edges()[e])).collect();
    let contributions: Vec<EdgeBlocks> = jump_edges
        .par_iter()
        .map(|&e| edge_blocks(mesh, e, lame, terms))
        .collect();
    for c in &contributions {
        let s = c.tris.len();
        for si in 0..s {
            for sj in 0..s {
                a.add_block(c.tris[si], c.tris[sj], &c.blocks[si * s + sj]);
            }
        }
    }
    Ok(a)
}

fn check_finite(v: Vec2, what: &'static str, x: Point) -> Result<Vec2, AssemblyError> {
    if v[0].is_finite() && v[1].is_finite() {
        Ok(v)
    } else {
        Err(AssemblyError::NonFiniteData { what, x: x[0], y: x[1] })
    }
}

/// Load vector: body force, Neumann traction and the Dirichlet datum terms
/// of the penalty and symmetrizing parts.
pub fn assemble_rhs(mesh: &Mesh, dofmap: &DofMap, method: DgMethod, problem: &ProblemSpec) -> Result<Vec<f64>, AssemblyError> {
    dofmap.check(mesh)?;
    let mut b = vec![0.0; dofmap.num_dofs()];
    let tri_rule = quadrature_triangle(6).expect("degree 6 available");
    let edge_rule = quadrature_edge(7).expect("degree 7 available");
    let penalty = method.effective_penalty(problem.lame);

    let element_loads: Vec<Result<[f64; LOCAL_DOFS], AssemblyError>> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let map = AffineMap::of_triangle(mesh, t);
            let mut local = [0.0; LOCAL_DOFS];
            for (p, w) in tri_rule.iter() {
                let x = map.to_physical(p);
                let f = check_finite((problem.body_force)(x), "body force", x)?;
                let n = shape_eval(p);
                for k in 0..NODES {
                    local[2 * k] += w * map.det * f[0] * n[k];
                    local[2 * k + 1] += w * map.det * f[1] * n[k];
                }
            }
            Ok(local)
        })
        .collect();
    for (t, local) in element_loads.into_iter().enumerate() {
        let local = local?;
        for (i, v) in dofmap.element_dofs(t).zip(local) {
            b[i] += v;
        }
    }

    let theta = method.theta();
    for edge in mesh.edges() {
        let (t, _) = edge.triangles[0];
        let map = AffineMap::of_triangle(mesh, t);
        match edge.tag {
            BoundaryTag::Neumann => {
                for (q, w) in edge_rule.iter() {
                    let x = edge_point(mesh, edge, q[0]);
                    let pi = check_finite((problem.traction)(x, edge.normal), "traction", x)?;
                    let n = shape_eval(map.to_reference(x));
                    for k in 0..NODES {
                        b[dofmap.dof(t, k, 0)] += w * edge.length * pi[0] * n[k];
                        b[dofmap.dof(t, k, 1)] += w * edge.length * pi[1] * n[k];
                    }
                }
            }
            BoundaryTag::Dirichlet => {
                for (q, w) in edge_rule.iter() {
                    let x = edge_point(mesh, edge, q[0]);
                    let g = check_finite((problem.dirichlet)(x), "Dirichlet datum", x)?;
                    let tb = trace_basis(&map, x, edge.normal, problem.lame);
                    for i in 0..LOCAL_DOFS {
                        let v = theta * dot2(g, tb.traction[i]) + penalty / edge.length * dot2(g, tb.value[i]);
                        b[dofmap.element_dofs(t).start + i] += w * edge.length * v;
                    }
                }
            }
            _ => {}
        }
    }
    Ok(b)
}

pub fn assemble_system(
    mesh: &Mesh,
    dofmap: &DofMap,
    method: DgMethod,
    problem: &ProblemSpec,
) -> Result<LinearSystem, AssemblyError> {
    let matrix = assemble_matrix(mesh, dofmap, problem.lame, FormTerms::full(method, problem.lame))?;
    let rhs = assemble_rhs(mesh, dofmap, method, problem)?;
    Ok(LinearSystem { matrix, rhs })
}

/// Smallest eigenvalue of the symmetric part of the stiffness matrix on the
/// unit square cut along one diagonal and clamped on its whole boundary.
pub fn coercivity_probe(method: DgMethod, lame: Lame) -> Result<f64, AssemblyError> {
    let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let triangles = vec![[1, 2, 0], [3, 0, 2]];
    let tags = [[0, 1], [1, 2], [2, 3], [0, 3]]
        .into_iter()
        .map(|k| (k, BoundaryTag::Dirichlet))
        .collect();
    let mesh = Mesh::new(vertices, triangles, tags).expect("probe mesh is valid");
    let dofmap = DofMap::new(&mesh);
    let a = assemble_matrix(&mesh, &dofmap, lame, FormTerms::full(method, lame))?;
    let n = a.dim();
    let sym = faer::Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let eig = sym.self_adjoint_eigenvalues(faer::Side::Lower).map_err(|_| AssemblyError::Eigen)?;
    Ok(eig[0])
}

/// Rejects SIPG penalties for which [`coercivity_probe`] is not positive.
/// Other variants are coercive for every positive penalty.
pub fn check_coercivity(method: DgMethod, lame: Lame) -> Result<(), AssemblyError> {
    if method.variant != DgVariant::Sipg {
        return Ok(());
    }
    let eigenvalue = coercivity_probe(method, lame)?;
    if eigenvalue > 0.0 {
        Ok(())
    } else {
        Err(AssemblyError::NotCoercive {
            penalty: method.penalty,
            eigenvalue,
        })
    }
}

/// Values of `field` on each side of `edge` at parameter `s`, in the order
/// of `edge.triangles`.
pub fn one_sided_values(mesh: &Mesh, field: &DiscreteField, e: usize, s: f64) -> Result<Vec<Vec2>, SpaceError> {
    let edge = &mesh.edges()[e];
    let x = edge_point(mesh, edge, s);
    edge.triangles
        .iter()
        .map(|&(t, _)| field.eval(mesh, t, AffineMap::of_triangle(mesh, t).to_reference(x)))
        .collect()
}

/// One-sided stresses `Ξ(u_h)` at parameter `s`.
pub fn one_sided_stresses(mesh: &Mesh, field: &DiscreteField, lame: Lame, e: usize, s: f64) -> Result<Vec<Mat2>, SpaceError> {
    let edge = &mesh.edges()[e];
    let x = edge_point(mesh, edge, s);
    edge.triangles
        .iter()
        .map(|&(t, _)| {
            let g = field.eval_grad(mesh, t, AffineMap::of_triangle(mesh, t).to_reference(x))?;
            Ok(hooke_stress(g, lame))
        })
        .collect()
}

fn outer(v: Vec2, n: Vec2) -> Mat2 {
    [[v[0] * n[0], v[0] * n[1]], [v[1] * n[0], v[1] * n[1]]]
}

/// `[[v]] = v₁ ⊗ n₁ + v₂ ⊗ n₂` on interior edges, `v ⊗ n` on boundary edges.
pub fn trace_jump(mesh: &Mesh, field: &DiscreteField, e: usize, s: f64) -> Result<Mat2, SpaceError> {
    let n = mesh.edges()[e].normal;
    let v = one_sided_values(mesh, field, e, s)?;
    let d = if v.len() == 2 { [v[0][0] - v[1][0], v[0][1] - v[1][1]] } else { v[0] };
    Ok(outer(d, n))
}

/// `{{Ξ(u_h)}}`: average of the one-sided stresses (the stress itself on
/// boundary edges).
pub fn trace_mean(mesh: &Mesh, field: &DiscreteField, lame: Lame, e: usize, s: f64) -> Result<Mat2, SpaceError> {
    let st = one_sided_stresses(mesh, field, lame, e, s)?;
    let k = st.len() as f64;
    let mut m = [[0.0; 2]; 2];
    for s in &st {
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] += s[i][j] / k;
            }
        }
    }
    Ok(m)
}

/// `[[Ξ]] = Ξ₁ n₁ + Ξ₂ n₂` (or `Ξ n` on boundary edges).
pub fn stress_jump(mesh: &Mesh, field: &DiscreteField, lame: Lame, e: usize, s: f64) -> Result<Vec2, SpaceError> {
    let n = mesh.edges()[e].normal;
    let st = one_sided_stresses(mesh, field, lame, e, s)?;
    let t0 = stress_times_normal(st[0], n);
    if st.len() == 2 {
        let t1 = stress_times_normal(st[1], n);
        Ok([t0[0] - t1[0], t0[1] - t1[1]])
    } else {
        Ok(t0)
    }
}

/// Linear inequality constraints `C_e u ≤ g_e`, one per contact edge, with
/// `C_e u = ∫_e u · n_e ds` and `g_e = ∫_e χ ds`.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    /// Mesh edge index of each row.
    pub edges: Vec<usize>,
    /// The single triangle adjacent to each contact edge.
    pub triangles: Vec<usize>,
    pub rows: Vec<SparseRow>,
    pub bounds: Vec<f64>,
}

impl ConstraintSystem {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.apply(x)).collect()
    }

    /// `g_e − C_e x` per row (positive means slack).
    pub fn slack(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().zip(&self.bounds).map(|(r, g)| g - r.apply(x)).collect()
    }
}

/// Row `v ↦ ∫_e v · n ds` via Simpson's rule, exact for quadratics.
pub fn contact_row(mesh: &Mesh, dofmap: &DofMap, e: usize) -> SparseRow {
    let edge = &mesh.edges()[e];
    let (t, le) = edge.triangles[0];
    let h = edge.length;
    let [a, b, m] = edge_nodes(le);
    let mut entries = Vec::with_capacity(6);
    for (node, weight) in [(a, h / 6.0), (b, h / 6.0), (m, 4.0 * h / 6.0)] {
        for c in 0..2 {
            if edge.normal[c] != 0.0 {
                entries.push((dofmap.dof(t, node, c), weight * edge.normal[c]));
            }
        }
    }
    entries.sort_unstable_by_key(|&(i, _)| i);
    SparseRow { entries }
}

/// `∫_e χ ds`, split at gap breakpoints inside the edge and integrated with
/// the degree-5 Gauss rule on each piece.
pub fn gap_integral(mesh: &Mesh, e: usize, problem: &ProblemSpec) -> f64 {
    let edge = &mesh.edges()[e];
    let a = mesh.vertices()[edge.vertices[0]];
    let b = mesh.vertices()[edge.vertices[1]];
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let mut cuts = vec![0.0, 1.0];
    for p in &problem.gap_breakpoints {
        let r = [p[0] - a[0], p[1] - a[1]];
        let s = (r[0] * d[0] + r[1] * d[1]) / len2;
        let off = (r[0] * d[1] - r[1] * d[0]).abs() / len2.sqrt();
        if off <= GEOM_TOL && s > GEOM_TOL && s < 1.0 - GEOM_TOL {
            cuts.push(s);
        }
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    let rule = quadrature_edge(5).expect("degree 5 available");
    let mut total = 0.0;
    for win in cuts.windows(2) {
        let (s0, s1) = (win[0], win[1]);
        for (q, w) in rule.iter() {
            let s = s0 + (s1 - s0) * q[0];
            total += w * (s1 - s0) * edge.length * (problem.gap)(edge_point(mesh, edge, s));
        }
    }
    total
}

pub fn constraint_system(mesh: &Mesh, dofmap: &DofMap, problem: &ProblemSpec) -> Result<ConstraintSystem, AssemblyError> {
    dofmap.check(mesh)?;
    let mut out = ConstraintSystem {
        edges: vec![],
        triangles: vec![],
        rows: vec![],
        bounds: vec![],
    };
    let mut owner = vec![false; mesh.num_triangles()];
    for e in mesh.edges_with_tag(BoundaryTag::Contact) {
        let (t, _) = mesh.edges()[e].triangles[0];
        if std::mem::replace(&mut owner[t], true) {
            return Err(AssemblyError::MultipleContactEdges(t));
        }
        out.edges.push(e);
        out.triangles.push(t);
        out.rows.push(contact_row(mesh, dofmap, e));
        out.bounds.push(gap_integral(mesh, e, problem));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MarkedSet;
    use crate::problems::{model_problem_1, model_problem_2, patch_test_problem};

    #[test]
    fn jump_of_boundary_edge_is_dyadic() {
        // bottom edge of the initial square has outward normal (0, −1)
        let p = model_problem_1();
        let m = p.initial_mesh().unwrap();
        let d = DofMap::new(&m);
        let f = DiscreteField::interpolate(&m, &d, |_| [1.0, 0.0]);
        let e = m.edges_with_tag(BoundaryTag::Contact).next().unwrap();
        assert_eq!(m.edges()[e].normal, [0.0, -1.0]);
        let j = trace_jump(&m, &f, e, 0.3).unwrap();
        assert_eq!(j, [[0.0, -1.0], [0.0, 0.0]]);
    }

    #[test]
    fn continuous_field_has_no_interior_jump() {
        let p = model_problem_1();
        let m = p.initial_mesh().unwrap().refine_nvb(&MarkedSet::new(vec![1])).unwrap();
        let d = DofMap::new(&m);
        let f = DiscreteField::interpolate(&m, &d, |x| [x[0] * x[1], x[1] * x[1] - x[0]]);
        for e in m.edges_with_tag(BoundaryTag::Interior) {
            for s in [0.0, 0.5, 0.8] {
                let j = trace_jump(&m, &f, e, s).unwrap();
                assert!(j.iter().flatten().all(|v| v.abs() < 1e-14));
            }
        }
    }

    #[test]
    fn mean_of_equal_stresses() {
        let p = patch_test_problem();
        let m = p.initial_mesh().unwrap();
        let d = DofMap::new(&m);
        let f = DiscreteField::interpolate(&m, &d, |x| [2.0 * x[0] - x[1], 0.5 * x[1]]);
        let expect = hooke_stress([[2.0, -1.0], [0.0, 0.5]], p.lame);
        for e in m.edges_with_tag(BoundaryTag::Interior) {
            let mean = trace_mean(&m, &f, p.lame, e, 0.4).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert!((mean[i][j] - expect[i][j]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn sipg_symmetric_nipg_not() {
        let p = patch_test_problem();
        let m = p.initial_mesh().unwrap();
        let d = DofMap::new(&m);
        let sipg = assemble_matrix(&m, &d, p.lame, FormTerms::full(DgMethod::sipg(), p.lame)).unwrap();
        assert!(sipg.max_asymmetry() <= 1e-10 * sipg.max_abs());
        let nipg = assemble_matrix(&m, &d, p.lame, FormTerms::full(DgMethod::new(DgVariant::Nipg, 1.0).unwrap(), p.lame)).unwrap();
        assert!(nipg.max_asymmetry() > 1e-3);
    }

    #[test]
    fn probe_separates_small_and_default_sipg_penalty() {
        let lame = Lame { mu: 1.0, kappa: 1.0 };
        assert!(coercivity_probe(DgMethod::sipg(), lame).unwrap() > 0.0);
        let weak = DgMethod::new(DgVariant::Sipg, 0.1).unwrap();
        assert!(coercivity_probe(weak, lame).unwrap() < 0.0);
        assert!(matches!(check_coercivity(weak, lame), Err(AssemblyError::NotCoercive { .. })));
        assert!(check_coercivity(DgMethod::new(DgVariant::Nipg, 0.1).unwrap(), lame).is_ok());
    }

    #[test]
    fn continuous_field_annihilated_by_penalty() {
        let p = model_problem_1();
        let m = p.initial_mesh().unwrap().refine_nvb(&MarkedSet::all(4)).unwrap();
        let d = DofMap::new(&m);
        // vanishes on the Dirichlet side y = 1
        let w = DiscreteField::interpolate(&m, &d, |x| [x[0] * (1.0 - x[1]), (1.0 - x[1]) * x[1]]);
        let pen = assemble_matrix(&m, &d, p.lame, FormTerms::penalty_only(1.0)).unwrap();
        let pw = pen.matvec(&w.coeffs);
        assert!(pw.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn simpson_row_applied_to_normal_gives_length() {
        let p = model_problem_2();
        let m = p.initial_mesh().unwrap().refine_nvb(&MarkedSet::all(4)).unwrap();
        let d = DofMap::new(&m);
        let c = constraint_system(&m, &d, &p).unwrap();
        assert_eq!(c.len(), 2);
        for (k, &e) in c.edges.iter().enumerate() {
            let n = m.edges()[e].normal;
            let f = DiscreteField::interpolate(&m, &d, |_| n);
            assert!((c.rows[k].apply(&f.coeffs) - m.edges()[e].length).abs() < 1e-12);
            assert!(c.rows[k].entries.len() <= 12);
        }
    }

    #[test]
    fn wedge_gap_integral_with_kink() {
        let p = model_problem_2();
        // contact edges on x = 1 after refinement down to [0.375, 0.5] etc.
        let mut m = p.initial_mesh().unwrap();
        let g_initial = {
            let e = m.edges_with_tag(BoundaryTag::Contact).next().unwrap();
            gap_integral(&m, e, &p)
        };
        // ∫_0^1 (−0.2 + 0.5|y − 0.5|) dy = −0.2 + 0.125
        assert!((g_initial + 0.075).abs() < 1e-15);
        for _ in 0..4 {
            m = m.refine_nvb(&MarkedSet::all(m.num_triangles())).unwrap();
        }
        let total: f64 = m.edges_with_tag(BoundaryTag::Contact).map(|e| gap_integral(&m, e, &p)).sum();
        assert!((total + 0.075).abs() < 1e-14);
    }

    fn single_contact_triangle(a: Point, b: Point) -> Mesh {
        let tags = [([0, 1], BoundaryTag::Contact), ([1, 2], BoundaryTag::Neumann), ([0, 2], BoundaryTag::Neumann)]
            .into_iter()
            .collect();
        Mesh::new(vec![a, b, [0.0, 0.5]], vec![[2, 0, 1]], tags).unwrap()
    }

    #[test]
    fn wedge_gap_on_short_edge() {
        let m = single_contact_triangle([1.0, 0.4], [1.0, 0.6]);
        let e = m.edges_with_tag(BoundaryTag::Contact).next().unwrap();
        assert!((gap_integral(&m, e, &model_problem_2()) + 0.035).abs() < 1e-15);
    }

    #[test]
    fn simpson_row_on_unit_edge() {
        let m = single_contact_triangle([1.0, 0.0], [1.0, 1.0]);
        let d = DofMap::new(&m);
        let e = m.edges_with_tag(BoundaryTag::Contact).next().unwrap();
        // normal component y² takes nodal values 0, 1/4, 1 along the edge
        let v = DiscreteField::interpolate(&m, &d, |p| [p[1] * p[1], 0.0]);
        assert!((contact_row(&m, &d, e).apply(&v.coeffs) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_gap_bounds() {
        let p = model_problem_1();
        let m = p.initial_mesh().unwrap();
        let d = DofMap::new(&m);
        let c = constraint_system(&m, &d, &p).unwrap();
        assert!(c.bounds.iter().all(|&g| g == 0.0));
    }
}
