//! Pointwise residual a posteriori error estimator.
//!
//! Global terms (all L∞ norms sampled on the element and edge grids of the
//! space module, vector norms taken componentwise):
//!
//! | term | entity set | quantity |
//! |------|------------|----------|
//! | η₁ | triangles | `h_T² ‖f + div Ξ(u_h)‖` |
//! | η₂ | interior edges | `h_e ‖[[Ξ(u_h)]]‖` |
//! | η₃ | Neumann edges | `h_e ‖π − Ξ(u_h) n‖` |
//! | η₄ | contact edges | `h_e ‖Ξ(u_h) n + σ_h‖` |
//! | η₅ | interior and Dirichlet edges | `‖[[u_h]]‖` (`‖u_h − g_D‖` on Γ_D) |
//! | η₆ | contact edges | `‖(E_h u_h · n − χ)⁺‖` |
//! | η₇ | contact edges with σ_n > 0 | `‖(χ − E_h u_h · n)⁺‖` |
//!
//! Each global η_i is the maximum over its entity set, and
//! `ℰ_h = (1 + ln(h_min)²) Σ_{i≤5} η_i + η₆ + η₇`.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{edge_point, one_sided_stresses, one_sided_values, stress_jump};
use crate::contact::ContactForceDensity;
use crate::mesh::{BoundaryTag, Mesh, MeshError};
use crate::problems::ProblemSpec;
use crate::space::{
    edge_sampling_params, hessian_local, triangle_sampling_grid, AffineMap, DiscreteField, DofMap, SpaceError,
    Vec2,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("contact force density required: mesh has {0} contact edges")]
    MissingSigma(usize),
    #[error("contact force density covers {got} edges, mesh has {expected} contact edges")]
    SigmaMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

pub const NUM_TERMS: usize = 7;

fn norm_inf(v: Vec2) -> f64 {
    v[0].abs().max(v[1].abs())
}

/// Globally continuous P2 field stored on the discontinuous dof layout
/// (every copy of a node carries the same value).
#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedSolution {
    pub field: DiscreteField,
    pub vertex_values: Vec<Vec2>,
    /// Value at each edge midpoint, by edge index.
    pub midpoint_values: Vec<Vec2>,
}

/// Nodal averaging into the continuous P2 space; nodes on the closure of
/// the Dirichlet boundary take the Dirichlet datum.
pub fn enrich(
    mesh: &Mesh,
    dofmap: &DofMap,
    u: &DiscreteField,
    problem: &ProblemSpec,
) -> Result<EnrichedSolution, EstimatorError> {
    dofmap.check(mesh)?;
    if u.generation() != mesh.generation() {
        return Err(SpaceError::GenerationMismatch {
            field: u.generation(),
            mesh: mesh.generation(),
        }
        .into());
    }
    let mut vsum = vec![[0.0; 2]; mesh.num_vertices()];
    let mut vcount = vec![0usize; mesh.num_vertices()];
    let mut esum = vec![[0.0; 2]; mesh.num_edges()];
    let mut ecount = vec![0usize; mesh.num_edges()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let local = u.local(t);
        let edges = mesh.triangle_edges(t);
        for i in 0..3 {
            let (v, e) = (tri[i], edges[i]);
            for c in 0..2 {
                vsum[v][c] += local[2 * i + c];
                esum[e][c] += local[2 * (3 + i) + c];
            }
            vcount[v] += 1;
            ecount[e] += 1;
        }
    }
    let avg = |s: Vec2, n: usize| [s[0] / n as f64, s[1] / n as f64];
    let mut vertex_values: Vec<Vec2> = vsum.iter().zip(&vcount).map(|(&s, &n)| avg(s, n)).collect();
    let mut midpoint_values: Vec<Vec2> = esum.iter().zip(&ecount).map(|(&s, &n)| avg(s, n)).collect();
    for e in mesh.edges_with_tag(BoundaryTag::Dirichlet) {
        let edge = &mesh.edges()[e];
        midpoint_values[e] = (problem.dirichlet)(edge.midpoint);
        for v in edge.vertices {
            vertex_values[v] = (problem.dirichlet)(mesh.vertices()[v]);
        }
    }
    let mut coeffs = vec![0.0; dofmap.num_dofs()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let edges = mesh.triangle_edges(t);
        for i in 0..3 {
            for c in 0..2 {
                coeffs[dofmap.dof(t, i, c)] = vertex_values[tri[i]][c];
                coeffs[dofmap.dof(t, 3 + i, c)] = midpoint_values[edges[i]][c];
            }
        }
    }
    Ok(EnrichedSolution {
        field: DiscreteField::new(dofmap, coeffs)?,
        vertex_values,
        midpoint_values,
    })
}

/// `div Ξ(u_h)` on triangle `t`; constant for P2 fields.
pub fn stress_divergence(mesh: &Mesh, u: &DiscreteField, t: usize, problem: &ProblemSpec) -> Vec2 {
    let map = AffineMap::of_triangle(mesh, t);
    let h = hessian_local(u.local(t), &map);
    let (mu, kappa) = (problem.lame.mu, problem.lame.kappa);
    let grad_div = [h[0][0][0] + h[1][1][0], h[0][0][1] + h[1][1][1]];
    let mut out = [0.0; 2];
    for c in 0..2 {
        let lap = h[c][0][0] + h[c][1][1];
        out[c] = mu * lap + (mu + kappa) * grad_div[c];
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    /// Global η₁ … η₇.
    pub eta: [f64; NUM_TERMS],
    /// Per-triangle marking indicator.
    pub element: Vec<f64>,
    pub h_min: f64,
    pub total: f64,
    /// Per-triangle contributions (only the η₁ slot is used).
    pub triangle_terms: Vec<[f64; NUM_TERMS]>,
    /// Per-edge contributions, by edge index.
    pub edge_terms: Vec<[f64; NUM_TERMS]>,
    pub edge_tags: Vec<BoundaryTag>,
}

pub fn total_estimator(eta: &[f64; NUM_TERMS], h_min: f64) -> f64 {
    let l = h_min.ln();
    (1.0 + l * l) * eta[..5].iter().sum::<f64>() + eta[5] + eta[6]
}

impl EstimatorReport {
    /// CSV with one row per triangle and per edge:
    /// `entity_id,entity_type,eta1,…,eta7`.
    pub fn write_breakdown_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "entity_id,entity_type,eta1,eta2,eta3,eta4,eta5,eta6,eta7")?;
        let row = |w: &mut W, id: usize, kind: &str, v: &[f64; NUM_TERMS]| -> io::Result<()> {
            write!(w, "{id},{kind}")?;
            for x in v {
                write!(w, ",{x:e}")?;
            }
            writeln!(w)
        };
        for (t, v) in self.triangle_terms.iter().enumerate() {
            row(&mut w, t, "triangle", v)?;
        }
        for (e, v) in self.edge_terms.iter().enumerate() {
            let kind = match self.edge_tags[e] {
                BoundaryTag::Interior => "interior_edge",
                BoundaryTag::Dirichlet => "dirichlet_edge",
                BoundaryTag::Neumann => "neumann_edge",
                BoundaryTag::Contact => "contact_edge",
            };
            row(&mut w, e, kind, v)?;
        }
        Ok(())
    }
}

fn triangle_eta1(mesh: &Mesh, u: &DiscreteField, t: usize, problem: &ProblemSpec) -> f64 {
    let map = AffineMap::of_triangle(mesh, t);
    let div = stress_divergence(mesh, u, t, problem);
    let h = mesh.diameter(t);
    let mut m: f64 = 0.0;
    for p in triangle_sampling_grid() {
        let f = (problem.body_force)(map.to_physical(p));
        m = m.max(norm_inf([f[0] + div[0], f[1] + div[1]]));
    }
    h * h * m
}

fn traction(s: crate::space::Mat2, n: Vec2) -> Vec2 {
    [s[0][0] * n[0] + s[0][1] * n[1], s[1][0] * n[0] + s[1][1] * n[1]]
}

struct EdgeContext<'a> {
    mesh: &'a Mesh,
    u: &'a DiscreteField,
    enriched: &'a DiscreteField,
    sigma: Option<&'a ContactForceDensity>,
    sigma_threshold: f64,
    problem: &'a ProblemSpec,
}

fn edge_terms(ctx: &EdgeContext, e: usize) -> Result<[f64; NUM_TERMS], SpaceError> {
    let mesh = ctx.mesh;
    let edge = &mesh.edges()[e];
    let h = edge.length;
    let n = edge.normal;
    let lame = ctx.problem.lame;
    let mut out = [0.0f64; NUM_TERMS];
    for s in edge_sampling_params() {
        let x = edge_point(mesh, edge, s);
        match edge.tag {
            BoundaryTag::Interior => {
                out[1] = out[1].max(h * norm_inf(stress_jump(mesh, ctx.u, lame, e, s)?));
                let v = one_sided_values(mesh, ctx.u, e, s)?;
                out[4] = out[4].max(norm_inf([v[0][0] - v[1][0], v[0][1] - v[1][1]]));
            }
            BoundaryTag::Dirichlet => {
                let v = one_sided_values(mesh, ctx.u, e, s)?[0];
                let g = (ctx.problem.dirichlet)(x);
                out[4] = out[4].max(norm_inf([v[0] - g[0], v[1] - g[1]]));
            }
            BoundaryTag::Neumann => {
                let tr = traction(one_sided_stresses(mesh, ctx.u, lame, e, s)?[0], n);
                let pi = (ctx.problem.traction)(x, n);
                out[2] = out[2].max(h * norm_inf([pi[0] - tr[0], pi[1] - tr[1]]));
            }
            BoundaryTag::Contact => {
                let sigma = ctx.sigma.expect("checked before the edge loop");
                let k = sigma.position(e).expect("checked before the edge loop");
                let sv = sigma.vector(k);
                let tr = traction(one_sided_stresses(mesh, ctx.u, lame, e, s)?[0], n);
                out[3] = out[3].max(h * norm_inf([tr[0] + sv[0], tr[1] + sv[1]]));
                let ev = one_sided_values(mesh, ctx.enriched, e, s)?[0];
                let gap = (ev[0] * n[0] + ev[1] * n[1]) - (ctx.problem.gap)(x);
                out[5] = out[5].max(gap.max(0.0));
                if sigma.normal[k] > ctx.sigma_threshold {
                    out[6] = out[6].max((-gap).max(0.0));
                }
            }
        }
    }
    Ok(out)
}

/// Evaluates all estimator terms. `sigma` is required whenever the mesh has
/// contact edges.
pub fn estimate(
    mesh: &Mesh,
    dofmap: &DofMap,
    u: &DiscreteField,
    sigma: Option<&ContactForceDensity>,
    problem: &ProblemSpec,
) -> Result<EstimatorReport, EstimatorError> {
    let contact: Vec<usize> = mesh.edges_with_tag(BoundaryTag::Contact).collect();
    if !contact.is_empty() {
        match sigma {
            None => return Err(EstimatorError::MissingSigma(contact.len())),
            Some(s) if s.edges != contact => {
                return Err(EstimatorError::SigmaMismatch {
                    got: s.len(),
                    expected: contact.len(),
                })
            }
            _ => {}
        }
    }
    let enriched = enrich(mesh, dofmap, u, problem)?;
    let sigma_scale = sigma.map_or(1.0, |s| s.normal.iter().fold(1.0f64, |m, v| m.max(v.abs())));
    let ctx = EdgeContext {
        mesh,
        u,
        enriched: &enriched.field,
        sigma,
        sigma_threshold: 1e-9 * sigma_scale,
        problem,
    };

    let eta1: Vec<f64> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| triangle_eta1(mesh, u, t, problem))
        .collect();
    let edge_terms: Vec<[f64; NUM_TERMS]> = (0..mesh.num_edges())
        .into_par_iter()
        .map(|e| edge_terms(&ctx, e))
        .collect::<Result<_, _>>()?;

    let mut eta = [0.0; NUM_TERMS];
    eta[0] = eta1.iter().copied().fold(0.0, f64::max);
    for terms in &edge_terms {
        for i in 1..NUM_TERMS {
            eta[i] = eta[i].max(terms[i]);
        }
    }

    let mut element = eta1.clone();
    for (e, terms) in edge_terms.iter().enumerate() {
        let tris = &mesh.edges()[e].triangles;
        let share = 1.0 / tris.len() as f64;
        let sum: f64 = terms.iter().sum();
        for &(t, _) in tris {
            element[t] += share * sum;
        }
    }

    let h_min = mesh.metrics()?.h_min;
    let triangle_terms = eta1
        .iter()
        .map(|&v| {
            let mut r = [0.0; NUM_TERMS];
            r[0] = v;
            r
        })
        .collect();
    Ok(EstimatorReport {
        total: total_estimator(&eta, h_min),
        eta,
        element,
        h_min,
        triangle_terms,
        edge_terms,
        edge_tags: mesh.edges().iter().map(|e| e.tag).collect(),
    })
}

/// Data oscillation against piecewise constants: `f̄` is the centroid value
/// and `π̄` the midpoint value.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillationReport {
    /// `h_T² ‖f − f̄‖` per triangle.
    pub triangle: Vec<f64>,
    /// `(edge, h_e ‖π − π̄‖)` per Neumann edge.
    pub neumann: Vec<(usize, f64)>,
}

pub fn oscillations(mesh: &Mesh, problem: &ProblemSpec) -> OscillationReport {
    let grid = triangle_sampling_grid();
    let triangle = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let map = AffineMap::of_triangle(mesh, t);
            let fbar = (problem.body_force)(mesh.centroid(t));
            let h = mesh.diameter(t);
            let m = grid.iter().fold(0.0f64, |m, &p| {
                let f = (problem.body_force)(map.to_physical(p));
                m.max(norm_inf([f[0] - fbar[0], f[1] - fbar[1]]))
            });
            h * h * m
        })
        .collect();
    let neumann = mesh
        .edges_with_tag(BoundaryTag::Neumann)
        .map(|e| {
            let edge = &mesh.edges()[e];
            let pbar = (problem.traction)(edge.midpoint, edge.normal);
            let m = edge_sampling_params().iter().fold(0.0f64, |m, &s| {
                let p = (problem.traction)(edge_point(mesh, edge, s), edge.normal);
                m.max(norm_inf([p[0] - pbar[0], p[1] - pbar[1]]))
            });
            (e, edge.length * m)
        })
        .collect();
    OscillationReport { triangle, neumann }
}

/// `max_T ‖E_h u_h − u_h‖_{L∞(T)}` on the sampling grid.
pub fn enrichment_distance(mesh: &Mesh, u: &DiscreteField, enriched: &EnrichedSolution) -> Result<f64, SpaceError> {
    let grid = triangle_sampling_grid();
    let mut m: f64 = 0.0;
    for t in 0..mesh.num_triangles() {
        for &p in &grid {
            let a = u.eval(mesh, t, p)?;
            let b = enriched.field.eval(mesh, t, p)?;
            m = m.max(norm_inf([a[0] - b[0], a[1] - b[1]]));
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MarkedSet;
    use crate::problems::{model_problem_1, patch_test_problem, PATCH_FIELD};

    #[test]
    fn total_examples() {
        let eta = [1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        assert_eq!(total_estimator(&eta, 1.0), 5.0);
        let expect = 5.0 * (1.0 + 4f64.ln().powi(2));
        assert!((total_estimator(&eta, 0.25) - expect).abs() < 1e-12);
        assert!((expect - 14.609).abs() < 1e-3);
        assert_eq!(total_estimator(&[0.0; 7], 0.1), 0.0);
    }

    #[test]
    fn enrich_averages_interior_vertex() {
        let p = patch_test_problem();
        let m = p.initial_mesh().unwrap();
        let d = DofMap::new(&m);
        let mut u = DiscreteField::zeros(&d);
        // centre vertex 4 is local vertex 0 of all four triangles
        for (t, v) in [1.0, 2.0, 3.0, 6.0].into_iter().enumerate() {
            assert_eq!(m.triangles()[t][0], 4);
            u.coeffs[d.dof(t, 0, 0)] = v;
        }
        let en = enrich(&m, &d, &u, &p).unwrap();
        assert_eq!(en.vertex_values[4][0], 3.0);
    }

    #[test]
    fn enrich_fixes_continuous_field() {
        let p = patch_test_problem();
        let m = p.initial_mesh().unwrap().refine_nvb(&MarkedSet::new(vec![0, 3])).unwrap();
        let d = DofMap::new(&m);
        let u = DiscreteField::interpolate(&m, &d, |x| PATCH_FIELD.eval(x));
        let en = enrich(&m, &d, &u, &p).unwrap();
        for (a, b) in en.field.coeffs.iter().zip(&u.coeffs) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(enrichment_distance(&m, &u, &en).unwrap(), 0.0);
    }

    #[test]
    fn exact_quadratic_has_zero_residuals() {
        let p = patch_test_problem();
        let m = p.initial_mesh().unwrap().refine_nvb(&MarkedSet::all(4)).unwrap();
        let d = DofMap::new(&m);
        let u = DiscreteField::interpolate(&m, &d, |x| PATCH_FIELD.eval(x));
        let r = estimate(&m, &d, &u, None, &p).unwrap();
        let scale = 1.0 + u.max_abs();
        for i in [0, 1, 2, 4] {
            assert!(r.eta[i] <= 1e-10 * scale, "eta{} = {:e}", i + 1, r.eta[i]);
        }
        assert_eq!(r.eta[3], 0.0);
        assert_eq!(r.eta[5], 0.0);
        let sum: f64 = r.eta[..5].iter().sum::<f64>() * (1.0 + r.h_min.ln().powi(2)) + r.eta[5] + r.eta[6];
        assert_eq!(r.total, sum);
    }

    #[test]
    fn divergence_matches_field() {
        let p = patch_test_problem();
        let m = p.initial_mesh().unwrap();
        let d = DofMap::new(&m);
        let u = DiscreteField::interpolate(&m, &d, |x| PATCH_FIELD.eval(x));
        let expect = PATCH_FIELD.stress_divergence(p.lame);
        for t in 0..4 {
            let got = stress_divergence(&m, &u, t, &p);
            assert!((got[0] - expect[0]).abs() < 1e-12 && (got[1] - expect[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_sigma_is_error() {
        let p = model_problem_1();
        let m = p.initial_mesh().unwrap();
        let d = DofMap::new(&m);
        let u = DiscreteField::zeros(&d);
        assert_eq!(estimate(&m, &d, &u, None, &p), Err(EstimatorError::MissingSigma(1)));
    }

    #[test]
    fn oscillation_of_linear_force() {
        let mut p = patch_test_problem();
        p.body_force = std::sync::Arc::new(|x| [x[0], 0.0]);
        let m = p.initial_mesh().unwrap();
        let osc = oscillations(&m, &p);
        for t in 0..4 {
            let map = AffineMap::of_triangle(&m, t);
            let c = m.centroid(t)[0];
            let dev = triangle_sampling_grid()
                .iter()
                .map(|&q| (map.to_physical(q)[0] - c).abs())
                .fold(0.0, f64::max);
            let h = m.diameter(t);
            assert!((osc.triangle[t] - h * h * dev).abs() < 1e-15);
        }
        assert_eq!(osc.neumann.len(), 2);
        let mp2 = crate::problems::model_problem_2();
        let osc = oscillations(&mp2.initial_mesh().unwrap(), &mp2);
        assert!(osc.neumann.iter().all(|&(_, v)| v == 0.0));
        assert!(osc.triangle.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn breakdown_csv_rows() {
        let p = patch_test_problem();
        let m = p.initial_mesh().unwrap();
        let d = DofMap::new(&m);
        let u = DiscreteField::zeros(&d);
        let r = estimate(&m, &d, &u, None, &p).unwrap();
        let mut buf = Vec::new();
        r.write_breakdown_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 + 8);
        assert!(text.lines().nth(1).unwrap().starts_with("0,triangle,"));
    }
}
