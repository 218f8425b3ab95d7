//! Checks shared by the integration tests and the acceptance suite.

use contact_dg::afem::LevelData;
use contact_dg::assembly::{edge_point, FormTerms};
use contact_dg::linalg::dot;
use contact_dg::mesh::{BoundaryTag, MarkedSet, Mesh, Point};
use contact_dg::problems::{hooke_stress, Lame, ProblemSpec};
use contact_dg::quadrature::{quadrature_edge, quadrature_triangle};
use contact_dg::space::{AffineMap, DiscreteField, DofMap, Mat2};
use rand::Rng;

pub fn uniform(mut m: Mesh, k: usize) -> Mesh {
    for _ in 0..k {
        m = m.refine_nvb(&MarkedSet::all(m.num_triangles())).unwrap();
    }
    m
}

/// Conformity, Euler, tag inheritance and minimum angle.
pub fn integrity(mesh: &Mesh, problem: &ProblemSpec) -> Result<(), String> {
    mesh.check_conformity()?;
    for e in mesh.edges() {
        if e.is_boundary() {
            let expected = problem.boundary.classify(e.midpoint);
            if expected != Some(e.tag) {
                return Err(format!("edge {:?} tagged {:?}, expected {:?}", e.vertices, e.tag, expected));
            }
        } else if e.tag != BoundaryTag::Interior {
            return Err(format!("interior edge {:?} tagged {:?}", e.vertices, e.tag));
        }
    }
    let angle = mesh.min_angle_degrees();
    if angle < 20.0 {
        return Err(format!("minimum angle {angle}"));
    }
    Ok(())
}

/// Sign-law measurements on one level, all divided by `max(1, max |σ_n|)`.
pub struct SignLaw {
    pub min_normal: f64,
    pub max_tangential: f64,
    pub max_normal_on_slack: f64,
    pub max_multiplier_gap: f64,
}

pub fn sign_law(d: &LevelData) -> SignLaw {
    let scale = d.sigma.normal.iter().fold(1.0f64, |m, s| m.max(s.abs()));
    let lambda_scale = d.solution.multipliers.iter().fold(1.0f64, |m, s| m.max(s.abs()));
    let slack_tol = 1e-9 * d.constraints.bounds.iter().fold(1.0f64, |m, g| m.max(g.abs()));
    let mut out = SignLaw {
        min_normal: 0.0,
        max_tangential: 0.0,
        max_normal_on_slack: f64::NEG_INFINITY,
        max_multiplier_gap: 0.0,
    };
    for k in 0..d.constraints.len() {
        let e = d.constraints.edges[k];
        let p = d.sigma.position(e).expect("every contact edge has a density");
        let sn = d.sigma.normal[p];
        out.min_normal = out.min_normal.min(sn / scale);
        out.max_tangential = out.max_tangential.max(d.sigma.tangential[p].abs() / scale);
        let slack = d.constraints.rows[k].apply(&d.solution.u) - d.constraints.bounds[k];
        if slack < -slack_tol {
            out.max_normal_on_slack = out.max_normal_on_slack.max(sn / scale);
        }
        let gap = (d.solution.multipliers[k] - sn).abs() / lambda_scale;
        out.max_multiplier_gap = out.max_multiplier_gap.max(gap);
    }
    out
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize, amplitude: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-amplitude..amplitude)).collect()
}

/// Worst relative residual of `(σ_h, Π_h v) = B(v) − M(u_h, v)` over
/// `count` random fields. `Π_h v` is the edge mean, integrated with a Gauss
/// rule on the trace of `v`.
pub fn representation_residual<R: Rng>(d: &LevelData, rng: &mut R, count: usize) -> f64 {
    let au = d.system.matrix.matvec(&d.solution.u);
    let residual: Vec<f64> = d.system.rhs.iter().zip(&au).map(|(b, a)| b - a).collect();
    let rule = quadrature_edge(4).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..count {
        let v = random_vector(rng, d.dofmap.num_dofs(), 1.0);
        let field = DiscreteField::new(d.dofmap, v.clone()).unwrap();
        let rhs = dot(&v, &residual);
        let mut lhs = 0.0;
        let mut scale = rhs.abs();
        for (k, &e) in d.sigma.edges.iter().enumerate() {
            let edge = &d.mesh.edges()[e];
            let t = edge.triangles[0].0;
            let map = AffineMap::of_triangle(d.mesh, t);
            let mut integral = [0.0; 2];
            for (p, w) in rule.iter() {
                let x = edge_point(d.mesh, edge, p[0]);
                let val = field.eval(d.mesh, t, map.to_reference(x)).unwrap();
                integral[0] += w * edge.length * val[0];
                integral[1] += w * edge.length * val[1];
            }
            let s = d.sigma.vector(k);
            let term = s[0] * integral[0] + s[1] * integral[1];
            lhs += term;
            scale += term.abs();
        }
        worst = worst.max((lhs - rhs).abs() / scale.max(1.0));
    }
    worst
}

/// Smallest relative value of `M(u_h, v − u_h) − B(v − u_h)` over `count`
/// random feasible fields. Half of the samples are made tight on a random
/// subset of rows.
pub fn variational_inequality_min<R: Rng>(d: &LevelData, rng: &mut R, count: usize) -> f64 {
    let u = &d.solution.u;
    let au = d.system.matrix.matvec(u);
    let grad: Vec<f64> = au.iter().zip(&d.system.rhs).map(|(a, b)| a - b).collect();
    let amplitude = u.iter().fold(1e-3f64, |m, x| m.max(x.abs()));
    let mut worst = f64::INFINITY;
    for sample in 0..count {
        let mut v: Vec<f64> = u.iter().zip(random_vector(rng, u.len(), amplitude)).map(|(a, b)| a + b).collect();
        // rows have disjoint supports, so row-wise projection is exact
        for k in 0..d.constraints.len() {
            let row = &d.constraints.rows[k];
            let excess = row.apply(&v) - d.constraints.bounds[k];
            let tighten = sample % 2 == 1 && rng.gen_bool(0.5);
            if excess > 0.0 || tighten {
                let norm2: f64 = row.entries.iter().map(|(_, c)| c * c).sum();
                for &(i, c) in &row.entries {
                    v[i] -= excess / norm2 * c;
                }
            }
        }
        let dv: Vec<f64> = v.iter().zip(u).map(|(a, b)| a - b).collect();
        let value = dot(&dv, &grad);
        let scale: f64 = dv.iter().zip(&grad).map(|(a, b)| (a * b).abs()).sum();
        worst = worst.min(value / scale.max(1.0));
    }
    worst
}

fn double_dot(a: Mat2, b: Mat2) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

fn sym(g: Mat2) -> Mat2 {
    let off = 0.5 * (g[0][1] + g[1][0]);
    [[g[0][0], off], [off, g[1][1]]]
}

/// Direct quadrature evaluation of `M(w, v)` with homogeneous Dirichlet
/// jumps, written against the field evaluation API only.
pub fn bilinear_by_quadrature(mesh: &Mesh, dofmap: &DofMap, lame: Lame, terms: FormTerms, w: &[f64], v: &[f64]) -> f64 {
    let wf = DiscreteField::new(dofmap, w.to_vec()).unwrap();
    let vf = DiscreteField::new(dofmap, v.to_vec()).unwrap();
    let mut total = 0.0;
    if terms.volume {
        let rule = quadrature_triangle(2).unwrap();
        for t in 0..mesh.num_triangles() {
            let area = mesh.area(t);
            for (p, wt) in rule.iter() {
                let sw = hooke_stress(wf.eval_grad(mesh, t, p).unwrap(), lame);
                let ev = sym(vf.eval_grad(mesh, t, p).unwrap());
                total += 2.0 * area * wt * double_dot(sw, ev);
            }
        }
    }
    let rule = quadrature_edge(5).unwrap();
    for edge in mesh.edges() {
        if !(edge.tag == BoundaryTag::Interior || edge.tag == BoundaryTag::Dirichlet) {
            continue;
        }
        for (p, wt) in rule.iter() {
            let x: Point = edge_point(mesh, edge, p[0]);
            // jump as a dyadic and the mean traction, per side
            let mut jw = [[0.0; 2]; 2];
            let mut jv = [[0.0; 2]; 2];
            let mut mean_w = [[0.0; 2]; 2];
            let mut mean_v = [[0.0; 2]; 2];
            let sides = edge.triangles.len() as f64;
            for &(t, _) in &edge.triangles {
                let c = mesh.centroid(t);
                let mut n = edge.normal;
                if (edge.midpoint[0] - c[0]) * n[0] + (edge.midpoint[1] - c[1]) * n[1] < 0.0 {
                    n = [-n[0], -n[1]];
                }
                let r = AffineMap::of_triangle(mesh, t).to_reference(x);
                let vw = wf.eval(mesh, t, r).unwrap();
                let vv = vf.eval(mesh, t, r).unwrap();
                let sw = hooke_stress(wf.eval_grad(mesh, t, r).unwrap(), lame);
                let sv = hooke_stress(vf.eval_grad(mesh, t, r).unwrap(), lame);
                for i in 0..2 {
                    for j in 0..2 {
                        jw[i][j] += vw[i] * n[j];
                        jv[i][j] += vv[i] * n[j];
                        mean_w[i][j] += sw[i][j] / sides;
                        mean_v[i][j] += sv[i][j] / sides;
                    }
                }
            }
            let ds = wt * edge.length;
            if terms.consistency {
                total -= ds * double_dot(mean_w, jv);
            }
            total += ds * terms.theta * double_dot(jw, mean_v);
            total += ds * terms.penalty / edge.length * double_dot(jw, jv);
        }
    }
    total
}

/// Largest mismatch between the closed-form data of the first model problem
/// and central differences with step 1e-5 on a 20×20 lattice, relative to
/// `max(1, |value|)`. Returns (gradient, body force, traction) mismatches;
/// the body force is checked against differences of the analytic stress.
pub fn mp1_data_mismatch() -> (f64, f64, f64) {
    let problem = contact_dg::problems::model_problem_1();
    let u = problem.exact.clone().expect("exact solution");
    let grad = problem.exact_gradient.clone().expect("exact gradient");
    let h = 1e-5;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    let stress = |p: Point| hooke_stress(grad(p), problem.lame);
    let (mut eg, mut ef, mut et) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..20 {
        for j in 0..20 {
            let p = [(i as f64 + 0.5) / 20.0, (j as f64 + 0.5) / 20.0];
            let g = grad(p);
            let mut g_fd = [[0.0; 2]; 2];
            let mut div = [0.0; 2];
            for c in 0..2 {
                let mut plus = p;
                let mut minus = p;
                plus[c] += h;
                minus[c] -= h;
                let (up, um) = (u(plus), u(minus));
                for r in 0..2 {
                    g_fd[r][c] = (up[r] - um[r]) / (2.0 * h);
                    eg = eg.max(rel(g[r][c], g_fd[r][c]));
                }
                let (sp, sm) = (stress(plus), stress(minus));
                for (r, d) in div.iter_mut().enumerate() {
                    *d += (sp[r][c] - sm[r][c]) / (2.0 * h);
                }
            }
            let f = (problem.body_force)(p);
            ef = ef.max(rel(f[0], -div[0])).max(rel(f[1], -div[1]));
            // traction against a stress built from differenced displacements
            let s = hooke_stress(g_fd, problem.lame);
            for n in [[-1.0, 0.0], [1.0, 0.0]] {
                let pi = (problem.traction)(p, n);
                for r in 0..2 {
                    et = et.max(rel(pi[r], s[r][0] * n[0] + s[r][1] * n[1]));
                }
            }
        }
    }
    (eg, ef, et)
}

/// Largest absolute error of the edge and triangle rules on monomials up to
/// each rule's requested degree.
pub fn quadrature_mismatch() -> f64 {
    use contact_dg::quadrature::MAX_DEGREE;
    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }
    let mut worst = 0.0f64;
    for d in 0..=MAX_DEGREE {
        let edge = quadrature_edge(d).unwrap();
        for k in 0..=d as i32 {
            let approx: f64 = edge.iter().map(|(p, w)| w * p[0].powi(k)).sum();
            worst = worst.max((approx - 1.0 / (k as f64 + 1.0)).abs());
        }
        let tri = quadrature_triangle(d).unwrap();
        for a in 0..=d as u32 {
            for b in 0..=(d as u32 - a) {
                let approx: f64 = tri.iter().map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                worst = worst.max((approx - exact).abs());
            }
        }
    }
    worst
}
