//! Problem data: Lamé parameters, loads, gap, boundary partition and
//! optional manufactured solutions.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::mesh::{self, BoundaryTag, Mesh, MeshError, Point, GEOM_TOL};
use crate::space::{Mat2, Vec2};

pub mod config;

pub type VectorFn = Arc<dyn Fn(Point) -> Vec2 + Send + Sync>;
/// Surface load as a function of position and outward unit normal.
pub type TractionFn = Arc<dyn Fn(Point, Vec2) -> Vec2 + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(Point) -> Mat2 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("Lamé parameters must be positive (mu = {mu}, kappa = {kappa})")]
    NonPositiveLame { mu: f64, kappa: f64 },
    #[error("Poisson ratio {0} outside (0, 0.5)")]
    PoissonRatio(f64),
    #[error("Young's modulus {0} must be positive")]
    YoungModulus(f64),
    #[error("unknown problem `{0}` (expected mp1, mp2 or patch)")]
    UnknownProblem(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lame {
    pub mu: f64,
    pub kappa: f64,
}

impl Lame {
    pub fn new(mu: f64, kappa: f64) -> Result<Self, ProblemError> {
        if !(mu > 0.0 && kappa > 0.0) {
            return Err(ProblemError::NonPositiveLame { mu, kappa });
        }
        Ok(Self { mu, kappa })
    }
}

/// `μ = E / (2(1+ν))`, `κ = Eν / ((1+ν)(1-2ν))`.
pub fn lame_from_young_poisson(young: f64, poisson: f64) -> Result<(f64, f64), ProblemError> {
    if young.is_nan() || young <= 0.0 {
        return Err(ProblemError::YoungModulus(young));
    }
    if !(poisson > 0.0 && poisson < 0.5) {
        return Err(ProblemError::PoissonRatio(poisson));
    }
    let mu = young / (2.0 * (1.0 + poisson));
    let kappa = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    Ok((mu, kappa))
}

/// `2μ sym(G) + κ tr(sym(G)) I`.
pub fn hooke_stress(grad: Mat2, lame: Lame) -> Mat2 {
    let e01 = 0.5 * (grad[0][1] + grad[1][0]);
    let tr = grad[0][0] + grad[1][1];
    [
        [2.0 * lame.mu * grad[0][0] + lame.kappa * tr, 2.0 * lame.mu * e01],
        [2.0 * lame.mu * e01, 2.0 * lame.mu * grad[1][1] + lame.kappa * tr],
    ]
}

/// Sides of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn contains(self, p: Point) -> bool {
        match self {
            Side::Left => p[0].abs() <= GEOM_TOL,
            Side::Right => (p[0] - 1.0).abs() <= GEOM_TOL,
            Side::Bottom => p[1].abs() <= GEOM_TOL,
            Side::Top => (p[1] - 1.0).abs() <= GEOM_TOL,
        }
    }

    pub fn parse(s: &str) -> Option<Side> {
        match s.trim() {
            "left" => Some(Side::Left),
            "right" => Some(Side::Right),
            "bottom" => Some(Side::Bottom),
            "top" => Some(Side::Top),
            _ => None,
        }
    }
}

/// Assigns a boundary part to each side of the unit square; edges are
/// classified by their midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryPartition {
    pub left: BoundaryTag,
    pub right: BoundaryTag,
    pub bottom: BoundaryTag,
    pub top: BoundaryTag,
}

impl BoundaryPartition {
    pub fn tag_of(&self, side: Side) -> BoundaryTag {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
            Side::Bottom => self.bottom,
            Side::Top => self.top,
        }
    }

    /// Boundary part of the edge with midpoint `p`. `None` if `p` lies on
    /// no side or on sides carrying different parts.
    pub fn classify(&self, p: Point) -> Option<BoundaryTag> {
        let mut tags = Side::ALL.iter().filter(|s| s.contains(p)).map(|&s| self.tag_of(s));
        let first = tags.next()?;
        if tags.all(|t| t == first) {
            Some(first)
        } else {
            None
        }
    }
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub lame: Lame,
    pub boundary: BoundaryPartition,
    pub body_force: VectorFn,
    pub traction: TractionFn,
    /// Normal gap to the obstacle along the contact boundary.
    pub gap: ScalarFn,
    /// Points on the contact boundary where the gap has a kink; gap
    /// integrals split edges there.
    pub gap_breakpoints: Vec<Point>,
    pub dirichlet: VectorFn,
    pub exact: Option<VectorFn>,
    pub exact_gradient: Option<GradientFn>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("lame", &self.lame)
            .field("boundary", &self.boundary)
            .field("gap_breakpoints", &self.gap_breakpoints)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn by_name(name: &str) -> Result<ProblemSpec, ProblemError> {
        match name {
            "mp1" => Ok(model_problem_1()),
            "mp2" => Ok(model_problem_2()),
            "patch" => Ok(patch_test_problem()),
            other => Err(ProblemError::UnknownProblem(other.to_string())),
        }
    }

    /// The unit-square initial mesh tagged with this problem's partition.
    pub fn initial_mesh(&self) -> Result<Mesh, ProblemError> {
        Ok(mesh::unit_square_initial_mesh().retag_boundary(|p| self.boundary.classify(p))?)
    }

    pub fn has_contact(&self) -> bool {
        Side::ALL.iter().any(|&s| self.boundary.tag_of(s) == BoundaryTag::Contact)
    }

    /// Stress of the exact solution, when known.
    pub fn exact_stress(&self, p: Point) -> Option<Mat2> {
        self.exact_gradient.as_ref().map(|g| hooke_stress(g(p), self.lame))
    }
}

/// Contact with a rigid foundation: `u = (y²(y−1), (x−2)y(1−y)eʸ)`,
/// μ = κ = 1, clamped top, free sides, contact along the bottom with zero gap.
pub fn model_problem_1() -> ProblemSpec {
    let lame = Lame { mu: 1.0, kappa: 1.0 };
    let exact: VectorFn = Arc::new(mp1::displacement);
    let exact_gradient: GradientFn = Arc::new(mp1::gradient);
    let body_force: VectorFn = Arc::new(move |p| mp1::body_force(p, lame));
    let traction: TractionFn = Arc::new(move |p, n| {
        let s = hooke_stress(mp1::gradient(p), lame);
        [s[0][0] * n[0] + s[0][1] * n[1], s[1][0] * n[0] + s[1][1] * n[1]]
    });
    ProblemSpec {
        name: "mp1".into(),
        lame,
        boundary: BoundaryPartition {
            left: BoundaryTag::Neumann,
            right: BoundaryTag::Neumann,
            bottom: BoundaryTag::Contact,
            top: BoundaryTag::Dirichlet,
        },
        body_force,
        traction,
        gap: Arc::new(|_| 0.0),
        gap_breakpoints: vec![],
        dirichlet: Arc::new(|_| [0.0, 0.0]),
        exact: Some(exact),
        exact_gradient: Some(exact_gradient),
    }
}

/// Closed-form data of the first model problem.
pub mod mp1 {
    use super::Lame;
    use crate::mesh::Point;
    use crate::space::{Mat2, Vec2};

    /// `p(y) = (y − y²) eʸ` and its first two derivatives.
    fn profile(y: f64) -> (f64, f64, f64) {
        let e = y.exp();
        let p = (y - y * y) * e;
        let dp = (1.0 - y - y * y) * e;
        let ddp = -y * (y + 3.0) * e;
        (p, dp, ddp)
    }

    pub fn displacement(x: Point) -> Vec2 {
        let y = x[1];
        let (p, _, _) = profile(y);
        [y * y * (y - 1.0), (x[0] - 2.0) * p]
    }

    pub fn gradient(x: Point) -> Mat2 {
        let y = x[1];
        let (p, dp, _) = profile(y);
        [[0.0, 3.0 * y * y - 2.0 * y], [p, (x[0] - 2.0) * dp]]
    }

    /// `f = −div Ξ(u)` with `(div Ξ)_1 = κ p' + μ(6y − 2 + p')` and
    /// `(div Ξ)_2 = (2μ + κ)(x − 2) p''`.
    pub fn body_force(x: Point, lame: Lame) -> Vec2 {
        let y = x[1];
        let (_, dp, ddp) = profile(y);
        let div1 = lame.kappa * dp + lame.mu * (6.0 * y - 2.0 + dp);
        let div2 = (2.0 * lame.mu + lame.kappa) * (x[0] - 2.0) * ddp;
        [-div1, -div2]
    }
}

/// Rigid wedge: gap `χ(y) = −0.2 + 0.5|y − 0.5|` on `x = 1`, prescribed
/// displacement `(−0.1, 0)` on `x = 0`, traction-free top and bottom,
/// E = 500, ν = 0.3.
pub fn model_problem_2() -> ProblemSpec {
    let (mu, kappa) = lame_from_young_poisson(500.0, 0.3).expect("valid material");
    ProblemSpec {
        name: "mp2".into(),
        lame: Lame { mu, kappa },
        boundary: BoundaryPartition {
            left: BoundaryTag::Dirichlet,
            right: BoundaryTag::Contact,
            bottom: BoundaryTag::Neumann,
            top: BoundaryTag::Neumann,
        },
        body_force: Arc::new(|_| [0.0, 0.0]),
        traction: Arc::new(|_, _| [0.0, 0.0]),
        gap: Arc::new(|p| -0.2 + 0.5 * (p[1] - 0.5).abs()),
        gap_breakpoints: vec![[1.0, 0.5]],
        dirichlet: Arc::new(|_| [-0.1, 0.0]),
        exact: None,
        exact_gradient: None,
    }
}

/// Coefficients of a full quadratic vector field
/// `u_c = a0 + a1 x + a2 y + a3 x² + a4 xy + a5 y²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticField(pub [[f64; 6]; 2]);

impl QuadraticField {
    pub fn eval(&self, p: Point) -> Vec2 {
        let m = [1.0, p[0], p[1], p[0] * p[0], p[0] * p[1], p[1] * p[1]];
        let c = &self.0;
        [
            c[0].iter().zip(&m).map(|(a, b)| a * b).sum(),
            c[1].iter().zip(&m).map(|(a, b)| a * b).sum(),
        ]
    }

    pub fn gradient(&self, p: Point) -> Mat2 {
        let c = &self.0;
        let g = |k: usize| -> [f64; 2] {
            [
                c[k][1] + 2.0 * c[k][3] * p[0] + c[k][4] * p[1],
                c[k][2] + c[k][4] * p[0] + 2.0 * c[k][5] * p[1],
            ]
        };
        [g(0), g(1)]
    }

    /// Constant `div Ξ(u) = μ Δu + (μ + κ) ∇(div u)`.
    pub fn stress_divergence(&self, lame: Lame) -> Vec2 {
        let c = &self.0;
        let lap = [2.0 * (c[0][3] + c[0][5]), 2.0 * (c[1][3] + c[1][5])];
        // ∇(∂x u1 + ∂y u2)
        let grad_div = [2.0 * c[0][3] + c[1][4], c[0][4] + 2.0 * c[1][5]];
        [
            lame.mu * lap[0] + (lame.mu + lame.kappa) * grad_div[0],
            lame.mu * lap[1] + (lame.mu + lame.kappa) * grad_div[1],
        ]
    }
}

/// Default quadratic for the contact-free consistency test.
pub const PATCH_FIELD: QuadraticField = QuadraticField([
    [0.1, 0.3, -0.2, 0.5, -0.4, 0.25],
    [-0.05, 0.2, 0.1, -0.3, 0.6, -0.15],
]);

/// Contact-free problem whose exact solution is a full quadratic: Dirichlet
/// on left and top, Neumann on right and bottom, data matched to `field`.
pub fn quadratic_problem(field: QuadraticField, lame: Lame) -> ProblemSpec {
    let div = field.stress_divergence(lame);
    ProblemSpec {
        name: "patch".into(),
        lame,
        boundary: BoundaryPartition {
            left: BoundaryTag::Dirichlet,
            right: BoundaryTag::Neumann,
            bottom: BoundaryTag::Neumann,
            top: BoundaryTag::Dirichlet,
        },
        body_force: Arc::new(move |_| [-div[0], -div[1]]),
        traction: Arc::new(move |p, n| {
            let s = hooke_stress(field.gradient(p), lame);
            [s[0][0] * n[0] + s[0][1] * n[1], s[1][0] * n[0] + s[1][1] * n[1]]
        }),
        gap: Arc::new(|_| f64::INFINITY),
        gap_breakpoints: vec![],
        dirichlet: Arc::new(move |p| field.eval(p)),
        exact: Some(Arc::new(move |p| field.eval(p))),
        exact_gradient: Some(Arc::new(move |p| field.gradient(p))),
    }
}

pub fn patch_test_problem() -> ProblemSpec {
    quadratic_problem(PATCH_FIELD, Lame { mu: 1.0, kappa: 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lame_values() {
        let (mu, kappa) = lame_from_young_poisson(500.0, 0.3).unwrap();
        assert!((mu - 192.30769230769232).abs() < 1e-12);
        assert!((kappa - 288.46153846153845).abs() < 1e-12);
        let (mu, _) = lame_from_young_poisson(2.6, 0.3).unwrap();
        assert!((mu - 1.0).abs() < 1e-15);
        assert_eq!(lame_from_young_poisson(1.0, 0.5), Err(ProblemError::PoissonRatio(0.5)));
        // ν = 0 gives κ = 0, outside the admissible range
        assert!(lame_from_young_poisson(1.0, 0.0).is_err());
        assert!(Lame::new(0.5, 0.0).is_err());
    }

    #[test]
    fn hooke_examples() {
        let lame = Lame { mu: 1.0, kappa: 1.0 };
        assert_eq!(hooke_stress([[0.0; 2]; 2], lame), [[0.0; 2]; 2]);
        assert_eq!(hooke_stress([[1.0, 0.0], [0.0, 0.0]], lame), [[3.0, 0.0], [0.0, 1.0]]);
        let g = [[0.3, -1.2], [0.7, 2.0]];
        let gt = [[0.3, 0.7], [-1.2, 2.0]];
        let (a, b) = (hooke_stress(g, lame), hooke_stress(gt, lame));
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[i][j] - b[i][j]).abs() < 1e-15);
            }
        }
        assert_eq!(a[0][1], a[1][0]);
    }

    #[test]
    fn mp1_boundary_values() {
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(mp1::displacement([x, 1.0]), [0.0, 0.0]);
            // normal displacement on the contact side vanishes
            assert_eq!(mp1::displacement([x, 0.0])[1], 0.0);
        }
        let u = mp1::displacement([0.0, 0.5]);
        assert!((u[0] + 0.125).abs() < 1e-15);
        assert!((u[1] + 2.0 * 0.25 * 0.5f64.exp()).abs() < 1e-15);
        assert!((u[1] + 0.824360635350064).abs() < 1e-12);
    }

    #[test]
    fn mp2_data() {
        let p = model_problem_2();
        assert_eq!((p.gap)([1.0, 0.5]), -0.2);
        assert!(((p.gap)([1.0, 0.0]) - 0.05).abs() < 1e-15);
        assert_eq!((p.dirichlet)([0.0, 0.3]), [-0.1, 0.0]);
        assert_eq!((p.traction)([0.5, 0.0], [0.0, -1.0]), [0.0, 0.0]);
    }

    #[test]
    fn partitions_classify_initial_edges() {
        for p in [model_problem_1(), model_problem_2(), patch_test_problem()] {
            let m = mesh::unit_square_initial_mesh();
            for e in m.edges().iter().filter(|e| e.is_boundary()) {
                let hits = Side::ALL.iter().filter(|s| s.contains(e.midpoint)).count();
                assert_eq!(hits, 1);
                assert!(p.boundary.classify(e.midpoint).is_some());
            }
            assert!(p.initial_mesh().is_ok());
        }
        assert_eq!(model_problem_2().boundary.classify([0.5, 0.5]), None);
    }

    #[test]
    fn mp2_contact_and_dirichlet_are_disjoint() {
        let p = model_problem_2();
        let m = p.initial_mesh().unwrap();
        let touch = |tag| -> Vec<usize> {
            m.edges()
                .iter()
                .filter(|e| e.tag == tag)
                .flat_map(|e| e.vertices)
                .collect()
        };
        let d = touch(BoundaryTag::Dirichlet);
        assert!(!d.is_empty());
        assert!(touch(BoundaryTag::Contact).iter().all(|v| !d.contains(v)));
    }

    #[test]
    fn quadratic_field_divergence_matches_finite_differences() {
        let lame = Lame { mu: 1.3, kappa: 0.7 };
        let f = PATCH_FIELD;
        let p = [0.3, 0.6];
        let h = 1e-5;
        let stress = |q: Point| hooke_stress(f.gradient(q), lame);
        let sxp = stress([p[0] + h, p[1]]);
        let sxm = stress([p[0] - h, p[1]]);
        let syp = stress([p[0], p[1] + h]);
        let sym = stress([p[0], p[1] - h]);
        let div = f.stress_divergence(lame);
        for i in 0..2 {
            let fd = (sxp[i][0] - sxm[i][0]) / (2.0 * h) + (syp[i][1] - sym[i][1]) / (2.0 * h);
            assert!((fd - div[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(ProblemSpec::by_name("mp3"), Err(ProblemError::UnknownProblem(_))));
    }
}
