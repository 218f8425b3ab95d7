//! Primal-dual active set solver for the discrete contact problem and the
//! discrete contact force density.

use thiserror::Error;

use crate::assembly::{ConstraintSystem, LinearSystem};
use crate::linalg::{max_abs, solve_bordered, SolveError, SparseRow};
use crate::mesh::Mesh;
use crate::space::{DofMap, Vec2, NODES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContactError {
    #[error("active set did not settle after {iterations} iterations; last two active sets: {previous:?} then {last:?}")]
    Cycling {
        iterations: usize,
        previous: Vec<usize>,
        last: Vec<usize>,
    },
    #[error("saddle system singular with active contact edges {edges:?}: {source}")]
    Singular {
        edges: Vec<usize>,
        #[source]
        source: SolveError,
    },
    #[error("invalid PDAS configuration: {0}")]
    Config(&'static str),
    #[error("warm start has {got} entries, expected {expected}")]
    WarmStartLength { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialActiveSet {
    All,
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdasConfig {
    /// Complementarity scaling `c` in the active-set update.
    pub c: f64,
    pub max_iter: usize,
    /// Absolute tolerance; `None` means `1e-9 (1 + ‖b‖∞)`.
    pub tol: Option<f64>,
    pub initial: InitialActiveSet,
}

impl Default for PdasConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            max_iter: 30,
            tol: None,
            initial: InitialActiveSet::All,
        }
    }
}

impl PdasConfig {
    fn validate(&self) -> Result<(), ContactError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(ContactError::Config("c must be positive"));
        }
        if self.max_iter == 0 {
            return Err(ContactError::Config("max_iter must be at least 1"));
        }
        if matches!(self.tol, Some(t) if t.is_nan() || t <= 0.0) {
            return Err(ContactError::Config("tol must be positive"));
        }
        Ok(())
    }

    pub fn tolerance(&self, rhs: &[f64]) -> f64 {
        self.tol.unwrap_or(1e-9 * (1.0 + max_abs(rhs)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VISolution {
    pub u: Vec<f64>,
    /// One multiplier per constraint row; zero on inactive rows.
    pub multipliers: Vec<f64>,
    pub active: Vec<bool>,
    pub iterations: usize,
    /// Number of active rows at the start of each iteration.
    pub active_counts: Vec<usize>,
}

impl VISolution {
    pub fn active_rows(&self) -> Vec<usize> {
        active_indices(&self.active)
    }
}

fn active_indices(active: &[bool]) -> Vec<usize> {
    active.iter().enumerate().filter(|(_, &a)| a).map(|(k, _)| k).collect()
}

/// Solves `min ½uᵀAu − bᵀu` subject to `C u ≤ g` (for symmetric `A`; the
/// same KKT system otherwise) by the edge-wise primal-dual active set
/// iteration. `warm` overrides the configured initial active set.
pub fn pdas_solve(
    system: &LinearSystem,
    constraints: &ConstraintSystem,
    cfg: &PdasConfig,
    warm: Option<&[bool]>,
) -> Result<VISolution, ContactError> {
    cfg.validate()?;
    let m = constraints.len();
    let mut active = match warm {
        Some(w) if w.len() != m => {
            return Err(ContactError::WarmStartLength {
                got: w.len(),
                expected: m,
            })
        }
        Some(w) => w.to_vec(),
        None => vec![cfg.initial == InitialActiveSet::All; m],
    };
    let tol = cfg.tolerance(&system.rhs);
    let mut previous = Vec::new();
    let mut active_counts = Vec::new();

    for it in 1..=cfg.max_iter {
        let idx = active_indices(&active);
        active_counts.push(idx.len());
        let rows: Vec<&SparseRow> = idx.iter().map(|&k| &constraints.rows[k]).collect();
        let g: Vec<f64> = idx.iter().map(|&k| constraints.bounds[k]).collect();
        let (u, lam_active) = solve_bordered(&system.matrix, &rows, &system.rhs, &g).map_err(|source| {
            ContactError::Singular {
                edges: idx.iter().map(|&k| constraints.edges[k]).collect(),
                source,
            }
        })?;
        let mut multipliers = vec![0.0; m];
        for (&k, l) in idx.iter().zip(lam_active) {
            multipliers[k] = l;
        }
        let cu = constraints.apply(&u);
        let next: Vec<bool> = (0..m)
            .map(|k| multipliers[k] + cfg.c * (cu[k] - constraints.bounds[k]) > tol)
            .collect();
        if next == active {
            return Ok(VISolution {
                u,
                multipliers,
                active,
                iterations: it,
                active_counts,
            });
        }
        previous = std::mem::replace(&mut active, next);
    }
    Err(ContactError::Cycling {
        iterations: cfg.max_iter,
        previous: active_indices(&previous),
        last: active_indices(&active),
    })
}

/// Piecewise-constant contact force density, one value per contact edge.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactForceDensity {
    pub edges: Vec<usize>,
    pub normal: Vec<f64>,
    pub tangential: Vec<f64>,
    /// Edge normal and tangent used as the frame.
    pub frames: Vec<(Vec2, Vec2)>,
}

impl ContactForceDensity {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// `σ_n n + σ_t t` in Cartesian components.
    pub fn vector(&self, k: usize) -> Vec2 {
        let (n, t) = self.frames[k];
        [
            self.normal[k] * n[0] + self.tangential[k] * t[0],
            self.normal[k] * n[1] + self.tangential[k] * t[1],
        ]
    }

    /// `(σ₁, σ₂)` with σ₁ the normal and σ₂ the tangential component, when
    /// the edge normal is a coordinate direction.
    pub fn axis_frame(&self, k: usize) -> Option<(f64, f64)> {
        let (n, _) = self.frames[k];
        (n[0] == 0.0 || n[1] == 0.0).then_some((self.normal[k], self.tangential[k]))
    }

    /// Component `k` of the density on mesh edge `e`, if it is a contact edge.
    pub fn position(&self, e: usize) -> Option<usize> {
        self.edges.binary_search(&e).ok()
    }
}

/// For each contact edge `e` on triangle `T`: the test function equal to a
/// constant direction `d` on `T` and zero elsewhere gives
/// `σ·d = (B(v) − M(u_h, v)) / h_e`.
pub fn sigma_from_definition(
    mesh: &Mesh,
    dofmap: &DofMap,
    system: &LinearSystem,
    constraints: &ConstraintSystem,
    u: &[f64],
) -> ContactForceDensity {
    let au = system.matrix.matvec(u);
    let residual: Vec<f64> = system.rhs.iter().zip(&au).map(|(b, a)| b - a).collect();
    let mut out = ContactForceDensity {
        edges: vec![],
        normal: vec![],
        tangential: vec![],
        frames: vec![],
    };
    let mut order: Vec<usize> = (0..constraints.len()).collect();
    order.sort_by_key(|&k| constraints.edges[k]);
    for k in order {
        let e = constraints.edges[k];
        let t = constraints.triangles[k];
        let edge = &mesh.edges()[e];
        let n = edge.normal;
        let tan = edge.tangent();
        let mut r = [0.0; 2];
        for node in 0..NODES {
            for (c, rc) in r.iter_mut().enumerate() {
                *rc += residual[dofmap.dof(t, node, c)];
            }
        }
        out.edges.push(e);
        out.normal.push((r[0] * n[0] + r[1] * n[1]) / edge.length);
        out.tangential.push((r[0] * tan[0] + r[1] * tan[1]) / edge.length);
        out.frames.push((n, tan));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplementarityReport {
    /// `max_e (C_e u − g_e)⁺`.
    pub feasibility: f64,
    /// `max_e (−λ_e)⁺`.
    pub negative_multiplier: f64,
    /// `max_e |λ_e (C_e u − g_e)|`.
    pub complementarity: f64,
}

pub fn complementarity_report(u: &[f64], multipliers: &[f64], constraints: &ConstraintSystem) -> ComplementarityReport {
    let mut rep = ComplementarityReport {
        feasibility: 0.0,
        negative_multiplier: 0.0,
        complementarity: 0.0,
    };
    for (k, cu) in constraints.apply(u).into_iter().enumerate() {
        let slack = cu - constraints.bounds[k];
        let lam = multipliers[k];
        rep.feasibility = rep.feasibility.max(slack);
        rep.negative_multiplier = rep.negative_multiplier.max(-lam);
        rep.complementarity = rep.complementarity.max((lam * slack).abs());
    }
    rep
}
