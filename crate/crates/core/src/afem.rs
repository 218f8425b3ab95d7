//! Adaptive loop: SOLVE → ESTIMATE → MARK → REFINE.

use std::io::{self, Write};

use thiserror::Error;

use crate::assembly::{assemble_system, check_coercivity, constraint_system, AssemblyError, ConstraintSystem, DgMethod, LinearSystem};
use crate::contact::{pdas_solve, sigma_from_definition, ContactError, ContactForceDensity, PdasConfig, VISolution};
use crate::estimator::{estimate, EstimatorError, EstimatorReport, NUM_TERMS};
use crate::mesh::{BoundaryTag, MarkedSet, Mesh, MeshError, GEOM_TOL};
use crate::problems::{ProblemError, ProblemSpec, VectorFn};
use crate::space::{triangle_sampling_grid, AffineMap, DiscreteField, DofMap, SpaceError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkError {
    #[error("no indicators to mark")]
    Empty,
    #[error("marking fraction must lie in (0, 1], got {0}")]
    Fraction(f64),
    #[error("indicator {0} is negative or not finite")]
    BadIndicator(usize),
}

/// Marks `{T : η(T) ≥ θ · max η}`; all-zero indicators mark everything.
pub fn mark_max(indicators: &[f64], theta: f64) -> Result<MarkedSet, MarkError> {
    if indicators.is_empty() {
        return Err(MarkError::Empty);
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(MarkError::Fraction(theta));
    }
    if let Some(i) = indicators.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(MarkError::BadIndicator(i));
    }
    let max = indicators.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(MarkedSet::all(indicators.len()));
    }
    let threshold = theta * max;
    Ok(MarkedSet::new(
        indicators
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= threshold)
            .map(|(i, _)| i)
            .collect(),
    ))
}

/// `max |u − u_h|` over the sampling grid and both components.
pub fn linf_error(mesh: &Mesh, u: &DiscreteField, exact: &VectorFn) -> Result<f64, SpaceError> {
    let grid = triangle_sampling_grid();
    let mut err: f64 = 0.0;
    for t in 0..mesh.num_triangles() {
        let map = AffineMap::of_triangle(mesh, t);
        for &p in &grid {
            let uh = u.eval(mesh, t, p)?;
            let ue = exact(map.to_physical(p));
            err = err.max((uh[0] - ue[0]).abs()).max((uh[1] - ue[1]).abs());
        }
    }
    Ok(err)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AfemConfig {
    pub method: DgMethod,
    pub theta_mark: f64,
    /// Number of levels to compute, counting the initial mesh.
    pub max_levels: usize,
    /// Meshes with more dofs than this are not solved.
    pub max_dofs: usize,
    pub uniform: bool,
    /// Start each level's PDAS from the previous level's active set.
    pub warm_start: bool,
    pub pdas: PdasConfig,
}

impl Default for AfemConfig {
    fn default() -> Self {
        Self {
            method: DgMethod::sipg(),
            theta_mark: 0.5,
            max_levels: 12,
            max_dofs: 200_000,
            uniform: false,
            warm_start: true,
            pdas: PdasConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub level: usize,
    pub ndof: usize,
    pub num_triangles: usize,
    pub h_min: f64,
    pub eta: [f64; NUM_TERMS],
    pub total: f64,
    pub error: Option<f64>,
    pub eff_index: Option<f64>,
    pub pdas_iters: usize,
    pub active_edges: usize,
}

pub const CSV_HEADER: &str = "level,ndof,h_min,eta1,eta2,eta3,eta4,eta5,eta6,eta7,total,error,eff_index,pdas_iters";

impl ConvergenceRecord {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut s = format!("{},{},{:e}", self.level, self.ndof, self.h_min);
        for e in self.eta {
            s.push_str(&format!(",{e:e}"));
        }
        s.push_str(&format!(
            ",{:e},{},{},{}",
            self.total,
            opt(self.error),
            opt(self.eff_index),
            self.pdas_iters
        ));
        s
    }
}

pub fn write_history_csv<W: Write>(records: &[ConvergenceRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Everything computed on one level, handed to the observer.
pub struct LevelData<'a> {
    pub mesh: &'a Mesh,
    pub dofmap: &'a DofMap,
    pub system: &'a LinearSystem,
    pub constraints: &'a ConstraintSystem,
    pub solution: &'a VISolution,
    pub field: &'a DiscreteField,
    pub sigma: &'a ContactForceDensity,
    pub report: &'a EstimatorReport,
    pub record: &'a ConvergenceRecord,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevelError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Mark(#[from] MarkError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("level {level} failed: {source}")]
pub struct AfemError {
    pub level: usize,
    /// Records of the levels completed before the failure.
    pub history: Vec<ConvergenceRecord>,
    #[source]
    pub source: LevelError,
}

/// Final state of a run.
#[derive(Debug, Clone)]
pub struct AfemOutcome {
    pub history: Vec<ConvergenceRecord>,
    pub mesh: Mesh,
    pub solution: DiscreteField,
    pub sigma: ContactForceDensity,
    pub active: Vec<bool>,
}

/// Activity of each new contact edge: active if it lies inside an edge that
/// was active on the previous mesh.
fn inherit_active_set(old: &Mesh, old_cons: &ConstraintSystem, old_active: &[bool], new: &Mesh, new_cons: &ConstraintSystem) -> Vec<bool> {
    let segments: Vec<([f64; 2], [f64; 2])> = old_cons
        .edges
        .iter()
        .zip(old_active)
        .filter(|(_, &a)| a)
        .map(|(&e, _)| {
            let v = old.edges()[e].vertices;
            (old.vertices()[v[0]], old.vertices()[v[1]])
        })
        .collect();
    new_cons
        .edges
        .iter()
        .map(|&e| {
            let m = new.edges()[e].midpoint;
            segments.iter().any(|&(a, b)| {
                let d = [b[0] - a[0], b[1] - a[1]];
                let r = [m[0] - a[0], m[1] - a[1]];
                let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
                let s = (r[0] * d[0] + r[1] * d[1]) / (len * len);
                (r[0] * d[1] - r[1] * d[0]).abs() / len <= GEOM_TOL && (0.0..=1.0).contains(&s)
            })
        })
        .collect()
}

struct Solved {
    record: ConvergenceRecord,
    field: DiscreteField,
    sigma: ContactForceDensity,
    constraints: ConstraintSystem,
    active: Vec<bool>,
    indicators: Vec<f64>,
}

fn solve_level(
    mesh: &Mesh,
    problem: &ProblemSpec,
    cfg: &AfemConfig,
    warm: Option<(&Mesh, &ConstraintSystem, &[bool])>,
    level: usize,
    observer: &mut dyn FnMut(&LevelData),
) -> Result<Solved, LevelError> {
    let dofmap = DofMap::new(mesh);
    let system = assemble_system(mesh, &dofmap, cfg.method, problem)?;
    let constraints = constraint_system(mesh, &dofmap, problem)?;
    let warm_set = warm.map(|(m, c, a)| inherit_active_set(m, c, a, mesh, &constraints));
    let solution = pdas_solve(&system, &constraints, &cfg.pdas, warm_set.as_deref())?;
    let field = DiscreteField::new(&dofmap, solution.u.clone())?;
    let sigma = sigma_from_definition(mesh, &dofmap, &system, &constraints, &solution.u);
    let report = estimate(mesh, &dofmap, &field, Some(&sigma), problem)?;
    let error = problem.exact.as_ref().map(|u| linf_error(mesh, &field, u)).transpose()?;
    let record = ConvergenceRecord {
        level,
        ndof: dofmap.num_dofs(),
        num_triangles: mesh.num_triangles(),
        h_min: report.h_min,
        eta: report.eta,
        total: report.total,
        error,
        eff_index: error.filter(|&e| e > 0.0).map(|e| report.total / e),
        pdas_iters: solution.iterations,
        active_edges: solution.active.iter().filter(|&&a| a).count(),
    };
    observer(&LevelData {
        mesh,
        dofmap: &dofmap,
        system: &system,
        constraints: &constraints,
        solution: &solution,
        field: &field,
        sigma: &sigma,
        report: &report,
        record: &record,
    });
    Ok(Solved {
        record,
        field,
        sigma,
        constraints,
        active: solution.active,
        indicators: report.element,
    })
}

/// Runs the adaptive loop from `mesh` (the problem's initial mesh when
/// `None`), calling `observer` after each level.
pub fn run_afem_from(
    problem: &ProblemSpec,
    cfg: &AfemConfig,
    mesh: Option<Mesh>,
    observer: &mut dyn FnMut(&LevelData),
) -> Result<AfemOutcome, AfemError> {
    let mut history = Vec::new();
    let fail = |level, history: &Vec<ConvergenceRecord>, source: LevelError| AfemError {
        level,
        history: history.clone(),
        source,
    };
    check_coercivity(cfg.method, problem.lame).map_err(|e| fail(0, &history, e.into()))?;
    let mut mesh = match mesh {
        Some(m) => m,
        None => problem.initial_mesh().map_err(|e| fail(0, &history, e.into()))?,
    };
    let mut previous: Option<(Mesh, ConstraintSystem, Vec<bool>)> = None;
    let mut level = 0;
    loop {
        let warm = if cfg.warm_start {
            previous.as_ref().map(|(m, c, a)| (m, c, a.as_slice()))
        } else {
            None
        };
        let Solved {
            record,
            field,
            sigma,
            constraints,
            active,
            indicators,
        } = solve_level(&mesh, problem, cfg, warm, level, observer).map_err(|e| fail(level, &history, e))?;
        history.push(record);
        level += 1;

        let next = if level < cfg.max_levels {
            let marked = if cfg.uniform {
                Ok(MarkedSet::all(mesh.num_triangles()))
            } else {
                mark_max(&indicators, cfg.theta_mark)
            };
            let refined = marked
                .map_err(LevelError::from)
                .and_then(|m| mesh.refine_nvb(&m).map_err(LevelError::from))
                .map_err(|e| fail(level, &history, e))?;
            (DofMap::new(&refined).num_dofs() <= cfg.max_dofs).then_some(refined)
        } else {
            None
        };
        match next {
            Some(refined) => {
                let old = std::mem::replace(&mut mesh, refined);
                previous = Some((old, constraints, active));
            }
            None => {
                return Ok(AfemOutcome {
                    history,
                    mesh,
                    solution: field,
                    sigma,
                    active,
                })
            }
        }
    }
}

pub fn run_afem(problem: &ProblemSpec, cfg: &AfemConfig) -> Result<Vec<ConvergenceRecord>, AfemError> {
    run_afem_from(problem, cfg, None, &mut |_| {}).map(|o| o.history)
}

/// Median of the triangle diameters within `radius` of `center`, and the
/// global median.
pub fn localized_median_h(mesh: &Mesh, center: [f64; 2], radius: f64) -> (Option<f64>, f64) {
    fn median(mut v: Vec<f64>) -> Option<f64> {
        if v.is_empty() {
            return None;
        }
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let n = v.len();
        Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
    }
    let all: Vec<f64> = (0..mesh.num_triangles()).map(|t| mesh.diameter(t)).collect();
    let near = (0..mesh.num_triangles())
        .filter(|&t| {
            let c = mesh.centroid(t);
            (c[0] - center[0]).hypot(c[1] - center[1]) <= radius
        })
        .map(|t| all[t])
        .collect();
    (median(near), median(all).expect("mesh is nonempty"))
}

/// Number of contact edges on the mesh.
pub fn contact_edge_count(mesh: &Mesh) -> usize {
    mesh.edges_with_tag(BoundaryTag::Contact).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{model_problem_1, patch_test_problem};

    #[test]
    fn mark_examples() {
        assert_eq!(mark_max(&[1.0, 0.6, 0.4], 0.5).unwrap().as_slice(), &[0, 1]);
        assert_eq!(mark_max(&[1.0, 3.0, 3.0, 0.4], 1.0).unwrap().as_slice(), &[1, 2]);
        assert_eq!(mark_max(&[0.0, 0.0], 0.5).unwrap().as_slice(), &[0, 1]);
        assert_eq!(mark_max(&[], 0.5), Err(MarkError::Empty));
        assert_eq!(mark_max(&[1.0], 0.0), Err(MarkError::Fraction(0.0)));
        assert_eq!(mark_max(&[1.0, f64::NAN], 0.5), Err(MarkError::BadIndicator(1)));
    }

    #[test]
    fn csv_schema() {
        let r = ConvergenceRecord {
            level: 2,
            ndof: 96,
            num_triangles: 8,
            h_min: 0.5,
            eta: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
            total: 0.1,
            error: None,
            eff_index: None,
            pdas_iters: 3,
            active_edges: 1,
        };
        assert_eq!(r.csv_row(), "2,96,5e-1,1e0,2e0,3e0,4e0,5e0,6e0,7e0,1e-1,,,3");
        let mut buf = Vec::new();
        write_history_csv(&[r], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with(CSV_HEADER));
    }

    #[test]
    fn mp1_exact_values() {
        let p = model_problem_1();
        let u = p.exact.unwrap();
        assert_eq!(u([0.5, 1.0]), [0.0, 0.0]);
        let v = u([0.0, 0.5]);
        assert_eq!(v[0], -0.125);
        assert!((v[1] + 0.824360635350064).abs() < 1e-14);
    }

    #[test]
    fn interpolant_error_vanishes() {
        let p = patch_test_problem();
        let m = p.initial_mesh().unwrap();
        let d = DofMap::new(&m);
        let exact = p.exact.clone().unwrap();
        let f = DiscreteField::interpolate(&m, &d, |x| exact(x));
        assert!(linf_error(&m, &f, &exact).unwrap() < 1e-12);
    }

    #[test]
    fn patch_run_is_exact_at_every_level() {
        let p = patch_test_problem();
        let cfg = AfemConfig {
            max_levels: 3,
            ..Default::default()
        };
        let h = run_afem(&p, &cfg).unwrap();
        assert_eq!(h.len(), 3);
        for r in &h {
            assert!(r.error.unwrap() < 1e-8);
        }
        assert!(h.windows(2).all(|w| w[1].ndof > w[0].ndof));
    }

    #[test]
    fn estimator_decreases_on_first_model_problem() {
        let cfg = AfemConfig {
            max_levels: 7,
            ..Default::default()
        };
        let h = run_afem(&model_problem_1(), &cfg).unwrap();
        assert_eq!(h.len(), 7);
        for w in h.windows(2) {
            assert!(w[1].total < w[0].total, "{} -> {}", w[0].total, w[1].total);
            assert!(w[1].ndof > w[0].ndof);
        }
    }

    #[test]
    fn dof_cap_stops_early() {
        let p = patch_test_problem();
        let cfg = AfemConfig {
            max_levels: 10,
            max_dofs: 100,
            uniform: true,
            ..Default::default()
        };
        let h = run_afem(&p, &cfg).unwrap();
        assert_eq!(h.iter().map(|r| r.ndof).collect::<Vec<_>>(), vec![48, 96]);
    }

    #[test]
    fn warm_start_inherits_by_geometry() {
        let p = model_problem_1();
        let m0 = p.initial_mesh().unwrap();
        let m1 = m0.refine_nvb(&MarkedSet::all(4)).unwrap();
        let c0 = constraint_system(&m0, &DofMap::new(&m0), &p).unwrap();
        let c1 = constraint_system(&m1, &DofMap::new(&m1), &p).unwrap();
        assert_eq!(inherit_active_set(&m0, &c0, &[true], &m1, &c1), vec![true, true]);
        assert_eq!(inherit_active_set(&m0, &c0, &[false], &m1, &c1), vec![false, false]);
    }
}
