//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use contact_dg::afem::{localized_median_h, run_afem_from, AfemConfig, ConvergenceRecord, LevelData};
use contact_dg::assembly::{DgMethod, DgVariant};
use contact_dg::problems::{model_problem_1, model_problem_2, patch_test_problem, ProblemSpec};
use contact_dg::space::{DiscreteField, DofMap};
use contact_dg_validation::{
    integrity, mp1_data_mismatch, quadrature_mismatch, representation_residual, sign_law, uniform,
    variational_inequality_min,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sipg() -> DgMethod {
    DgMethod::new(DgVariant::Sipg, 40.0).unwrap()
}

fn nipg() -> DgMethod {
    DgMethod::new(DgVariant::Nipg, 1.0).unwrap()
}

fn iipg() -> DgMethod {
    DgMethod::new(DgVariant::Iipg, 40.0).unwrap()
}

/// Worst values of the per-level checks over every level of every run.
struct Tally {
    levels: usize,
    min_normal: f64,
    max_tangential: f64,
    max_normal_on_slack: f64,
    max_multiplier_gap: f64,
    max_representation: f64,
    min_vi: f64,
    integrity_failures: Vec<String>,
    max_iterations: usize,
    max_warm_iterations: usize,
    run_failures: Vec<String>,
    rng: ChaCha8Rng,
}

impl Tally {
    fn new() -> Self {
        Self {
            levels: 0,
            min_normal: 0.0,
            max_tangential: 0.0,
            max_normal_on_slack: f64::NEG_INFINITY,
            max_multiplier_gap: 0.0,
            max_representation: 0.0,
            min_vi: f64::INFINITY,
            integrity_failures: vec![],
            max_iterations: 0,
            max_warm_iterations: 0,
            run_failures: vec![],
            rng: ChaCha8Rng::seed_from_u64(2024),
        }
    }

    fn observe(&mut self, label: &str, problem: &ProblemSpec, d: &LevelData) {
        self.levels += 1;
        let s = sign_law(d);
        self.min_normal = self.min_normal.min(s.min_normal);
        self.max_tangential = self.max_tangential.max(s.max_tangential);
        self.max_normal_on_slack = self.max_normal_on_slack.max(s.max_normal_on_slack);
        self.max_multiplier_gap = self.max_multiplier_gap.max(s.max_multiplier_gap);
        self.max_representation = self.max_representation.max(representation_residual(d, &mut self.rng, 20));
        self.min_vi = self.min_vi.min(variational_inequality_min(d, &mut self.rng, 50));
        if let Err(e) = integrity(d.mesh, problem) {
            self.integrity_failures.push(format!("{label} level {}: {e}", d.record.level));
        }
        let it = d.solution.iterations;
        self.max_iterations = self.max_iterations.max(it);
        if d.record.level > 0 {
            self.max_warm_iterations = self.max_warm_iterations.max(it);
        }
    }

    fn run(&mut self, label: &str, problem: &ProblemSpec, cfg: &AfemConfig) -> Option<(Vec<ConvergenceRecord>, f64, contact_dg::mesh::Mesh)> {
        let start = Instant::now();
        let result = run_afem_from(problem, cfg, None, &mut |d| self.observe(label, problem, d));
        let elapsed = start.elapsed().as_secs_f64();
        match result {
            Ok(outcome) => Some((outcome.history, elapsed, outcome.mesh)),
            Err(e) => {
                self.run_failures.push(format!("{label}: {e}"));
                None
            }
        }
    }
}

struct Verdicts(Vec<bool>);

impl Verdicts {
    fn report(&mut self, number: usize, name: &str, pass: bool, detail: String) {
        println!("criterion {number:>2} ({name}): {} | {detail}", if pass { "PASS" } else { "FAIL" });
        self.0.push(pass);
    }
}

fn monotone_violations(values: &[f64]) -> Vec<usize> {
    (1..values.len()).filter(|&i| values[i] > values[i - 1]).collect()
}

fn main() -> ExitCode {
    let mut verdicts = Verdicts(vec![]);
    let mut tally = Tally::new();

    // 1: patch test
    {
        let start = Instant::now();
        let problem = patch_test_problem();
        let mut worst = 0.0f64;
        let mut failures = vec![];
        for method in [sipg(), nipg(), iipg()] {
            for refinements in [0, 2] {
                let mesh = uniform(problem.initial_mesh().unwrap(), refinements);
                let dofmap = DofMap::new(&mesh);
                let exact = problem.exact.clone().unwrap();
                let norm = DiscreteField::interpolate(&mesh, &dofmap, |p| exact(p)).max_abs();
                let cfg = AfemConfig {
                    method,
                    max_levels: 1,
                    ..Default::default()
                };
                match run_afem_from(&problem, &cfg, Some(mesh), &mut |_| {}) {
                    Ok(o) => worst = worst.max(o.history[0].error.unwrap() / norm),
                    Err(e) => failures.push(format!("{}: {e}", method.variant.name())),
                }
            }
        }
        let secs = start.elapsed().as_secs_f64();
        verdicts.report(
            1,
            "patch consistency",
            failures.is_empty() && worst <= 1e-8 && secs < 5.0,
            format!("max relative L-inf error {worst:.2e} (bound 1e-8), {secs:.2} s {failures:?}"),
        );
    }

    // runs feeding the per-level criteria
    let start = Instant::now();
    for problem in [model_problem_1(), model_problem_2()] {
        for method in [sipg(), nipg(), iipg()] {
            let label = format!("{} {}", problem.name, method.variant.name());
            let cfg = AfemConfig {
                method,
                ..Default::default()
            };
            tally.run(&label, &problem, &cfg);
        }
    }
    let suite_secs = start.elapsed().as_secs_f64();

    // 6 and 7: long adaptive runs on the first model problem
    let mp1 = model_problem_1();
    let mut c6 = vec![];
    let mut c7 = vec![];
    let mut c6_pass = true;
    let mut c7_pass = true;
    for method in [sipg(), nipg()] {
        let label = format!("mp1 {} long", method.variant.name());
        let cfg = AfemConfig {
            method,
            theta_mark: 0.2,
            max_levels: 40,
            max_dofs: 100_000,
            ..Default::default()
        };
        let Some((history, secs, _)) = tally.run(&label, &mp1, &cfg) else {
            c6_pass = false;
            c7_pass = false;
            c6.push(format!("{label} failed"));
            continue;
        };
        let err: Vec<f64> = history.iter().map(|r| r.error.unwrap()).collect();
        let total: Vec<f64> = history.iter().map(|r| r.total).collect();
        let bad_err = monotone_violations(&err);
        let bad_total = monotone_violations(&total);
        let reduction = err.last().unwrap() / err[0];
        let ok = history.len() >= 7 && bad_err.is_empty() && bad_total.is_empty() && reduction <= 0.05 && secs <= 120.0;
        c6_pass &= ok;
        c6.push(format!(
            "{}: {} levels to {} dofs, error increases at {:?}, estimator increases at {:?}, final/initial error {:.2e}, {:.1} s",
            method.variant.name(),
            history.len(),
            history.last().unwrap().ndof,
            bad_err,
            bad_total,
            reduction,
            secs
        ));
        let eff: Vec<f64> = history.iter().skip(2).filter_map(|r| r.eff_index).collect();
        let ratio = eff.iter().cloned().fold(0.0, f64::max) / eff.iter().cloned().fold(f64::INFINITY, f64::min);
        let ok7 = eff.len() == history.len().saturating_sub(2) && ratio.is_finite() && ratio <= 10.0;
        c7_pass &= ok7;
        c7.push(format!("{}: max/min {:.2}", method.variant.name(), ratio));
    }

    // 8: localization on the second model problem
    let mp2 = model_problem_2();
    let mut c8 = vec![];
    let mut c8_pass = true;
    for method in [sipg(), nipg()] {
        let label = format!("mp2 {} localization", method.variant.name());
        let cfg = AfemConfig {
            method,
            max_levels: 9,
            ..Default::default()
        };
        match tally.run(&label, &mp2, &cfg) {
            Some((history, _, mesh)) if history.len() == 9 => {
                let (near, global) = localized_median_h(&mesh, [1.0, 0.5], 0.2);
                let ratio = near.map_or(f64::INFINITY, |n| n / global);
                c8_pass &= ratio <= 0.5;
                c8.push(format!("{}: ratio {:.3} on {} triangles", method.variant.name(), ratio, mesh.num_triangles()));
            }
            _ => {
                c8_pass = false;
                c8.push(format!("{label}: run did not reach 8 adaptive levels"));
            }
        }
    }

    let runs_ok = tally.run_failures.is_empty();
    verdicts.report(
        2,
        "sign laws",
        runs_ok && tally.min_normal >= -1e-10 && tally.max_tangential <= 1e-10 && tally.max_normal_on_slack <= 1e-10,
        format!(
            "{} levels: min sigma_n {:.2e}, max |sigma_t| {:.2e}, max sigma_n on slack edges {:.2e} (relative, bound 1e-10)",
            tally.levels, tally.min_normal, tally.max_tangential, tally.max_normal_on_slack
        ),
    );
    verdicts.report(
        3,
        "multiplier identity",
        runs_ok && tally.max_multiplier_gap <= 1e-8,
        format!("max |lambda - sigma_n| {:.2e} (relative, bound 1e-8)", tally.max_multiplier_gap),
    );
    verdicts.report(
        4,
        "representation identity",
        runs_ok && tally.max_representation <= 1e-8,
        format!("max residual {:.2e} over 20 random fields per level (bound 1e-8)", tally.max_representation),
    );
    verdicts.report(
        5,
        "discrete variational inequality",
        runs_ok && tally.min_vi >= -1e-8,
        format!("min value {:.2e} over 50 random feasible fields per level (bound -1e-8)", tally.min_vi),
    );
    verdicts.report(6, "model problem 1 convergence", c6_pass, c6.join("; "));
    verdicts.report(7, "efficiency index stability", c7_pass, format!("{} (bound 10)", c7.join("; ")));
    verdicts.report(8, "model problem 2 localization", c8_pass, format!("{} (bound 0.5)", c8.join("; ")));
    verdicts.report(
        9,
        "mesh integrity",
        runs_ok && tally.integrity_failures.is_empty(),
        format!("{} meshes checked, failures {:?}", tally.levels, tally.integrity_failures),
    );
    verdicts.report(
        10,
        "active-set robustness",
        runs_ok && tally.max_iterations <= 30,
        format!(
            "max iterations {}, max warm-started iterations {} (logged against 10), run failures {:?}, per-level suite {:.1} s",
            tally.max_iterations, tally.max_warm_iterations, tally.run_failures, suite_secs
        ),
    );
    let (eg, ef, et) = mp1_data_mismatch();
    let q = quadrature_mismatch();
    verdicts.report(
        11,
        "oracle locks",
        eg.max(ef).max(et) <= 1e-6 && q <= 1e-13,
        format!("gradient {eg:.1e}, body force {ef:.1e}, traction {et:.1e} (bound 1e-6); quadrature {q:.1e} (bound 1e-13)"),
    );

    let failed = verdicts.0.iter().filter(|&&p| !p).count();
    println!("acceptance: {} of {} criteria pass", verdicts.0.len() - failed, verdicts.0.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
