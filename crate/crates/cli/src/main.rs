use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use contact_dg::afem::{run_afem_from, AfemConfig, AfemOutcome, LevelData, CSV_HEADER};
use contact_dg::assembly::{DgMethod, DgVariant, PenaltyScaling, DEFAULT_PENALTY};
use contact_dg::estimator::enrich;
use contact_dg::mesh::io::{write_vtk, VtkData};
use contact_dg::mesh::{MarkedSet, Mesh};
use contact_dg::problems::config::load_problem;
use contact_dg::problems::ProblemSpec;

#[derive(Parser)]
#[command(name = "contact-dg", version, about = "Adaptive quadratic DG solver for frictionless unilateral contact")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single solve on the initial mesh, optionally refined uniformly first.
    Solve(SolveArgs),
    /// Adaptive (or uniform) refinement study.
    Study(StudyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Sipg,
    Nipg,
    Iipg,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scaling {
    /// Penalty multiplied by the shear modulus.
    Shear,
    /// Penalty used as given.
    None,
}

#[derive(Args)]
struct Common {
    /// Built-in problem: mp1, mp2 or patch.
    #[arg(long, default_value = "mp1", conflicts_with = "config")]
    problem: String,
    /// Problem definition file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Sipg)]
    method: Method,
    #[arg(long, default_value_t = DEFAULT_PENALTY, value_parser = positive)]
    penalty: f64,
    #[arg(long, value_enum, default_value_t = Scaling::Shear)]
    penalty_scaling: Scaling,
    /// Output directory.
    #[arg(long, env = "CONTACT_DG_OUT", default_value = "out")]
    out: PathBuf,
    /// Write VTK meshes (every level for `study`).
    #[arg(long)]
    export_vtk: bool,
    /// Worker threads for element loops.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Uniform refinements applied before solving.
    #[arg(long, default_value_t = 0)]
    levels_uniform: usize,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.5, value_parser = fraction)]
    theta_mark: f64,
    #[arg(long, default_value_t = 200_000)]
    max_dofs: usize,
    /// Maximum number of levels, counting the initial mesh.
    #[arg(long, default_value_t = 12)]
    levels: usize,
    /// Refine every triangle instead of marking.
    #[arg(long)]
    uniform: bool,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got `{s}`")),
    }
}

fn fraction(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v <= 1.0 => Ok(v),
        _ => Err(format!("expected a number in (0, 1], got `{s}`")),
    }
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Numerical(format!("i/o error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Study(args) => cmd_study(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

impl Common {
    fn setup(&self) -> Result<(ProblemSpec, DgMethod), Failure> {
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Usage(format!("--threads: {e}")))?;
        }
        let problem = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                load_problem(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
            }
            None => ProblemSpec::by_name(&self.problem).map_err(|e| Failure::Usage(e.to_string()))?,
        };
        let variant = match self.method {
            Method::Sipg => DgVariant::Sipg,
            Method::Nipg => DgVariant::Nipg,
            Method::Iipg => DgVariant::Iipg,
        };
        let scaling = match self.penalty_scaling {
            Scaling::Shear => PenaltyScaling::Shear,
            Scaling::None => PenaltyScaling::Unscaled,
        };
        let method = DgMethod::new(variant, self.penalty)
            .map_err(|e| Failure::Usage(e.to_string()))?
            .with_scaling(scaling);
        fs::create_dir_all(&self.out).map_err(|e| Failure::Usage(format!("{}: {e}", self.out.display())))?;
        Ok((problem, method))
    }
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new)
}

fn write_solution_vtk(path: &Path, d: &LevelData, problem: &ProblemSpec) -> io::Result<()> {
    let enriched = enrich(d.mesh, d.dofmap, d.field, problem).map_err(io::Error::other)?;
    let centroid: Vec<[f64; 2]> = (0..d.mesh.num_triangles())
        .map(|t| d.field.eval(d.mesh, t, [1.0 / 3.0, 1.0 / 3.0]))
        .collect::<Result<_, _>>()
        .map_err(io::Error::other)?;
    let title = format!("level {}", d.record.level);
    let mut w = create(path)?;
    write_vtk(
        d.mesh,
        &title,
        &[("displacement", VtkData::Vectors(&enriched.vertex_values))],
        &[
            ("displacement_centroid", VtkData::Vectors(&centroid)),
            ("indicator", VtkData::Scalars(&d.report.element)),
        ],
        &mut w,
    )?;
    w.flush()
}

fn write_sigma_csv(path: &Path, d: &LevelData) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "edge_id,mid_x,mid_y,sigma_n,sigma_t,active")?;
    for (k, &e) in d.sigma.edges.iter().enumerate() {
        let m = d.mesh.edges()[e].midpoint;
        let active = d
            .constraints
            .edges
            .iter()
            .position(|&c| c == e)
            .is_some_and(|row| d.solution.active[row]);
        writeln!(
            w,
            "{e},{:e},{:e},{:e},{:e},{}",
            m[0],
            m[1],
            d.sigma.normal[k],
            d.sigma.tangential[k],
            u8::from(active)
        )?;
    }
    w.flush()
}

fn cmd_solve(args: SolveArgs) -> Result<(), Failure> {
    let (problem, method) = args.common.setup()?;
    let out = &args.common.out;
    let mut mesh: Mesh = problem.initial_mesh().map_err(|e| Failure::Usage(e.to_string()))?;
    for _ in 0..args.levels_uniform {
        mesh = mesh
            .refine_nvb(&MarkedSet::all(mesh.num_triangles()))
            .map_err(|e| Failure::Numerical(e.to_string()))?;
    }
    let cfg = AfemConfig {
        method,
        max_levels: 1,
        max_dofs: usize::MAX,
        ..Default::default()
    };
    let mut written: io::Result<()> = Ok(());
    let run = run_afem_from(&problem, &cfg, Some(mesh), &mut |d| {
        written = (|| {
            write_solution_vtk(&out.join("solution.vtk"), d, &problem)?;
            write_sigma_csv(&out.join("sigma.csv"), d)?;
            let mut w = create(&out.join("estimator_breakdown.csv"))?;
            d.report.write_breakdown_csv(&mut w)?;
            w.flush()
        })();
    });
    let AfemOutcome { history, .. } = run.map_err(|e| Failure::Numerical(e.to_string()))?;
    written?;
    let r = &history[0];
    println!("ndof {} triangles {} pdas_iters {} active_edges {} total {:e}", r.ndof, r.num_triangles, r.pdas_iters, r.active_edges, r.total);
    if let (Some(err), Some(eff)) = (r.error, r.eff_index) {
        println!("error {err:e} eff_index {eff:e}");
    }
    Ok(())
}

fn cmd_study(args: StudyArgs) -> Result<(), Failure> {
    let (problem, method) = args.common.setup()?;
    if args.levels == 0 {
        return Err(Failure::Usage("--levels must be at least 1".into()));
    }
    let out = &args.common.out;
    let cfg = AfemConfig {
        method,
        theta_mark: args.theta_mark,
        max_levels: args.levels,
        max_dofs: args.max_dofs,
        uniform: args.uniform,
        ..Default::default()
    };
    let mut csv = create(&out.join("convergence.csv"))?;
    writeln!(csv, "{CSV_HEADER}")?;
    csv.flush()?;
    println!("{:>5} {:>8} {:>11} {:>11} {:>11} {:>11} {:>5}", "level", "ndof", "h_min", "total", "error", "eff_index", "pdas");
    let mut written: io::Result<()> = Ok(());
    let run = run_afem_from(&problem, &cfg, None, &mut |d| {
        if written.is_err() {
            return;
        }
        let r = d.record;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:11.4e}")).unwrap_or_else(|| format!("{:>11}", "-"));
        println!("{:>5} {:>8} {:11.4e} {:11.4e} {} {} {:>5}", r.level, r.ndof, r.h_min, r.total, opt(r.error), opt(r.eff_index), r.pdas_iters);
        written = (|| {
            writeln!(csv, "{}", r.csv_row())?;
            csv.flush()?;
            if args.common.export_vtk {
                write_solution_vtk(&out.join(format!("level_{:03}.vtk", r.level)), d, &problem)?;
            }
            Ok(())
        })();
    });
    written?;
    run.map(|_| ()).map_err(|e| Failure::Numerical(e.to_string()))
}
