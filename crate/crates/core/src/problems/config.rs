//! Custom problems from a TOML file.
//!
//! ```toml
//! name = "wedge-soft"
//!
//! [boundary]            # one of dirichlet | neumann | contact per side
//! left = "dirichlet"
//! right = "contact"
//! bottom = "neumann"
//! top = "neumann"
//!
//! [material]            # either mu/kappa or young/poisson
//! young = 100.0
//! poisson = 0.3
//!
//! [data]
//! body_force = ["0", "-1"]               # variables: x, y
//! traction = ["0", "0"]                  # variables: x, y, nx, ny
//! gap = "-0.1 + 0.5*abs(y - 0.5)"        # variables: x, y
//! gap_breakpoints = [[1.0, 0.5]]         # kinks of the gap (optional)
//! dirichlet = ["-0.05", "0"]             # variables: x, y
//! exact = ["x^2", "0"]                   # optional
//! ```
//!
//! Expression grammar: numbers, the variables above, constants `pi` and `e`,
//! binary `+ - * / %`, power `^`, unary minus, parentheses and the functions
//! `sqrt exp ln log10 abs sin cos tan asin acos atan atan2 sinh cosh tanh
//! floor ceil signum min max`. Every expression is evaluated once at load
//! time to catch unknown names.

use std::sync::Arc;

use meval::{ContextProvider, Expr, FuncEvalError};
use serde::Deserialize;

use super::{
    lame_from_young_poisson, BoundaryPartition, Lame, ProblemError, ProblemSpec, ScalarFn,
    TractionFn, VectorFn,
};
use crate::mesh::BoundaryTag;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    name: Option<String>,
    boundary: BoundarySection,
    material: MaterialSection,
    data: DataSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundarySection {
    left: String,
    right: String,
    bottom: String,
    top: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialSection {
    mu: Option<f64>,
    kappa: Option<f64>,
    young: Option<f64>,
    poisson: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    #[serde(default = "zero_pair")]
    body_force: [String; 2],
    #[serde(default = "zero_pair")]
    traction: [String; 2],
    #[serde(default = "zero")]
    gap: String,
    #[serde(default)]
    gap_breakpoints: Vec<[f64; 2]>,
    #[serde(default = "zero_pair")]
    dirichlet: [String; 2],
    exact: Option<[String; 2]>,
}

fn zero() -> String {
    "0".into()
}

fn zero_pair() -> [String; 2] {
    [zero(), zero()]
}

/// Variable slots `x, y, nx, ny`.
struct Vars([f64; 4]);

impl ContextProvider for Vars {
    fn get_var(&self, name: &str) -> Option<f64> {
        match name {
            "x" => Some(self.0[0]),
            "y" => Some(self.0[1]),
            "nx" => Some(self.0[2]),
            "ny" => Some(self.0[3]),
            "pi" => Some(std::f64::consts::PI),
            "e" => Some(std::f64::consts::E),
            _ => None,
        }
    }

    fn eval_func(&self, name: &str, args: &[f64]) -> Result<f64, FuncEvalError> {
        let unary = |f: fn(f64) -> f64| match args {
            [a] => Ok(f(*a)),
            _ => Err(FuncEvalError::NumberArgs(1)),
        };
        let binary = |f: fn(f64, f64) -> f64| match args {
            [a, b] => Ok(f(*a, *b)),
            _ => Err(FuncEvalError::NumberArgs(2)),
        };
        match name {
            "sqrt" => unary(f64::sqrt),
            "exp" => unary(f64::exp),
            "ln" => unary(f64::ln),
            "log10" => unary(f64::log10),
            "abs" => unary(f64::abs),
            "sin" => unary(f64::sin),
            "cos" => unary(f64::cos),
            "tan" => unary(f64::tan),
            "asin" => unary(f64::asin),
            "acos" => unary(f64::acos),
            "atan" => unary(f64::atan),
            "sinh" => unary(f64::sinh),
            "cosh" => unary(f64::cosh),
            "tanh" => unary(f64::tanh),
            "floor" => unary(f64::floor),
            "ceil" => unary(f64::ceil),
            "signum" => unary(f64::signum),
            "atan2" => binary(f64::atan2),
            "min" => binary(f64::min),
            "max" => binary(f64::max),
            _ => Err(FuncEvalError::UnknownFunction),
        }
    }
}

/// A parsed expression over `x, y, nx, ny`.
#[derive(Debug, Clone)]
pub struct Expression {
    source: String,
    expr: Expr,
}

impl Expression {
    pub fn parse(source: &str, allow_normal: bool) -> Result<Self, ProblemError> {
        let expr: Expr = source
            .parse()
            .map_err(|e| ProblemError::Config(format!("cannot parse `{source}`: {e}")))?;
        let out = Self {
            source: source.to_string(),
            expr,
        };
        let probe = if allow_normal { [0.3, 0.7, 1.0, 0.0] } else { [0.3, 0.7, f64::NAN, f64::NAN] };
        let v = out.try_eval(probe)?;
        if !allow_normal && v.is_nan() {
            return Err(ProblemError::Config(format!(
                "`{source}` may not use the normal variables nx, ny"
            )));
        }
        Ok(out)
    }

    fn try_eval(&self, vars: [f64; 4]) -> Result<f64, ProblemError> {
        self.expr
            .eval_with_context(Vars(vars))
            .map_err(|e| ProblemError::Config(format!("cannot evaluate `{}`: {e}", self.source)))
    }

    /// Evaluates at a point; evaluation errors were excluded at load time,
    /// so a failure yields NaN (caught by the finiteness checks downstream).
    pub fn eval(&self, x: f64, y: f64, nx: f64, ny: f64) -> f64 {
        self.try_eval([x, y, nx, ny]).unwrap_or(f64::NAN)
    }
}

fn parse_tag(s: &str) -> Result<BoundaryTag, ProblemError> {
    match s.trim() {
        "dirichlet" => Ok(BoundaryTag::Dirichlet),
        "neumann" => Ok(BoundaryTag::Neumann),
        "contact" => Ok(BoundaryTag::Contact),
        other => Err(ProblemError::Config(format!("unknown boundary part `{other}`"))),
    }
}

fn vector_fn(pair: &[String; 2]) -> Result<VectorFn, ProblemError> {
    let a = Expression::parse(&pair[0], false)?;
    let b = Expression::parse(&pair[1], false)?;
    Ok(Arc::new(move |p| [a.eval(p[0], p[1], 0.0, 0.0), b.eval(p[0], p[1], 0.0, 0.0)]))
}

pub fn load_problem(text: &str) -> Result<ProblemSpec, ProblemError> {
    let cfg: ConfigFile = toml::from_str(text).map_err(|e| ProblemError::Config(e.to_string()))?;

    let boundary = BoundaryPartition {
        left: parse_tag(&cfg.boundary.left)?,
        right: parse_tag(&cfg.boundary.right)?,
        bottom: parse_tag(&cfg.boundary.bottom)?,
        top: parse_tag(&cfg.boundary.top)?,
    };

    let m = &cfg.material;
    let lame = match (m.mu, m.kappa, m.young, m.poisson) {
        (Some(mu), Some(kappa), None, None) => Lame::new(mu, kappa)?,
        (None, None, Some(e), Some(nu)) => {
            let (mu, kappa) = lame_from_young_poisson(e, nu)?;
            Lame::new(mu, kappa)?
        }
        _ => {
            return Err(ProblemError::Config(
                "material needs either mu and kappa, or young and poisson".into(),
            ))
        }
    };

    let d = &cfg.data;
    let tx = Expression::parse(&d.traction[0], true)?;
    let ty = Expression::parse(&d.traction[1], true)?;
    let traction: TractionFn =
        Arc::new(move |p, n| [tx.eval(p[0], p[1], n[0], n[1]), ty.eval(p[0], p[1], n[0], n[1])]);
    let gap_expr = Expression::parse(&d.gap, false)?;
    let gap: ScalarFn = Arc::new(move |p| gap_expr.eval(p[0], p[1], 0.0, 0.0));
    let exact = d.exact.as_ref().map(vector_fn).transpose()?;

    Ok(ProblemSpec {
        name: cfg.name.unwrap_or_else(|| "custom".into()),
        lame,
        boundary,
        body_force: vector_fn(&d.body_force)?,
        traction,
        gap,
        gap_breakpoints: d.gap_breakpoints.clone(),
        dirichlet: vector_fn(&d.dirichlet)?,
        exact,
        exact_gradient: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const WEDGE: &str = r#"
        name = "wedge"
        [boundary]
        left = "dirichlet"
        right = "contact"
        bottom = "neumann"
        top = "neumann"
        [material]
        young = 500.0
        poisson = 0.3
        [data]
        gap = "-0.2 + 0.5*abs(y - 0.5)"
        gap_breakpoints = [[1.0, 0.5]]
        dirichlet = ["-0.1", "0"]
        traction = ["nx * x", "ny^2"]
    "#;

    #[test]
    fn loads_wedge_equivalent() {
        let p = load_problem(WEDGE).unwrap();
        let reference = super::super::model_problem_2();
        assert_eq!(p.boundary, reference.boundary);
        assert!((p.lame.mu - reference.lame.mu).abs() < 1e-12);
        for y in [0.0, 0.25, 0.5, 0.9] {
            assert!(((p.gap)([1.0, y]) - (reference.gap)([1.0, y])).abs() < 1e-15);
        }
        assert_eq!((p.dirichlet)([0.0, 0.2]), [-0.1, 0.0]);
        assert_eq!((p.traction)([2.0, 0.0], [1.0, 3.0]), [2.0, 9.0]);
        assert_eq!((p.body_force)([0.1, 0.1]), [0.0, 0.0]);
        assert!(p.exact.is_none());
    }

    #[test]
    fn functions_and_constants() {
        let e = Expression::parse("max(x, y) + exp(0)*sqrt(4) + atan2(0, 1) + pi - pi", false).unwrap();
        assert_eq!(e.eval(0.5, 2.0, 0.0, 0.0), 4.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Expression::parse("x +* 2", false).is_err());
        assert!(Expression::parse("foo(x)", false).is_err());
        assert!(Expression::parse("z", false).is_err());
        assert!(Expression::parse("nx", false).is_err());
        assert!(load_problem(&WEDGE.replace("\"contact\"", "\"sticky\"")).is_err());
        assert!(load_problem(&WEDGE.replace("poisson = 0.3", "poisson = 0.6")).is_err());
        assert!(load_problem(&WEDGE.replace("young = 500.0", "mu = 1.0")).is_err());
    }
}
