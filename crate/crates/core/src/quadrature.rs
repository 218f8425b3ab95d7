//! Gauss–Legendre edge rules and collapsed (Duffy) product rules on the
//! reference triangle.

use thiserror::Error;

pub const MAX_DEGREE: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("no quadrature rule of degree {0} (maximum {MAX_DEGREE})")]
pub struct UnsupportedDegree(pub usize);

/// Points are barycentric-free reference coordinates: `(ξ, η)` on the unit
/// right triangle, or `[s, 0]` with `s ∈ [0, 1]` on the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// Legendre recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            // derivative from the two highest polynomials
            dp = n as f64 * (z * p - p0) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss rule on `[0, 1]` exact for polynomials of degree `min_degree`.
pub fn quadrature_edge(min_degree: usize) -> Result<QuadratureRule, UnsupportedDegree> {
    if min_degree > MAX_DEGREE {
        return Err(UnsupportedDegree(min_degree));
    }
    let n = (min_degree + 2) / 2;
    let (x, w) = gauss_legendre(n.max(1));
    Ok(QuadratureRule {
        points: x.iter().map(|&s| [0.5 * (s + 1.0), 0.0]).collect(),
        weights: w.iter().map(|&wi| 0.5 * wi).collect(),
        degree: 2 * n.max(1) - 1,
    })
}

/// Product rule on the reference triangle `(0,0), (1,0), (0,1)` through the
/// collapsed map `ξ = u(1 - v), η = v`. The Jacobian `(1 - v)` raises the
/// degree in `v` by one, so `n` points per direction with `2n - 1 ≥ d + 1`
/// integrate degree `d` exactly. All weights are positive.
pub fn quadrature_triangle(min_degree: usize) -> Result<QuadratureRule, UnsupportedDegree> {
    if min_degree > MAX_DEGREE {
        return Err(UnsupportedDegree(min_degree));
    }
    let n = (min_degree + 3) / 2;
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (&xv, &wv) in x.iter().zip(&w) {
        let v = 0.5 * (xv + 1.0);
        for (&xu, &wu) in x.iter().zip(&w) {
            let u = 0.5 * (xu + 1.0);
            points.push([u * (1.0 - v), v]);
            weights.push(0.25 * wu * wv * (1.0 - v));
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        degree: 2 * n - 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn gauss_nodes_known_values() {
        let (x, w) = gauss_legendre(3);
        let r = (0.6f64).sqrt();
        assert!((x[0] + r).abs() < 1e-15 && x[1].abs() < 1e-15 && (x[2] - r).abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15 && (w[0] - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn edge_rule_exactness() {
        for deg in 0..=MAX_DEGREE {
            let q = quadrature_edge(deg).unwrap();
            assert!(q.weights.iter().all(|&w| w > 0.0));
            for k in 0..=deg {
                let approx: f64 = q.iter().map(|(p, w)| w * p[0].powi(k as i32)).sum();
                assert!((approx - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "deg {deg} k {k}");
            }
        }
        assert_eq!(quadrature_edge(5).unwrap().len(), 3);
    }

    #[test]
    fn triangle_rule_exactness() {
        for deg in 0..=MAX_DEGREE {
            let q = quadrature_triangle(deg).unwrap();
            assert!(q.weights.iter().all(|&w| w > 0.0));
            for a in 0..=deg as u32 {
                for b in 0..=(deg as u32 - a) {
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    let approx: f64 = q
                        .iter()
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    assert!((approx - exact).abs() < 1e-14, "deg {deg} x^{a} y^{b}");
                }
            }
        }
    }

    #[test]
    fn unsupported_degree() {
        assert_eq!(quadrature_triangle(11).unwrap_err(), UnsupportedDegree(11));
        assert!(quadrature_edge(11).is_err());
    }
}
