//! Gauss rules on segments and triangles.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Newton on P_n starting from the Chebyshev-like guess
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Rule on the reference triangle `(0,0), (1,0), (0,1)`; weights sum to 1/2.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    /// Reference coordinates `(xi, eta)`.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Collapsed (Duffy) tensor rule with `n x n` points, exact for total degree `2n - 2`.
    pub fn collapsed(n: usize) -> Self {
        let (x, w) = gauss_legendre_unit(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let u = x[i];
                let v = x[j];
                points.push([u, v * (1.0 - u)]);
                weights.push(w[i] * w[j] * (1.0 - u));
            }
        }
        Self { points, weights }
    }

    /// Smallest collapsed rule integrating polynomials of total degree `degree` exactly.
    pub fn exact_for_degree(degree: usize) -> Self {
        Self::collapsed(degree / 2 + 1)
    }

    /// Centroid rule, exact for degree 1.
    pub fn centroid() -> Self {
        Self {
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Integrates `f` over the physical triangle with vertices `v`.
/// `f` receives the physical point.
pub fn integrate_triangle<F>(v: &[[f64; 2]; 3], rule: &TriangleRule, mut f: F) -> f64
where
    F: FnMut([f64; 2]) -> f64,
{
    let jac = ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1])
        - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
        .abs();
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(p, w)| {
            let x = [
                v[0][0] + (v[1][0] - v[0][0]) * p[0] + (v[2][0] - v[0][0]) * p[1],
                v[0][1] + (v[1][1] - v[0][1]) * p[0] + (v[2][1] - v[0][1]) * p[1],
            ];
            w * jac * f(x)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_rule_is_exact() {
        let (x, w) = gauss_legendre_unit(3);
        for d in 0..=5 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d)).sum();
            assert!((q - 1.0 / (d as f64 + 1.0)).abs() < 1e-14, "degree {d}");
        }
    }

    fn factorial(n: u32) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn triangle_rule_integrates_monomials_up_to_degree_12() {
        let rule = TriangleRule::exact_for_degree(12);
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for a in 0..=12u32 {
            for b in 0..=(12 - a) {
                let q =
                    integrate_triangle(&tri, &rule, |x| x[0].powi(a as i32) * x[1].powi(b as i32));
                // int x^a y^b over the unit simplex = a! b! / (a + b + 2)!
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                assert!((q - exact).abs() < 1e-14 * exact.max(1e-3), "x^{a} y^{b}");
            }
        }
    }

    #[test]
    fn physical_area() {
        let tri = [[1.0, 1.0], [3.0, 1.0], [1.0, 4.0]];
        let a = integrate_triangle(&tri, &TriangleRule::centroid(), |_| 1.0);
        assert!((a - 3.0).abs() < 1e-14);
    }
}
