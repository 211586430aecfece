//! Local Neumann problems turning balanced edge tractions into element stresses.

use nalgebra::{Cholesky, DMatrix, DVector, Matrix3, Vector3};

use crate::elasticity::Hooke;
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre_unit, integrate_triangle, TriangleRule};

/// Displacement degree used for the admissible stress.
pub const DEFAULT_DEGREE: usize = 4;

/// Relative imbalance of the element data above which the solve is refused.
pub const BALANCE_TOL: f64 = 1e-8;

/// Polynomial stress `H ε(w)` on one element, `w` a combination of scaled
/// monomials `((x - c)/h)^a ((y - c)/h)^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementStress {
    pub center: [f64; 2],
    pub scale: f64,
    /// `(component, a, b)` per coefficient.
    pub basis: Vec<(usize, u32, u32)>,
    pub coeffs: Vec<f64>,
    pub hooke: Matrix3<f64>,
}

/// Monomial basis of degree `degree` without the rigid modes: constants in
/// both components and `η` in the first.
pub fn displacement_basis(degree: usize) -> Vec<(usize, u32, u32)> {
    let mut out = Vec::new();
    for c in 0..2 {
        for total in 1..=degree as u32 {
            for b in 0..=total {
                let a = total - b;
                if c == 0 && (a, b) == (0, 1) {
                    continue;
                }
                out.push((c, a, b));
            }
        }
    }
    out
}

fn powi(x: f64, n: u32) -> f64 {
    x.powi(n as i32)
}

/// Engineering strain of one basis function at scaled coordinates.
fn basis_strain(f: (usize, u32, u32), xi: f64, eta: f64, scale: f64) -> Vector3<f64> {
    let (c, a, b) = f;
    let dx = if a == 0 {
        0.0
    } else {
        a as f64 * powi(xi, a - 1) * powi(eta, b) / scale
    };
    let dy = if b == 0 {
        0.0
    } else {
        b as f64 * powi(xi, a) * powi(eta, b - 1) / scale
    };
    if c == 0 {
        Vector3::new(dx, 0.0, dy)
    } else {
        Vector3::new(0.0, dy, dx)
    }
}

fn basis_value(f: (usize, u32, u32), xi: f64, eta: f64) -> f64 {
    powi(xi, f.1) * powi(eta, f.2)
}

impl ElementStress {
    fn local(&self, x: [f64; 2]) -> (f64, f64) {
        (
            (x[0] - self.center[0]) / self.scale,
            (x[1] - self.center[1]) / self.scale,
        )
    }

    pub fn strain(&self, x: [f64; 2]) -> Vector3<f64> {
        let (xi, eta) = self.local(x);
        self.basis
            .iter()
            .zip(&self.coeffs)
            .map(|(&f, &a)| basis_strain(f, xi, eta, self.scale) * a)
            .sum()
    }

    pub fn eval(&self, x: [f64; 2]) -> Vector3<f64> {
        self.hooke * self.strain(x)
    }

    /// Displacement `w(x)`, defined up to a rigid motion.
    pub fn displacement(&self, x: [f64; 2]) -> [f64; 2] {
        let (xi, eta) = self.local(x);
        let mut w = [0.0; 2];
        for (&f, &a) in self.basis.iter().zip(&self.coeffs) {
            w[f.0] += a * basis_value(f, xi, eta);
        }
        w
    }
}

/// Resultant force and moment about the centroid of the element data, with a
/// scale for relative comparisons.
pub fn resultant(
    v: &[[f64; 2]; 3],
    tractions: &[[[f64; 2]; 2]; 3],
    body: [f64; 2],
) -> ([f64; 3], f64) {
    let area = crate::mesh::signed_area(v);
    let c = [
        (v[0][0] + v[1][0] + v[2][0]) / 3.0,
        (v[0][1] + v[1][1] + v[2][1]) / 3.0,
    ];
    let mut out = [body[0] * area, body[1] * area, 0.0];
    let mut scale = (body[0].abs() + body[1].abs()) * area;
    for k in 0..3 {
        let (p, q) = (v[k], v[(k + 1) % 3]);
        let len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
        let [tp, tq] = tractions[k];
        for comp in 0..2 {
            out[comp] += 0.5 * len * (tp[comp] + tq[comp]);
            scale += 0.5 * len * (tp[comp].abs() + tq[comp].abs());
        }
        // ∫ (x - c) × t over the edge, linear × linear
        let rp = [p[0] - c[0], p[1] - c[1]];
        let rq = [q[0] - c[0], q[1] - c[1]];
        let cross = |r: [f64; 2], t: [f64; 2]| r[0] * t[1] - r[1] * t[0];
        out[2] +=
            len / 6.0 * (2.0 * cross(rp, tp) + cross(rp, tq) + cross(rq, tp) + 2.0 * cross(rq, tq));
    }
    (out, scale)
}

/// Solves `∫_E ε(w):H:ε(v) = ∫_∂E F̂·v + ∫_E f·v` over degree-`degree`
/// displacements. `tractions[k]` holds the density at vertices `k` and `k + 1`
/// of local edge `k`. Imbalances below `floor` (force units) are accepted as
/// round-off of the data.
pub fn element_neumann_solve(
    v: &[[f64; 2]; 3],
    hooke: &Hooke,
    tractions: &[[[f64; 2]; 2]; 3],
    body: [f64; 2],
    degree: usize,
    element: usize,
    floor: f64,
) -> Result<ElementStress> {
    let (res, scale) = resultant(v, tractions, body);
    let diam = (0..3)
        .map(|k| {
            let (p, q) = (v[k], v[(k + 1) % 3]);
            ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
        })
        .fold(0.0, f64::max);
    let imbalance = res[0].abs().max(res[1].abs()).max(res[2].abs() / diam);
    if imbalance > (BALANCE_TOL * scale).max(floor) && imbalance > 1e-300 {
        return Err(Error::ElementEquilibrium {
            element,
            residual: imbalance / scale.max(f64::MIN_POSITIVE),
        });
    }
    let center = [
        (v[0][0] + v[1][0] + v[2][0]) / 3.0,
        (v[0][1] + v[1][1] + v[2][1]) / 3.0,
    ];
    let basis = displacement_basis(degree);
    let n = basis.len();
    let local = |x: [f64; 2]| ((x[0] - center[0]) / diam, (x[1] - center[1]) / diam);

    let rule = TriangleRule::exact_for_degree(2 * degree);
    let mut k = DMatrix::zeros(n, n);
    let mut l = DVector::zeros(n);
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        // one quadrature point at a time, weights scaled by the Jacobian below
        let x = [
            v[0][0] + (v[1][0] - v[0][0]) * p[0] + (v[2][0] - v[0][0]) * p[1],
            v[0][1] + (v[1][1] - v[0][1]) * p[0] + (v[2][1] - v[0][1]) * p[1],
        ];
        let (xi, eta) = local(x);
        let strains: Vec<Vector3<f64>> = basis
            .iter()
            .map(|&f| basis_strain(f, xi, eta, diam))
            .collect();
        let stresses: Vec<Vector3<f64>> = strains.iter().map(|s| hooke.h * s).collect();
        let wj = w * 2.0 * crate::mesh::signed_area(v);
        for i in 0..n {
            for j in i..n {
                k[(i, j)] += wj * strains[i].dot(&stresses[j]);
            }
            l[i] += wj * body[basis[i].0] * basis_value(basis[i], xi, eta);
        }
    }
    for i in 0..n {
        for j in 0..i {
            k[(i, j)] = k[(j, i)];
        }
    }
    let (gs, gw) = gauss_legendre_unit(degree / 2 + 2);
    for e in 0..3 {
        let (p, q) = (v[e], v[(e + 1) % 3]);
        let len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
        let [tp, tq] = tractions[e];
        for (&s, &w) in gs.iter().zip(&gw) {
            let x = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
            let t = [(1.0 - s) * tp[0] + s * tq[0], (1.0 - s) * tp[1] + s * tq[1]];
            let (xi, eta) = local(x);
            for (i, &f) in basis.iter().enumerate() {
                l[i] += w * len * t[f.0] * basis_value(f, xi, eta);
            }
        }
    }
    let coeffs = Cholesky::new(k)
        .ok_or(Error::Factorization(format!(
            "element {element} Neumann matrix"
        )))?
        .solve(&l);
    Ok(ElementStress {
        center,
        scale: diam,
        basis,
        coeffs: coeffs.as_slice().to_vec(),
        hooke: hooke.h,
    })
}

/// `∫_E (σ̂ - σ_h) : H⁻¹ : (σ̂ - σ_h)`
pub fn element_gap(
    v: &[[f64; 2]; 3],
    hooke: &Hooke,
    s: &ElementStress,
    sigma_h: &Vector3<f64>,
    rule: &TriangleRule,
) -> f64 {
    integrate_triangle(v, rule, |x| hooke.complementary(&(s.eval(x) - sigma_h)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elasticity::{hooke, PlaneAssumption};
    use crate::recovery::star_patch::traction;

    fn tri() -> [[f64; 2]; 3] {
        [[0.1, 0.2], [0.9, 0.35], [0.3, 1.1]]
    }

    fn normal(p: [f64; 2], q: [f64; 2]) -> [f64; 2] {
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let l = (dx * dx + dy * dy).sqrt();
        [dy / l, -dx / l]
    }

    #[test]
    fn basis_size() {
        assert_eq!(displacement_basis(4).len(), 27);
        assert_eq!(displacement_basis(1).len(), 3);
    }

    #[test]
    fn constant_stress_reproduced() {
        let v = tri();
        let h = hooke(3.0, 0.3, PlaneAssumption::PlaneStress).unwrap();
        let s = Vector3::new(1.0, -0.5, 0.3);
        let t: [[[f64; 2]; 2]; 3] = std::array::from_fn(|k| {
            let tr = traction(&s, normal(v[k], v[(k + 1) % 3]));
            [tr, tr]
        });
        let sol = element_neumann_solve(&v, &h, &t, [0.0; 2], 4, 0, 0.0).unwrap();
        for x in [[0.3, 0.4], [0.5, 0.5]] {
            assert!((sol.eval(x) - s).norm() < 1e-10);
        }
    }

    #[test]
    fn linear_stress_with_body_force_reproduced() {
        // σ_xx = x, σ_yy = y, σ_xy = 0 balances f = (-1, -1)
        let v = tri();
        let h = hooke(2.0, 0.25, PlaneAssumption::PlaneStress).unwrap();
        let sig = |x: [f64; 2]| Vector3::new(x[0], x[1], 0.0);
        let t: [[[f64; 2]; 2]; 3] = std::array::from_fn(|k| {
            let n = normal(v[k], v[(k + 1) % 3]);
            [traction(&sig(v[k]), n), traction(&sig(v[(k + 1) % 3]), n)]
        });
        let sol = element_neumann_solve(&v, &h, &t, [-1.0, -1.0], 4, 0, 0.0).unwrap();
        for x in [[0.3, 0.4], [0.5, 0.5], [0.4, 0.8]] {
            assert!((sol.eval(x) - sig(x)).norm() < 1e-9, "{:?}", sol.eval(x));
        }
    }

    #[test]
    fn unbalanced_data_rejected() {
        let v = tri();
        let h = hooke(1.0, 0.3, PlaneAssumption::PlaneStress).unwrap();
        let t = [[[1.0, 0.0]; 2]; 3];
        assert!(matches!(
            element_neumann_solve(&v, &h, &t, [0.0; 2], 4, 5, 0.0),
            Err(Error::ElementEquilibrium { element: 5, .. })
        ));
    }

    #[test]
    fn weak_equilibrium_against_rigid_and_polynomial_tests() {
        // a balanced but non-polynomial-compatible traction set
        let v = tri();
        let h = hooke(1.0, 0.3, PlaneAssumption::PlaneStress).unwrap();
        let s0 = Vector3::new(0.4, 0.1, -0.2);
        let mut t: [[[f64; 2]; 2]; 3] = std::array::from_fn(|k| {
            let tr = traction(&s0, normal(v[k], v[(k + 1) % 3]));
            [tr, tr]
        });
        // self-balanced perturbation: zero-mean tangential shear on edge 0
        let len0 = ((v[1][0] - v[0][0]).powi(2) + (v[1][1] - v[0][1]).powi(2)).sqrt();
        let tan = [(v[1][0] - v[0][0]) / len0, (v[1][1] - v[0][1]) / len0];
        for c in 0..2 {
            t[0][0][c] += 0.3 * tan[c];
            t[0][1][c] -= 0.3 * tan[c];
        }
        let sol = element_neumann_solve(&v, &h, &t, [0.0; 2], 4, 0, 0.0).unwrap();
        // ∫ σ̂:ε(v) = ∫ t·v for v = (x², xy)
        let rule = TriangleRule::exact_for_degree(8);
        let lhs = integrate_triangle(&v, &rule, |x| {
            let e = Vector3::new(2.0 * x[0], x[0], x[1]);
            sol.eval(x).dot(&e)
        });
        let (gs, gw) = gauss_legendre_unit(5);
        let mut rhs = 0.0;
        for k in 0..3 {
            let (p, q) = (v[k], v[(k + 1) % 3]);
            let len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
            for (&s, &w) in gs.iter().zip(&gw) {
                let x = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
                let tr = [0, 1].map(|c| (1.0 - s) * t[k][0][c] + s * t[k][1][c]);
                rhs += w * len * (tr[0] * x[0] * x[0] + tr[1] * x[0] * x[1]);
            }
        }
        assert!((lhs - rhs).abs() < 1e-11, "{lhs} {rhs}");
    }
}
