//! P1 linear elasticity: Hooke tensors, element matrices, assembly and the
//! sequential reference solve.

use nalgebra::{Matrix3, SMatrix, Vector3};
use nalgebra_sparse::CscMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{extract_block, index_map, spmv, SparseCholesky, Triplets};
use crate::mesh::{signed_area, BoundaryTag, Mesh, INCLUSION, MATRIX};
use crate::quadrature::{integrate_triangle, TriangleRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneAssumption {
    #[default]
    PlaneStress,
    PlaneStrain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub young: f64,
    pub poisson: f64,
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if !(self.young > 0.0 && self.young.is_finite()) {
            return Err(Error::Material(format!(
                "Young modulus must be positive, got {}",
                self.young
            )));
        }
        if !(0.0..0.5).contains(&self.poisson) {
            return Err(Error::Material(format!(
                "Poisson ratio must lie in [0, 0.5), got {}",
                self.poisson
            )));
        }
        Ok(())
    }
}

/// Isotropic Hooke tensor in Voigt form `(xx, yy, xy)` with engineering shear strain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hooke {
    pub h: Matrix3<f64>,
    pub inv: Matrix3<f64>,
}

impl Hooke {
    pub fn stress(&self, strain: &Vector3<f64>) -> Vector3<f64> {
        self.h * strain
    }

    /// `σ : H⁻¹ : σ`
    pub fn complementary(&self, stress: &Vector3<f64>) -> f64 {
        stress.dot(&(self.inv * stress))
    }
}

pub fn hooke(young: f64, poisson: f64, plane: PlaneAssumption) -> Result<Hooke> {
    Material { young, poisson }.validate()?;
    let (e, nu) = (young, poisson);
    let h = match plane {
        PlaneAssumption::PlaneStress => {
            let c = e / (1.0 - nu * nu);
            Matrix3::new(
                c,
                c * nu,
                0.0,
                c * nu,
                c,
                0.0,
                0.0,
                0.0,
                c * (1.0 - nu) / 2.0,
            )
        }
        PlaneAssumption::PlaneStrain => {
            let c = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
            Matrix3::new(
                c * (1.0 - nu),
                c * nu,
                0.0,
                c * nu,
                c * (1.0 - nu),
                0.0,
                0.0,
                0.0,
                c * (1.0 - 2.0 * nu) / 2.0,
            )
        }
    };
    let inv = h
        .try_inverse()
        .ok_or_else(|| Error::Material("Hooke tensor not invertible".into()))?;
    Ok(Hooke { h, inv })
}

/// Materials indexed by material id, sharing one plane assumption.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    materials: Vec<Option<(Material, Hooke)>>,
    pub plane: PlaneAssumption,
}

impl MaterialField {
    pub fn new(materials: &[(usize, Material)], plane: PlaneAssumption) -> Result<Self> {
        let size = materials.iter().map(|(id, _)| id + 1).max().unwrap_or(0);
        let mut table = vec![None; size];
        for &(id, m) in materials {
            table[id] = Some((m, hooke(m.young, m.poisson, plane)?));
        }
        Ok(Self {
            materials: table,
            plane,
        })
    }

    /// Matrix of modulus `e1` with inclusions of modulus `ratio * e1`.
    pub fn benchmark(e1: f64, ratio: f64, poisson: f64, plane: PlaneAssumption) -> Result<Self> {
        Self::new(
            &[
                (MATRIX, Material { young: e1, poisson }),
                (
                    INCLUSION,
                    Material {
                        young: ratio * e1,
                        poisson,
                    },
                ),
            ],
            plane,
        )
    }

    fn entry(&self, id: usize) -> &(Material, Hooke) {
        self.materials
            .get(id)
            .and_then(Option::as_ref)
            .unwrap_or_else(|| panic!("no material with id {id}"))
    }

    pub fn hooke(&self, id: usize) -> &Hooke {
        &self.entry(id).1
    }

    pub fn young(&self, id: usize) -> f64 {
        self.entry(id).0.young
    }

    /// Checks that every element refers to a defined material.
    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        for &id in &mesh.material_id {
            if self.materials.get(id).and_then(Option::as_ref).is_none() {
                return Err(Error::Material(format!("no material with id {id}")));
            }
        }
        Ok(())
    }
}

/// Top-edge traction `(g_x, g_y)` and a uniform body force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loads {
    pub traction: [f64; 2],
    #[serde(default)]
    pub body: [f64; 2],
}

impl Default for Loads {
    fn default() -> Self {
        Self {
            traction: [1.0, 1.0],
            body: [0.0, 0.0],
        }
    }
}

impl Loads {
    /// Surface load on a boundary edge with the given tag.
    pub fn surface(&self, tag: BoundaryTag) -> [f64; 2] {
        match tag {
            BoundaryTag::NeumannTop => self.traction,
            _ => [0.0, 0.0],
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            traction: [c * self.traction[0], c * self.traction[1]],
            body: [c * self.body[0], c * self.body[1]],
        }
    }
}

/// Gradients of the three P1 shape functions.
pub fn shape_gradients(v: &[[f64; 2]; 3]) -> [[f64; 2]; 3] {
    let two_a = 2.0 * signed_area(v);
    let mut g = [[0.0; 2]; 3];
    for (i, gi) in g.iter_mut().enumerate() {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        *gi = [(v[j][1] - v[k][1]) / two_a, (v[k][0] - v[j][0]) / two_a];
    }
    g
}

/// P1 shape function values at `x`.
pub fn shape_values(v: &[[f64; 2]; 3], x: [f64; 2]) -> [f64; 3] {
    let a = signed_area(v);
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        *o = signed_area(&[x, v[j], v[k]]) / a;
    }
    out
}

/// Strain-displacement matrix, dofs ordered `(u_x, u_y)` per vertex.
pub fn b_matrix(v: &[[f64; 2]; 3]) -> SMatrix<f64, 3, 6> {
    let g = shape_gradients(v);
    let mut b = SMatrix::<f64, 3, 6>::zeros();
    for i in 0..3 {
        b[(0, 2 * i)] = g[i][0];
        b[(1, 2 * i + 1)] = g[i][1];
        b[(2, 2 * i)] = g[i][1];
        b[(2, 2 * i + 1)] = g[i][0];
    }
    b
}

pub fn element_stiffness(v: &[[f64; 2]; 3], h: &Hooke) -> Result<SMatrix<f64, 6, 6>> {
    let area = signed_area(v);
    if !(area > 0.0) {
        return Err(Error::DegenerateElement {
            element: usize::MAX,
            area,
        });
    }
    let b = b_matrix(v);
    Ok(area * b.transpose() * h.h * b)
}

/// Constant stress of a P1 displacement on one element.
pub fn element_stress(v: &[[f64; 2]; 3], h: &Hooke, ue: &[f64; 6]) -> Vector3<f64> {
    h.h * (b_matrix(v) * SMatrix::<f64, 6, 1>::from_column_slice(ue))
}

/// Element displacement dofs gathered from a nodal vector.
pub fn gather(mesh: &Mesh, e: usize, u: &[f64]) -> [f64; 6] {
    let t = mesh.elements[e];
    [
        u[2 * t[0]],
        u[2 * t[0] + 1],
        u[2 * t[1]],
        u[2 * t[1] + 1],
        u[2 * t[2]],
        u[2 * t[2] + 1],
    ]
}

/// Stiffness and load of a set of elements. `node_map` numbers the nodes they
/// touch; unmapped nodes must not occur.
pub fn assemble_elements(
    mesh: &Mesh,
    materials: &MaterialField,
    loads: &Loads,
    elements: &[usize],
    node_map: &[Option<usize>],
    n_nodes: usize,
) -> Result<(CscMatrix<f64>, Vec<f64>)> {
    let ndof = 2 * n_nodes;
    let mut trip = Triplets::new(ndof, ndof);
    let mut f = vec![0.0; ndof];
    for &e in elements {
        let v = mesh.vertices(e);
        let ke = element_stiffness(&v, materials.hooke(mesh.material_id[e])).map_err(|_| {
            Error::DegenerateElement {
                element: e,
                area: mesh.area(e),
            }
        })?;
        let local: Vec<usize> = mesh.elements[e]
            .iter()
            .map(|&n| node_map[n].expect("element node outside the numbering"))
            .collect();
        let third = mesh.area(e) / 3.0;
        for a in 0..3 {
            for c in 0..2 {
                let row = 2 * local[a] + c;
                f[row] += loads.body[c] * third;
                for b in 0..3 {
                    for d in 0..2 {
                        trip.push(row, 2 * local[b] + d, ke[(2 * a + c, 2 * b + d)]);
                    }
                }
            }
        }
        for &edge in &mesh.element_edges[e] {
            if let Some(tag) = mesh.edges[edge].boundary {
                let g = loads.surface(tag);
                let half = 0.5 * mesh.edge_length(edge);
                for n in mesh.edges[edge].nodes {
                    let l = node_map[n].expect("edge node outside the numbering");
                    f[2 * l] += g[0] * half;
                    f[2 * l + 1] += g[1] * half;
                }
            }
        }
    }
    Ok((trip.to_csc(), f))
}

/// Global stiffness and load vector.
pub fn assemble(
    mesh: &Mesh,
    materials: &MaterialField,
    loads: &Loads,
) -> Result<(CscMatrix<f64>, Vec<f64>)> {
    materials.check_mesh(mesh)?;
    let all: Vec<usize> = (0..mesh.n_elements()).collect();
    let map: Vec<Option<usize>> = (0..mesh.n_nodes()).map(Some).collect();
    assemble_elements(mesh, materials, loads, &all, &map, mesh.n_nodes())
}

/// Solves `K u = F` with `u[fixed[k]] = values[k]` by elimination.
pub fn solve_dirichlet(
    k: &CscMatrix<f64>,
    f: &[f64],
    fixed: &[usize],
    values: &[f64],
) -> Result<Vec<f64>> {
    let n = f.len();
    let mut is_fixed = vec![false; n];
    let mut u = vec![0.0; n];
    for (&d, &val) in fixed.iter().zip(values) {
        is_fixed[d] = true;
        u[d] = val;
    }
    let free: Vec<usize> = (0..n).filter(|&i| !is_fixed[i]).collect();
    let fmap = index_map(n, &free);
    let kff = extract_block(k, &fmap, &fmap, free.len(), free.len());
    let ku = spmv(k, &u);
    let rhs: Vec<f64> = free.iter().map(|&i| f[i] - ku[i]).collect();
    let chol = SparseCholesky::factor(&kff)
        .map_err(|e| Error::Factorization(format!("reduced stiffness: {e}")))?;
    let sol = chol.solve(&rhs);
    for (k, &i) in free.iter().enumerate() {
        u[i] = sol[k];
    }
    Ok(u)
}

/// Sequential FE solution of the clamped problem.
pub fn solve_sequential(
    mesh: &Mesh,
    materials: &MaterialField,
    loads: &Loads,
) -> Result<(CscMatrix<f64>, Vec<f64>, Vec<f64>)> {
    let (k, f) = assemble(mesh, materials, loads)?;
    let fixed = mesh.dirichlet_dofs();
    let u = solve_dirichlet(&k, &f, &fixed, &vec![0.0; fixed.len()])?;
    Ok((k, f, u))
}

/// `∫_E σ : H⁻¹ : σ` for a stress given pointwise.
pub fn stress_energy_sq<F>(v: &[[f64; 2]; 3], h: &Hooke, rule: &TriangleRule, mut sigma: F) -> f64
where
    F: FnMut([f64; 2]) -> Vector3<f64>,
{
    integrate_triangle(v, rule, |x| h.complementary(&sigma(x)))
}

/// Energy seminorm of a stress field over a set of elements.
pub fn energy_seminorm<F>(
    mesh: &Mesh,
    materials: &MaterialField,
    elements: &[usize],
    rule: &TriangleRule,
    mut sigma: F,
) -> f64
where
    F: FnMut(usize, [f64; 2]) -> Vector3<f64>,
{
    elements
        .iter()
        .map(|&e| {
            stress_energy_sq(
                &mesh.vertices(e),
                materials.hooke(mesh.material_id[e]),
                rule,
                |x| sigma(e, x),
            )
        })
        .sum::<f64>()
        .sqrt()
}
