//! Error in constitutive relation, guaranteed and separated bounds, and
//! overkill reference errors.

use rayon::prelude::*;

use crate::elasticity::{assemble, gather, solve_dirichlet, Loads, MaterialField};
use crate::error::{Error, Result};
use crate::fetidp::{algebraic_error_term, to_global, FetiProblem, IterationState};
use crate::linalg::bilinear;
use crate::mesh::{structured_mesh, Mesh, Partition};
use crate::quadrature::TriangleRule;
use crate::recovery::{AdmissibleField, PROLONGATION_TOL};

/// Tolerance on the interface jump of `u_D`, relative to its largest value.
pub const CONTINUITY_TOL: f64 = 1e-10;

/// Dof budget of the overkill solve when none is configured.
pub const DEFAULT_DOF_BUDGET: usize = 2_000_000;

/// Element displacement vectors, one `[u_x, u_y]` triple per vertex.
pub type ElementDisplacements = Vec<[f64; 6]>;

/// Element vectors of a global nodal field.
pub fn displacements_global(mesh: &Mesh, u: &[f64]) -> ElementDisplacements {
    (0..mesh.n_elements()).map(|e| gather(mesh, e, u)).collect()
}

/// Element vectors of subdomain-local fields, each element read from its own subdomain.
pub fn displacements_local(
    mesh: &Mesh,
    problem: &FetiProblem,
    local: &[Vec<f64>],
) -> ElementDisplacements {
    let mut out = vec![[0.0; 6]; mesh.n_elements()];
    for sd in &problem.subdomains {
        for &e in &sd.elements {
            out[e] = std::array::from_fn(|k| {
                let pos = sd.nodes.binary_search(&mesh.elements[e][k / 2]).unwrap();
                local[sd.id][2 * pos + k % 2]
            });
        }
    }
    out
}

/// Per-element `e_CR(û, σ̂)²` on every element.
pub fn ecr_squared(
    mesh: &Mesh,
    materials: &MaterialField,
    u: &ElementDisplacements,
    field: &AdmissibleField,
) -> Vec<f64> {
    let rule = TriangleRule::exact_for_degree(8);
    (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let v = mesh.vertices(e);
            let h = materials.hooke(mesh.material_id[e]);
            let sigma_h = crate::elasticity::element_stress(&v, h, &u[e]);
            crate::recovery::element_gap(&v, h, &field.stresses[e], &sigma_h, &rule)
        })
        .collect()
}

/// `√(Σ_E e_CR²)`
pub fn ecr(
    mesh: &Mesh,
    materials: &MaterialField,
    u: &ElementDisplacements,
    field: &AdmissibleField,
) -> f64 {
    ecr_squared(mesh, materials, u, field)
        .iter()
        .sum::<f64>()
        .sqrt()
}

/// Sums element contributions per subdomain and takes roots.
pub fn per_subdomain(partition: &Partition, squared: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; partition.count];
    for (e, v) in squared.iter().enumerate() {
        out[partition.subdomain[e]] += v;
    }
    out.iter().map(|v| v.sqrt()).collect()
}

/// `√(u_hᵀ K u_h)`
pub fn energy_norm(mesh: &Mesh, materials: &MaterialField, u: &[f64]) -> Result<f64> {
    let (k, _) = assemble(mesh, materials, &Loads::default())?;
    Ok(bilinear(&k, u, u).max(0.0).sqrt())
}

/// Largest disagreement of `u_D` between subdomains sharing a node, relative
/// to the largest value.
pub fn continuity_gap(problem: &FetiProblem, n_nodes: usize, local: &[Vec<f64>]) -> f64 {
    let mut first: Vec<Option<[f64; 2]>> = vec![None; n_nodes];
    let (mut worst, mut scale) = (0.0_f64, 0.0_f64);
    for sd in &problem.subdomains {
        for (k, &v) in sd.nodes.iter().enumerate() {
            let val = [local[sd.id][2 * k], local[sd.id][2 * k + 1]];
            scale = scale.max(val[0].abs()).max(val[1].abs());
            match first[v] {
                None => first[v] = Some(val),
                Some(f) => worst = worst.max((f[0] - val[0]).abs()).max((f[1] - val[1]).abs()),
            }
        }
    }
    worst / scale.max(f64::MIN_POSITIVE)
}

fn check_provenance(state: &IterationState, field: &AdmissibleField) -> Result<()> {
    match field.iteration {
        Some(it) if it == state.iteration => Ok(()),
        other => Err(Error::Provenance {
            stress: other.unwrap_or(usize::MAX),
            state: state.iteration,
        }),
    }
}

/// `√(Σ_s e_CR(u_D(s), σ̂_N(s))²)`, refused unless `u_D` is continuous and
/// `σ̂_N` satisfies the prolongation condition.
pub fn guaranteed_bound(
    mesh: &Mesh,
    materials: &MaterialField,
    problem: &FetiProblem,
    state: &IterationState,
    field: &AdmissibleField,
) -> Result<f64> {
    check_provenance(state, field)?;
    let gap = continuity_gap(problem, mesh.n_nodes(), &state.u_d);
    if gap > CONTINUITY_TOL {
        return Err(Error::Admissibility(format!(
            "u_D jumps across the interface by {gap:.3e}"
        )));
    }
    if field.prolongation_residual > PROLONGATION_TOL {
        return Err(Error::Admissibility(format!(
            "stress field fails the prolongation condition by {:.3e}",
            field.prolongation_residual
        )));
    }
    Ok(ecr(
        mesh,
        materials,
        &displacements_local(mesh, problem, &state.u_d),
        field,
    ))
}

/// Solver and discretization contributions to the error of `u_D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparatedBound {
    pub algebraic: f64,
    pub discretization: f64,
    pub total: f64,
}

/// `√(rᵀz) + √(Σ_s e_CR(u_N(s), σ̂_N(s))²)`
pub fn separated_bound(
    mesh: &Mesh,
    materials: &MaterialField,
    problem: &FetiProblem,
    state: &IterationState,
    field: &AdmissibleField,
) -> Result<SeparatedBound> {
    check_provenance(state, field)?;
    let algebraic = algebraic_error_term(state)?.sqrt();
    let discretization = ecr(
        mesh,
        materials,
        &displacements_local(mesh, problem, &state.u_n),
        field,
    );
    Ok(SeparatedBound {
        algebraic,
        discretization,
        total: algebraic + discretization,
    })
}

/// Global continuous `u_D` of an iterate.
pub fn u_d_global(problem: &FetiProblem, n_nodes: usize, state: &IterationState) -> Vec<f64> {
    to_global(problem, n_nodes, &state.u_d)
}

/// Value of a P1 field of a structured mesh at a point, exact for nested points.
fn interpolate_structured(mesh: &Mesh, u: &[f64], x: [f64; 2]) -> [f64; 2] {
    let grid = mesh.grid.as_ref().expect("structured mesh");
    let h = grid.h();
    let cell = |t: f64| ((t / h).floor().max(0.0) as usize).min(grid.n - 1);
    let (i, j) = (cell(x[0]), cell(x[1]));
    let (xi, eta) = (x[0] / h - i as f64, x[1] / h - j as f64);
    let e = 2 * (j * grid.n + i) + usize::from(eta > xi);
    let phi = crate::elasticity::shape_values(&mesh.vertices(e), x);
    let mut out = [0.0; 2];
    for (k, &node) in mesh.elements[e].iter().enumerate() {
        out[0] += phi[k] * u[2 * node];
        out[1] += phi[k] * u[2 * node + 1];
    }
    out
}

/// Solution on a `k`-times refined nested mesh.
pub struct ReferenceSolution {
    pub fine: Mesh,
    stiffness: nalgebra_sparse::CscMatrix<f64>,
    pub u: Vec<f64>,
}

impl ReferenceSolution {
    pub fn new(
        mesh: &Mesh,
        materials: &MaterialField,
        loads: &Loads,
        k: usize,
        dof_budget: usize,
    ) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!(
                "refinement factor must be at least 2, got {k}"
            )));
        }
        let grid = mesh
            .grid
            .as_ref()
            .ok_or_else(|| Error::Mesh("overkill reference needs a structured mesh".into()))?;
        let n = grid.n * k;
        let needed = 2 * (n + 1) * (n + 1);
        if needed > dof_budget {
            return Err(Error::DofBudget {
                needed,
                budget: dof_budget,
            });
        }
        let fine = structured_mesh(n, grid.length, &mesh.inclusions)?;
        let (stiffness, f) = assemble(&fine, materials, loads)?;
        let fixed = fine.dirichlet_dofs();
        let u = solve_dirichlet(&stiffness, &f, &fixed, &vec![0.0; fixed.len()])?;
        Ok(Self { fine, stiffness, u })
    }

    /// `|||u_ref − u_h|||` with `u_h` prolongated exactly onto the fine mesh.
    pub fn distance(&self, coarse: &Mesh, u_h: &[f64]) -> f64 {
        let mut diff = self.u.clone();
        for (v, x) in self.fine.nodes.iter().enumerate() {
            let c = interpolate_structured(coarse, u_h, *x);
            diff[2 * v] -= c[0];
            diff[2 * v + 1] -= c[1];
        }
        bilinear(&self.stiffness, &diff, &diff).max(0.0).sqrt()
    }
}

/// `|||u_ref − u_h|||` against the `k`-times refined nested solution.
pub fn overkill_reference(
    mesh: &Mesh,
    materials: &MaterialField,
    loads: &Loads,
    u_h: &[f64],
    k: usize,
    dof_budget: usize,
) -> Result<f64> {
    Ok(ReferenceSolution::new(mesh, materials, loads, k, dof_budget)?.distance(mesh, u_h))
}

/// Global, per-subdomain and per-element view of one estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// `e_CR` per element.
    pub elements: Vec<f64>,
    pub subdomains: Vec<f64>,
    pub global: f64,
    pub algebraic: Option<f64>,
    pub discretization: Option<f64>,
    /// `|||u_h|||`
    pub energy: f64,
    pub relative: f64,
    pub reference: Option<f64>,
    pub effectivity: Option<f64>,
}

impl ErrorReport {
    pub fn new(squared: &[f64], partition: Option<&Partition>, energy: f64) -> Self {
        let global = squared.iter().sum::<f64>().sqrt();
        Self {
            elements: squared.iter().map(|v| v.sqrt()).collect(),
            subdomains: partition
                .map(|p| per_subdomain(p, squared))
                .unwrap_or_else(|| vec![global]),
            global,
            algebraic: None,
            discretization: None,
            energy,
            relative: global / energy,
            reference: None,
            effectivity: None,
        }
    }

    pub fn with_reference(mut self, reference: f64) -> Self {
        self.reference = Some(reference);
        self.effectivity = Some(self.global / reference);
        self
    }

    pub fn with_separated(mut self, s: SeparatedBound) -> Self {
        self.algebraic = Some(s.algebraic);
        self.discretization = Some(s.discretization);
        self
    }
}

/// Per-element `e_CR²`, ready for cell data.
pub fn error_map(report: &ErrorReport) -> Vec<f64> {
    report.elements.iter().map(|v| v * v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elasticity::{hooke, solve_sequential, PlaneAssumption};
    use crate::fetidp::{fetidp_states, FetiSettings};
    use crate::interface_ops::build_cyclic_kernel;
    use crate::mesh::{
        build_interface_topology, default_inclusions, generate_benchmark_mesh,
        partition_structured, PartitionScheme,
    };
    use crate::recovery::{
        recover_dd, recover_sequential, DdContext, EetMode, ElementStress, RecoverySettings,
        DEFAULT_DEGREE,
    };
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_field(mesh: &Mesh, materials: &MaterialField, s: Vector3<f64>) -> AdmissibleField {
        let stresses = (0..mesh.n_elements())
            .map(|e| {
                let h = materials.hooke(mesh.material_id[e]);
                ElementStress {
                    center: [0.0; 2],
                    scale: 1.0,
                    basis: crate::recovery::displacement_basis(1),
                    // w = (a ξ, b ξ + c η) gives ε = (a, c, b)
                    coeffs: {
                        let eps = h.inv * s;
                        vec![eps[0], eps[2], eps[1]]
                    },
                    hooke: h.h,
                }
            })
            .collect();
        AdmissibleField {
            stresses,
            prolongation_residual: 0.0,
            interaction: None,
            iteration: None,
            tractions: vec![],
        }
    }

    #[test]
    fn ecr_of_constant_stress_and_zero_displacement() {
        let mesh = generate_benchmark_mesh(4, 1.0, &[]).unwrap();
        let mats = MaterialField::benchmark(2.0, 1.0, 0.3, PlaneAssumption::PlaneStress).unwrap();
        let s = Vector3::new(1.0, -2.0, 0.5);
        let field = constant_field(&mesh, &mats, s);
        let zero = vec![[0.0; 6]; mesh.n_elements()];
        let sq = ecr_squared(&mesh, &mats, &zero, &field);
        let h = hooke(2.0, 0.3, PlaneAssumption::PlaneStress).unwrap();
        for (e, v) in sq.iter().enumerate() {
            assert!((v - mesh.area(e) * h.complementary(&s)).abs() < 1e-13);
        }
        let report = ErrorReport::new(&sq, None, 1.0);
        let total: f64 = error_map(&report).iter().sum();
        assert!((total - report.global * report.global).abs() < 1e-13);
    }

    /// `ν = 0`, traction `(0, g)`: the exact field `u = (0, g y / E)` is affine.
    fn affine_case() -> (Mesh, MaterialField, Loads, Vec<f64>) {
        let mesh = generate_benchmark_mesh(6, 1.0, &default_inclusions(1.0)).unwrap();
        let mats = MaterialField::benchmark(3.0, 1.0, 0.0, PlaneAssumption::PlaneStress).unwrap();
        let loads = Loads {
            traction: [0.0, 1.5],
            body: [0.0; 2],
        };
        let exact: Vec<f64> = mesh
            .nodes
            .iter()
            .flat_map(|x| [0.0, 1.5 * x[1] / 3.0])
            .collect();
        (mesh, mats, loads, exact)
    }

    #[test]
    fn affine_solution_has_zero_bound_and_reference() {
        let (mesh, mats, loads, exact) = affine_case();
        let (_, _, u) = solve_sequential(&mesh, &mats, &loads).unwrap();
        assert!(u.iter().zip(&exact).all(|(a, b)| (a - b).abs() < 1e-12));
        let field = recover_sequential(&mesh, &mats, &loads, &u, EetMode::Weighted, DEFAULT_DEGREE)
            .unwrap();
        let bound = ecr(&mesh, &mats, &displacements_global(&mesh, &u), &field);
        assert!(bound < 1e-9, "{bound}");
        let reference =
            overkill_reference(&mesh, &mats, &loads, &u, 2, DEFAULT_DOF_BUDGET).unwrap();
        assert!(reference < 1e-9);
    }

    #[test]
    fn prager_synge_identity() {
        // exact u affine; û = u + δ, σ̂ = σ + τ with τ a difference of two admissible fields
        let (mesh, mats, loads, exact) = affine_case();
        let het = MaterialField::benchmark(3.0, 1e-2, 0.0, PlaneAssumption::PlaneStress).unwrap();
        let (_, _, u_het) = solve_sequential(&mesh, &het, &loads).unwrap();
        let a = recover_sequential(
            &mesh,
            &het,
            &loads,
            &u_het,
            EetMode::Classical,
            DEFAULT_DEGREE,
        )
        .unwrap();
        let b = recover_sequential(
            &mesh,
            &het,
            &loads,
            &u_het,
            EetMode::Weighted,
            DEFAULT_DEGREE,
        )
        .unwrap();
        let sigma = Vector3::new(0.0, 1.5, 0.0);
        // same basis and material on both sides: coefficient difference is σ̂_a − σ̂_b
        let stresses: Vec<ElementStress> = a
            .stresses
            .iter()
            .zip(&b.stresses)
            .map(|(sa, sb)| {
                let mut s = sa.clone();
                s.coeffs
                    .iter_mut()
                    .zip(&sb.coeffs)
                    .for_each(|(x, y)| *x -= y);
                s
            })
            .collect();
        let tau = AdmissibleField {
            stresses,
            prolongation_residual: 0.0,
            interaction: None,
            iteration: None,
            tractions: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dir = mesh.dirichlet_nodes();
        let u_hat: Vec<f64> = exact
            .iter()
            .enumerate()
            .map(|(i, x)| {
                if dir[i / 2] {
                    *x
                } else {
                    x + 0.01 * rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        let rule = TriangleRule::exact_for_degree(8);
        let (mut lhs, mut err_u, mut err_s) = (0.0, 0.0, 0.0);
        for e in 0..mesh.n_elements() {
            let v = mesh.vertices(e);
            let h = mats.hooke(mesh.material_id[e]);
            let s_hat = crate::elasticity::element_stress(&v, h, &gather(&mesh, e, &u_hat));
            let s_ex = crate::elasticity::element_stress(&v, h, &gather(&mesh, e, &exact));
            lhs += crate::quadrature::integrate_triangle(&v, &rule, |x| {
                h.complementary(&(sigma + tau.stresses[e].eval(x) - s_hat))
            });
            err_u += mesh.area(e) * h.complementary(&(s_ex - s_hat));
            err_s += crate::quadrature::integrate_triangle(&v, &rule, |x| {
                h.complementary(&tau.stresses[e].eval(x))
            });
        }
        assert!(err_s > 1e-8 && err_u > 1e-8);
        assert!(
            (lhs - err_u - err_s).abs() <= 1e-9 * lhs,
            "{lhs} {err_u} {err_s}"
        );
    }

    #[test]
    fn sequential_bound_dominates_reference_and_reference_shrinks() {
        let mesh = generate_benchmark_mesh(12, 1.0, &default_inclusions(1.0)).unwrap();
        let mats = MaterialField::benchmark(1.0, 1.0, 0.3, PlaneAssumption::PlaneStress).unwrap();
        let loads = Loads::default();
        let (_, _, u) = solve_sequential(&mesh, &mats, &loads).unwrap();
        let field =
            recover_sequential(&mesh, &mats, &loads, &u, EetMode::Classical, DEFAULT_DEGREE)
                .unwrap();
        let bound = ecr(&mesh, &mats, &displacements_global(&mesh, &u), &field);
        let r2 = overkill_reference(&mesh, &mats, &loads, &u, 2, DEFAULT_DOF_BUDGET).unwrap();
        let r4 = overkill_reference(&mesh, &mats, &loads, &u, 4, DEFAULT_DOF_BUDGET).unwrap();
        assert!(r2 < r4, "{r2} {r4}");
        assert!(bound >= r4);
        // corner singularities make the h/4 reference a loose proxy on this coarse mesh
        assert!(bound / r4 < 5.0, "effectivity {}", bound / r4);
    }

    #[test]
    fn dof_budget_and_factor_guards() {
        let mesh = generate_benchmark_mesh(12, 1.0, &[]).unwrap();
        let mats = MaterialField::benchmark(1.0, 1.0, 0.3, PlaneAssumption::PlaneStress).unwrap();
        let u = vec![0.0; 2 * mesh.n_nodes()];
        assert!(matches!(
            overkill_reference(&mesh, &mats, &Loads::default(), &u, 4, 1000),
            Err(Error::DofBudget {
                needed: 4802,
                budget: 1000
            })
        ));
        assert!(overkill_reference(&mesh, &mats, &Loads::default(), &u, 1, 1000).is_err());
    }

    #[test]
    fn separated_and_guaranteed_bounds() {
        let mesh = generate_benchmark_mesh(12, 1.0, &default_inclusions(1.0)).unwrap();
        let mats = MaterialField::benchmark(1.0, 1e-2, 0.3, PlaneAssumption::PlaneStress).unwrap();
        let loads = Loads::default();
        let part = partition_structured(&mesh, PartitionScheme::Grid3x3).unwrap();
        let topo = build_interface_topology(&mesh, &part);
        let kernel = build_cyclic_kernel(&mesh, &part, &topo);
        let problem =
            FetiProblem::new(&mesh, &mats, &loads, &part, &topo, Default::default()).unwrap();
        let (sol, states) = fetidp_states(&problem, &FetiSettings::default()).unwrap();
        let ctx = DdContext {
            mesh: &mesh,
            materials: &mats,
            loads: &loads,
            partition: &part,
            topo: &topo,
            kernel: &kernel,
            problem: &problem,
        };
        let first = recover_dd(&ctx, &states[0], &RecoverySettings::optimized()).unwrap();
        let sep0 = separated_bound(&mesh, &mats, &problem, &states[0], &first).unwrap();
        assert!(sep0.algebraic > 0.0);
        assert!((sep0.algebraic - states[0].rz.sqrt()).abs() < 1e-15);
        // provenance guard
        assert!(matches!(
            separated_bound(&mesh, &mats, &problem, &sol.state, &first),
            Err(Error::Provenance { .. })
        ));
        let last = recover_dd(&ctx, &sol.state, &RecoverySettings::optimized()).unwrap();
        let g = guaranteed_bound(&mesh, &mats, &problem, &sol.state, &last).unwrap();
        let sep = separated_bound(&mesh, &mats, &problem, &sol.state, &last).unwrap();
        assert!(sep.algebraic <= sol.tolerance);
        assert!((sep.total - g).abs() <= 1e-4 * g, "{} {g}", sep.total);
        // sequential recovery of the converged field gives the same discretization estimate
        let u_d = u_d_global(&problem, mesh.n_nodes(), &sol.state);
        let (_, _, u) = solve_sequential(&mesh, &mats, &loads).unwrap();
        assert!(u.iter().zip(&u_d).all(|(a, b)| (a - b).abs() < 1e-8));
    }
}
