//! Statically admissible stresses from a finite element solution, either on
//! the whole mesh or subdomain by subdomain from a FETI-DP iterate.

mod element_solve;
mod lambda_f;
mod star_patch;
mod traction;

use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use element_solve::{
    displacement_basis, element_gap, element_neumann_solve, resultant, ElementStress,
    DEFAULT_DEGREE,
};
pub use lambda_f::{
    check_balance, compute_lambda_f, correct_lambda_f, distribute, lambda_f_corrected,
    multipoint_reference, particular_lambda_f, InterfaceInteraction, MultipointMode, BALANCE_TOL,
};
pub use star_patch::{
    build_star_patch, density_moment, element_rhs, mean_traction, prolongation_residual,
    recover_edge_tractions, solve_star_patch, traction, EdgeDensity, EdgeTractions, EetMode,
    PatchEdge, Region, StarPatch, PATCH_TOL,
};
pub use traction::{interface_densities, traction_representation, PairTraction};

use crate::elasticity::{element_stiffness, element_stress, gather, Loads, MaterialField};
use crate::error::{Error, Result};
use crate::fetidp::{FetiProblem, IterationState};
use crate::interface_ops::CyclicKernelBasis;
use crate::mesh::{InterfaceTopology, Mesh, Partition};

/// Largest relative prolongation residual accepted after the patch solves.
pub const PROLONGATION_TOL: f64 = 1e-7;

/// Element stresses, prolongation residual and edge tractions of one subdomain.
type SubdomainRecovery = (Vec<(usize, ElementStress)>, f64, EdgeTractions);

/// Round-off allowance on equilibrium checks, relative to the largest
/// elementary force `Σ_j |K_e,ij u_j|`.
pub const ROUNDOFF_TOL: f64 = 1e-11;

/// Largest elementary force `Σ_j |K_e,ij u_j|` over `elements`.
pub fn elementary_force_scale(
    mesh: &Mesh,
    materials: &MaterialField,
    elements: &[usize],
    ue: &[[f64; 6]],
) -> f64 {
    elements
        .iter()
        .map(|&e| {
            let Ok(k) = element_stiffness(&mesh.vertices(e), materials.hooke(mesh.material_id[e]))
            else {
                return 0.0;
            };
            (0..6)
                .map(|i| (0..6).map(|j| (k[(i, j)] * ue[e][j]).abs()).sum::<f64>())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySettings {
    pub eet: EetMode,
    pub multipoint: MultipointMode,
    pub degree: usize,
}

impl RecoverySettings {
    /// Arithmetic edge means and unit multiple-point weights.
    pub fn plain() -> Self {
        Self {
            eet: EetMode::Classical,
            multipoint: MultipointMode::IdentityP,
            degree: DEFAULT_DEGREE,
        }
    }

    /// Modulus-weighted edge means and multiple-point weights.
    pub fn optimized() -> Self {
        Self {
            eet: EetMode::Weighted,
            multipoint: MultipointMode::WeightedP,
            degree: DEFAULT_DEGREE,
        }
    }
}

/// Element-wise admissible stress and its provenance.
#[derive(Debug, Clone)]
pub struct AdmissibleField {
    pub stresses: Vec<ElementStress>,
    /// Relative residual of the prolongation condition.
    pub prolongation_residual: f64,
    /// Interface interaction used, for substructured recovery.
    pub interaction: Option<InterfaceInteraction>,
    /// FETI-DP iteration the field was recovered from.
    pub iteration: Option<usize>,
    /// Edge densities, one set per recovery region.
    pub tractions: Vec<EdgeTractions>,
}

/// Constant FE stress per element from a global nodal vector.
pub fn element_stresses(mesh: &Mesh, materials: &MaterialField, u: &[f64]) -> Vec<Vector3<f64>> {
    (0..mesh.n_elements())
        .map(|e| {
            element_stress(
                &mesh.vertices(e),
                materials.hooke(mesh.material_id[e]),
                &gather(mesh, e, u),
            )
        })
        .collect()
}

/// Constant FE stress per element from subdomain-local vectors.
pub fn subdomain_stresses(
    mesh: &Mesh,
    materials: &MaterialField,
    problem: &FetiProblem,
    local: &[Vec<f64>],
) -> Vec<Vector3<f64>> {
    let mut out = vec![Vector3::zeros(); mesh.n_elements()];
    for sd in &problem.subdomains {
        for &e in &sd.elements {
            let ue: [f64; 6] = std::array::from_fn(|k| {
                let node = mesh.elements[e][k / 2];
                let pos = sd
                    .nodes
                    .binary_search(&node)
                    .expect("element node in subdomain");
                local[sd.id][2 * pos + k % 2]
            });
            out[e] = element_stress(&mesh.vertices(e), materials.hooke(mesh.material_id[e]), &ue);
        }
    }
    out
}

/// Tractions of `tractions` on the three local edges of `e`, vertex by vertex.
fn element_tractions(mesh: &Mesh, tractions: &EdgeTractions, e: usize) -> [[[f64; 2]; 2]; 3] {
    std::array::from_fn(|k| {
        let edge = mesh.element_edges[e][k];
        let d = tractions.on_element(e, edge);
        if mesh.edges[edge].nodes[0] == mesh.elements[e][k] {
            d
        } else {
            [d[1], d[0]]
        }
    })
}

fn solve_elements(
    mesh: &Mesh,
    materials: &MaterialField,
    loads: &Loads,
    elements: &[usize],
    tractions: &EdgeTractions,
    degree: usize,
    floor: f64,
) -> Result<Vec<(usize, ElementStress)>> {
    elements
        .par_iter()
        .map(|&e| {
            let t = element_tractions(mesh, tractions, e);
            let s = element_neumann_solve(
                &mesh.vertices(e),
                materials.hooke(mesh.material_id[e]),
                &t,
                loads.body,
                degree,
                e,
                floor,
            )?;
            Ok((e, s))
        })
        .collect()
}

fn check_prolongation(residual: f64) -> Result<()> {
    if residual > PROLONGATION_TOL {
        return Err(Error::Admissibility(format!(
            "prolongation residual {residual:.3e}"
        )));
    }
    Ok(())
}

/// Recovery on the whole mesh from a global displacement.
pub fn recover_sequential(
    mesh: &Mesh,
    materials: &MaterialField,
    loads: &Loads,
    u: &[f64],
    eet: EetMode,
    degree: usize,
) -> Result<AdmissibleField> {
    let sigma = element_stresses(mesh, materials, u);
    let mask = vec![true; mesh.n_elements()];
    let none = HashMap::new();
    let all: Vec<usize> = (0..mesh.n_elements()).collect();
    let ue: Vec<[f64; 6]> = all.iter().map(|&e| gather(mesh, e, u)).collect();
    let force = elementary_force_scale(mesh, materials, &all, &ue);
    let floor = ROUNDOFF_TOL * force;
    let region = Region {
        mask: &mask,
        interface: &none,
        floor,
    };
    let tractions = recover_edge_tractions(mesh, materials, loads, &region, &sigma, eet)?;
    let residual = prolongation_residual(mesh, loads, &mask, &sigma, &tractions, force);
    check_prolongation(residual)?;
    let solved = solve_elements(mesh, materials, loads, &all, &tractions, degree, floor)?;
    Ok(AdmissibleField {
        stresses: solved.into_iter().map(|(_, s)| s).collect(),
        prolongation_residual: residual,
        interaction: None,
        iteration: None,
        tractions: vec![tractions],
    })
}

/// Everything needed to recover from a FETI-DP iterate.
pub struct DdContext<'a> {
    pub mesh: &'a Mesh,
    pub materials: &'a MaterialField,
    pub loads: &'a Loads,
    pub partition: &'a Partition,
    pub topo: &'a InterfaceTopology,
    pub kernel: &'a CyclicKernelBasis,
    pub problem: &'a FetiProblem,
}

/// Substructured recovery from the Neumann fields `(u_N, λ_N)` of an iterate:
/// `Λ_F`, then `g_F`, then subdomain-restricted patches and element solves.
pub fn recover_dd(
    ctx: &DdContext,
    state: &IterationState,
    settings: &RecoverySettings,
) -> Result<AdmissibleField> {
    let DdContext {
        mesh,
        materials,
        loads,
        partition,
        topo,
        kernel,
        problem,
    } = *ctx;
    let sigma = subdomain_stresses(mesh, materials, problem, &state.u_n);
    let (p, l1) = multipoint_reference(
        mesh,
        materials,
        partition,
        topo,
        &sigma,
        settings.multipoint,
    );
    let ue = crate::estimator::displacements_local(mesh, problem, &state.u_n);
    let all: Vec<usize> = (0..mesh.n_elements()).collect();
    let force = elementary_force_scale(mesh, materials, &all, &ue);
    let floor = ROUNDOFF_TOL * force;
    let interaction = lambda_f_corrected(topo, kernel, &state.lambda_n, &p, &l1, floor)?;
    let g = traction_representation(mesh, topo, &interaction.lambda_f)?;
    let densities = interface_densities(mesh, partition, topo, &g);
    let per_sub: Vec<SubdomainRecovery> = problem
        .subdomains
        .par_iter()
        .map(|sd| {
            let mut mask = vec![false; mesh.n_elements()];
            for &e in &sd.elements {
                mask[e] = true;
            }
            let region = Region {
                mask: &mask,
                interface: &densities[sd.id],
                floor,
            };
            let tractions =
                recover_edge_tractions(mesh, materials, loads, &region, &sigma, settings.eet)?;
            let residual = prolongation_residual(mesh, loads, &mask, &sigma, &tractions, force);
            let solved = solve_elements(
                mesh,
                materials,
                loads,
                &sd.elements,
                &tractions,
                settings.degree,
                floor,
            )?;
            Ok((solved, residual, tractions))
        })
        .collect::<Result<_>>()?;
    let mut stresses: Vec<Option<ElementStress>> = vec![None; mesh.n_elements()];
    let mut residual = 0.0_f64;
    let mut all_tractions = Vec::with_capacity(per_sub.len());
    for (solved, r, t) in per_sub {
        residual = residual.max(r);
        all_tractions.push(t);
        for (e, s) in solved {
            stresses[e] = Some(s);
        }
    }
    check_prolongation(residual)?;
    Ok(AdmissibleField {
        stresses: stresses
            .into_iter()
            .map(|s| s.expect("every element in one subdomain"))
            .collect(),
        prolongation_residual: residual,
        interaction: Some(interaction),
        iteration: Some(state.iteration),
        tractions: all_tractions,
    })
}
