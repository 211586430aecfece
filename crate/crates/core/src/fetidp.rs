//! FETI-DP with corner constraints.
//!
//! Every iterate carries a locally equilibrated field `u_N` with reactions
//! `λ_N`, and a globally continuous field `u_D = u_N − δu` obtained by the
//! Dirichlet preconditioner. Their energy distance equals `rᵀz`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use nalgebra_sparse::CscMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elasticity::{assemble_elements, Loads, MaterialField};
use crate::error::{Error, Result};
use crate::interface_ops::{build_dual_classic, build_primal, build_scaled, Scaling};
use crate::linalg::{diagonal, dot, extract_block, index_map, norm2, spmv, SparseCholesky};
use crate::mesh::{InterfaceTopology, Mesh, Partition};

/// Local problem of one subdomain. Local dof `2k + c` belongs to
/// `nodes[k]`; Dirichlet dofs stay in the numbering and are held at zero.
#[derive(Debug)]
pub struct SubdomainProblem {
    pub id: usize,
    pub nodes: Vec<usize>,
    pub elements: Vec<usize>,
    /// Unconstrained local stiffness.
    pub k: CscMatrix<f64>,
    pub f: Vec<f64>,
    pub free: Vec<bool>,
    /// Local dof of each boundary dof of `Γ(s)`.
    pub boundary_dofs: Vec<usize>,
    pub i_dofs: Vec<usize>,
    pub o_dofs: Vec<usize>,
    pub c_dofs: Vec<usize>,
    /// `i_dofs` followed by `o_dofs`.
    pub r_dofs: Vec<usize>,
    /// Boundary index of each o dof.
    pub o_boundary: Vec<usize>,
    /// Dual row, sign in `B_o` and entry of `B̃_o`, per o dof.
    pub o_rows: Vec<(usize, f64, f64)>,
    /// Boundary index and coarse dof of each corner dof.
    pub c_boundary: Vec<usize>,
    pub c_global: Vec<usize>,
    krr: SparseCholesky,
    kii: SparseCholesky,
    /// `K_rr⁻¹ K_rc`
    krr_inv_krc: DMatrix<f64>,
    /// `K_cc − K_cr K_rr⁻¹ K_rc`
    pub schur_cc: DMatrix<f64>,
}

impl SubdomainProblem {
    pub fn ndof(&self) -> usize {
        2 * self.nodes.len()
    }

    /// `B_o(s)ᵀ Λ` on the o dofs.
    fn dual_to_o(&self, lambda: &[f64]) -> Vec<f64> {
        self.o_rows
            .iter()
            .map(|&(row, sign, _)| sign * lambda[row])
            .collect()
    }

    /// `B̃_o(s)ᵀ Λ` on the o dofs.
    fn dual_to_o_scaled(&self, lambda: &[f64]) -> Vec<f64> {
        self.o_rows
            .iter()
            .map(|&(row, _, w)| w * lambda[row])
            .collect()
    }

    /// Boundary reaction vector in `Γ(s)` numbering from o and c parts.
    pub fn boundary_vector(&self, o: &[f64], c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.boundary_dofs.len()];
        for (k, &b) in self.o_boundary.iter().enumerate() {
            out[b] = o[k];
        }
        for (k, &b) in self.c_boundary.iter().enumerate() {
            out[b] = c[k];
        }
        out
    }

    /// `K(s) u − f(s) − t(s)ᵀ λ` on free dofs.
    pub fn equilibrium_residual(&self, u: &[f64], lambda_b: &[f64]) -> Vec<f64> {
        let mut r = spmv(&self.k, u);
        for (ri, fi) in r.iter_mut().zip(&self.f) {
            *ri -= fi;
        }
        for (b, &d) in self.boundary_dofs.iter().enumerate() {
            r[d] -= lambda_b[b];
        }
        for (d, ri) in r.iter_mut().enumerate() {
            if !self.free[d] {
                *ri = 0.0;
            }
        }
        r
    }
}

/// Assembled corner problem.
#[derive(Debug)]
pub struct CoarseProblem {
    pub kcc_star: DMatrix<f64>,
    factor: Option<Cholesky<f64, Dyn>>,
}

impl CoarseProblem {
    pub fn dim(&self) -> usize {
        self.kcc_star.nrows()
    }

    fn solve(&self, g: &[f64]) -> Vec<f64> {
        match &self.factor {
            Some(c) => c.solve(&DVector::from_column_slice(g)).as_slice().to_vec(),
            None => Vec::new(),
        }
    }
}

/// All local problems, the coarse problem and the dual numbering.
#[derive(Debug)]
pub struct FetiProblem {
    pub subdomains: Vec<SubdomainProblem>,
    pub coarse: CoarseProblem,
    /// Number of dual unknowns (two per o relation).
    pub n_dual: usize,
    /// Indices into `topology.classic` of the relations at non-corner nodes.
    pub dual_relations: Vec<usize>,
}

/// Stopping rule for the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    /// `ε = factor · √(r₀ᵀz₀)`
    Relative(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FetiSettings {
    pub tolerance: Tolerance,
    pub max_iter: usize,
    pub scaling: Scaling,
}

impl Default for FetiSettings {
    fn default() -> Self {
        Self {
            tolerance: Tolerance::Relative(1e-10),
            max_iter: 500,
            scaling: Scaling::Stiffness,
        }
    }
}

/// Snapshot of the iteration. Local vectors use the subdomain numbering,
/// reactions use the `Γ(s)` numbering.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub iteration: usize,
    pub lambda_o: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub u_n: Vec<Vec<f64>>,
    pub u_d: Vec<Vec<f64>>,
    pub lambda_n: Vec<Vec<f64>>,
    /// `λ_D = λ_N − δλ`
    pub lambda_d: Vec<Vec<f64>>,
    pub delta_lambda: Vec<Vec<f64>>,
    pub delta_u: Vec<Vec<f64>>,
    pub rz: f64,
}

#[derive(Debug, Clone)]
pub struct FetiSolution {
    pub state: IterationState,
    /// `rᵀz` per iteration, starting at iteration 0.
    pub history: Vec<f64>,
    pub converged: bool,
    pub tolerance: f64,
}

impl FetiProblem {
    /// Builds local problems with `scaling` for `B̃_o`.
    pub fn new(
        mesh: &Mesh,
        materials: &MaterialField,
        loads: &Loads,
        partition: &Partition,
        topo: &InterfaceTopology,
        scaling: Scaling,
    ) -> Result<Self> {
        materials.check_mesh(mesh)?;
        let nsd = partition.count;
        let elements = partition.elements();
        for s in 0..nsd {
            let pinned = topo.subdomain_nodes[s]
                .iter()
                .filter(|&&v| topo.dirichlet[v] || topo.is_corner(v))
                .count();
            if pinned < 2 {
                return Err(Error::Subdomain {
                    subdomain: s,
                    reason: format!(
                        "floating with {pinned} constrained node(s); rigid modes not removed"
                    ),
                });
            }
        }

        let assembled: Vec<(CscMatrix<f64>, Vec<f64>)> = (0..nsd)
            .into_par_iter()
            .map(|s| {
                let map = index_map(mesh.n_nodes(), &topo.subdomain_nodes[s]);
                assemble_elements(
                    mesh,
                    materials,
                    loads,
                    &elements[s],
                    &map,
                    topo.subdomain_nodes[s].len(),
                )
            })
            .collect::<Result<_>>()?;

        let a = build_primal(topo);
        let b = build_dual_classic(topo);
        let diag: Vec<Vec<f64>> = (0..nsd)
            .map(|s| {
                let d = diagonal(&assembled[s].0);
                topo.boundary_nodes[s]
                    .iter()
                    .flat_map(|&v| {
                        let k = topo.local_position(s, v).unwrap();
                        [d[2 * k], d[2 * k + 1]]
                    })
                    .collect()
            })
            .collect();
        let scaled = build_scaled(topo, &a, &b, scaling, Some(&diag))?;

        let dual_relations: Vec<usize> = (0..topo.classic.len())
            .filter(|&r| !topo.is_corner(topo.classic[r].node))
            .collect();
        let mut dual_row = vec![None; topo.classic.len()];
        for (q, &r) in dual_relations.iter().enumerate() {
            dual_row[r] = Some(q);
        }

        let subdomains: Vec<SubdomainProblem> = assembled
            .into_par_iter()
            .enumerate()
            .map(|(s, (k, f))| {
                let nodes = topo.subdomain_nodes[s].clone();
                let ndof = 2 * nodes.len();
                let free: Vec<bool> = (0..ndof).map(|d| !topo.dirichlet[nodes[d / 2]]).collect();
                let mut boundary_dofs = Vec::new();
                let (mut o_dofs, mut o_boundary, mut o_rows) = (Vec::new(), Vec::new(), Vec::new());
                let (mut c_dofs, mut c_boundary, mut c_global) =
                    (Vec::new(), Vec::new(), Vec::new());
                for (kb, &v) in topo.boundary_nodes[s].iter().enumerate() {
                    let kl = topo.local_position(s, v).unwrap();
                    let corner = topo.corners.binary_search(&v);
                    let rel = topo.relations_at(&topo.classic, v).find(|&r| {
                        let p = &topo.pairs[topo.classic[r].pair];
                        p.s == s || p.t == s
                    });
                    for c in 0..2 {
                        let (ld, bd) = (2 * kl + c, 2 * kb + c);
                        boundary_dofs.push(ld);
                        match corner {
                            Ok(pos) => {
                                c_dofs.push(ld);
                                c_boundary.push(bd);
                                c_global.push(2 * pos + c);
                            }
                            Err(_) => {
                                let r = rel.expect("interface node has a relation");
                                let pair = &topo.pairs[topo.classic[r].pair];
                                let other = if pair.s == s { pair.t } else { pair.s };
                                let w_other = scaled.weights[other]
                                    [2 * topo.boundary_position(other, v).unwrap() + c];
                                let sign = pair.sign(s);
                                o_dofs.push(ld);
                                o_boundary.push(bd);
                                o_rows.push((2 * dual_row[r].unwrap() + c, sign, sign * w_other));
                            }
                        }
                    }
                }
                let mut on_boundary = vec![false; ndof];
                for &d in &boundary_dofs {
                    on_boundary[d] = true;
                }
                let i_dofs: Vec<usize> =
                    (0..ndof).filter(|&d| free[d] && !on_boundary[d]).collect();
                let mut r_dofs = i_dofs.clone();
                r_dofs.extend(&o_dofs);

                let rmap = index_map(ndof, &r_dofs);
                let imap = index_map(ndof, &i_dofs);
                let cmap = index_map(ndof, &c_dofs);
                let nr = r_dofs.len();
                let nc = c_dofs.len();
                let krr_m = extract_block(&k, &rmap, &rmap, nr, nr);
                let krr = SparseCholesky::factor(&krr_m).map_err(|e| Error::Subdomain {
                    subdomain: s,
                    reason: format!("K_rr not positive definite ({e})"),
                })?;
                let kii_m = extract_block(&k, &imap, &imap, i_dofs.len(), i_dofs.len());
                let kii = SparseCholesky::factor(&kii_m).map_err(|e| Error::Subdomain {
                    subdomain: s,
                    reason: format!("K_ii not positive definite ({e})"),
                })?;
                let krc = DMatrix::from(&extract_block(&k, &rmap, &cmap, nr, nc));
                let kcc = DMatrix::from(&extract_block(&k, &cmap, &cmap, nc, nc));
                let krr_inv_krc = krr.solve_columns(&krc);
                let schur_cc = &kcc - krc.transpose() * &krr_inv_krc;
                Ok(SubdomainProblem {
                    id: s,
                    nodes,
                    elements: elements[s].clone(),
                    k,
                    f,
                    free,
                    boundary_dofs,
                    i_dofs,
                    o_dofs,
                    c_dofs,
                    r_dofs,
                    o_boundary,
                    o_rows,
                    c_boundary,
                    c_global,
                    krr,
                    kii,
                    krr_inv_krc,
                    schur_cc,
                })
            })
            .collect::<Result<_>>()?;

        let nc = 2 * topo.corners.len();
        let mut kcc_star = DMatrix::zeros(nc, nc);
        for sd in &subdomains {
            for (a, &ga) in sd.c_global.iter().enumerate() {
                for (b, &gb) in sd.c_global.iter().enumerate() {
                    kcc_star[(ga, gb)] += sd.schur_cc[(a, b)];
                }
            }
        }
        let factor = if nc > 0 {
            Some(Cholesky::new(kcc_star.clone()).ok_or_else(|| {
                Error::Factorization("coarse corner matrix not positive definite".into())
            })?)
        } else {
            None
        };
        Ok(Self {
            subdomains,
            coarse: CoarseProblem { kcc_star, factor },
            n_dual: 2 * dual_relations.len(),
            dual_relations,
        })
    }

    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    /// Forward problem: local solves with reactions `λ_o(s)` on o dofs and
    /// loads `f(s)`, corners continuous through the coarse problem. Returns
    /// local displacements and corner reactions `λ_c(s)`.
    pub fn solve_l(&self, lambda_o: &[Vec<f64>], f: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let first: Vec<(Vec<f64>, Vec<f64>)> = self
            .subdomains
            .par_iter()
            .map(|sd| {
                let no = sd.o_dofs.len();
                let ni = sd.i_dofs.len();
                let mut rhs: Vec<f64> = sd.r_dofs.iter().map(|&d| f[sd.id][d]).collect();
                for k in 0..no {
                    rhs[ni + k] += lambda_o[sd.id][k];
                }
                let u1 = sd.krr.solve(&rhs);
                let mut x = vec![0.0; sd.ndof()];
                for (k, &d) in sd.r_dofs.iter().enumerate() {
                    x[d] = u1[k];
                }
                let kx = spmv(&sd.k, &x);
                let g: Vec<f64> = sd.c_dofs.iter().map(|&d| f[sd.id][d] - kx[d]).collect();
                (u1, g)
            })
            .collect();
        let mut g = vec![0.0; self.coarse.dim()];
        for (sd, (_, gs)) in self.subdomains.iter().zip(&first) {
            for (k, &gc) in sd.c_global.iter().enumerate() {
                g[gc] += gs[k];
            }
        }
        let uc = self.coarse.solve(&g);
        self.subdomains
            .par_iter()
            .zip(first)
            .map(|(sd, (u1, _))| {
                let ucs =
                    DVector::from_iterator(sd.c_dofs.len(), sd.c_global.iter().map(|&gc| uc[gc]));
                let u3 = &sd.krr_inv_krc * &ucs;
                let mut u = vec![0.0; sd.ndof()];
                for (k, &d) in sd.r_dofs.iter().enumerate() {
                    u[d] = u1[k] - u3[k];
                }
                for (k, &d) in sd.c_dofs.iter().enumerate() {
                    u[d] = ucs[k];
                }
                let ku = spmv(&sd.k, &u);
                let lc = sd.c_dofs.iter().map(|&d| ku[d] - f[sd.id][d]).collect();
                (u, lc)
            })
            .unzip()
    }

    /// Dirichlet preconditioner: prescribes `u_o(s)` on o dofs and zero on
    /// corners, relaxes the interior. Returns reactions on `Γ(s)` and the field.
    pub fn solve_s(&self, u_o: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        self.subdomains
            .par_iter()
            .map(|sd| {
                let mut du = vec![0.0; sd.ndof()];
                for (k, &d) in sd.o_dofs.iter().enumerate() {
                    du[d] = u_o[sd.id][k];
                }
                let kx = spmv(&sd.k, &du);
                let rhs: Vec<f64> = sd.i_dofs.iter().map(|&d| -kx[d]).collect();
                let ui = sd.kii.solve(&rhs);
                for (k, &d) in sd.i_dofs.iter().enumerate() {
                    du[d] = ui[k];
                }
                let kdu = spmv(&sd.k, &du);
                let dl = sd.boundary_dofs.iter().map(|&d| kdu[d]).collect();
                (dl, du)
            })
            .unzip()
    }

    fn o_part(&self, u: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.subdomains
            .iter()
            .map(|sd| sd.o_dofs.iter().map(|&d| u[sd.id][d]).collect())
            .collect()
    }

    /// `Σ_s B_o(s) x_o(s)` with the signed or scaled operator.
    fn assemble_dual(&self, x_o: &[Vec<f64>], scaled: bool) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dual];
        for sd in &self.subdomains {
            for (k, &(row, sign, w)) in sd.o_rows.iter().enumerate() {
                out[row] += if scaled { w } else { sign } * x_o[sd.id][k];
            }
        }
        out
    }

    fn distribute_dual(&self, y: &[f64], scaled: bool) -> Vec<Vec<f64>> {
        self.subdomains
            .iter()
            .map(|sd| {
                if scaled {
                    sd.dual_to_o_scaled(y)
                } else {
                    sd.dual_to_o(y)
                }
            })
            .collect()
    }

    fn precondition(&self, r: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let du_o = self.distribute_dual(r, true);
        let (dl, du) = self.solve_s(&du_o);
        let dl_o: Vec<Vec<f64>> = self
            .subdomains
            .iter()
            .map(|sd| sd.o_boundary.iter().map(|&b| dl[sd.id][b]).collect())
            .collect();
        (self.assemble_dual(&dl_o, true), dl, du)
    }

    fn loads(&self) -> Vec<Vec<f64>> {
        self.subdomains.iter().map(|sd| sd.f.clone()).collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn state(
        &self,
        iteration: usize,
        lambda: &[f64],
        r: &[f64],
        z: &[f64],
        u_n: &[Vec<f64>],
        lambda_c: &[Vec<f64>],
        dl: Vec<Vec<f64>>,
        du: Vec<Vec<f64>>,
    ) -> IterationState {
        let lo = self.distribute_dual(lambda, false);
        let lambda_n: Vec<Vec<f64>> = self
            .subdomains
            .iter()
            .map(|sd| sd.boundary_vector(&lo[sd.id], &lambda_c[sd.id]))
            .collect();
        let u_d = u_n
            .iter()
            .zip(&du)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        let lambda_d = lambda_n
            .iter()
            .zip(&dl)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        IterationState {
            iteration,
            lambda_o: lambda.to_vec(),
            r: r.to_vec(),
            z: z.to_vec(),
            u_n: u_n.to_vec(),
            u_d,
            lambda_n,
            lambda_d,
            delta_lambda: dl,
            delta_u: du,
            rz: dot(r, z),
        }
    }
}

/// Preconditioned conjugate gradient on `Λ_o`, starting from zero. The
/// observer sees every iterate, including iteration 0.
pub fn fetidp_solve<F>(
    problem: &FetiProblem,
    settings: &FetiSettings,
    mut observer: F,
) -> Result<FetiSolution>
where
    F: FnMut(&IterationState) -> Result<()>,
{
    let nsd = problem.n_subdomains();
    let mut lambda = vec![0.0; problem.n_dual];
    let zero_o: Vec<Vec<f64>> = problem
        .subdomains
        .iter()
        .map(|sd| vec![0.0; sd.o_dofs.len()])
        .collect();
    let (mut u_n, mut lambda_c) = problem.solve_l(&zero_o, &problem.loads());
    let mut r = problem.assemble_dual(&problem.o_part(&u_n), false);
    let (mut z, dl, du) = problem.precondition(&r);
    let mut state = problem.state(0, &lambda, &r, &z, &u_n, &lambda_c, dl, du);
    observer(&state)?;
    let mut history = vec![state.rz];
    let eps = match settings.tolerance {
        Tolerance::Relative(f) => f * state.rz.max(0.0).sqrt(),
        Tolerance::Absolute(e) => e,
    };
    let mut w = z.clone();
    let zero_f: Vec<Vec<f64>> = problem
        .subdomains
        .iter()
        .map(|sd| vec![0.0; sd.ndof()])
        .collect();
    let mut iteration = 0;
    while state.rz.max(0.0).sqrt() > eps && problem.n_dual > 0 {
        if iteration == settings.max_iter {
            return Ok(FetiSolution {
                state,
                history,
                converged: false,
                tolerance: eps,
            });
        }
        iteration += 1;
        let w_o = problem.distribute_dual(&w, false);
        let (v, mu_c) = problem.solve_l(&w_o, &zero_f);
        let q = problem.assemble_dual(&problem.o_part(&v), false);
        let qw = dot(&q, &w);
        if !(qw > 0.0) {
            return Err(Error::Breakdown {
                iteration,
                value: qw,
            });
        }
        let alpha = state.rz / qw;
        for (l, wi) in lambda.iter_mut().zip(&w) {
            *l -= alpha * wi;
        }
        for s in 0..nsd {
            for (a, b) in u_n[s].iter_mut().zip(&v[s]) {
                *a -= alpha * b;
            }
            for (a, b) in lambda_c[s].iter_mut().zip(&mu_c[s]) {
                *a -= alpha * b;
            }
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= alpha * qi;
        }
        let (z_new, dl, du) = problem.precondition(&r);
        z = z_new;
        let beta = dot(&q, &z) / qw;
        for (wi, zi) in w.iter_mut().zip(&z) {
            *wi = zi - beta * *wi;
        }
        state = problem.state(iteration, &lambda, &r, &z, &u_n, &lambda_c, dl, du);
        observer(&state)?;
        history.push(state.rz);
    }
    Ok(FetiSolution {
        state,
        history,
        converged: true,
        tolerance: eps,
    })
}

/// Runs [`fetidp_solve`] and keeps every iterate.
pub fn fetidp_states(
    problem: &FetiProblem,
    settings: &FetiSettings,
) -> Result<(FetiSolution, Vec<IterationState>)> {
    let mut states = Vec::new();
    let sol = fetidp_solve(problem, settings, |s| {
        states.push(s.clone());
        Ok(())
    })?;
    Ok((sol, states))
}

/// `rᵀz`, rejecting values that are negative beyond round-off.
pub fn algebraic_error_term(state: &IterationState) -> Result<f64> {
    let scale = norm2(&state.r) * norm2(&state.z);
    if state.rz < -1e-12 * scale.max(1.0) {
        return Err(Error::NegativeAlgebraicTerm(state.rz));
    }
    Ok(state.rz.max(0.0))
}

/// Scatters local fields onto global nodes, averaging shared values.
pub fn to_global(problem: &FetiProblem, n_nodes: usize, local: &[Vec<f64>]) -> Vec<f64> {
    let mut sum = vec![0.0; 2 * n_nodes];
    let mut count = vec![0.0; 2 * n_nodes];
    for sd in &problem.subdomains {
        for (k, &v) in sd.nodes.iter().enumerate() {
            for c in 0..2 {
                sum[2 * v + c] += local[sd.id][2 * k + c];
                count[2 * v + c] += 1.0;
            }
        }
    }
    sum.iter().zip(&count).map(|(s, c)| s / c).collect()
}
