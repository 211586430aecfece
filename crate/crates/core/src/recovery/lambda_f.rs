//! Interface interaction `Λ_F` on face relations reproducing balanced nodal
//! reactions, made unique by a weighted distance to a reference.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::star_patch::{mean_traction, EetMode};
use crate::elasticity::MaterialField;
use crate::error::{Error, Result};
use crate::interface_ops::CyclicKernelBasis;
use crate::linalg::pinv;
use crate::mesh::{InterfaceTopology, Mesh, Partition};

/// Choice of `P` and `Λ_F¹` at multiple points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultipointMode {
    /// `P = I`, `Λ_F¹ = 0`: minimum-norm interaction.
    Off,
    /// `P = I`, `Λ_F¹` from the arithmetic mean of the two sides.
    IdentityP,
    /// `P` and `Λ_F¹` from modulus-weighted means.
    WeightedP,
}

/// `Λ_F` with the weights and reference it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceInteraction {
    pub lambda_f: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda1: Vec<f64>,
}

/// Face relations grouped by node.
fn relations_by_node(topo: &InterfaceTopology) -> BTreeMap<usize, Vec<usize>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (r, rel) in topo.face.iter().enumerate() {
        out.entry(rel.node).or_default().push(r);
    }
    out
}

/// Nodal reaction of subdomain `s` at `node`, component `c`.
fn reaction(
    topo: &InterfaceTopology,
    lambda_n: &[Vec<f64>],
    s: usize,
    node: usize,
    c: usize,
) -> f64 {
    lambda_n[s][2 * topo.boundary_position(s, node).expect("node on Γ(s)") + c]
}

/// Checks `Σ_s A(s) λ_N(s) = 0` node by node.
/// Residuals below `floor` are accepted whatever the reactions: those of a
/// soft region can be far below the round-off of the forces behind them.
pub fn check_balance(
    topo: &InterfaceTopology,
    lambda_n: &[Vec<f64>],
    tol: f64,
    floor: f64,
) -> Result<()> {
    let scale = lambda_n
        .iter()
        .flatten()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0_f64;
    for &v in &topo.primal_nodes {
        for c in 0..2 {
            let sum: f64 = topo.node_subdomains[v]
                .iter()
                .map(|&s| reaction(topo, lambda_n, s, v, c))
                .sum();
            worst = worst.max(sum.abs());
        }
    }
    if worst > (tol * scale).max(floor) && worst > 0.0 {
        return Err(Error::Unbalanced(worst));
    }
    Ok(())
}

/// Tolerance on the assembled reaction residual, relative to the largest reaction.
pub const BALANCE_TOL: f64 = 1e-9;

/// Node-local constraint matrix: rows are the subdomains at the node, columns its face relations.
fn node_block(topo: &InterfaceTopology, node: usize, rels: &[usize]) -> DMatrix<f64> {
    let subs = &topo.node_subdomains[node];
    let mut b = DMatrix::zeros(subs.len(), rels.len());
    for (k, &r) in rels.iter().enumerate() {
        let pair = &topo.pairs[topo.face[r].pair];
        for (row, &s) in subs.iter().enumerate() {
            if s == pair.s || s == pair.t {
                b[(row, k)] = pair.sign(s);
            }
        }
    }
    b
}

/// Minimizes `‖Λ_F − Λ_F¹‖_P` under `B_F(s)ᵀ Λ_F = λ_N(s)` with the weighted
/// pseudo-inverse, node by node.
pub fn compute_lambda_f(
    topo: &InterfaceTopology,
    lambda_n: &[Vec<f64>],
    p: &[f64],
    lambda1: &[f64],
    floor: f64,
) -> Result<InterfaceInteraction> {
    check_balance(topo, lambda_n, BALANCE_TOL, floor)?;
    let mut out = lambda1.to_vec();
    for (node, rels) in relations_by_node(topo) {
        let b = node_block(topo, node, &rels);
        for c in 0..2 {
            let rows: Vec<usize> = rels.iter().map(|&r| 2 * r + c).collect();
            let pinv_p = DMatrix::from_diagonal(&DVector::from_iterator(
                rows.len(),
                rows.iter().map(|&i| 1.0 / p[i]),
            ));
            let l1 = DVector::from_iterator(rows.len(), rows.iter().map(|&i| lambda1[i]));
            let lam = DVector::from_iterator(
                b.nrows(),
                topo.node_subdomains[node]
                    .iter()
                    .map(|&s| reaction(topo, lambda_n, s, node, c)),
            );
            let gram = &b * &pinv_p * b.transpose();
            let sol = &l1 + &pinv_p * b.transpose() * pinv(&gram) * (lam - &b * &l1);
            for (k, &i) in rows.iter().enumerate() {
                out[i] = sol[k];
            }
        }
    }
    Ok(InterfaceInteraction {
        lambda_f: out,
        p: p.to_vec(),
        lambda1: lambda1.to_vec(),
    })
}

/// Any `Λ_F⁰` with `B_F(s)ᵀ Λ_F⁰ = λ_N(s)`: relations off a spanning tree of
/// each node's face graph are set to zero, tree relations solved leaf first.
pub fn particular_lambda_f(
    topo: &InterfaceTopology,
    lambda_n: &[Vec<f64>],
    floor: f64,
) -> Result<Vec<f64>> {
    check_balance(topo, lambda_n, BALANCE_TOL, floor)?;
    let mut out = vec![0.0; 2 * topo.face.len()];
    for (node, rels) in relations_by_node(topo) {
        let subs = &topo.node_subdomains[node];
        let root = subs[0];
        let mut order = vec![root];
        let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
        let mut k = 0;
        while k < order.len() {
            let a = order[k];
            for &r in &rels {
                let pair = &topo.pairs[topo.face[r].pair];
                let b = if pair.s == a {
                    pair.t
                } else if pair.t == a {
                    pair.s
                } else {
                    continue;
                };
                if b != root && !parent.contains_key(&b) {
                    parent.insert(b, r);
                    order.push(b);
                }
            }
            k += 1;
        }
        if order.len() != subs.len() {
            return Err(Error::Admissibility(format!(
                "face relations at node {node} do not connect its subdomains"
            )));
        }
        for c in 0..2 {
            let mut res: BTreeMap<usize, f64> = subs
                .iter()
                .map(|&s| (s, reaction(topo, lambda_n, s, node, c)))
                .collect();
            for &x in order.iter().skip(1).rev() {
                let r = parent[&x];
                let pair = &topo.pairs[topo.face[r].pair];
                let value = res[&x] * pair.sign(x);
                out[2 * r + c] = value;
                let other = if pair.s == x { pair.t } else { pair.s };
                *res.get_mut(&other).unwrap() -= pair.sign(other) * value;
                res.insert(x, 0.0);
            }
        }
    }
    Ok(out)
}

/// `Λ_F = Λ_F⁰ − R (RᵀPR)⁻¹ RᵀP (Λ_F⁰ − Λ_F¹)`
pub fn correct_lambda_f(
    lambda0: &[f64],
    lambda1: &[f64],
    p: &[f64],
    kernel: &CyclicKernelBasis,
) -> Result<Vec<f64>> {
    let n = kernel.ncols();
    if n == 0 {
        return Ok(lambda0.to_vec());
    }
    let r = kernel.to_dense();
    let pr = DMatrix::from_fn(r.nrows(), n, |i, j| p[i] * r[(i, j)]);
    let gram = r.transpose() * &pr;
    let diff = DVector::from_iterator(
        lambda0.len(),
        lambda0.iter().zip(lambda1).map(|(a, b)| a - b),
    );
    let rhs = pr.transpose() * diff;
    let chol = Cholesky::new(gram).ok_or(Error::SingularKernel)?;
    let y = chol.solve(&rhs);
    let shift = kernel.apply(y.as_slice());
    Ok(lambda0.iter().zip(shift).map(|(a, b)| a - b).collect())
}

/// `P` diagonal and `Λ_F¹` on face relations from the FE stress on both
/// sides of each interface edge. `Λ_F` is the force on the lower subdomain.
pub fn multipoint_reference(
    mesh: &Mesh,
    materials: &MaterialField,
    partition: &Partition,
    topo: &InterfaceTopology,
    sigma: &[Vector3<f64>],
    mode: MultipointMode,
) -> (Vec<f64>, Vec<f64>) {
    let n = 2 * topo.face.len();
    let mut p = vec![1.0; n];
    let mut l1 = vec![0.0; n];
    if mode == MultipointMode::Off {
        return (p, l1);
    }
    let eet = if mode == MultipointMode::WeightedP {
        EetMode::Weighted
    } else {
        EetMode::Classical
    };
    for (r, rel) in topo.face.iter().enumerate() {
        let pair = &topo.pairs[rel.pair];
        let mut weight = 0.0;
        for &edge in &pair.edges {
            if !mesh.edges[edge].nodes.contains(&rel.node) {
                continue;
            }
            let [Some(a), Some(b)] = mesh.edges[edge].elements else {
                unreachable!("interface edge is interior")
            };
            let (es, et) = if partition.subdomain[a] == pair.s {
                (a, b)
            } else {
                (b, a)
            };
            let ns = mesh.outward_normal(es, edge);
            let len = mesh.edge_length(edge);
            let (t, pg) = mean_traction(
                &sigma[es],
                &sigma[et],
                ns,
                materials.young(mesh.material_id[es]),
                materials.young(mesh.material_id[et]),
                eet,
            );
            for c in 0..2 {
                l1[2 * r + c] += 0.5 * len * t[c];
            }
            weight += pg / len.sqrt();
        }
        if mode == MultipointMode::WeightedP {
            p[2 * r] = weight;
            p[2 * r + 1] = weight;
        }
    }
    (p, l1)
}

/// Production route: spanning-tree particular solution then kernel correction.
pub fn lambda_f_corrected(
    topo: &InterfaceTopology,
    kernel: &CyclicKernelBasis,
    lambda_n: &[Vec<f64>],
    p: &[f64],
    lambda1: &[f64],
    floor: f64,
) -> Result<InterfaceInteraction> {
    let l0 = particular_lambda_f(topo, lambda_n, floor)?;
    let lambda_f = correct_lambda_f(&l0, lambda1, p, kernel)?;
    Ok(InterfaceInteraction {
        lambda_f,
        p: p.to_vec(),
        lambda1: lambda1.to_vec(),
    })
}

/// `(B_F(s)ᵀ Λ_F)_s` in `Γ(s)` numbering.
pub fn distribute(topo: &InterfaceTopology, lambda_f: &[f64]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = topo
        .boundary_nodes
        .iter()
        .map(|b| vec![0.0; 2 * b.len()])
        .collect();
    for (r, rel) in topo.face.iter().enumerate() {
        let pair = &topo.pairs[rel.pair];
        for s in [pair.s, pair.t] {
            let k = topo.boundary_position(s, rel.node).unwrap();
            for c in 0..2 {
                out[s][2 * k + c] += pair.sign(s) * lambda_f[2 * r + c];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interface_ops::{build_cyclic_kernel, build_dual_faces, build_primal};
    use crate::mesh::{
        build_interface_topology, default_inclusions, generate_benchmark_mesh,
        partition_structured, PartitionScheme,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(scheme: PartitionScheme) -> (Mesh, Partition, InterfaceTopology) {
        let mesh = generate_benchmark_mesh(12, 1.0, &default_inclusions(1.0)).unwrap();
        let part = partition_structured(&mesh, scheme).unwrap();
        let topo = build_interface_topology(&mesh, &part);
        (mesh, part, topo)
    }

    /// Random reactions with zero assembled sum: `λ(s) = B(s)ᵀ y` on the classic operator.
    fn balanced(topo: &InterfaceTopology, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let b = crate::interface_ops::build_dual_classic(topo);
        let y: Vec<f64> = (0..b.nrows).map(|_| rng.gen_range(-1.0..1.0)).collect();
        b.distribute(&y)
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn both_routes_agree_and_satisfy_constraint() {
        for scheme in [PartitionScheme::Grid3x3, PartitionScheme::Strips18] {
            let (mesh, part, topo) = setup(scheme);
            let kernel = build_cyclic_kernel(&mesh, &part, &topo);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let lam = balanced(&topo, &mut rng);
            let n = 2 * topo.face.len();
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..5.0)).collect();
            let l1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = compute_lambda_f(&topo, &lam, &p, &l1, 0.0).unwrap();
            let b = lambda_f_corrected(&topo, &kernel, &lam, &p, &l1, 0.0).unwrap();
            assert!(max_diff(&a.lambda_f, &b.lambda_f) < 1e-12);
            let back = distribute(&topo, &b.lambda_f);
            for (x, y) in back.iter().zip(&lam) {
                assert!(max_diff(x, y) < 1e-12);
            }
        }
    }

    #[test]
    fn unique_without_multiple_points() {
        let (mesh, part, topo) = setup(PartitionScheme::Inclusions5);
        let kernel = build_cyclic_kernel(&mesh, &part, &topo);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lam = balanced(&topo, &mut rng);
        let n = 2 * topo.face.len();
        let a = compute_lambda_f(&topo, &lam, &vec![1.0; n], &vec![0.0; n], 0.0).unwrap();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..5.0)).collect();
        let l1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = lambda_f_corrected(&topo, &kernel, &lam, &p, &l1, 0.0).unwrap();
        assert!(max_diff(&a.lambda_f, &b.lambda_f) < 1e-13);
    }

    #[test]
    fn minimum_norm_matches_dense_least_squares() {
        let (_, _, topo) = setup(PartitionScheme::Grid3x3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lam = balanced(&topo, &mut rng);
        let n = 2 * topo.face.len();
        let a = compute_lambda_f(&topo, &lam, &vec![1.0; n], &vec![0.0; n], 0.0).unwrap();
        // whole stacked system B_Fᵀ Λ = λ solved by a global SVD pseudo-inverse
        let bf = build_dual_faces(&topo);
        let m = bf.stacked_dense().transpose();
        let rhs = DVector::from_iterator(m.nrows(), lam.iter().flatten().copied());
        let oracle = pinv(&m) * rhs;
        assert!(max_diff(&a.lambda_f, oracle.as_slice()) < 1e-12);
    }

    #[test]
    fn kernel_shift_and_fixed_point() {
        let (mesh, part, topo) = setup(PartitionScheme::Grid3x3);
        let kernel = build_cyclic_kernel(&mesh, &part, &topo);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let lam = balanced(&topo, &mut rng);
        let n = 2 * topo.face.len();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..5.0)).collect();
        let l0 = particular_lambda_f(&topo, &lam, 0.0).unwrap();
        assert_eq!(correct_lambda_f(&l0, &l0, &p, &kernel).unwrap(), l0);
        let l1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let base = correct_lambda_f(&l0, &l1, &p, &kernel).unwrap();
        let c: Vec<f64> = (0..kernel.ncols())
            .map(|_| rng.gen_range(-10.0..10.0))
            .collect();
        let shifted: Vec<f64> = l0
            .iter()
            .zip(kernel.apply(&c))
            .map(|(a, b)| a + b)
            .collect();
        assert!(
            max_diff(
                &correct_lambda_f(&shifted, &l1, &p, &kernel).unwrap(),
                &base
            ) < 1e-10
        );
    }

    #[test]
    fn unbalanced_reactions_rejected() {
        let (_, _, topo) = setup(PartitionScheme::Grid3x3);
        let a = build_primal(&topo);
        let mut lam: Vec<Vec<f64>> = a.blocks.iter().map(|b| vec![0.0; b.ncols]).collect();
        lam[0][0] = 1.0;
        let n = 2 * topo.face.len();
        assert!(matches!(
            compute_lambda_f(&topo, &lam, &vec![1.0; n], &vec![0.0; n], 0.0),
            Err(Error::Unbalanced(_))
        ));
        assert!(particular_lambda_f(&topo, &lam, 0.0).is_err());
    }
}
