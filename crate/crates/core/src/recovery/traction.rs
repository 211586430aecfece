//! Piecewise-linear interface tractions `g_F` whose nodal moments equal `Λ_F`.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::star_patch::EdgeDensity;
use crate::error::{Error, Result};
use crate::mesh::{InterfaceTopology, Mesh, Partition};

/// Nodal values of `g_F` on one face pair, as the traction on the lower subdomain.
/// Dirichlet endpoints carry zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTraction {
    pub pair: usize,
    pub values: HashMap<usize, [f64; 2]>,
}

/// Solves the interface mass system `M g = Λ_F` pair by pair.
pub fn traction_representation(
    mesh: &Mesh,
    topo: &InterfaceTopology,
    lambda_f: &[f64],
) -> Result<Vec<PairTraction>> {
    let mut rel_of: HashMap<(usize, usize), usize> = HashMap::new();
    for (r, rel) in topo.face.iter().enumerate() {
        rel_of.insert((rel.pair, rel.node), r);
    }
    let mut out = Vec::new();
    for (p, pair) in topo.pairs.iter().enumerate() {
        if !pair.is_face() {
            continue;
        }
        if let Some(&v) = pair
            .nodes
            .iter()
            .find(|v| pair.face_nodes.binary_search(v).is_err())
        {
            return Err(Error::Admissibility(format!(
                "pair ({}, {}) shares node {v} away from its common edges",
                pair.s, pair.t
            )));
        }
        let idx: HashMap<usize, usize> = pair
            .face_nodes
            .iter()
            .enumerate()
            .map(|(k, &v)| (v, k))
            .collect();
        let n = pair.face_nodes.len();
        let mut m = DMatrix::zeros(n, n);
        for &edge in &pair.edges {
            let len = mesh.edge_length(edge);
            if len <= 0.0 {
                return Err(Error::ZeroLengthSegment(edge));
            }
            let [a, b] = mesh.edges[edge].nodes;
            let (ia, ib) = (idx.get(&a), idx.get(&b));
            if let Some(&i) = ia {
                m[(i, i)] += len / 3.0;
            }
            if let Some(&j) = ib {
                m[(j, j)] += len / 3.0;
            }
            if let (Some(&i), Some(&j)) = (ia, ib) {
                m[(i, j)] += len / 6.0;
                m[(j, i)] += len / 6.0;
            }
        }
        let chol = Cholesky::new(m)
            .ok_or_else(|| Error::Factorization(format!("interface mass of pair {p}")))?;
        let mut values: HashMap<usize, [f64; 2]> = HashMap::new();
        for c in 0..2 {
            let rhs = DVector::from_iterator(
                n,
                pair.face_nodes
                    .iter()
                    .map(|&v| lambda_f[2 * rel_of[&(p, v)] + c]),
            );
            let g = chol.solve(&rhs);
            for (k, &v) in pair.face_nodes.iter().enumerate() {
                values.entry(v).or_insert([0.0; 2])[c] = g[k];
            }
        }
        out.push(PairTraction { pair: p, values });
    }
    Ok(out)
}

/// Densities of `g_F` on every interface edge, per subdomain, as tractions on
/// that subdomain's element.
pub fn interface_densities(
    mesh: &Mesh,
    partition: &Partition,
    topo: &InterfaceTopology,
    tractions: &[PairTraction],
) -> Vec<HashMap<usize, EdgeDensity>> {
    let mut out = vec![HashMap::new(); partition.count];
    for pt in tractions {
        let pair = &topo.pairs[pt.pair];
        for &edge in &pair.edges {
            let at = |v: usize| pt.values.get(&v).copied().unwrap_or([0.0; 2]);
            let [a, b] = mesh.edges[edge].nodes;
            let d = [at(a), at(b)];
            out[pair.s].insert(edge, d);
            out[pair.t].insert(edge, d.map(|x| x.map(|v| -v)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{
        build_interface_topology, default_inclusions, generate_benchmark_mesh,
        partition_structured, PartitionScheme,
    };
    use crate::recovery::star_patch::density_moment;

    #[test]
    fn moments_reproduce_interaction() {
        let mesh = generate_benchmark_mesh(12, 1.0, &default_inclusions(1.0)).unwrap();
        let part = partition_structured(&mesh, PartitionScheme::Grid3x3).unwrap();
        let topo = build_interface_topology(&mesh, &part);
        let lambda_f: Vec<f64> = (0..2 * topo.face.len())
            .map(|i| ((i * 37 % 11) as f64) - 5.0)
            .collect();
        let g = traction_representation(&mesh, &topo, &lambda_f).unwrap();
        let dens = interface_densities(&mesh, &part, &topo, &g);
        for (r, rel) in topo.face.iter().enumerate() {
            let pair = &topo.pairs[rel.pair];
            let mut m = [0.0; 2];
            for &edge in &pair.edges {
                let ed = &mesh.edges[edge];
                if ed.nodes.contains(&rel.node) {
                    let mm = density_moment(
                        mesh.edge_length(edge),
                        &dens[pair.s][&edge],
                        ed.nodes[0] == rel.node,
                    );
                    m[0] += mm[0];
                    m[1] += mm[1];
                }
            }
            for c in 0..2 {
                assert!((m[c] - lambda_f[2 * r + c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_interaction_gives_constant_traction() {
        // Λ_F = ∫ t φ_i for constant t on a straight interface away from Dirichlet nodes
        let mesh = generate_benchmark_mesh(12, 1.0, &default_inclusions(1.0)).unwrap();
        let part = partition_structured(&mesh, PartitionScheme::Inclusions5).unwrap();
        let topo = build_interface_topology(&mesh, &part);
        let t = [0.7, -1.3];
        let mut lambda_f = vec![0.0; 2 * topo.face.len()];
        for (r, rel) in topo.face.iter().enumerate() {
            for &edge in &topo.pairs[rel.pair].edges {
                if mesh.edges[edge].nodes.contains(&rel.node) {
                    for c in 0..2 {
                        lambda_f[2 * r + c] += 0.5 * mesh.edge_length(edge) * t[c];
                    }
                }
            }
        }
        for pt in traction_representation(&mesh, &topo, &lambda_f).unwrap() {
            for v in pt.values.values() {
                assert!((v[0] - t[0]).abs() < 1e-12 && (v[1] - t[1]).abs() < 1e-12);
            }
        }
    }
}
