use std::collections::BTreeMap;

use super::{Mesh, Partition};

/// One node-level relation between the two members of an interface pair.
/// Each relation carries two dof-level rows, one per displacement component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Relation {
    pub pair: usize,
    pub node: usize,
}

/// Interface between subdomains `s < t`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfacePair {
    pub s: usize,
    pub t: usize,
    /// Shared non-Dirichlet nodes, ascending.
    pub nodes: Vec<usize>,
    /// Mesh edges with one side in `s` and the other in `t`.
    pub edges: Vec<usize>,
    /// Non-Dirichlet endpoints of `edges`, ascending.
    pub face_nodes: Vec<usize>,
}

impl InterfacePair {
    pub fn is_face(&self) -> bool {
        !self.edges.is_empty()
    }

    /// `+1` for the lower subdomain id, `-1` for the higher.
    pub fn sign(&self, sub: usize) -> f64 {
        if sub == self.s {
            1.0
        } else {
            debug_assert_eq!(sub, self.t);
            -1.0
        }
    }
}

/// Interface sets of a partitioned mesh. All node lists are ascending;
/// dof `c` of a node at position `k` in a list has index `2k + c`.
#[derive(Debug, Clone)]
pub struct InterfaceTopology {
    pub n_subdomains: usize,
    pub dirichlet: Vec<bool>,
    /// Distinct subdomains whose closure contains each node.
    pub node_subdomains: Vec<Vec<usize>>,
    pub multiplicity: Vec<usize>,
    /// All nodes of each subdomain.
    pub subdomain_nodes: Vec<Vec<usize>>,
    /// Local boundary `Γ(s)`: non-Dirichlet nodes shared with another subdomain.
    pub boundary_nodes: Vec<Vec<usize>>,
    /// Global interface `Υ_p`.
    pub primal_nodes: Vec<usize>,
    pub pairs: Vec<InterfacePair>,
    /// Every pair sharing a node, ordered by pair then node.
    pub classic: Vec<Relation>,
    /// Pairs sharing a mesh edge only.
    pub face: Vec<Relation>,
    /// Non-Dirichlet nodes of multiplicity three or more.
    pub multiple_points: Vec<usize>,
    /// Corner nodes used as primal unknowns by FETI-DP.
    pub corners: Vec<usize>,
}

impl InterfaceTopology {
    pub fn n_primal_dofs(&self) -> usize {
        2 * self.primal_nodes.len()
    }

    pub fn primal_position(&self, node: usize) -> Option<usize> {
        self.primal_nodes.binary_search(&node).ok()
    }

    pub fn boundary_position(&self, s: usize, node: usize) -> Option<usize> {
        self.boundary_nodes[s].binary_search(&node).ok()
    }

    pub fn local_position(&self, s: usize, node: usize) -> Option<usize> {
        self.subdomain_nodes[s].binary_search(&node).ok()
    }

    pub fn is_corner(&self, node: usize) -> bool {
        self.corners.binary_search(&node).is_ok()
    }

    /// Relations of `list` touching `node`.
    pub fn relations_at<'a>(
        &'a self,
        list: &'a [Relation],
        node: usize,
    ) -> impl Iterator<Item = usize> + 'a {
        list.iter()
            .enumerate()
            .filter(move |(_, r)| r.node == node)
            .map(|(i, _)| i)
    }
}

/// Derives every interface set of `partition`. Dirichlet nodes are taken from the mesh tags.
pub fn build_interface_topology(mesh: &Mesh, partition: &Partition) -> InterfaceTopology {
    let nsd = partition.count;
    let dirichlet = mesh.dirichlet_nodes();
    let node_subdomains: Vec<Vec<usize>> = mesh
        .node_elements
        .iter()
        .map(|elems| {
            let mut subs: Vec<usize> = elems.iter().map(|&e| partition.subdomain[e]).collect();
            subs.sort_unstable();
            subs.dedup();
            subs
        })
        .collect();
    let multiplicity: Vec<usize> = node_subdomains.iter().map(Vec::len).collect();

    let mut subdomain_nodes = vec![Vec::new(); nsd];
    let mut boundary_nodes = vec![Vec::new(); nsd];
    let mut primal_nodes = Vec::new();
    let mut pair_map: BTreeMap<(usize, usize), InterfacePair> = BTreeMap::new();
    for (v, subs) in node_subdomains.iter().enumerate() {
        for &s in subs {
            subdomain_nodes[s].push(v);
        }
        if subs.len() < 2 || dirichlet[v] {
            continue;
        }
        primal_nodes.push(v);
        for (a, &s) in subs.iter().enumerate() {
            boundary_nodes[s].push(v);
            for &t in &subs[a + 1..] {
                pair_map
                    .entry((s, t))
                    .or_insert_with(|| InterfacePair {
                        s,
                        t,
                        nodes: vec![],
                        edges: vec![],
                        face_nodes: vec![],
                    })
                    .nodes
                    .push(v);
            }
        }
    }
    for (id, edge) in mesh.edges.iter().enumerate() {
        if let [Some(a), Some(b)] = edge.elements {
            let (sa, sb) = (partition.subdomain[a], partition.subdomain[b]);
            if sa != sb {
                let key = (sa.min(sb), sa.max(sb));
                let pair = pair_map.entry(key).or_insert_with(|| InterfacePair {
                    s: key.0,
                    t: key.1,
                    nodes: vec![],
                    edges: vec![],
                    face_nodes: vec![],
                });
                pair.edges.push(id);
                for v in edge.nodes {
                    if !dirichlet[v] {
                        pair.face_nodes.push(v);
                    }
                }
            }
        }
    }
    let pairs: Vec<InterfacePair> = pair_map
        .into_values()
        .filter(|p| !p.nodes.is_empty())
        .map(|mut p| {
            p.face_nodes.sort_unstable();
            p.face_nodes.dedup();
            p
        })
        .collect();

    let mut classic = Vec::new();
    let mut face = Vec::new();
    for (k, p) in pairs.iter().enumerate() {
        classic.extend(p.nodes.iter().map(|&node| Relation { pair: k, node }));
        face.extend(p.face_nodes.iter().map(|&node| Relation { pair: k, node }));
    }

    let multiple_points: Vec<usize> = primal_nodes
        .iter()
        .copied()
        .filter(|&v| multiplicity[v] >= 3)
        .collect();
    let corners = find_corners(mesh, &pairs, &multiple_points, &dirichlet);

    InterfaceTopology {
        n_subdomains: nsd,
        dirichlet,
        node_subdomains,
        multiplicity,
        subdomain_nodes,
        boundary_nodes,
        primal_nodes,
        pairs,
        classic,
        face,
        multiple_points,
        corners,
    }
}

/// Multiple points, endpoints of every interface edge chain and nodes shared
/// only through a vertex. A chain that closes on itself has no endpoint, so its
/// direction changes are used instead (at least two nodes per loop).
fn find_corners(
    mesh: &Mesh,
    pairs: &[InterfacePair],
    multiple: &[usize],
    dirichlet: &[bool],
) -> Vec<usize> {
    let mut corners: Vec<usize> = multiple.to_vec();
    for p in pairs {
        if !p.is_face() {
            corners.extend(&p.nodes);
            continue;
        }
        corners.extend(
            p.nodes
                .iter()
                .filter(|v| p.face_nodes.binary_search(v).is_err()),
        );
        let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &e in &p.edges {
            let [a, b] = mesh.edges[e].nodes;
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        let mut visited: BTreeMap<usize, bool> = adj.keys().map(|&v| (v, false)).collect();
        for &start in adj.keys() {
            if visited[&start] {
                continue;
            }
            // walk the component in chain order
            let mut component = vec![start];
            visited.insert(start, true);
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &w in &adj[&v] {
                    if !visited[&w] {
                        visited.insert(w, true);
                        component.push(w);
                        stack.push(w);
                    }
                }
            }
            let ends: Vec<usize> = component
                .iter()
                .copied()
                .filter(|v| adj[v].len() != 2)
                .collect();
            if !ends.is_empty() {
                corners.extend(ends);
                continue;
            }
            let turns: Vec<usize> = component
                .iter()
                .copied()
                .filter(|&v| {
                    let (a, b) = (mesh.nodes[adj[&v][0]], mesh.nodes[adj[&v][1]]);
                    let c = mesh.nodes[v];
                    let cross = (c[0] - a[0]) * (b[1] - c[1]) - (c[1] - a[1]) * (b[0] - c[0]);
                    cross.abs() > 1e-12 * (1.0 + c[0].abs() + c[1].abs()).powi(2)
                })
                .collect();
            if turns.len() >= 2 {
                corners.extend(turns);
            } else {
                corners.push(component[0]);
                corners.push(component[component.len() / 2]);
            }
        }
    }
    corners.retain(|&v| !dirichlet[v]);
    corners.sort_unstable();
    corners.dedup();
    corners
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{
        default_inclusions, generate_benchmark_mesh, partition_structured, PartitionScheme,
    };

    fn topo(n: usize, scheme: PartitionScheme) -> (Mesh, InterfaceTopology) {
        let mesh = generate_benchmark_mesh(n, 1.0, &default_inclusions(1.0)).unwrap();
        let part = partition_structured(&mesh, scheme).unwrap();
        let t = build_interface_topology(&mesh, &part);
        (mesh, t)
    }

    #[test]
    fn two_subdomains_one_straight_edge() {
        let mesh = generate_benchmark_mesh(4, 1.0, &[]).unwrap();
        let ids = (0..mesh.n_elements())
            .map(|e| usize::from((e / 2) % 4 >= 2))
            .collect();
        let part = Partition::new(&mesh, ids, 2).unwrap();
        let t = build_interface_topology(&mesh, &part);
        assert_eq!(t.pairs.len(), 1);
        assert_eq!(t.classic, t.face);
        // x = 0.5 line without its Dirichlet foot
        assert_eq!(t.pairs[0].nodes.len(), 4);
        assert!(t.multiple_points.is_empty());
        // the only chain endpoint off the Dirichlet edge is on the top boundary
        assert_eq!(t.corners, vec![4 * 5 + 2]);
    }

    #[test]
    fn cross_of_four_squares() {
        let mesh = generate_benchmark_mesh(4, 1.0, &[]).unwrap();
        let ids = (0..mesh.n_elements())
            .map(|e| {
                let (i, j) = ((e / 2) % 4, (e / 2) / 4);
                2 * (j / 2) + i / 2
            })
            .collect();
        let part = Partition::new(&mesh, ids, 4).unwrap();
        let t = build_interface_topology(&mesh, &part);
        let centre = 2 * 5 + 2;
        assert_eq!(t.multiplicity[centre], 4);
        assert_eq!(t.relations_at(&t.classic, centre).count(), 6);
        assert_eq!(t.relations_at(&t.face, centre).count(), 4);
        assert_eq!(t.multiple_points, vec![centre]);
    }

    #[test]
    fn grid3x3_cross_points() {
        let (_, t) = topo(36, PartitionScheme::Grid3x3);
        let m4: Vec<usize> = (0..t.multiplicity.len())
            .filter(|&v| t.multiplicity[v] == 4)
            .collect();
        assert_eq!(m4.len(), 4);
        assert_eq!(t.multiple_points, m4);
        for &v in &m4 {
            assert_eq!(t.relations_at(&t.classic, v).count(), 6);
            assert_eq!(t.relations_at(&t.face, v).count(), 4);
        }
    }

    #[test]
    fn grid3x3_primal_set_matches_brute_force() {
        let (mesh, t) = topo(36, PartitionScheme::Grid3x3);
        // interface lines x = 1/3, 2/3 and y = 1/3, 2/3, minus the bottom row
        let mut expected = Vec::new();
        for (v, p) in mesh.nodes.iter().enumerate() {
            let on =
                |x: f64| (x * 3.0 - (x * 3.0).round()).abs() < 1e-9 && x > 1e-9 && x < 1.0 - 1e-9;
            if (on(p[0]) || on(p[1])) && p[1] > 1e-9 {
                expected.push(v);
            }
        }
        assert_eq!(t.primal_nodes, expected);
        assert_eq!(t.n_primal_dofs(), 2 * expected.len());
    }

    #[test]
    fn inclusions5_has_no_multiple_points_and_closed_loops() {
        let (_, t) = topo(36, PartitionScheme::Inclusions5);
        assert!(t.multiplicity.iter().all(|&m| m < 3));
        assert_eq!(t.pairs.len(), 4);
        // each square loop contributes its four geometric corners
        assert_eq!(t.corners.len(), 16);
    }

    #[test]
    fn primal_set_is_union_of_local_boundaries() {
        for scheme in [
            PartitionScheme::Grid3x3,
            PartitionScheme::Strips18,
            PartitionScheme::Grid6x6,
        ] {
            let (_, t) = topo(36, scheme);
            let mut union: Vec<usize> = t.boundary_nodes.iter().flatten().copied().collect();
            union.sort_unstable();
            union.dedup();
            assert_eq!(union, t.primal_nodes);
            assert!(t.primal_nodes.iter().all(|&v| !t.dirichlet[v]));
            // face relations are a subset of classic relations
            assert!(t.face.iter().all(|r| t.classic.contains(r)));
        }
    }

    #[test]
    fn strips18_has_t_junctions() {
        let (_, t) = topo(36, PartitionScheme::Strips18);
        let m3 = t
            .multiple_points
            .iter()
            .filter(|&&v| t.multiplicity[v] == 3)
            .count();
        assert!(m3 > 0);
        // every non-corner interface node sits between exactly two subdomains
        for &v in &t.primal_nodes {
            if !t.is_corner(v) {
                assert_eq!(t.multiplicity[v], 2);
            }
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let (_, a) = topo(36, PartitionScheme::Strips18);
        let (_, b) = topo(36, PartitionScheme::Strips18);
        assert_eq!(a.classic, b.classic);
        assert_eq!(a.face, b.face);
        assert_eq!(a.corners, b.corners);
    }
}
