//! Primal and dual assembly operators, their scaled pseudo-inverses and the
//! cyclic kernel of the face-only dual operator.
//!
//! Boundary dofs of subdomain `s` are numbered `2k + c` where `k` is the
//! position of the node in `Γ(s)` and `c` the component. Relation rows follow
//! the same rule on the relation lists of [`InterfaceTopology`].

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{pinv, rank};
use crate::mesh::{InterfaceTopology, Mesh, Partition, Relation};

/// Sparse matrix stored as `(row, col, value)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMap<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, T)>,
}

impl<T: Copy + Into<f64>> SparseMap<T> {
    /// `M x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for &(i, j, v) in &self.entries {
            y[i] += v.into() * x[j];
        }
        y
    }

    /// `y += M x`
    pub fn apply_add(&self, x: &[f64], y: &mut [f64]) {
        for &(i, j, v) in &self.entries {
            y[i] += v.into() * x[j];
        }
    }

    /// `Mᵀ y`
    pub fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.nrows);
        let mut x = vec![0.0; self.ncols];
        for &(i, j, v) in &self.entries {
            x[j] += v.into() * y[i];
        }
        x
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v.into();
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Primal,
    DualClassic,
    DualFace,
}

/// Per-subdomain integer blocks of `A`, `B` or `B_F`.
#[derive(Debug, Clone)]
pub struct AssemblyOperator {
    pub kind: OperatorKind,
    pub nrows: usize,
    pub blocks: Vec<SparseMap<i8>>,
}

impl AssemblyOperator {
    /// `Σ_s M(s) x(s)`
    pub fn assemble(&self, local: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        for (b, x) in self.blocks.iter().zip(local) {
            b.apply_add(x, &mut out);
        }
        out
    }

    /// `(M(s)ᵀ y)_s`
    pub fn distribute(&self, y: &[f64]) -> Vec<Vec<f64>> {
        self.blocks.iter().map(|b| b.apply_t(y)).collect()
    }

    /// Rows stacked against the concatenation of all local boundaries.
    pub fn stacked_dense(&self) -> DMatrix<f64> {
        let ncols: usize = self.blocks.iter().map(|b| b.ncols).sum();
        let mut m = DMatrix::zeros(self.nrows, ncols);
        let mut off = 0;
        for b in &self.blocks {
            for &(i, j, v) in &b.entries {
                m[(i, off + j)] += f64::from(v);
            }
            off += b.ncols;
        }
        m
    }
}

/// `Σ_s M(s) N(s)ᵀ` in exact integer arithmetic, nonzero entries only.
pub fn integer_product_sum(
    m: &AssemblyOperator,
    n: &AssemblyOperator,
) -> BTreeMap<(usize, usize), i64> {
    let mut out: BTreeMap<(usize, usize), i64> = BTreeMap::new();
    for (bm, bn) in m.blocks.iter().zip(&n.blocks) {
        let mut by_col: BTreeMap<usize, Vec<(usize, i8)>> = BTreeMap::new();
        for &(i, j, v) in &bn.entries {
            by_col.entry(j).or_default().push((i, v));
        }
        for &(i, j, v) in &bm.entries {
            for &(k, w) in by_col.get(&j).map(Vec::as_slice).unwrap_or(&[]) {
                *out.entry((i, k)).or_insert(0) += i64::from(v) * i64::from(w);
            }
        }
    }
    out.retain(|_, v| *v != 0);
    out
}

fn boundary_width(topo: &InterfaceTopology, s: usize) -> usize {
    2 * topo.boundary_nodes[s].len()
}

/// Primal assembly operator `A`: rows on `Υ_p`, one unit entry per column.
pub fn build_primal(topo: &InterfaceTopology) -> AssemblyOperator {
    let blocks = (0..topo.n_subdomains)
        .map(|s| {
            let mut entries = Vec::new();
            for (k, &v) in topo.boundary_nodes[s].iter().enumerate() {
                let p = topo
                    .primal_position(v)
                    .expect("boundary node is on the interface");
                for c in 0..2 {
                    entries.push((2 * p + c, 2 * k + c, 1i8));
                }
            }
            SparseMap {
                nrows: topo.n_primal_dofs(),
                ncols: boundary_width(topo, s),
                entries,
            }
        })
        .collect();
    AssemblyOperator {
        kind: OperatorKind::Primal,
        nrows: topo.n_primal_dofs(),
        blocks,
    }
}

fn build_dual(
    topo: &InterfaceTopology,
    relations: &[Relation],
    kind: OperatorKind,
) -> AssemblyOperator {
    let nrows = 2 * relations.len();
    let mut entries = vec![Vec::new(); topo.n_subdomains];
    for (r, rel) in relations.iter().enumerate() {
        let pair = &topo.pairs[rel.pair];
        for (sub, sign) in [(pair.s, 1i8), (pair.t, -1i8)] {
            let k = topo
                .boundary_position(sub, rel.node)
                .expect("relation node on both boundaries");
            for c in 0..2 {
                entries[sub].push((2 * r + c, 2 * k + c, sign));
            }
        }
    }
    let blocks = entries
        .into_iter()
        .enumerate()
        .map(|(s, e)| SparseMap {
            nrows,
            ncols: boundary_width(topo, s),
            entries: e,
        })
        .collect();
    AssemblyOperator {
        kind,
        nrows,
        blocks,
    }
}

/// Classic dual operator `B`: one relation per pair sharing a node.
pub fn build_dual_classic(topo: &InterfaceTopology) -> AssemblyOperator {
    build_dual(topo, &topo.classic, OperatorKind::DualClassic)
}

/// Face-only dual operator `B_F`: relations of pairs sharing a mesh edge.
pub fn build_dual_faces(topo: &InterfaceTopology) -> AssemblyOperator {
    build_dual(topo, &topo.face, OperatorKind::DualFace)
}

/// Basis of `ker(B_Fᵀ)`: columns are signed cycles of face relations around a
/// node, one per independent cycle and component.
#[derive(Debug, Clone)]
pub struct CyclicKernelBasis {
    pub nrows: usize,
    /// Each column as `(row, ±1)` entries.
    pub columns: Vec<Vec<(usize, i8)>>,
    /// Node carrying each column.
    pub nodes: Vec<usize>,
}

impl CyclicKernelBasis {
    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.columns.len());
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, v) in col {
                m[(i, j)] = f64::from(v);
            }
        }
        m
    }

    /// `R c`
    pub fn apply(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        for (col, &cj) in self.columns.iter().zip(c) {
            for &(i, v) in col {
                out[i] += f64::from(v) * cj;
            }
        }
        out
    }

    /// `Rᵀ y`
    pub fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .map(|col| col.iter().map(|&(i, v)| f64::from(v) * y[i]).sum())
            .collect()
    }
}

/// Mean position of the elements of `s` touching `node`, as an angle around it.
fn subdomain_angle(mesh: &Mesh, partition: &Partition, node: usize, s: usize) -> f64 {
    let (mut cx, mut cy, mut k) = (0.0, 0.0, 0.0);
    for &e in &mesh.node_elements[node] {
        if partition.subdomain[e] == s {
            let v = mesh.vertices(e);
            cx += (v[0][0] + v[1][0] + v[2][0]) / 3.0;
            cy += (v[0][1] + v[1][1] + v[2][1]) / 3.0;
            k += 1.0;
        }
    }
    let p = mesh.nodes[node];
    (cy / k - p[1]).atan2(cx / k - p[0])
}

/// Signed relation cycle through subdomains `cycle[0] → cycle[1] → … → cycle[0]`.
fn cycle_vector(
    topo: &InterfaceTopology,
    rels: &[usize],
    cycle: &[usize],
) -> Option<Vec<(usize, i8)>> {
    let mut out = Vec::with_capacity(cycle.len());
    for k in 0..cycle.len() {
        let (a, b) = (cycle[k], cycle[(k + 1) % cycle.len()]);
        let r = *rels.iter().find(|&&r| {
            let p = &topo.pairs[topo.face[r].pair];
            (p.s, p.t) == (a.min(b), a.max(b))
        })?;
        out.push((r, if a < b { 1 } else { -1 }));
    }
    Some(out)
}

/// Builds `R⟳`. A node whose face relations close a single loop through all
/// its subdomains gets that loop ordered counterclockwise; other graphs use
/// fundamental cycles of a spanning tree.
pub fn build_cyclic_kernel(
    mesh: &Mesh,
    partition: &Partition,
    topo: &InterfaceTopology,
) -> CyclicKernelBasis {
    let mut by_node: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (r, rel) in topo.face.iter().enumerate() {
        by_node.entry(rel.node).or_default().push(r);
    }
    let mut columns = Vec::new();
    let mut nodes = Vec::new();
    for (&node, rels) in &by_node {
        let subs = &topo.node_subdomains[node];
        if rels.len() < subs.len() {
            // a forest has no cycle
            continue;
        }
        let mut cycles: Vec<Vec<(usize, i8)>> = Vec::new();
        let mut ordered = subs.clone();
        let angles: Vec<f64> = ordered
            .iter()
            .map(|&s| subdomain_angle(mesh, partition, node, s))
            .collect();
        let mut idx: Vec<usize> = (0..ordered.len()).collect();
        idx.sort_by(|&a, &b| angles[a].total_cmp(&angles[b]));
        ordered = idx.iter().map(|&i| subs[i]).collect();
        match (rels.len() == subs.len())
            .then(|| cycle_vector(topo, rels, &ordered))
            .flatten()
        {
            Some(c) => cycles.push(c),
            None => cycles.extend(fundamental_cycles(topo, rels, subs)),
        }
        for cyc in cycles {
            for comp in 0..2 {
                columns.push(cyc.iter().map(|&(r, v)| (2 * r + comp, v)).collect());
                nodes.push(node);
            }
        }
    }
    CyclicKernelBasis {
        nrows: 2 * topo.face.len(),
        columns,
        nodes,
    }
}

fn fundamental_cycles(
    topo: &InterfaceTopology,
    rels: &[usize],
    subs: &[usize],
) -> Vec<Vec<(usize, i8)>> {
    let ends = |r: usize| {
        let p = &topo.pairs[topo.face[r].pair];
        (p.s, p.t)
    };
    // breadth-first spanning forest
    let mut parent: BTreeMap<usize, Option<(usize, usize)>> = BTreeMap::new();
    let mut depth: BTreeMap<usize, usize> = BTreeMap::new();
    let mut tree = vec![false; rels.len()];
    for &root in subs {
        if parent.contains_key(&root) {
            continue;
        }
        parent.insert(root, None);
        depth.insert(root, 0);
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(a) = queue.pop_front() {
            for (k, &r) in rels.iter().enumerate() {
                let (s, t) = ends(r);
                let b = if s == a {
                    t
                } else if t == a {
                    s
                } else {
                    continue;
                };
                if let std::collections::btree_map::Entry::Vacant(slot) = parent.entry(b) {
                    slot.insert(Some((a, r)));
                    depth.insert(b, depth[&a] + 1);
                    tree[k] = true;
                    queue.push_back(b);
                }
            }
        }
    }
    let mut out = Vec::new();
    for (k, &r) in rels.iter().enumerate() {
        if tree[k] {
            continue;
        }
        // cycle: a → b along r, then b back to a through the tree
        let (a, b) = ends(r);
        let mut up_b = vec![b];
        let mut up_a = vec![a];
        let (mut x, mut y) = (b, a);
        while depth[&x] > depth[&y] {
            x = parent[&x].unwrap().0;
            up_b.push(x);
        }
        while depth[&y] > depth[&x] {
            y = parent[&y].unwrap().0;
            up_a.push(y);
        }
        while x != y {
            x = parent[&x].unwrap().0;
            y = parent[&y].unwrap().0;
            up_b.push(x);
            up_a.push(y);
        }
        up_a.pop();
        up_a.reverse();
        let mut cycle = vec![a];
        cycle.extend(up_b);
        cycle.extend(up_a.into_iter().filter(|&v| v != a));
        if let Some(c) = cycle_vector(topo, rels, &cycle) {
            out.push(c);
        }
    }
    out
}

/// Outcome of [`verify_space_split`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceSplitReport {
    /// Total number of stacked boundary dofs.
    pub gamma_total: usize,
    pub rank_a: usize,
    pub rank_b: usize,
    /// Relative residual of the reconstruction `v = Aᵀx + Bᵀy`.
    pub residual: f64,
    /// `|⟨Aᵀx, Bᵀy⟩| / ‖v‖²`
    pub orthogonality: f64,
}

/// Checks `R^Γ = Range(Aᵀ) ⊕ Range(Bᵀ)` orthogonally, node by node, and
/// decomposes the stacked vector `v` (one block per subdomain).
pub fn verify_space_split(
    topo: &InterfaceTopology,
    a: &AssemblyOperator,
    b: &AssemblyOperator,
    v: &[Vec<f64>],
) -> SpaceSplitReport {
    let gamma_total: usize = a.blocks.iter().map(|blk| blk.ncols).sum();
    let relations = match b.kind {
        OperatorKind::DualFace => &topo.face,
        _ => &topo.classic,
    };
    let mut rel_by_node: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (r, rel) in relations.iter().enumerate() {
        rel_by_node.entry(rel.node).or_default().push(r);
    }
    let (mut rank_a, mut rank_b) = (0, 0);
    let (mut res2, mut norm2, mut inner) = (0.0, 0.0, 0.0);
    for &node in &topo.primal_nodes {
        let subs = &topo.node_subdomains[node];
        let p = topo.primal_position(node).unwrap();
        let rels = rel_by_node.get(&node).cloned().unwrap_or_default();
        for c in 0..2 {
            // stacked dofs of this node and component, one per subdomain
            let cols: Vec<(usize, usize)> = subs
                .iter()
                .map(|&s| (s, 2 * topo.boundary_position(s, node).unwrap() + c))
                .collect();
            let col_of = |s: usize, j: usize| cols.iter().position(|&x| x == (s, j));
            let m = cols.len();
            let mut at = DMatrix::zeros(m, 1);
            for (s, blk) in a.blocks.iter().enumerate() {
                for &(i, j, val) in &blk.entries {
                    if i == 2 * p + c {
                        at[(col_of(s, j).unwrap(), 0)] = f64::from(val);
                    }
                }
            }
            let mut bt = DMatrix::zeros(m, rels.len());
            for (s, blk) in b.blocks.iter().enumerate() {
                for &(i, j, val) in &blk.entries {
                    if i % 2 == c {
                        if let Some(k) = rels.iter().position(|&r| 2 * r + c == i) {
                            bt[(col_of(s, j).unwrap(), k)] = f64::from(val);
                        }
                    }
                }
            }
            rank_a += rank(&at);
            rank_b += rank(&bt);
            let local = nalgebra::DVector::from_iterator(m, cols.iter().map(|&(s, j)| v[s][j]));
            let x = pinv(&at) * &local;
            let y = pinv(&bt) * &local;
            let pa = &at * x;
            let pb = &bt * y;
            res2 += (&local - &pa - &pb).norm_squared();
            norm2 += local.norm_squared();
            inner += pa.dot(&pb);
        }
    }
    let scale = norm2.max(f64::MIN_POSITIVE);
    SpaceSplitReport {
        gamma_total,
        rank_a,
        rank_b,
        residual: (res2 / scale).sqrt(),
        orthogonality: inner.abs() / scale,
    }
}

/// Interface weights for the scaled operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    Multiplicity,
    #[default]
    Stiffness,
}

/// `Ã(s)` and `B̃(s)` with per-dof weights summing to one across subdomains.
#[derive(Debug, Clone)]
pub struct ScaledAssemblyOperator {
    pub a_tilde: Vec<SparseMap<f64>>,
    pub b_tilde: Vec<SparseMap<f64>>,
    /// Weight of each local boundary dof.
    pub weights: Vec<Vec<f64>>,
}

/// Builds the scaled operators. For stiffness scaling `stiffness_diag[s]`
/// holds `K(s)` diagonal entries in the local boundary numbering of `s`.
pub fn build_scaled(
    topo: &InterfaceTopology,
    a: &AssemblyOperator,
    b: &AssemblyOperator,
    scaling: Scaling,
    stiffness_diag: Option<&[Vec<f64>]>,
) -> Result<ScaledAssemblyOperator> {
    let nsd = topo.n_subdomains;
    let raw: Vec<Vec<f64>> = match scaling {
        Scaling::Multiplicity => (0..nsd)
            .map(|s| vec![1.0; 2 * topo.boundary_nodes[s].len()])
            .collect(),
        Scaling::Stiffness => {
            let d = stiffness_diag
                .ok_or_else(|| Error::Config("stiffness scaling needs K diagonals".into()))?;
            if d.iter().flatten().any(|&x| !(x > 0.0)) {
                return Err(Error::Config("stiffness diagonal must be positive".into()));
            }
            d.to_vec()
        }
    };
    let sum = a.assemble(&raw);
    let weights: Vec<Vec<f64>> = (0..nsd)
        .map(|s| {
            let mut w = vec![0.0; raw[s].len()];
            for &(i, j, _) in &a.blocks[s].entries {
                w[j] = raw[s][j] / sum[i];
            }
            w
        })
        .collect();
    let a_tilde = a
        .blocks
        .iter()
        .enumerate()
        .map(|(s, blk)| SparseMap {
            nrows: blk.nrows,
            ncols: blk.ncols,
            entries: blk
                .entries
                .iter()
                .map(|&(i, j, _)| (i, j, weights[s][j]))
                .collect(),
        })
        .collect();

    let relations = match b.kind {
        OperatorKind::DualFace => &topo.face,
        _ => &topo.classic,
    };
    let mut b_entries = vec![Vec::new(); nsd];
    for (r, rel) in relations.iter().enumerate() {
        let pair = &topo.pairs[rel.pair];
        let ks = topo.boundary_position(pair.s, rel.node).unwrap();
        let kt = topo.boundary_position(pair.t, rel.node).unwrap();
        for c in 0..2 {
            b_entries[pair.s].push((2 * r + c, 2 * ks + c, weights[pair.t][2 * kt + c]));
            b_entries[pair.t].push((2 * r + c, 2 * kt + c, -weights[pair.s][2 * ks + c]));
        }
    }
    let b_tilde = b_entries
        .into_iter()
        .enumerate()
        .map(|(s, e)| SparseMap {
            nrows: b.nrows,
            ncols: b.blocks[s].ncols,
            entries: e,
        })
        .collect();
    Ok(ScaledAssemblyOperator {
        a_tilde,
        b_tilde,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{
        build_interface_topology, default_inclusions, generate_benchmark_mesh,
        partition_structured, PartitionScheme,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Case {
        mesh: Mesh,
        part: Partition,
        topo: InterfaceTopology,
    }

    fn case(n: usize, scheme: PartitionScheme) -> Case {
        let mesh = generate_benchmark_mesh(n, 1.0, &default_inclusions(1.0)).unwrap();
        let part = partition_structured(&mesh, scheme).unwrap();
        let topo = build_interface_topology(&mesh, &part);
        Case { mesh, part, topo }
    }

    /// 4x4 mesh cut into four 2x2 squares: one cross point, five interface nodes off the Dirichlet edge.
    fn cross() -> Case {
        let mesh = generate_benchmark_mesh(4, 1.0, &[]).unwrap();
        let ids = (0..mesh.n_elements())
            .map(|e| {
                let (i, j) = ((e / 2) % 4, (e / 2) / 4);
                2 * (j / 2) + i / 2
            })
            .collect();
        let part = Partition::new(&mesh, ids, 4).unwrap();
        let topo = build_interface_topology(&mesh, &part);
        Case { mesh, part, topo }
    }

    #[test]
    fn primal_operator_columns() {
        let c = cross();
        let a = build_primal(&c.topo);
        for (s, blk) in a.blocks.iter().enumerate() {
            assert_eq!(blk.entries.len(), blk.ncols);
            let d = blk.to_dense();
            for j in 0..blk.ncols {
                assert_eq!(d.column(j).sum(), 1.0);
            }
            assert_eq!(rank(&d), 2 * c.topo.boundary_nodes[s].len());
        }
    }

    #[test]
    fn defining_identities_are_exact() {
        for scheme in [
            PartitionScheme::Grid3x3,
            PartitionScheme::Strips18,
            PartitionScheme::Inclusions5,
        ] {
            let c = case(12, scheme);
            let a = build_primal(&c.topo);
            assert!(integer_product_sum(&build_dual_classic(&c.topo), &a).is_empty());
            assert!(integer_product_sum(&build_dual_faces(&c.topo), &a).is_empty());
        }
    }

    #[test]
    fn two_subdomain_rows_encode_jump() {
        let mesh = generate_benchmark_mesh(4, 1.0, &[]).unwrap();
        let ids = (0..mesh.n_elements())
            .map(|e| usize::from((e / 2) % 4 >= 2))
            .collect();
        let part = Partition::new(&mesh, ids, 2).unwrap();
        let topo = build_interface_topology(&mesh, &part);
        let b = build_dual_classic(&topo);
        let bf = build_dual_faces(&topo);
        assert_eq!(b.blocks, bf.blocks);
        let u1: Vec<f64> = (0..b.blocks[0].ncols).map(|i| i as f64).collect();
        let u2: Vec<f64> = (0..b.blocks[1].ncols).map(|i| 2.0 * i as f64).collect();
        let jump = b.assemble(&[u1.clone(), u2.clone()]);
        // both share the same node ordering on a single straight interface
        for (r, j) in jump.iter().enumerate() {
            assert_eq!(*j, u1[r] - u2[r]);
        }
    }

    #[test]
    fn stacked_face_operator_has_full_column_rank_per_subdomain() {
        let c = case(12, PartitionScheme::Grid3x3);
        let bf = build_dual_faces(&c.topo);
        for (s, blk) in bf.blocks.iter().enumerate() {
            assert_eq!(rank(&blk.to_dense()), 2 * c.topo.boundary_nodes[s].len());
        }
    }

    #[test]
    fn cross_point_cycle_signs() {
        let c = cross();
        let r = build_cyclic_kernel(&c.mesh, &c.part, &c.topo);
        assert_eq!(r.ncols(), 2);
        let centre = 2 * 5 + 2;
        assert!(r.nodes.iter().all(|&n| n == centre));
        // counterclockwise from subdomain 0: 0 → 1 → 3 → 2 → 0
        let signs: Vec<i8> = r.columns[0].iter().map(|&(_, v)| v).collect();
        assert_eq!(signs, vec![1, 1, -1, -1]);
        let bf = build_dual_faces(&c.topo);
        for col in 0..2 {
            let mut e = vec![0.0; 2];
            e[col] = 1.0;
            let lam = r.apply(&e);
            for v in bf.distribute(&lam) {
                assert!(v.iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn grid3x3_kernel_dimension() {
        let c = case(36, PartitionScheme::Grid3x3);
        let r = build_cyclic_kernel(&c.mesh, &c.part, &c.topo);
        assert_eq!(r.ncols(), 8);
        let bf = build_dual_faces(&c.topo);
        let stacked = bf.stacked_dense().transpose();
        let nullity = stacked.ncols() - rank(&stacked);
        assert_eq!(nullity, 8);
        assert!((&stacked * r.to_dense()).amax() == 0.0);
        assert_eq!(rank(&r.to_dense()), 8);
    }

    #[test]
    fn no_multiple_points_no_kernel() {
        let c = case(12, PartitionScheme::Inclusions5);
        assert_eq!(build_cyclic_kernel(&c.mesh, &c.part, &c.topo).ncols(), 0);
    }

    #[test]
    fn strips18_kernel_matches_nullity() {
        let c = case(12, PartitionScheme::Strips18);
        let r = build_cyclic_kernel(&c.mesh, &c.part, &c.topo);
        let stacked = build_dual_faces(&c.topo).stacked_dense().transpose();
        assert_eq!(r.ncols(), stacked.ncols() - rank(&stacked));
        assert!((&stacked * r.to_dense()).amax() == 0.0);
    }

    #[test]
    fn space_split_on_grid3x3() {
        let c = case(12, PartitionScheme::Grid3x3);
        let a = build_primal(&c.topo);
        let b = build_dual_classic(&c.topo);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<Vec<f64>> = a
            .blocks
            .iter()
            .map(|blk| (0..blk.ncols).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let rep = verify_space_split(&c.topo, &a, &b, &v);
        assert_eq!(rep.gamma_total, rep.rank_a + rep.rank_b);
        assert!(rep.residual < 1e-10);
        assert!(rep.orthogonality < 1e-12);
        // a primal vector has no dual part
        let x: Vec<f64> = (0..a.nrows).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = a.distribute(&x);
        let bv = b.assemble(&v);
        assert!(bv.iter().all(|&y| y.abs() < 1e-14));
    }

    #[test]
    fn scaled_operators_identities() {
        let c = case(12, PartitionScheme::Grid3x3);
        let a = build_primal(&c.topo);
        let b = build_dual_classic(&c.topo);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let diag: Vec<Vec<f64>> = a
            .blocks
            .iter()
            .map(|blk| (0..blk.ncols).map(|_| rng.gen_range(0.1..10.0)).collect())
            .collect();
        for (scaling, d) in [
            (Scaling::Multiplicity, None),
            (Scaling::Stiffness, Some(diag.as_slice())),
        ] {
            let sc = build_scaled(&c.topo, &a, &b, scaling, d).unwrap();
            // Σ Ã Aᵀ = I
            let mut sum = DMatrix::zeros(a.nrows, a.nrows);
            for (at, ab) in sc.a_tilde.iter().zip(&a.blocks) {
                sum += at.to_dense() * ab.to_dense().transpose();
            }
            assert!((sum - DMatrix::identity(a.nrows, a.nrows)).amax() < 1e-14);
            // Σ B B̃ᵀ B(j) = B(j)
            let mut bbt = DMatrix::zeros(b.nrows, b.nrows);
            for (bt, bb) in sc.b_tilde.iter().zip(&b.blocks) {
                bbt += bb.to_dense() * bt.to_dense().transpose();
            }
            for bj in &b.blocks {
                let d = bj.to_dense();
                assert!((&bbt * &d - &d).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn multiplicity_weight_is_half_on_faces() {
        let c = cross();
        let a = build_primal(&c.topo);
        let b = build_dual_classic(&c.topo);
        let sc = build_scaled(&c.topo, &a, &b, Scaling::Multiplicity, None).unwrap();
        let centre = 2 * 5 + 2;
        for s in 0..4 {
            for (k, &v) in c.topo.boundary_nodes[s].iter().enumerate() {
                let expect = if v == centre { 0.25 } else { 0.5 };
                assert_eq!(sc.weights[s][2 * k], expect);
            }
        }
    }
}
