//! Prolongation condition and star-patch solves for the edge traction moments.

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::elasticity::{shape_gradients, Loads, MaterialField};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh};

/// How the reference traction on an edge averages the two adjacent stresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EetMode {
    /// Arithmetic mean, unit weights.
    Classical,
    /// Compliance-weighted mean, weights `1/Y_E + 1/Y_E'`.
    Weighted,
}

/// Nodal values `[F(nodes[0]), F(nodes[1])]` of a linear traction density on an edge.
pub type EdgeDensity = [[f64; 2]; 2];

/// Mean traction `t` on an interior edge seen from `E` (normal `n` outward
/// from `E`) and the weight `p` of the edge in the patch objective.
pub fn mean_traction(
    sigma_e: &Vector3<f64>,
    sigma_o: &Vector3<f64>,
    n: [f64; 2],
    young_e: f64,
    young_o: f64,
    mode: EetMode,
) -> ([f64; 2], f64) {
    let (we, wo, p) = match mode {
        EetMode::Classical => (0.5, 0.5, 1.0),
        EetMode::Weighted => {
            let (ce, co) = (1.0 / young_e, 1.0 / young_o);
            (ce / (ce + co), co / (ce + co), ce + co)
        }
    };
    let s = sigma_e * we + sigma_o * wo;
    (traction(&s, n), p)
}

/// `σ n` in Voigt order `(xx, yy, xy)`.
pub fn traction(s: &Vector3<f64>, n: [f64; 2]) -> [f64; 2] {
    [s[0] * n[0] + s[2] * n[1], s[2] * n[0] + s[1] * n[1]]
}

/// One edge of a star patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatchEdge {
    /// Unknown moment pulled towards `target` with objective weight `weight`.
    Free { target: [f64; 2], weight: f64 },
    /// Moment fixed by data.
    Fixed([f64; 2]),
}

/// Elements `E_0 … E_{m-1}` around a node, each between edges `k` and `k + 1`
/// (indices modulo `m` when closed). Element `k` imposes
/// `signs[k][0] b_k + signs[k][1] b_{k+1} = rhs[k]` componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct StarPatch {
    pub edges: Vec<PatchEdge>,
    pub signs: Vec<[f64; 2]>,
    pub rhs: Vec<[f64; 2]>,
    pub closed: bool,
    /// Closing residual accepted whatever the data scale (round-off).
    pub floor: f64,
}

/// Relative residual tolerated in the closing equation of a determined patch.
pub const PATCH_TOL: f64 = 1e-8;

impl StarPatch {
    fn n_edges(&self) -> usize {
        if self.closed {
            self.signs.len()
        } else {
            self.signs.len() + 1
        }
    }

    fn reversed(&self) -> Self {
        Self {
            edges: self.edges.iter().rev().copied().collect(),
            signs: self.signs.iter().rev().map(|s| [s[1], s[0]]).collect(),
            rhs: self.rhs.iter().rev().copied().collect(),
            closed: self.closed,
            floor: self.floor,
        }
    }

    fn validate(&self) -> Result<()> {
        let m = self.signs.len();
        let ok = m > 0
            && self.rhs.len() == m
            && self.edges.len() == self.n_edges()
            && self.edges.iter().enumerate().all(|(k, e)| {
                matches!(e, PatchEdge::Free { .. }) || (!self.closed && (k == 0 || k == m))
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Admissibility("malformed star patch".into()))
        }
    }

    /// Residual of every element equation for moments `b`.
    pub fn residuals(&self, b: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let n = self.n_edges();
        (0..self.signs.len())
            .map(|k| {
                let (s, r) = (self.signs[k], self.rhs[k]);
                let next = (k + 1) % n;
                [0, 1].map(|c| s[0] * b[k][c] + s[1] * b[next][c] - r[c])
            })
            .collect()
    }
}

/// Sweeps the element equations from edge 0 with `b_0 = start`, filling edges
/// `1 … count`.
fn sweep(p: &StarPatch, c: usize, start: f64, count: usize, homogeneous: bool) -> Vec<f64> {
    let mut b = vec![0.0; p.n_edges()];
    b[0] = start;
    for k in 0..count {
        let r = if homogeneous { 0.0 } else { p.rhs[k][c] };
        b[k + 1] = (r - p.signs[k][0] * b[k]) / p.signs[k][1];
    }
    b
}

fn consistency(p: &StarPatch, c: usize, b: &[f64], node: usize) -> Result<()> {
    let m = p.signs.len();
    let last = m - 1;
    let next = if p.closed { 0 } else { m };
    let res = p.signs[last][0] * b[last] + p.signs[last][1] * b[next] - p.rhs[last][c];
    // both components: one of them may vanish identically
    let scale = p.rhs.iter().map(|r| r[0].abs() + r[1].abs()).sum::<f64>()
        + p.edges
            .iter()
            .map(|e| match e {
                PatchEdge::Fixed(v) | PatchEdge::Free { target: v, .. } => v[0].abs() + v[1].abs(),
            })
            .sum::<f64>();
    if res.abs() > (PATCH_TOL * scale).max(p.floor) && res.abs() > 1e-300 {
        return Err(Error::InconsistentPatch {
            node,
            residual: res,
        });
    }
    Ok(())
}

/// Moments `b_k` on every patch edge. Underdetermined patches take the member
/// of the one-parameter family closest to the targets in the weighted norm.
pub fn solve_star_patch(patch: &StarPatch, node: usize) -> Result<Vec<[f64; 2]>> {
    patch.validate()?;
    let m = patch.signs.len();
    let n = patch.n_edges();
    let fixed_first = matches!(patch.edges[0], PatchEdge::Fixed(_));
    let fixed_last = !patch.closed && matches!(patch.edges[n - 1], PatchEdge::Fixed(_));
    if !fixed_first && fixed_last {
        let mut b = solve_star_patch(&patch.reversed(), node)?;
        b.reverse();
        return Ok(b);
    }
    let mut out = vec![[0.0; 2]; n];
    for c in 0..2 {
        let b = if let PatchEdge::Fixed(v) = patch.edges[0] {
            if fixed_last {
                let mut b = sweep(patch, c, v[c], m - 1, false);
                let PatchEdge::Fixed(w) = patch.edges[m] else {
                    unreachable!()
                };
                b[m] = w[c];
                consistency(patch, c, &b, node)?;
                b
            } else {
                sweep(patch, c, v[c], m, false)
            }
        } else {
            let count = if patch.closed { m - 1 } else { m };
            let mut b = sweep(patch, c, 0.0, count, false);
            let v = sweep(patch, c, 1.0, count, true);
            if patch.closed {
                consistency(patch, c, &b, node)?;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for (k, e) in patch.edges.iter().enumerate() {
                if let PatchEdge::Free { target, weight } = e {
                    num += weight * v[k] * (b[k] - target[c]);
                    den += weight * v[k] * v[k];
                }
            }
            let beta = -num / den;
            for (bk, vk) in b.iter_mut().zip(&v) {
                *bk += beta * vk;
            }
            b
        };
        for k in 0..n {
            out[k][c] = b[k];
        }
    }
    Ok(out)
}

/// `∫_E σ_h : ε(φ_i e_c) − f·φ_i e_c` for vertex `local` of `e`.
pub fn element_rhs(
    mesh: &Mesh,
    e: usize,
    local: usize,
    sigma: &Vector3<f64>,
    body: [f64; 2],
) -> [f64; 2] {
    let v = mesh.vertices(e);
    let g = shape_gradients(&v)[local];
    let area = mesh.area(e);
    [
        area * (sigma[0] * g[0] + sigma[2] * g[1]) - body[0] * area / 3.0,
        area * (sigma[2] * g[0] + sigma[1] * g[1]) - body[1] * area / 3.0,
    ]
}

/// `∫_γ F φ_i` for a linear density with nodal values `d`.
pub fn density_moment(len: f64, d: &EdgeDensity, first: bool) -> [f64; 2] {
    let (a, b) = if first { (d[0], d[1]) } else { (d[1], d[0]) };
    [0, 1].map(|c| len / 6.0 * (2.0 * a[c] + b[c]))
}

/// Element set on which tractions are recovered, with data on its boundary.
pub struct Region<'a> {
    /// Membership of each mesh element.
    pub mask: &'a [bool],
    /// Densities on edges between the region and the rest of the mesh, as
    /// tractions on the region's element.
    pub interface: &'a HashMap<usize, EdgeDensity>,
    /// Round-off allowance on the patch equations, in force units.
    pub floor: f64,
}

impl Region<'_> {
    fn contains(&self, e: usize) -> bool {
        self.mask[e]
    }

    /// Element against which the density of `edge` is stored.
    pub fn reference(&self, mesh: &Mesh, edge: usize) -> usize {
        match mesh.edges[edge].elements {
            [Some(a), Some(b)] if self.contains(a) && self.contains(b) => a,
            [Some(a), _] if self.contains(a) => a,
            [_, Some(b)] => b,
            _ => unreachable!("edge outside the region"),
        }
    }

    /// Density fixed by data, if any.
    fn prescribed(&self, mesh: &Mesh, loads: &Loads, edge: usize) -> Option<EdgeDensity> {
        let ed = &mesh.edges[edge];
        match ed.boundary {
            Some(BoundaryTag::Dirichlet) => None,
            Some(tag) => {
                let g = loads.surface(tag);
                Some([g, g])
            }
            None => match ed.elements {
                [Some(a), Some(b)] if self.contains(a) && self.contains(b) => None,
                _ => Some(
                    *self
                        .interface
                        .get(&edge)
                        .expect("density on every region interface edge"),
                ),
            },
        }
    }
}

/// Recovered densities per mesh edge, relative to a reference element.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTractions {
    pub edges: HashMap<usize, (usize, EdgeDensity)>,
}

impl EdgeTractions {
    /// Traction density on edge `edge` of element `e` at the edge's two nodes.
    pub fn on_element(&self, e: usize, edge: usize) -> EdgeDensity {
        let (owner, d) = self.edges[&edge];
        if owner == e {
            d
        } else {
            d.map(|x| x.map(|v| -v))
        }
    }
}

fn first_second_edges(mesh: &Mesh, e: usize, node: usize) -> (usize, usize) {
    let k = mesh.local_vertex(e, node).expect("node of element");
    // edge k joins k and k + 1; edge k + 2 joins k + 2 and k
    (mesh.element_edges[e][k], mesh.element_edges[e][(k + 2) % 3])
}

/// Star patch of `node` restricted to the region, with the mesh edges it spans.
#[allow(clippy::too_many_arguments)]
pub fn build_star_patch(
    mesh: &Mesh,
    materials: &MaterialField,
    loads: &Loads,
    region: &Region,
    sigma: &[Vector3<f64>],
    mode: EetMode,
    node: usize,
) -> Result<(StarPatch, Vec<usize>)> {
    let elems: Vec<usize> = mesh.node_elements[node]
        .iter()
        .copied()
        .filter(|&e| region.contains(e))
        .collect();
    let across = |edge: usize, e: usize| mesh.edges[edge].other(e).filter(|&o| region.contains(o));
    // counterclockwise order: the second edge of one element is the first of the next
    let start = elems
        .iter()
        .copied()
        .find(|&e| across(first_second_edges(mesh, e, node).0, e).is_none());
    let closed = start.is_none();
    let mut order = vec![start.unwrap_or(elems[0])];
    loop {
        let e = *order.last().unwrap();
        match across(first_second_edges(mesh, e, node).1, e) {
            Some(next) if next != order[0] => order.push(next),
            _ => break,
        }
    }
    if order.len() != elems.len() {
        return Err(Error::Admissibility(format!(
            "region is not a single fan around node {node}"
        )));
    }
    let mut edge_ids: Vec<usize> = order
        .iter()
        .map(|&e| first_second_edges(mesh, e, node).0)
        .collect();
    if !closed {
        edge_ids.push(first_second_edges(mesh, *order.last().unwrap(), node).1);
    }
    let sign = |e: usize, edge: usize| {
        if region.reference(mesh, edge) == e {
            1.0
        } else {
            -1.0
        }
    };
    let mut signs = Vec::with_capacity(order.len());
    let mut rhs = Vec::with_capacity(order.len());
    for (k, &e) in order.iter().enumerate() {
        let (a, b) = first_second_edges(mesh, e, node);
        debug_assert_eq!(a, edge_ids[k]);
        signs.push([sign(e, a), sign(e, b)]);
        let local = mesh.local_vertex(e, node).unwrap();
        rhs.push(element_rhs(mesh, e, local, &sigma[e], loads.body));
    }
    let mut edges = Vec::with_capacity(edge_ids.len());
    for &edge in &edge_ids {
        let ed = &mesh.edges[edge];
        let len = mesh.edge_length(edge);
        if len <= 0.0 {
            return Err(Error::ZeroLengthSegment(edge));
        }
        if let Some(d) = region.prescribed(mesh, loads, edge) {
            edges.push(PatchEdge::Fixed(density_moment(
                len,
                &d,
                ed.nodes[0] == node,
            )));
            continue;
        }
        let r = region.reference(mesh, edge);
        let n = mesh.outward_normal(r, edge);
        let yr = materials.young(mesh.material_id[r]);
        let (t, p) = match across(edge, r) {
            Some(o) => mean_traction(
                &sigma[r],
                &sigma[o],
                n,
                yr,
                materials.young(mesh.material_id[o]),
                mode,
            ),
            None => {
                let p = if mode == EetMode::Weighted {
                    2.0 / yr
                } else {
                    1.0
                };
                (traction(&sigma[r], n), p)
            }
        };
        edges.push(PatchEdge::Free {
            target: [0.5 * len * t[0], 0.5 * len * t[1]],
            weight: p / (len * len),
        });
    }
    Ok((
        StarPatch {
            edges,
            signs,
            rhs,
            closed,
            floor: region.floor,
        },
        edge_ids,
    ))
}

/// Solves every star patch of the region and converts the two nodal moments
/// of each edge into a linear density.
pub fn recover_edge_tractions(
    mesh: &Mesh,
    materials: &MaterialField,
    loads: &Loads,
    region: &Region,
    sigma: &[Vector3<f64>],
    mode: EetMode,
) -> Result<EdgeTractions> {
    let mut nodes: Vec<usize> = (0..mesh.n_elements())
        .filter(|&e| region.contains(e))
        .flat_map(|e| mesh.elements[e])
        .collect();
    nodes.sort_unstable();
    nodes.dedup();
    let mut moments: HashMap<usize, [Option<[f64; 2]>; 2]> = HashMap::new();
    let mut edges = HashMap::new();
    for node in nodes {
        let (patch, ids) = build_star_patch(mesh, materials, loads, region, sigma, mode, node)?;
        let b = solve_star_patch(&patch, node)?;
        for (k, &edge) in ids.iter().enumerate() {
            if let Some(d) = region.prescribed(mesh, loads, edge) {
                edges.insert(edge, (region.reference(mesh, edge), d));
                continue;
            }
            let slot = usize::from(mesh.edges[edge].nodes[1] == node);
            moments.entry(edge).or_insert([None, None])[slot] = Some(b[k]);
        }
    }
    for (edge, [m0, m1]) in moments {
        let (m0, m1) = (
            m0.expect("both endpoints solved"),
            m1.expect("both endpoints solved"),
        );
        let len = mesh.edge_length(edge);
        let d = [
            [0, 1].map(|c| 2.0 / len * (2.0 * m0[c] - m1[c])),
            [0, 1].map(|c| 2.0 / len * (2.0 * m1[c] - m0[c])),
        ];
        edges.insert(edge, (region.reference(mesh, edge), d));
    }
    Ok(EdgeTractions { edges })
}

/// Largest violation of `Σ_γ ∫_γ F̂ φ_i = ∫_E σ_h:ε(φ_i) − f φ_i` over the
/// region's elements and vertices, relative to the largest right-hand side
/// or `force_scale` if larger.
pub fn prolongation_residual(
    mesh: &Mesh,
    loads: &Loads,
    mask: &[bool],
    sigma: &[Vector3<f64>],
    tractions: &EdgeTractions,
    force_scale: f64,
) -> f64 {
    let (mut worst, mut scale) = (0.0_f64, force_scale);
    for e in (0..mesh.n_elements()).filter(|&e| mask[e]) {
        for local in 0..3 {
            let node = mesh.elements[e][local];
            let r = element_rhs(mesh, e, local, &sigma[e], loads.body);
            let mut lhs = [0.0; 2];
            for &edge in &mesh.element_edges[e] {
                let ed = &mesh.edges[edge];
                if !ed.nodes.contains(&node) {
                    continue;
                }
                let d = tractions.on_element(e, edge);
                let m = density_moment(mesh.edge_length(edge), &d, ed.nodes[0] == node);
                lhs[0] += m[0];
                lhs[1] += m[1];
            }
            for c in 0..2 {
                worst = worst.max((lhs[c] - r[c]).abs());
                scale = scale.max(r[c].abs());
            }
        }
    }
    worst / scale.max(f64::MIN_POSITIVE)
}
