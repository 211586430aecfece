//! Benchmark geometry, triangulation, partitioning and interface topology.
//!
//! The benchmark is a square `[0, L]^2` clamped on its bottom edge, loaded on
//! its top edge and free on both sides, containing axis-aligned square
//! inclusions of a second material.

mod partition;
mod topology;
pub mod vtk;

pub use partition::{partition_structured, Partition, PartitionScheme};
pub use topology::{build_interface_topology, InterfacePair, InterfaceTopology, Relation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tag attached to each boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    Dirichlet,
    NeumannTop,
    Free,
}

/// Material id of the matrix.
pub const MATRIX: usize = 1;
/// Material id of the inclusions.
pub const INCLUSION: usize = 2;

/// Axis-aligned square (or rectangle) in physical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Inclusion {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] > self.x0 && p[0] < self.x1 && p[1] > self.y0 && p[1] < self.y1
    }

    fn overlaps(&self, other: &Inclusion) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }
}

/// Four squares of side `L/6` centred at `(L/4, L/4)`, `(3L/4, L/4)`,
/// `(L/4, 3L/4)` and `(3L/4, 3L/4)`.
pub fn default_inclusions(length: f64) -> Vec<Inclusion> {
    let half = length / 12.0;
    [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)]
        .iter()
        .map(|&(cx, cy)| Inclusion {
            x0: cx * length - half,
            y0: cy * length - half,
            x1: cx * length + half,
            y1: cy * length + half,
        })
        .collect()
}

/// Structured-grid metadata kept with generated meshes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    /// Cells per side.
    pub n: usize,
    pub length: f64,
}

impl Grid {
    pub fn h(&self) -> f64 {
        self.length / self.n as f64
    }
}

/// A mesh edge. `elements[0]` is the owner (smallest adjacent element id);
/// `elements[1]` is `None` on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints, smaller id first.
    pub nodes: [usize; 2],
    pub elements: [Option<usize>; 2],
    pub boundary: Option<BoundaryTag>,
}

impl Edge {
    pub fn owner(&self) -> usize {
        self.elements[0].expect("every edge has at least one element")
    }

    pub fn is_boundary(&self) -> bool {
        self.elements[1].is_none()
    }

    /// The adjacent element other than `e`.
    pub fn other(&self, e: usize) -> Option<usize> {
        match self.elements {
            [Some(a), b] if a == e => b,
            [a, Some(b)] if b == e => a,
            _ => None,
        }
    }
}

/// Conforming triangulation with boundary tags and material ids.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    /// Counterclockwise node triples.
    pub elements: Vec<[usize; 3]>,
    pub material_id: Vec<usize>,
    pub edges: Vec<Edge>,
    /// `element_edges[e][k]` is the edge joining local vertices `k` and `k + 1`.
    pub element_edges: Vec<[usize; 3]>,
    pub node_elements: Vec<Vec<usize>>,
    pub grid: Option<Grid>,
    pub inclusions: Vec<Inclusion>,
}

impl Mesh {
    /// Builds edge and adjacency tables. `tag` classifies each boundary edge by its endpoints.
    pub fn new<F>(
        nodes: Vec<[f64; 2]>,
        elements: Vec<[usize; 3]>,
        material_id: Vec<usize>,
        tag: F,
    ) -> Result<Self>
    where
        F: Fn([f64; 2], [f64; 2]) -> BoundaryTag,
    {
        if material_id.len() != elements.len() {
            return Err(Error::Mesh("one material id per element required".into()));
        }
        let mut node_elements = vec![Vec::new(); nodes.len()];
        for (e, tri) in elements.iter().enumerate() {
            for &v in tri {
                if v >= nodes.len() {
                    return Err(Error::Mesh(format!("element {e} references node {v}")));
                }
                node_elements[v].push(e);
            }
        }
        if let Some(v) = node_elements.iter().position(|l| l.is_empty()) {
            return Err(Error::Mesh(format!("node {v} belongs to no element")));
        }

        let mut edge_index = std::collections::HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut element_edges = Vec::with_capacity(elements.len());
        for (e, tri) in elements.iter().enumerate() {
            let area = signed_area(&[nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]]);
            if area <= 0.0 {
                return Err(Error::DegenerateElement { element: e, area });
            }
            let mut ids = [0; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let id = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        nodes: [key.0, key.1],
                        elements: [None, None],
                        boundary: None,
                    });
                    edges.len() - 1
                });
                match edges[id].elements {
                    [None, _] => edges[id].elements[0] = Some(e),
                    [Some(_), None] => edges[id].elements[1] = Some(e),
                    _ => {
                        return Err(Error::Mesh(format!(
                            "edge {key:?} shared by more than two elements"
                        )))
                    }
                }
                ids[k] = id;
            }
            element_edges.push(ids);
        }
        for edge in edges.iter_mut() {
            if edge.is_boundary() {
                edge.boundary = Some(tag(nodes[edge.nodes[0]], nodes[edge.nodes[1]]));
            }
        }
        Ok(Self {
            nodes,
            elements,
            material_id,
            edges,
            element_edges,
            node_elements,
            grid: None,
            inclusions: Vec::new(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn vertices(&self, e: usize) -> [[f64; 2]; 3] {
        let t = self.elements[e];
        [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]]
    }

    pub fn area(&self, e: usize) -> f64 {
        signed_area(&self.vertices(e))
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        let [a, b] = self.edges[edge].nodes;
        let (p, q) = (self.nodes[a], self.nodes[b]);
        ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
    }

    /// Outward unit normal of element `e` on one of its edges.
    pub fn outward_normal(&self, e: usize, edge: usize) -> [f64; 2] {
        let k = self.element_edges[e]
            .iter()
            .position(|&x| x == edge)
            .expect("edge belongs to element");
        let tri = self.elements[e];
        let p = self.nodes[tri[k]];
        let q = self.nodes[tri[(k + 1) % 3]];
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let l = (dx * dx + dy * dy).sqrt();
        [dy / l, -dx / l]
    }

    /// `+1` if `e` owns the edge, `-1` otherwise.
    pub fn edge_sign(&self, e: usize, edge: usize) -> f64 {
        if self.edges[edge].owner() == e {
            1.0
        } else {
            -1.0
        }
    }

    /// Nodes lying on a Dirichlet edge.
    pub fn dirichlet_nodes(&self) -> Vec<bool> {
        let mut flag = vec![false; self.nodes.len()];
        for edge in &self.edges {
            if edge.boundary == Some(BoundaryTag::Dirichlet) {
                flag[edge.nodes[0]] = true;
                flag[edge.nodes[1]] = true;
            }
        }
        flag
    }

    /// Global dofs (two per node) fixed by the Dirichlet condition.
    pub fn dirichlet_dofs(&self) -> Vec<usize> {
        self.dirichlet_nodes()
            .iter()
            .enumerate()
            .filter(|(_, &d)| d)
            .flat_map(|(v, _)| [2 * v, 2 * v + 1])
            .collect()
    }

    pub fn boundary_edges(&self, tag: BoundaryTag) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.boundary == Some(tag))
            .map(|(i, _)| i)
    }

    /// Local vertex index of `node` in element `e`.
    pub fn local_vertex(&self, e: usize, node: usize) -> Option<usize> {
        self.elements[e].iter().position(|&v| v == node)
    }
}

pub fn signed_area(v: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
}

fn grid_coordinate(x: f64, h: f64) -> Option<usize> {
    let c = x / h;
    let r = c.round();
    ((c - r).abs() < 1e-9 && r >= 0.0).then_some(r as usize)
}

/// Structured `n x n` grid on `[0, L]^2`, each cell cut along its
/// bottom-left to top-right diagonal. Elements inside an inclusion get
/// material [`INCLUSION`], all others [`MATRIX`].
pub fn generate_benchmark_mesh(n: usize, length: f64, inclusions: &[Inclusion]) -> Result<Mesh> {
    if n < 4 {
        return Err(Error::Mesh(format!(
            "need at least 4 subdivisions per side, got {n}"
        )));
    }
    structured_mesh(n, length, inclusions)
}

/// Same construction as [`generate_benchmark_mesh`] without the lower bound on `n`.
pub fn structured_mesh(n: usize, length: f64, inclusions: &[Inclusion]) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::Mesh("need at least one subdivision per side".into()));
    }
    if !(length > 0.0) {
        return Err(Error::Mesh(format!(
            "side length must be positive, got {length}"
        )));
    }
    let h = length / n as f64;
    for (k, inc) in inclusions.iter().enumerate() {
        let coords = [inc.x0, inc.y0, inc.x1, inc.y1];
        if coords.iter().any(|&c| grid_coordinate(c, h).is_none()) {
            return Err(Error::Mesh(format!(
                "inclusion {k} ({coords:?}) is not aligned with the {n}x{n} grid (h = {h})"
            )));
        }
        if !(inc.x0 > 0.0 && inc.y0 > 0.0 && inc.x1 < length && inc.y1 < length)
            || inc.x1 <= inc.x0
            || inc.y1 <= inc.y0
        {
            return Err(Error::Mesh(format!(
                "inclusion {k} is not strictly inside the domain"
            )));
        }
        for (l, other) in inclusions.iter().enumerate().take(k) {
            if inc.overlaps(other) {
                return Err(Error::Mesh(format!("inclusions {l} and {k} overlap")));
            }
        }
    }

    let m = n + 1;
    let mut nodes = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            nodes.push([i as f64 * h, j as f64 * h]);
        }
    }
    let id = |i: usize, j: usize| j * m + i;
    let mut elements = Vec::with_capacity(2 * n * n);
    let mut material_id = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            let centre = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
            let mat = if inclusions.iter().any(|inc| inc.contains(centre)) {
                INCLUSION
            } else {
                MATRIX
            };
            elements.push([a, b, c]);
            elements.push([a, c, d]);
            material_id.push(mat);
            material_id.push(mat);
        }
    }
    let tol = 1e-9 * length;
    let mut mesh = Mesh::new(nodes, elements, material_id, |p, q| {
        if p[1].abs() < tol && q[1].abs() < tol {
            BoundaryTag::Dirichlet
        } else if (p[1] - length).abs() < tol && (q[1] - length).abs() < tol {
            BoundaryTag::NeumannTop
        } else {
            BoundaryTag::Free
        }
    })?;
    mesh.grid = Some(Grid { n, length });
    mesh.inclusions = inclusions.to_vec();
    Ok(mesh)
}

/// Structured cell `(i, j)` of an element of a generated mesh.
pub fn element_cell(grid: &Grid, e: usize) -> (usize, usize) {
    let cell = e / 2;
    (cell % grid.n, cell / grid.n)
}
