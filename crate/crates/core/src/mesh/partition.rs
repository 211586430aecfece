use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{element_cell, Mesh};
use crate::error::{Error, Result};

/// Named decompositions of the structured benchmark mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    /// Whole domain as one subdomain.
    Single,
    /// Each inclusion is a subdomain, the matrix is the last one.
    #[serde(rename = "inclusions5")]
    Inclusions5,
    #[serde(rename = "grid3x3")]
    Grid3x3,
    /// The 3x3 squares each cut in two, horizontally where `bi + bj` is even
    /// and vertically otherwise.
    #[serde(rename = "strips18")]
    Strips18,
    #[serde(rename = "grid6x6")]
    Grid6x6,
}

impl PartitionScheme {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Single => "single",
            Self::Inclusions5 => "inclusions5",
            Self::Grid3x3 => "grid3x3",
            Self::Strips18 => "strips18",
            Self::Grid6x6 => "grid6x6",
        }
    }
}

impl fmt::Display for PartitionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PartitionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "inclusions5" => Ok(Self::Inclusions5),
            "grid3x3" => Ok(Self::Grid3x3),
            "strips18" => Ok(Self::Strips18),
            "grid6x6" => Ok(Self::Grid6x6),
            other => Err(Error::Config(format!("unknown partition scheme '{other}'"))),
        }
    }
}

/// Element to subdomain map.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub subdomain: Vec<usize>,
    pub count: usize,
}

impl Partition {
    /// Checks the map covers every subdomain and that each is edge-connected.
    pub fn new(mesh: &Mesh, subdomain: Vec<usize>, count: usize) -> Result<Self> {
        if subdomain.len() != mesh.n_elements() {
            return Err(Error::Mesh("one subdomain id per element required".into()));
        }
        let part = Self { subdomain, count };
        let elements = part.elements();
        for (s, list) in elements.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::Subdomain {
                    subdomain: s,
                    reason: "no elements".into(),
                });
            }
            let mut seen = vec![false; mesh.n_elements()];
            let mut queue = VecDeque::from([list[0]]);
            seen[list[0]] = true;
            let mut reached = 1;
            while let Some(e) = queue.pop_front() {
                for &edge in &mesh.element_edges[e] {
                    if let Some(o) = mesh.edges[edge].other(e) {
                        if part.subdomain[o] == s && !seen[o] {
                            seen[o] = true;
                            reached += 1;
                            queue.push_back(o);
                        }
                    }
                }
            }
            if reached != list.len() {
                return Err(Error::Subdomain {
                    subdomain: s,
                    reason: "not edge-connected".into(),
                });
            }
        }
        Ok(part)
    }

    /// Element lists per subdomain, ascending.
    pub fn elements(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (e, &s) in self.subdomain.iter().enumerate() {
            out[s].push(e);
        }
        out
    }
}

/// Splits a generated benchmark mesh according to `scheme`.
pub fn partition_structured(mesh: &Mesh, scheme: PartitionScheme) -> Result<Partition> {
    let grid = mesh
        .grid
        .ok_or_else(|| Error::Mesh("structured partition needs a generated grid".into()))?;
    let n = grid.n;
    let need = |d: usize| {
        if n % d == 0 {
            Ok(())
        } else {
            Err(Error::Mesh(format!(
                "scheme {scheme} needs n divisible by {d}, got n = {n}"
            )))
        }
    };
    let cells = (0..mesh.n_elements()).map(|e| element_cell(&grid, e));
    let (ids, count): (Vec<usize>, usize) = match scheme {
        PartitionScheme::Single => (vec![0; mesh.n_elements()], 1),
        PartitionScheme::Grid3x3 => {
            need(3)?;
            let b = n / 3;
            (cells.map(|(i, j)| (j / b) * 3 + i / b).collect(), 9)
        }
        PartitionScheme::Grid6x6 => {
            need(6)?;
            let b = n / 6;
            (cells.map(|(i, j)| (j / b) * 6 + i / b).collect(), 36)
        }
        PartitionScheme::Strips18 => {
            need(6)?;
            let b = n / 3;
            let half = b / 2;
            let ids = cells
                .map(|(i, j)| {
                    let (bi, bj) = (i / b, j / b);
                    let (li, lj) = (i % b, j % b);
                    let upper = if (bi + bj) % 2 == 0 {
                        lj >= half
                    } else {
                        li >= half
                    };
                    2 * (bj * 3 + bi) + upper as usize
                })
                .collect();
            (ids, 18)
        }
        PartitionScheme::Inclusions5 => {
            let k = mesh.inclusions.len();
            if k != 4 {
                return Err(Error::Mesh(format!(
                    "inclusions5 needs 4 inclusions, mesh has {k}"
                )));
            }
            let ids = (0..mesh.n_elements())
                .map(|e| {
                    let v = mesh.vertices(e);
                    let c = [
                        (v[0][0] + v[1][0] + v[2][0]) / 3.0,
                        (v[0][1] + v[1][1] + v[2][1]) / 3.0,
                    ];
                    mesh.inclusions
                        .iter()
                        .position(|inc| inc.contains(c))
                        .unwrap_or(k)
                })
                .collect();
            (ids, k + 1)
        }
    };
    Partition::new(mesh, ids, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{default_inclusions, generate_benchmark_mesh, INCLUSION};

    fn benchmark() -> Mesh {
        generate_benchmark_mesh(36, 1.0, &default_inclusions(1.0)).unwrap()
    }

    #[test]
    fn grid6x6_has_36_equal_homogeneous_subdomains() {
        let mesh = benchmark();
        let p = partition_structured(&mesh, PartitionScheme::Grid6x6).unwrap();
        let elems = p.elements();
        assert_eq!(elems.len(), 36);
        for list in &elems {
            assert_eq!(list.len(), 72);
            let m = mesh.material_id[list[0]];
            assert!(list.iter().all(|&e| mesh.material_id[e] == m));
        }
    }

    #[test]
    fn disjoint_cover_for_every_scheme() {
        let mesh = benchmark();
        for scheme in [
            PartitionScheme::Single,
            PartitionScheme::Inclusions5,
            PartitionScheme::Grid3x3,
            PartitionScheme::Strips18,
            PartitionScheme::Grid6x6,
        ] {
            let p = partition_structured(&mesh, scheme).unwrap();
            let total: usize = p.elements().iter().map(Vec::len).sum();
            assert_eq!(total, mesh.n_elements(), "{scheme}");
        }
    }

    #[test]
    fn strips18_rectangles_are_congruent() {
        let mesh = benchmark();
        let p = partition_structured(&mesh, PartitionScheme::Strips18).unwrap();
        assert!(p.elements().iter().all(|l| l.len() == 2592 / 18));
    }

    #[test]
    fn inclusions5_matches_materials() {
        let mesh = benchmark();
        let p = partition_structured(&mesh, PartitionScheme::Inclusions5).unwrap();
        for e in 0..mesh.n_elements() {
            assert_eq!(p.subdomain[e] < 4, mesh.material_id[e] == INCLUSION);
        }
    }

    #[test]
    fn incompatible_grid_rejected() {
        let mesh = generate_benchmark_mesh(8, 1.0, &[]).unwrap();
        assert!(partition_structured(&mesh, PartitionScheme::Grid3x3).is_err());
        assert!(partition_structured(&mesh, PartitionScheme::Grid6x6).is_err());
        assert!(partition_structured(&mesh, PartitionScheme::Inclusions5).is_err());
    }

    #[test]
    fn disconnected_subdomain_rejected() {
        let mesh = generate_benchmark_mesh(4, 1.0, &[]).unwrap();
        let mut ids = vec![0; mesh.n_elements()];
        ids[0] = 1;
        ids[31] = 1;
        assert!(Partition::new(&mesh, ids, 2).is_err());
    }

    #[test]
    fn scheme_names_round_trip() {
        for name in ["single", "inclusions5", "grid3x3", "strips18", "grid6x6"] {
            assert_eq!(name.parse::<PartitionScheme>().unwrap().name(), name);
        }
        assert!("grid4x4".parse::<PartitionScheme>().is_err());
    }
}
