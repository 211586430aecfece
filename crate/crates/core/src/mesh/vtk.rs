//! Legacy ASCII VTK export.

use std::io::Write;

use super::{Mesh, Partition};
use crate::error::{Error, Result};

/// Writes the mesh as an unstructured grid with `material_id`, optional
/// `subdomain_id` and any extra per-cell scalar fields.
pub fn write_vtk<W: Write>(
    out: &mut W,
    mesh: &Mesh,
    partition: Option<&Partition>,
    cell_fields: &[(&str, &[f64])],
) -> Result<()> {
    let ne = mesh.n_elements();
    if let Some((name, _)) = cell_fields.iter().find(|(_, v)| v.len() != ne) {
        return Err(Error::Mesh(format!("cell field '{name}' has wrong length")));
    }
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "ddbound mesh")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", mesh.n_nodes())?;
    for p in &mesh.nodes {
        writeln!(out, "{:e} {:e} 0", p[0], p[1])?;
    }
    writeln!(out, "CELLS {} {}", ne, 4 * ne)?;
    for t in &mesh.elements {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {ne}")?;
    for _ in 0..ne {
        writeln!(out, "5")?;
    }
    writeln!(out, "CELL_DATA {ne}")?;
    write_int_field(out, "material_id", &mesh.material_id)?;
    if let Some(p) = partition {
        write_int_field(out, "subdomain_id", &p.subdomain)?;
    }
    for (name, values) in cell_fields {
        writeln!(out, "SCALARS {name} double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in values.iter() {
            writeln!(out, "{v:e}")?;
        }
    }
    Ok(())
}

fn write_int_field<W: Write>(out: &mut W, name: &str, values: &[usize]) -> Result<()> {
    writeln!(out, "SCALARS {name} int 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for v in values {
        writeln!(out, "{v}")?;
    }
    Ok(())
}
