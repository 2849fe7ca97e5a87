//! Legacy ASCII VTK export of triangle meshes.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use super::Mesh2D;

const VTK_TRIANGLE: u8 = 5;

/// A named field attached to points or cells.
#[derive(Debug, Clone, Copy)]
pub enum VtkField<'a> {
    Scalar(&'a str, &'a [f64]),
    Vector(&'a str, &'a [[f64; 2]]),
}

impl VtkField<'_> {
    fn len(&self) -> usize {
        match self {
            VtkField::Scalar(_, v) => v.len(),
            VtkField::Vector(_, v) => v.len(),
        }
    }
}

/// Writes `mesh` as an unstructured grid with optional point and cell data.
pub fn write_vtk<W: Write>(
    w: &mut W,
    mesh: &Mesh2D,
    title: &str,
    point_data: &[VtkField],
    cell_data: &[VtkField],
) -> io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.num_nodes())?;
    for p in mesh.nodes() {
        writeln!(w, "{} {} 0", p[0], p[1])?;
    }
    let nt = mesh.num_triangles();
    writeln!(w, "CELLS {} {}", nt, 4 * nt)?;
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "{VTK_TRIANGLE}")?;
    }
    write_section(w, "POINT_DATA", mesh.num_nodes(), point_data)?;
    write_section(w, "CELL_DATA", nt, cell_data)?;
    Ok(())
}

fn write_section<W: Write>(w: &mut W, kind: &str, count: usize, fields: &[VtkField]) -> io::Result<()> {
    if fields.is_empty() {
        return Ok(());
    }
    writeln!(w, "{kind} {count}")?;
    for field in fields {
        if field.len() != count {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("{kind} field has {} values, expected {count}", field.len()),
            ));
        }
        match field {
            VtkField::Scalar(name, values) => {
                writeln!(w, "SCALARS {name} double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for v in *values {
                    writeln!(w, "{v}")?;
                }
            }
            VtkField::Vector(name, values) => {
                writeln!(w, "VECTORS {name} double")?;
                for v in *values {
                    writeln!(w, "{} {} 0", v[0], v[1])?;
                }
            }
        }
    }
    Ok(())
}

pub fn save_vtk(
    path: impl AsRef<Path>,
    mesh: &Mesh2D,
    title: &str,
    point_data: &[VtkField],
    cell_data: &[VtkField],
) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vtk(&mut w, mesh, title, point_data, cell_data)?;
    w.flush()
}
