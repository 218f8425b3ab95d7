//! Mesh serialization: a plain-text round-trip format and legacy VTK export.
//!
//! Text format (`#` starts a comment, blank lines ignored):
//!
//! ```text
//! contact-dg-mesh 1
//! vertices <n>
//! <x> <y>                # n lines
//! triangles <m>
//! <newest> <a> <b>       # m lines, refinement edge is (a, b)
//! boundary <k>
//! <a> <b> <tag>          # k lines, tag in {dirichlet, neumann, contact}
//! generation <g>         # optional
//! ```
//!
//! Coordinates are written with `{:e}` (shortest round-trip representation).

use std::collections::BTreeMap;
use std::io::{self, Write};

use super::{BoundaryTag, Mesh, MeshError, Point};

pub fn write_mesh<W: Write>(mesh: &Mesh, mut w: W) -> io::Result<()> {
    writeln!(w, "contact-dg-mesh 1")?;
    writeln!(w, "vertices {}", mesh.num_vertices())?;
    for p in mesh.vertices() {
        writeln!(w, "{:e} {:e}", p[0], p[1])?;
    }
    writeln!(w, "triangles {}", mesh.num_triangles())?;
    for t in mesh.triangles() {
        writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "boundary {}", mesh.boundary_tags().len())?;
    for (k, tag) in mesh.boundary_tags() {
        writeln!(w, "{} {} {}", k[0], k[1], tag.name())?;
    }
    writeln!(w, "generation {}", mesh.generation())?;
    Ok(())
}

fn parse_tag(s: &str) -> Option<BoundaryTag> {
    match s {
        "dirichlet" => Some(BoundaryTag::Dirichlet),
        "neumann" => Some(BoundaryTag::Neumann),
        "contact" => Some(BoundaryTag::Contact),
        _ => None,
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self) -> Result<(usize, Vec<&'a str>), MeshError> {
        for (i, line) in self.inner.by_ref() {
            let content = line.split('#').next().unwrap_or("").trim();
            if !content.is_empty() {
                return Ok((i + 1, content.split_whitespace().collect()));
            }
        }
        Err(MeshError::Parse {
            line: 0,
            msg: "unexpected end of file".into(),
        })
    }

    fn header(&mut self, name: &str) -> Result<usize, MeshError> {
        let (line, tok) = self.next_tokens()?;
        if tok.len() != 2 || tok[0] != name {
            return Err(MeshError::Parse {
                line,
                msg: format!("expected `{name} <count>`"),
            });
        }
        tok[1].parse().map_err(|_| MeshError::Parse {
            line,
            msg: format!("bad count `{}`", tok[1]),
        })
    }
}

fn num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, MeshError> {
    tok.parse().map_err(|_| MeshError::Parse {
        line,
        msg: format!("cannot parse `{tok}`"),
    })
}

pub fn read_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (line, magic) = lines.next_tokens()?;
    if magic != ["contact-dg-mesh", "1"] {
        return Err(MeshError::Parse {
            line,
            msg: "missing `contact-dg-mesh 1` header".into(),
        });
    }
    let nv = lines.header("vertices")?;
    let mut vertices: Vec<Point> = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, tok) = lines.next_tokens()?;
        if tok.len() != 2 {
            return Err(MeshError::Parse {
                line,
                msg: "expected two coordinates".into(),
            });
        }
        vertices.push([num(tok[0], line)?, num(tok[1], line)?]);
    }
    let nt = lines.header("triangles")?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (line, tok) = lines.next_tokens()?;
        if tok.len() != 3 {
            return Err(MeshError::Parse {
                line,
                msg: "expected three vertex indices".into(),
            });
        }
        triangles.push([num(tok[0], line)?, num(tok[1], line)?, num(tok[2], line)?]);
    }
    let nb = lines.header("boundary")?;
    let mut tags = BTreeMap::new();
    for _ in 0..nb {
        let (line, tok) = lines.next_tokens()?;
        if tok.len() != 3 {
            return Err(MeshError::Parse {
                line,
                msg: "expected `<a> <b> <tag>`".into(),
            });
        }
        let a: usize = num(tok[0], line)?;
        let b: usize = num(tok[1], line)?;
        let tag = parse_tag(tok[2]).ok_or_else(|| MeshError::Parse {
            line,
            msg: format!("unknown tag `{}`", tok[2]),
        })?;
        tags.insert([a.min(b), a.max(b)], tag);
    }
    let generation = match lines.next_tokens() {
        Ok((line, tok)) if tok.len() == 2 && tok[0] == "generation" => num(tok[1], line)?,
        Ok((line, _)) => {
            return Err(MeshError::Parse {
                line,
                msg: "trailing content".into(),
            })
        }
        Err(_) => 0,
    };
    Mesh::with_generation(vertices, triangles, tags, generation)
}

/// Data attached to VTK points or cells.
pub enum VtkData<'a> {
    Scalars(&'a [f64]),
    Vectors(&'a [[f64; 2]]),
}

/// Per-triangle tag code: the largest boundary tag among the triangle's edges
/// (0 interior, 1 Dirichlet, 2 Neumann, 3 contact).
pub fn triangle_tag_codes(mesh: &Mesh) -> Vec<f64> {
    (0..mesh.num_triangles())
        .map(|t| {
            mesh.triangle_edges(t)
                .iter()
                .map(|&e| mesh.edges()[e].tag.code())
                .max()
                .unwrap_or(0) as f64
        })
        .collect()
}

/// Legacy ASCII VTK unstructured grid with triangle cells (type 5). A
/// `boundary_tag` cell array is always written.
pub fn write_vtk<W: Write>(
    mesh: &Mesh,
    title: &str,
    point_data: &[(&str, VtkData<'_>)],
    cell_data: &[(&str, VtkData<'_>)],
    mut w: W,
) -> io::Result<()> {
    let nv = mesh.num_vertices();
    let nt = mesh.num_triangles();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or("contact-dg"))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {nv} double")?;
    for p in mesh.vertices() {
        writeln!(w, "{:e} {:e} 0", p[0], p[1])?;
    }
    writeln!(w, "CELLS {nt} {}", 4 * nt)?;
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    writeln!(w, "CELL_DATA {nt}")?;
    let codes = triangle_tag_codes(mesh);
    write_array(&mut w, "boundary_tag", &VtkData::Scalars(&codes), nt)?;
    for (name, data) in cell_data {
        write_array(&mut w, name, data, nt)?;
    }
    if !point_data.is_empty() {
        writeln!(w, "POINT_DATA {nv}")?;
        for (name, data) in point_data {
            write_array(&mut w, name, data, nv)?;
        }
    }
    Ok(())
}

fn write_array<W: Write>(w: &mut W, name: &str, data: &VtkData<'_>, n: usize) -> io::Result<()> {
    let len = match data {
        VtkData::Scalars(v) => v.len(),
        VtkData::Vectors(v) => v.len(),
    };
    if len != n {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("array `{name}` has {len} entries, expected {n}"),
        ));
    }
    match data {
        VtkData::Scalars(v) => {
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for x in *v {
                writeln!(w, "{x:e}")?;
            }
        }
        VtkData::Vectors(v) => {
            writeln!(w, "VECTORS {name} double")?;
            for x in *v {
                writeln!(w, "{:e} {:e} 0", x[0], x[1])?;
            }
        }
    }
    Ok(())
}
