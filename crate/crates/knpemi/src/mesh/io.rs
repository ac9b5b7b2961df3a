//! Line-oriented ASCII exchange format for tagged simplicial meshes.
//!
//! ```text
//! knpemi-mesh v1 dim=<d>
//! vertices <n>
//! <x> <y> [<z>]          (n lines, coordinates in meters)
//! cells <m>
//! <v0> ... <vd> <tag> [<label>]   (m lines, tag is `i` or `e`, 0-based indices)
//! ```
//!
//! Interface and exterior facets are derived on import, never stored.

use std::io::{BufRead, Write};
use std::path::Path;

use super::{Mesh, Region};
use crate::error::{Error, Result};

pub fn import_mesh(path: &Path) -> Result<Mesh> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let perr = |line: usize, message: String| Error::Parse { line: line + 1, message };

    let (hline, header) = lines
        .next()
        .ok_or_else(|| perr(0, "empty file".into()))
        .and_then(|(n, l)| Ok((n, l?)))?;
    let header = header.trim();
    let dim: usize = {
        let mut parts = header.split_whitespace();
        if parts.next() != Some("knpemi-mesh") || parts.next() != Some("v1") {
            return Err(perr(hline, format!("bad header `{header}`, expected `knpemi-mesh v1 dim=<d>`")));
        }
        let dim_tok = parts
            .next()
            .ok_or_else(|| perr(hline, "missing dim=<d> in header".into()))?;
        dim_tok
            .strip_prefix("dim=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr(hline, format!("bad dimension token `{dim_tok}`")))?
    };
    if dim != 2 && dim != 3 {
        return Err(perr(hline, format!("unsupported dimension {dim}")));
    }

    let next_content = |lines: &mut std::iter::Enumerate<std::io::Lines<std::io::BufReader<std::fs::File>>>|
        -> Result<Option<(usize, String)>> {
        for (n, l) in lines.by_ref() {
            let l = l?;
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Ok(Some((n, t.to_string())));
            }
        }
        Ok(None)
    };

    let (vline, vhead) = next_content(&mut lines)?
        .ok_or_else(|| perr(hline + 1, "missing `vertices <n>` section".into()))?;
    let nverts: usize = vhead
        .strip_prefix("vertices")
        .map(str::trim)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| perr(vline, format!("expected `vertices <n>`, got `{vhead}`")))?;

    let mut vertices = Vec::with_capacity(nverts);
    for _ in 0..nverts {
        let (ln, l) = next_content(&mut lines)?
            .ok_or_else(|| perr(vline, "unexpected end of file in vertex section".into()))?;
        let coords: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| perr(ln, format!("bad vertex coordinate: {e}")))?;
        if coords.len() != dim {
            return Err(perr(ln, format!("expected {dim} coordinates, got {}", coords.len())));
        }
        let mut v = [0.0; 3];
        v[..dim].copy_from_slice(&coords);
        vertices.push(v);
    }

    let (cline, chead) = next_content(&mut lines)?
        .ok_or_else(|| perr(vline, "missing `cells <m>` section".into()))?;
    let ncells: usize = chead
        .strip_prefix("cells")
        .map(str::trim)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| perr(cline, format!("expected `cells <m>`, got `{chead}`")))?;

    let nloc = dim + 1;
    let mut cells = Vec::with_capacity(ncells * nloc);
    let mut tags = Vec::with_capacity(ncells);
    let mut labels = Vec::with_capacity(ncells);
    for _ in 0..ncells {
        let (ln, l) = next_content(&mut lines)?
            .ok_or_else(|| perr(cline, "unexpected end of file in cell section".into()))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < nloc + 1 || toks.len() > nloc + 2 {
            return Err(perr(
                ln,
                format!("expected {} vertex indices, a tag and an optional label", nloc),
            ));
        }
        for t in &toks[..nloc] {
            let v: usize =
                t.parse().map_err(|e| perr(ln, format!("bad vertex index `{t}`: {e}")))?;
            if v >= nverts {
                return Err(perr(ln, format!("vertex index {v} out of range (n = {nverts})")));
            }
            cells.push(v);
        }
        tags.push(match toks[nloc] {
            "i" => Region::Intra,
            "e" => Region::Extra,
            other => return Err(perr(ln, format!("bad region tag `{other}` (expected i or e)"))),
        });
        labels.push(if toks.len() == nloc + 2 {
            toks[nloc + 1]
                .parse()
                .map_err(|e| perr(ln, format!("bad cell label `{}`: {e}", toks[nloc + 1])))?
        } else {
            1
        });
    }

    Mesh::new(dim, vertices, cells, tags, labels)
}

pub fn export_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "{}", render_mesh(mesh))?;
    f.flush()?;
    Ok(())
}

/// Canonical text form of a mesh; `export_mesh` writes exactly this.
pub fn render_mesh(mesh: &Mesh) -> String {
    let dim = mesh.dim();
    let mut out = String::new();
    out.push_str(&format!("knpemi-mesh v1 dim={dim}\n"));
    out.push_str(&format!("vertices {}\n", mesh.num_vertices()));
    for v in mesh.vertices() {
        for k in 0..dim {
            if k > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{}", v[k]));
        }
        out.push('\n');
    }
    out.push_str(&format!("cells {}\n", mesh.num_cells()));
    for c in 0..mesh.num_cells() {
        for &v in mesh.cell(c) {
            out.push_str(&format!("{v} "));
        }
        out.push(match mesh.cell_tag(c) {
            Region::Intra => 'i',
            Region::Extra => 'e',
        });
        let label = mesh.cell_label(c);
        if label != 1 {
            out.push_str(&format!(" {label}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_model_a_mesh;

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("knpemi-mesh-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn minimal_two_triangle_mesh() {
        let text = "knpemi-mesh v1 dim=2\nvertices 4\n0 0\n1 0\n0.5 1\n-0.5 1\n\
                    cells 2\n0 1 2 i\n0 2 3 e\n";
        let p = tmpfile("two_tri.mesh");
        std::fs::write(&p, text).unwrap();
        // intra cell touches the boundary here -> must be rejected
        assert!(import_mesh(&p).is_err());

        // fully enclosed intra cell: build a small fan instead
        let text = "knpemi-mesh v1 dim=2\nvertices 5\n0 0\n2 0\n2 2\n0 2\n1 1\n\
                    cells 4\n0 1 4 e\n1 2 4 e\n2 3 4 e\n3 0 4 e\n";
        let p2 = tmpfile("fan.mesh");
        std::fs::write(&p2, text).unwrap();
        let m = import_mesh(&p2).unwrap();
        assert_eq!(m.interface_facets().len(), 0);
        assert_eq!(m.boundary_facets().len(), 4);
    }

    #[test]
    fn one_interface_facet() {
        // squares: central intra square split in two, ring of extra cells
        let m = build_model_a_mesh(4, 2).unwrap();
        let p = tmpfile("model_a_4.mesh");
        export_mesh(&m, &p).unwrap();
        let m2 = import_mesh(&p).unwrap();
        assert_eq!(m2.num_vertices(), 25);
        assert_eq!(m2.num_cells(), 32);
        assert_eq!(m2.interface_facets().len(), 8);
        for c in 0..m.num_cells() {
            assert_eq!(m.cell_tag(c), m2.cell_tag(c));
            assert_eq!(m.cell(c), m2.cell(c));
        }
    }

    #[test]
    fn export_import_idempotent() {
        let m = build_model_a_mesh(4, 3).unwrap();
        let p1 = tmpfile("m3a.mesh");
        export_mesh(&m, &p1).unwrap();
        let m2 = import_mesh(&p1).unwrap();
        let p2 = tmpfile("m3b.mesh");
        export_mesh(&m2, &p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2, "canonical form must be byte-stable under round trip");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let p = tmpfile("bad.mesh");
        std::fs::write(&p, "knpemi-mesh v1 dim=2\nvertices 2\n0 0\nnot-a-number 1\n").unwrap();
        match import_mesh(&p) {
            Err(crate::error::Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn export_to_unwritable_path() {
        let m = build_model_a_mesh(4, 2).unwrap();
        let r = export_mesh(&m, std::path::Path::new("/nonexistent-dir/xyz/mesh.txt"));
        assert!(matches!(r, Err(crate::error::Error::Io(_))));
    }
}
