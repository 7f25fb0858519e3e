//! Reader for Gmsh MSH 2.2 ASCII files. Only 3-node triangles (element type 2)
//! are kept; all other element types are skipped.

use super::{repair_orientation, MeshError, SurfaceMesh};
use crate::geo::Point3;
use std::collections::HashMap;
use std::path::Path;

/// Imports a closed triangulated surface from an MSH 2.2 ASCII file.
///
/// Windings are repaired to a consistent outward orientation; the import fails
/// on non-manifold or open surfaces.
pub fn import_msh(path: impl AsRef<Path>) -> Result<SurfaceMesh, MeshError> {
    let text = std::fs::read_to_string(path)?;
    parse_msh(&text)
}

pub(crate) fn parse_msh(text: &str) -> Result<SurfaceMesh, MeshError> {
    let mut lines = text.lines().map(str::trim);

    let mut node_ids: Vec<u64> = Vec::new();
    let mut vertices: Vec<Point3> = Vec::new();
    let mut triangles_raw: Vec<[u64; 3]> = Vec::new();
    let mut saw_nodes = false;
    let mut saw_elements = false;

    while let Some(line) = lines.next() {
        match line {
            "$MeshFormat" => {
                let fmt = lines
                    .next()
                    .ok_or_else(|| MeshError::Parse("missing format line".into()))?;
                let mut it = fmt.split_whitespace();
                let version = it.next().unwrap_or("");
                if !version.starts_with("2.") {
                    return Err(MeshError::Parse(format!(
                        "unsupported MSH version {version}; expected 2.x ASCII"
                    )));
                }
                let file_type = it.next().unwrap_or("");
                if file_type != "0" {
                    return Err(MeshError::Parse(
                        "binary MSH files are not supported".into(),
                    ));
                }
                expect_section_end(&mut lines, "$EndMeshFormat")?;
            }
            "$Nodes" => {
                saw_nodes = true;
                let count: usize = next_number(&mut lines, "node count")?;
                for _ in 0..count {
                    let line = lines
                        .next()
                        .ok_or_else(|| MeshError::Parse("truncated $Nodes section".into()))?;
                    let mut it = line.split_whitespace();
                    let id: u64 = parse_field(it.next(), "node id")?;
                    let x: f64 = parse_field(it.next(), "node x")?;
                    let y: f64 = parse_field(it.next(), "node y")?;
                    let z: f64 = parse_field(it.next(), "node z")?;
                    node_ids.push(id);
                    vertices.push([x, y, z]);
                }
                expect_section_end(&mut lines, "$EndNodes")?;
            }
            "$Elements" => {
                saw_elements = true;
                let count: usize = next_number(&mut lines, "element count")?;
                for _ in 0..count {
                    let line = lines
                        .next()
                        .ok_or_else(|| MeshError::Parse("truncated $Elements section".into()))?;
                    let mut it = line.split_whitespace();
                    let _id: u64 = parse_field(it.next(), "element id")?;
                    let etype: u32 = parse_field(it.next(), "element type")?;
                    let ntags: usize = parse_field(it.next(), "element tag count")?;
                    for _ in 0..ntags {
                        it.next()
                            .ok_or_else(|| MeshError::Parse("truncated element tags".into()))?;
                    }
                    if etype == 2 {
                        let a: u64 = parse_field(it.next(), "triangle node")?;
                        let b: u64 = parse_field(it.next(), "triangle node")?;
                        let c: u64 = parse_field(it.next(), "triangle node")?;
                        triangles_raw.push([a, b, c]);
                    }
                }
                expect_section_end(&mut lines, "$EndElements")?;
            }
            "" => {}
            other if other.starts_with('$') && !other.starts_with("$End") => {
                // Unknown section: skip to its end marker.
                let end = format!("$End{}", &other[1..]);
                for l in lines.by_ref() {
                    if l == end {
                        break;
                    }
                }
            }
            _ => {}
        }
    }

    if !saw_nodes || !saw_elements {
        return Err(MeshError::Parse(
            "missing $Nodes or $Elements section".into(),
        ));
    }
    if triangles_raw.is_empty() {
        return Err(MeshError::Parse(
            "no 3-node triangles (element type 2) found".into(),
        ));
    }

    let id_to_index: HashMap<u64, usize> = node_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();
    let mut triangles = Vec::with_capacity(triangles_raw.len());
    for raw in &triangles_raw {
        let mut tri = [0usize; 3];
        for (slot, id) in tri.iter_mut().zip(raw) {
            *slot = *id_to_index
                .get(id)
                .ok_or_else(|| MeshError::Parse(format!("element references unknown node {id}")))?;
        }
        triangles.push(tri);
    }

    // Drop nodes not referenced by any triangle (volume or line nodes).
    let mut used = vec![false; vertices.len()];
    for tri in &triangles {
        for &v in tri {
            used[v] = true;
        }
    }
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut compact = Vec::new();
    for (i, v) in vertices.iter().enumerate() {
        if used[i] {
            remap[i] = compact.len();
            compact.push(*v);
        }
    }
    for tri in &mut triangles {
        for v in tri.iter_mut() {
            *v = remap[*v];
        }
    }

    repair_orientation(compact, triangles)
}

fn expect_section_end<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    end: &str,
) -> Result<(), MeshError> {
    match lines.next() {
        Some(l) if l == end => Ok(()),
        other => Err(MeshError::Parse(format!("expected {end}, got {other:?}"))),
    }
}

fn next_number<'a, T: std::str::FromStr>(
    lines: &mut impl Iterator<Item = &'a str>,
    what: &str,
) -> Result<T, MeshError> {
    let line = lines
        .next()
        .ok_or_else(|| MeshError::Parse(format!("missing {what}")))?;
    line.trim()
        .parse()
        .map_err(|_| MeshError::Parse(format!("invalid {what}: {line:?}")))
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T, MeshError> {
    field
        .ok_or_else(|| MeshError::Parse(format!("missing {what}")))?
        .parse()
        .map_err(|_| MeshError::Parse(format!("invalid {what}")))
}

/// Writes a mesh as MSH 2.2 ASCII. Used by tests and for exporting generated meshes.
pub fn export_msh(mesh: &SurfaceMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    use std::fmt::Write as _;
    let mut out = String::new();
    out.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
    let _ = writeln!(out, "{}", mesh.vertex_count());
    for (i, v) in mesh.vertices.iter().enumerate() {
        let _ = writeln!(out, "{} {:.17e} {:.17e} {:.17e}", i + 1, v[0], v[1], v[2]);
    }
    out.push_str("$EndNodes\n$Elements\n");
    let _ = writeln!(out, "{}", mesh.triangle_count());
    for (i, t) in mesh.triangles.iter().enumerate() {
        let _ = writeln!(
            out,
            "{} 2 2 0 1 {} {} {}",
            i + 1,
            t[0] + 1,
            t[1] + 1,
            t[2] + 1
        );
    }
    out.push_str("$EndElements\n");
    std::fs::write(path, out)?;
    Ok(())
}
