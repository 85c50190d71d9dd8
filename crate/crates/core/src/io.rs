//! File formats: MSH 2.2 ASCII meshes in; legacy VTK, RFC-4180 CSV, and
//! hashed binary field files out.
//!
//! Conventions: the MSH writer emits physical group 1 = LOCAL,
//! 2 = NONLOCAL, 3 = EXTERIOR (the reader honors an arbitrary map). Field
//! files are flat little-endian `f64` arrays with a JSON sidecar carrying an
//! FNV-1a hash of the mesh so a field can never be applied to the wrong
//! geometry.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::SchwarzReport;
use crate::dofs::{DofMap, Side};
use crate::fields::BrokenField;
use crate::geometry::Vec2;
use crate::mesh::{Label, LabeledMesh, MeshError};
use crate::optimizer::IterationRecord;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o ({path}): {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("MSH parse error at line {line}: {message}")]
    MshParse { line: usize, message: String },
    #[error("MSH element {id} has unsupported type {etype} (supported: 2; skipped: 1, 15)")]
    UnsupportedElement { id: u64, etype: u32 },
    #[error("MSH element {id} references physical group {tag} missing from the label map")]
    UnknownPhysicalGroup { id: u64, tag: i32 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("field sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
    #[error("field/mesh mismatch: {0}")]
    FieldMismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------------
// MSH 2.2 ASCII
// ---------------------------------------------------------------------------

/// Parses an MSH 2.2 ASCII document. Triangles (type 2) become mesh
/// elements labeled through `label_map` (physical group → region); line
/// (type 1) and point (type 15) elements are skipped; any other element
/// type is an error. Nodes not referenced by any triangle are dropped.
pub fn parse_msh(text: &str, label_map: &BTreeMap<i32, Label>) -> Result<LabeledMesh, IoError> {
    let mut nodes: Vec<(u64, f64, f64)> = Vec::new();
    let mut triangles: Vec<(u64, i32, [u64; 3])> = Vec::new();

    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, message: String| IoError::MshParse {
        line: line + 1,
        message,
    };

    while let Some((ln, raw)) = lines.next() {
        let section = raw.trim();
        match section {
            "$MeshFormat" => {
                let (ln2, fmt) = lines
                    .next()
                    .ok_or_else(|| parse_err(ln, "unterminated $MeshFormat".into()))?;
                let mut it = fmt.split_whitespace();
                let version = it.next().unwrap_or("");
                if !version.starts_with("2.2") {
                    return Err(parse_err(
                        ln2,
                        format!("unsupported MSH version '{version}' (need 2.2)"),
                    ));
                }
                if it.next() != Some("0") {
                    return Err(parse_err(ln2, "binary MSH is not supported".into()));
                }
                for (ln3, end) in lines.by_ref() {
                    if end.trim() == "$EndMeshFormat" {
                        break;
                    }
                    if end.trim().starts_with('$') {
                        return Err(parse_err(ln3, "expected $EndMeshFormat".into()));
                    }
                }
            }
            "$Nodes" => {
                let (ln2, cnt) = lines
                    .next()
                    .ok_or_else(|| parse_err(ln, "unterminated $Nodes".into()))?;
                let count: usize = cnt
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(ln2, format!("bad node count '{}'", cnt.trim())))?;
                for _ in 0..count {
                    let (ln3, node) = lines
                        .next()
                        .ok_or_else(|| parse_err(ln2, "truncated $Nodes".into()))?;
                    let mut it = node.split_whitespace();
                    let id: u64 = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(ln3, "bad node id".into()))?;
                    let x: f64 = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(ln3, "bad node x".into()))?;
                    let y: f64 = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(ln3, "bad node y".into()))?;
                    // z ignored (2D)
                    nodes.push((id, x, y));
                }
                match lines.next() {
                    Some((_, end)) if end.trim() == "$EndNodes" => {}
                    other => {
                        let at = other.map(|(l, _)| l).unwrap_or(ln);
                        return Err(parse_err(at, "expected $EndNodes".into()));
                    }
                }
            }
            "$Elements" => {
                let (ln2, cnt) = lines
                    .next()
                    .ok_or_else(|| parse_err(ln, "unterminated $Elements".into()))?;
                let count: usize = cnt
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(ln2, format!("bad element count '{}'", cnt.trim())))?;
                for _ in 0..count {
                    let (ln3, el) = lines
                        .next()
                        .ok_or_else(|| parse_err(ln2, "truncated $Elements".into()))?;
                    let fields: Vec<&str> = el.split_whitespace().collect();
                    if fields.len() < 3 {
                        return Err(parse_err(ln3, "short element line".into()));
                    }
                    let id: u64 = fields[0]
                        .parse()
                        .map_err(|_| parse_err(ln3, "bad element id".into()))?;
                    let etype: u32 = fields[1]
                        .parse()
                        .map_err(|_| parse_err(ln3, "bad element type".into()))?;
                    let ntags: usize = fields[2]
                        .parse()
                        .map_err(|_| parse_err(ln3, "bad tag count".into()))?;
                    match etype {
                        1 | 15 => continue, // boundary lines / points: skipped
                        2 => {}
                        other => return Err(IoError::UnsupportedElement { id, etype: other }),
                    }
                    if fields.len() < 3 + ntags + 3 {
                        return Err(parse_err(ln3, "triangle element too short".into()));
                    }
                    let physical: i32 = if ntags >= 1 {
                        fields[3]
                            .parse()
                            .map_err(|_| parse_err(ln3, "bad physical tag".into()))?
                    } else {
                        return Err(parse_err(
                            ln3,
                            "triangle element carries no physical tag".into(),
                        ));
                    };
                    let mut tri = [0u64; 3];
                    for (k, f) in fields[3 + ntags..3 + ntags + 3].iter().enumerate() {
                        tri[k] = f
                            .parse()
                            .map_err(|_| parse_err(ln3, "bad node reference".into()))?;
                    }
                    triangles.push((id, physical, tri));
                }
                match lines.next() {
                    Some((_, end)) if end.trim() == "$EndElements" => {}
                    other => {
                        let at = other.map(|(l, _)| l).unwrap_or(ln);
                        return Err(parse_err(at, "expected $EndElements".into()));
                    }
                }
            }
            // unknown sections (PhysicalNames etc.) are skipped wholesale
            s if s.starts_with('$') && !s.starts_with("$End") => {
                let terminator = format!("$End{}", &s[1..]);
                for (_, end) in lines.by_ref() {
                    if end.trim() == terminator {
                        break;
                    }
                }
            }
            "" => {}
            _ => {}
        }
    }

    // node id → position
    let mut by_id: BTreeMap<u64, Vec2> = BTreeMap::new();
    for (id, x, y) in nodes {
        by_id.insert(id, Vec2::new(x, y));
    }
    // keep only nodes referenced by triangles, preserving file (id) order
    let mut used: BTreeMap<u64, usize> = BTreeMap::new();
    for (id, _, tri) in &triangles {
        for node_id in tri {
            if !by_id.contains_key(node_id) {
                return Err(IoError::MshParse {
                    line: 0,
                    message: format!("element {id} references unknown node {node_id}"),
                });
            }
            used.insert(*node_id, 0);
        }
    }
    for (k, idx) in used.values_mut().enumerate() {
        *idx = k;
    }
    let mut tris: Vec<[usize; 3]> = Vec::with_capacity(triangles.len());
    let mut labels: Vec<Label> = Vec::with_capacity(triangles.len());
    for (id, physical, tri) in &triangles {
        let label = *label_map
            .get(physical)
            .ok_or(IoError::UnknownPhysicalGroup {
                id: *id,
                tag: *physical,
            })?;
        tris.push([used[&tri[0]], used[&tri[1]], used[&tri[2]]]);
        labels.push(label);
    }
    let vertices: Vec<Vec2> = used.keys().map(|id| by_id[id]).collect();
    Ok(LabeledMesh::new(vertices, tris, labels)?)
}

pub fn read_msh(path: &Path, label_map: &BTreeMap<i32, Label>) -> Result<LabeledMesh, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_msh(&text, label_map)
}

fn physical_of(label: Label) -> i32 {
    match label {
        Label::Local => 1,
        Label::Nonlocal => 2,
        Label::Exterior => 3,
    }
}

/// Formats the mesh as MSH 2.2 ASCII with the 1/2/3 physical convention.
pub fn format_msh(mesh: &LabeledMesh) -> String {
    let mut out = String::new();
    out.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
    let _ = writeln!(out, "$Nodes\n{}", mesh.n_vertices());
    for (i, v) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(out, "{} {:.17} {:.17} 0", i + 1, v.x, v.y);
    }
    out.push_str("$EndNodes\n");
    let _ = writeln!(out, "$Elements\n{}", mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.triangle(t);
        let phys = physical_of(mesh.label(t));
        let _ = writeln!(
            out,
            "{} 2 2 {} {} {} {} {}",
            t + 1,
            phys,
            phys,
            a + 1,
            b + 1,
            c + 1
        );
    }
    out.push_str("$EndElements\n");
    out
}

pub fn write_msh(path: &Path, mesh: &LabeledMesh) -> Result<(), IoError> {
    std::fs::write(path, format_msh(mesh)).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Legacy VTK (ASCII UNSTRUCTURED_GRID)
// ---------------------------------------------------------------------------

fn region_code(label: Label) -> i32 {
    match label {
        Label::Local => 0,
        Label::Nonlocal => 1,
        Label::Exterior => 2,
    }
}

fn vtk_header(title: &str) -> String {
    format!("# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
}

/// Broken-space VTK: interface points are duplicated — LOCAL triangles
/// reference one copy, NONLOCAL/EXTERIOR triangles another — so the jump of
/// a broken field across Γ renders faithfully. Each named field is written
/// as point data taking the owning side's coefficient.
pub fn format_vtk_broken(
    title: &str,
    mesh: &LabeledMesh,
    map: &DofMap,
    fields: &[(&str, &BrokenField)],
) -> String {
    let n = mesh.n_vertices();
    // per-side vertex renumbering
    let mut local_ids: Vec<Option<usize>> = vec![None; n];
    let mut nonlocal_ids: Vec<Option<usize>> = vec![None; n];
    let mut points: Vec<(Vec2, Side, usize)> = Vec::new();
    for t in 0..mesh.n_triangles() {
        let side = Side::of_label(mesh.label(t));
        let ids = match side {
            Side::Local => &mut local_ids,
            Side::Nonlocal => &mut nonlocal_ids,
        };
        for &v in &mesh.triangle(t) {
            if ids[v].is_none() {
                ids[v] = Some(points.len());
                points.push((mesh.vertex(v), side, v));
            }
        }
    }

    let mut out = vtk_header(title);
    let _ = writeln!(out, "POINTS {} double", points.len());
    for (p, _, _) in &points {
        let _ = writeln!(out, "{:.17} {:.17} 0", p.x, p.y);
    }
    let m = mesh.n_triangles();
    let _ = writeln!(out, "CELLS {} {}", m, 4 * m);
    for t in 0..m {
        let side = Side::of_label(mesh.label(t));
        let ids = match side {
            Side::Local => &local_ids,
            Side::Nonlocal => &nonlocal_ids,
        };
        let [a, b, c] = mesh.triangle(t);
        let _ = writeln!(
            out,
            "3 {} {} {}",
            ids[a].unwrap(),
            ids[b].unwrap(),
            ids[c].unwrap()
        );
    }
    let _ = writeln!(out, "CELL_TYPES {m}");
    for _ in 0..m {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "CELL_DATA {m}");
    out.push_str("SCALARS region int 1\nLOOKUP_TABLE default\n");
    for t in 0..m {
        let _ = writeln!(out, "{}", region_code(mesh.label(t)));
    }
    let _ = writeln!(out, "POINT_DATA {}", points.len());
    for (name, field) in fields {
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for (_, side, v) in &points {
            let _ = writeln!(out, "{:.17}", field.nodal(map, *side, *v));
        }
    }
    out
}

pub fn write_vtk_broken(
    path: &Path,
    title: &str,
    mesh: &LabeledMesh,
    map: &DofMap,
    fields: &[(&str, &BrokenField)],
) -> Result<(), IoError> {
    std::fs::write(path, format_vtk_broken(title, mesh, map, fields)).map_err(io_err(path))
}

/// Continuous-field VTK: one point per mesh vertex, named nodal scalars and
/// 2-vector fields (z = 0).
pub fn format_vtk_nodal(
    title: &str,
    mesh: &LabeledMesh,
    scalars: &[(&str, &[f64])],
    vectors: &[(&str, &[f64])],
) -> String {
    let n = mesh.n_vertices();
    for (name, s) in scalars {
        assert_eq!(s.len(), n, "scalar field '{name}' length");
    }
    for (name, v) in vectors {
        assert_eq!(v.len(), 2 * n, "vector field '{name}' length");
    }
    let mut out = vtk_header(title);
    let _ = writeln!(out, "POINTS {n} double");
    for p in mesh.vertices() {
        let _ = writeln!(out, "{:.17} {:.17} 0", p.x, p.y);
    }
    let m = mesh.n_triangles();
    let _ = writeln!(out, "CELLS {} {}", m, 4 * m);
    for t in 0..m {
        let [a, b, c] = mesh.triangle(t);
        let _ = writeln!(out, "3 {a} {b} {c}");
    }
    let _ = writeln!(out, "CELL_TYPES {m}");
    for _ in 0..m {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "CELL_DATA {m}");
    out.push_str("SCALARS region int 1\nLOOKUP_TABLE default\n");
    for t in 0..m {
        let _ = writeln!(out, "{}", region_code(mesh.label(t)));
    }
    if !scalars.is_empty() || !vectors.is_empty() {
        let _ = writeln!(out, "POINT_DATA {n}");
    }
    for (name, s) in scalars {
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for x in *s {
            let _ = writeln!(out, "{x:.17}");
        }
    }
    for (name, v) in vectors {
        let _ = writeln!(out, "VECTORS {name} double");
        for c in v.chunks_exact(2) {
            let _ = writeln!(out, "{:.17} {:.17} 0", c[0], c[1]);
        }
    }
    out
}

pub fn write_vtk_nodal(
    path: &Path,
    title: &str,
    mesh: &LabeledMesh,
    scalars: &[(&str, &[f64])],
    vectors: &[(&str, &[f64])],
) -> Result<(), IoError> {
    std::fs::write(path, format_vtk_nodal(title, mesh, scalars, vectors)).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180: CRLF records, quoting when needed)
// ---------------------------------------------------------------------------

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') || field.contains('\r') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Serializes one table; every record (header included) ends with CRLF.
pub fn format_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(
        &header
            .iter()
            .map(|h| csv_escape(h))
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push_str("\r\n");
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        out.push_str(
            &row.iter()
                .map(|f| csv_escape(f))
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push_str("\r\n");
    }
    out
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), IoError> {
    std::fs::write(path, format_csv(header, rows)).map_err(io_err(path))
}

pub const HISTORY_HEADER: [&str; 10] = [
    "iteration",
    "objective",
    "gradient_norm",
    "riesz_residual",
    "alpha",
    "trials",
    "direction",
    "slope",
    "min_angle_deg",
    "interface_length",
];

pub fn history_rows(records: &[IterationRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                format!("{:.17e}", r.objective),
                format!("{:.17e}", r.gradient_norm),
                format!("{:.3e}", r.riesz_residual),
                format!("{:.17e}", r.alpha),
                r.trials.to_string(),
                r.direction.to_string(),
                format!("{:.17e}", r.slope),
                format!("{:.6}", r.min_angle_deg),
                format!("{:.17e}", r.interface_length),
            ]
        })
        .collect()
}

pub fn write_history_csv(path: &Path, records: &[IterationRecord]) -> Result<(), IoError> {
    write_csv(path, &HISTORY_HEADER, &history_rows(records))
}

pub fn write_schwarz_csv(path: &Path, report: &SchwarzReport) -> Result<(), IoError> {
    let rows: Vec<Vec<String>> = report
        .residuals
        .iter()
        .enumerate()
        .map(|(k, r)| vec![k.to_string(), format!("{r:.17e}")])
        .collect();
    write_csv(path, &["sweep", "relative_residual"], &rows)
}

// ---------------------------------------------------------------------------
// Field files: flat binary f64 + JSON sidecar
// ---------------------------------------------------------------------------

/// FNV-1a (64-bit) over a canonical binary encoding of the mesh, binding a
/// field file to its geometry.
pub fn mesh_hash(mesh: &LabeledMesh) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(&(mesh.n_vertices() as u64).to_le_bytes());
    for v in mesh.vertices() {
        eat(&v.x.to_le_bytes());
        eat(&v.y.to_le_bytes());
    }
    eat(&(mesh.n_triangles() as u64).to_le_bytes());
    for t in 0..mesh.n_triangles() {
        for &v in &mesh.triangle(t) {
            eat(&(v as u64).to_le_bytes());
        }
        eat(&[region_code(mesh.label(t)) as u8]);
    }
    h
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FieldSidecar {
    pub version: u32,
    /// FNV-1a 64 of the mesh, hex.
    pub mesh_hash: String,
    /// "nodal" (one value per vertex) — the only layout currently written.
    pub layout: String,
    pub count: usize,
    pub endianness: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

/// Writes `values` as raw little-endian f64 plus a sidecar binding it to
/// `mesh` (layout "nodal": one value per vertex).
pub fn write_field(path: &Path, mesh: &LabeledMesh, values: &[f64]) -> Result<(), IoError> {
    assert_eq!(values.len(), mesh.n_vertices(), "nodal layout");
    let mut bytes = Vec::with_capacity(8 * values.len());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(io_err(path))?;
    let sidecar = FieldSidecar {
        version: 1,
        mesh_hash: format!("{:016x}", mesh_hash(mesh)),
        layout: "nodal".to_string(),
        count: values.len(),
        endianness: "little".to_string(),
    };
    let sc_path = sidecar_path(path);
    std::fs::write(&sc_path, serde_json::to_string_pretty(&sidecar)?).map_err(io_err(&sc_path))?;
    Ok(())
}

/// Reads a field file back, verifying the sidecar against `mesh`.
pub fn read_field(path: &Path, mesh: &LabeledMesh) -> Result<Vec<f64>, IoError> {
    let sc_path = sidecar_path(path);
    let sc_text = std::fs::read_to_string(&sc_path).map_err(io_err(&sc_path))?;
    let sidecar: FieldSidecar = serde_json::from_str(&sc_text)?;
    if sidecar.layout != "nodal" {
        return Err(IoError::FieldMismatch(format!(
            "unsupported layout '{}'",
            sidecar.layout
        )));
    }
    if sidecar.endianness != "little" {
        return Err(IoError::FieldMismatch(format!(
            "unsupported endianness '{}'",
            sidecar.endianness
        )));
    }
    let expected = format!("{:016x}", mesh_hash(mesh));
    if sidecar.mesh_hash != expected {
        return Err(IoError::FieldMismatch(format!(
            "mesh hash {} does not match the field's {}",
            expected, sidecar.mesh_hash
        )));
    }
    if sidecar.count != mesh.n_vertices() {
        return Err(IoError::FieldMismatch(format!(
            "field holds {} values but the mesh has {} vertices",
            sidecar.count,
            mesh.n_vertices()
        )));
    }
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    if bytes.len() != 8 * sidecar.count {
        return Err(IoError::FieldMismatch(format!(
            "field file holds {} bytes, sidecar promises {}",
            bytes.len(),
            8 * sidecar.count
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config;
    use crate::samples;

    fn label_map() -> BTreeMap<i32, Label> {
        config::RunConfig::default().label_map().unwrap()
    }

    #[test]
    fn msh_roundtrip_preserves_geometry_and_labels() {
        let mesh = samples::square_with_circle(6, 1, Vec2::new(0.5, 0.5), 0.25);
        let text = format_msh(&mesh);
        let back = parse_msh(&text, &label_map()).unwrap();
        assert_eq!(back.n_vertices(), mesh.n_vertices());
        assert_eq!(back.n_triangles(), mesh.n_triangles());
        for (a, b) in mesh.vertices().iter().zip(back.vertices()) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.y, b.y);
        }
        assert_eq!(mesh.triangles(), back.triangles());
        assert_eq!(mesh.labels(), back.labels());
    }

    #[test]
    fn msh_skips_lines_and_points_and_drops_their_private_nodes() {
        let text = "\
$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
5
1 0 0 0
2 1 0 0
3 0 1 0
4 9 9 0
5 1 1 0
$EndNodes
$Elements
5
1 15 2 1 1 4
2 1 2 1 1 1 2
3 2 2 1 1 1 2 3
4 2 2 2 2 2 3 5
5 1 2 3 3 2 5
$EndElements
";
        let mesh = parse_msh(text, &label_map()).unwrap();
        // node 4 only appears in the skipped point element
        assert_eq!(mesh.n_vertices(), 4);
        assert_eq!(mesh.n_triangles(), 2);
        assert_eq!(mesh.labels(), &[Label::Local, Label::Nonlocal]);
    }

    #[test]
    fn msh_rejects_unknown_element_types_and_groups() {
        let quad = "\
$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
1
1 3 2 1 1 1 2 3 4
$EndElements
";
        assert!(matches!(
            parse_msh(quad, &label_map()),
            Err(IoError::UnsupportedElement { etype: 3, .. })
        ));

        let bad_group = "\
$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
3
1 0 0 0
2 1 0 0
3 0 1 0
$EndNodes
$Elements
1
1 2 2 9 9 1 2 3
$EndElements
";
        assert!(matches!(
            parse_msh(bad_group, &label_map()),
            Err(IoError::UnknownPhysicalGroup { tag: 9, .. })
        ));
    }

    /// Minimal independent structural validation of a legacy VTK document.
    fn validate_vtk(text: &str) {
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# vtk DataFile Version 3.0");
        let _title = lines.next().unwrap();
        assert_eq!(lines.next().unwrap(), "ASCII");
        assert_eq!(lines.next().unwrap(), "DATASET UNSTRUCTURED_GRID");
        let points_decl = lines.next().unwrap();
        let mut it = points_decl.split_whitespace();
        assert_eq!(it.next(), Some("POINTS"));
        let n: usize = it.next().unwrap().parse().unwrap();
        assert_eq!(it.next(), Some("double"));
        for _ in 0..n {
            let p = lines.next().unwrap();
            assert_eq!(p.split_whitespace().count(), 3);
            for c in p.split_whitespace() {
                c.parse::<f64>().unwrap();
            }
        }
        let cells_decl = lines.next().unwrap();
        let mut it = cells_decl.split_whitespace();
        assert_eq!(it.next(), Some("CELLS"));
        let m: usize = it.next().unwrap().parse().unwrap();
        let total: usize = it.next().unwrap().parse().unwrap();
        assert_eq!(total, 4 * m);
        for _ in 0..m {
            let c = lines.next().unwrap();
            let vals: Vec<usize> = c
                .split_whitespace()
                .map(|s| s.parse().unwrap())
                .collect();
            assert_eq!(vals[0], 3);
            assert_eq!(vals.len(), 4);
            for &v in &vals[1..] {
                assert!(v < n, "cell references point {v} >= {n}");
            }
        }
        let types_decl = lines.next().unwrap();
        assert!(types_decl.starts_with("CELL_TYPES"));
        for _ in 0..m {
            assert_eq!(lines.next().unwrap().trim(), "5");
        }
        // remaining sections: counts of data blocks must match declarations
        let mut rest: Vec<&str> = lines.collect();
        while !rest.is_empty() {
            let decl = rest.remove(0);
            if decl.starts_with("CELL_DATA") {
                assert_eq!(decl.split_whitespace().nth(1).unwrap().parse::<usize>().unwrap(), m);
            } else if decl.starts_with("POINT_DATA") {
                assert_eq!(decl.split_whitespace().nth(1).unwrap().parse::<usize>().unwrap(), n);
            } else if decl.starts_with("SCALARS") {
                assert_eq!(rest.remove(0), "LOOKUP_TABLE default");
                let count = if decl.contains("region") { m } else { n };
                for _ in 0..count {
                    let v = rest.remove(0);
                    assert_eq!(v.split_whitespace().count(), 1);
                }
            } else if decl.starts_with("VECTORS") {
                for _ in 0..n {
                    let v = rest.remove(0);
                    assert_eq!(v.split_whitespace().count(), 3);
                }
            } else {
                panic!("unexpected VTK section: {decl}");
            }
        }
    }

    #[test]
    fn broken_vtk_duplicates_interface_points_and_validates() {
        let mesh = samples::square_with_circle(6, 1, Vec2::new(0.5, 0.5), 0.25);
        let map = DofMap::new(&mesh);
        let u = BrokenField::from_free((0..map.n_free()).map(|i| i as f64).collect());
        let text = format_vtk_broken("state", &mesh, &map, &[("u", &u)]);
        validate_vtk(&text);
        // duplicated points: every vertex shared between the LOCAL side and
        // the NONLOCAL/EXTERIOR side appears twice — that is the interface Γ
        // plus the outer square boundary (local inside, exterior collar
        // outside)
        let mut shared = std::collections::BTreeSet::new();
        shared.extend(mesh.derive_interface().unwrap().vertex_ids());
        for &(a, b) in mesh.outer_boundary_edges() {
            shared.insert(a);
            shared.insert(b);
        }
        let declared: usize = text
            .lines()
            .find(|l| l.starts_with("POINTS"))
            .and_then(|l| l.split_whitespace().nth(1))
            .and_then(|s| s.parse().ok())
            .unwrap();
        assert_eq!(declared, mesh.n_vertices() + shared.len());
    }

    #[test]
    fn nodal_vtk_with_vectors_validates() {
        let mesh = samples::square_with_circle(4, 1, Vec2::new(0.5, 0.5), 0.25);
        let mu: Vec<f64> = (0..mesh.n_vertices()).map(|i| i as f64 * 0.1).collect();
        let grad: Vec<f64> = (0..2 * mesh.n_vertices()).map(|i| i as f64).collect();
        let text = format_vtk_nodal("mu", &mesh, &[("mu", &mu)], &[("gradJ", &grad)]);
        validate_vtk(&text);
    }

    #[test]
    fn csv_is_rfc4180() {
        let rows = vec![
            vec!["1".to_string(), "plain".to_string()],
            vec!["2".to_string(), "with,comma".to_string()],
            vec!["3".to_string(), "with\"quote".to_string()],
        ];
        let text = format_csv(&["id", "note"], &rows);
        let records: Vec<&str> = text.split("\r\n").collect();
        assert_eq!(records[0], "id,note");
        assert_eq!(records[1], "1,plain");
        assert_eq!(records[2], "2,\"with,comma\"");
        assert_eq!(records[3], "3,\"with\"\"quote\"");
        assert_eq!(records[4], "");
        assert!(!text.contains("\n\r"));
    }

    #[test]
    fn field_file_roundtrip_and_mismatch_detection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ubar.f64");
        let mesh = samples::square_with_circle(5, 1, Vec2::new(0.5, 0.5), 0.25);
        let values: Vec<f64> = (0..mesh.n_vertices()).map(|i| (i as f64).sin()).collect();
        write_field(&path, &mesh, &values).unwrap();
        let back = read_field(&path, &mesh).unwrap();
        assert_eq!(values, back);

        // wrong mesh → hash mismatch
        let other = samples::square_with_circle(5, 1, Vec2::new(0.5, 0.5), 0.3);
        assert!(matches!(
            read_field(&path, &other),
            Err(IoError::FieldMismatch(_))
        ));
    }
}
