use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_json, read_text, versioned, write_atomic, write_json};
use crate::baselines::{BaselineFile, BASELINE_FORMAT_VERSION};
use crate::engine::mask::SamplingStrategy;
use crate::engine::DeviationMap;
use crate::error::{Result, ScsrError};
use crate::geometry::{adjacency_from_faces, order_for_vertex_count, IcosphereMesh, Parcellation};

pub const MAP_FORMAT_VERSION: u32 = 1;
const PARCELLATION_FORMAT_VERSION: u32 = 1;

const MAP_HEADER: &str = "vertex_id,thickness_mm,reference_mm,sigma_mm,z";
const SIGMA_HEADER: &str = "vertex_id,sigma_mm";
const PARCELLATION_HEADER: &str = "vertex_id,parcel_id";

/// Reconstruction settings stored next to a deviation map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub format_version: u32,
    pub subject_id: String,
    pub q: f64,
    pub s: f64,
    pub m: usize,
    pub base_seed: u64,
    pub strategy: SamplingStrategy,
    pub excluded_roi: Option<String>,
    /// Per-iteration seeds, `base_seed ^ i`.
    pub seeds: Vec<u64>,
    pub roi_means: BTreeMap<String, f64>,
    pub fallback_rows: Vec<usize>,
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// CSV and sidecar paths of a subject's map inside `dir`.
pub fn map_paths(dir: &Path, subject_id: &str) -> (PathBuf, PathBuf) {
    let csv = dir.join(format!("{subject_id}.csv"));
    let json = sidecar_path(&csv);
    (csv, json)
}

fn malformed(path: &Path, line: usize, detail: impl std::fmt::Display) -> ScsrError {
    ScsrError::malformed(path, format!("line {line}: {detail}"))
}

/// Data rows of a CSV with a fixed header, split on commas.
fn csv_rows<'a>(
    path: &Path,
    text: &'a str,
    header: &str,
    columns: usize,
) -> Result<Vec<Vec<&'a str>>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        other => {
            return Err(malformed(
                path,
                1,
                format!("expected header {header:?}, found {other:?}"),
            ))
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            if fields.len() != columns {
                return Err(malformed(
                    path,
                    i + 2,
                    format!("expected {columns} fields, found {}", fields.len()),
                ));
            }
            Ok(fields)
        })
        .collect()
}

fn parse<T: std::str::FromStr>(path: &Path, line: usize, field: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field
        .parse()
        .map_err(|e| malformed(path, line, format!("{field:?}: {e}")))
}

fn check_vertex_id(path: &Path, row: usize, id: usize) -> Result<()> {
    if id != row {
        return Err(malformed(
            path,
            row + 2,
            format!("vertex_id {id} out of sequence"),
        ));
    }
    Ok(())
}

/// Writes `vertex_id,thickness_mm,reference_mm,sigma_mm,z` with six decimals
/// and the sidecar next to it.
pub fn write_map(csv_path: &Path, map: &DeviationMap, sidecar: &MapSidecar) -> Result<()> {
    let mut text = String::with_capacity(64 * map.len());
    text.push_str(MAP_HEADER);
    text.push('\n');
    for v in 0..map.len() {
        writeln!(
            text,
            "{v},{:.6},{:.6},{:.6},{:.6}",
            map.thickness[v], map.reference[v], map.sigma[v], map.z[v]
        )
        .expect("write to string");
    }
    write_atomic(csv_path, text.as_bytes())?;
    write_json(&sidecar_path(csv_path), sidecar)
}

pub fn read_map(csv_path: &Path) -> Result<(DeviationMap, MapSidecar)> {
    let side_path = sidecar_path(csv_path);
    let sidecar: MapSidecar = versioned(&side_path, read_json(&side_path)?, MAP_FORMAT_VERSION)?;
    let text = read_text(csv_path)?;
    let rows = csv_rows(csv_path, &text, MAP_HEADER, 5)?;
    let mut map = DeviationMap {
        subject_id: sidecar.subject_id.clone(),
        thickness: Vec::with_capacity(rows.len()),
        reference: Vec::with_capacity(rows.len()),
        sigma: Vec::with_capacity(rows.len()),
        z: Vec::with_capacity(rows.len()),
        roi_means: sidecar.roi_means.clone(),
        fallback_rows: sidecar.fallback_rows.clone(),
    };
    for (i, f) in rows.iter().enumerate() {
        check_vertex_id(csv_path, i, parse(csv_path, i + 2, f[0])?)?;
        map.thickness.push(parse(csv_path, i + 2, f[1])?);
        map.reference.push(parse(csv_path, i + 2, f[2])?);
        map.sigma.push(parse(csv_path, i + 2, f[3])?);
        map.z.push(parse(csv_path, i + 2, f[4])?);
    }
    Ok((map, sidecar))
}

/// `vertex_id,sigma_mm` at full round-trip precision.
pub fn write_sigma(path: &Path, sigma: &[f64]) -> Result<()> {
    let mut text = String::from(SIGMA_HEADER);
    text.push('\n');
    for (v, s) in sigma.iter().enumerate() {
        writeln!(text, "{v},{s}").expect("write to string");
    }
    write_atomic(path, text.as_bytes())
}

pub fn read_sigma(path: &Path) -> Result<Vec<f64>> {
    let text = read_text(path)?;
    let rows = csv_rows(path, &text, SIGMA_HEADER, 2)?;
    rows.iter()
        .enumerate()
        .map(|(i, f)| {
            check_vertex_id(path, i, parse(path, i + 2, f[0])?)?;
            let s: f64 = parse(path, i + 2, f[1])?;
            if !(s > 0.0) || !s.is_finite() {
                return Err(malformed(
                    path,
                    i + 2,
                    format!("sigma {s} must be positive"),
                ));
            }
            Ok(s)
        })
        .collect()
}

/// ASCII PLY with double-precision vertices and an optional named
/// per-vertex scalar.
pub fn write_mesh_ply(
    path: &Path,
    mesh: &IcosphereMesh,
    scalar: Option<(&str, &[f64])>,
) -> Result<()> {
    if let Some((_, values)) = scalar {
        if values.len() != mesh.n_vertices() {
            return Err(ScsrError::Shape {
                context: "PLY scalar length",
                expected: mesh.n_vertices(),
                actual: values.len(),
            });
        }
    }
    let mut text = String::new();
    text.push_str("ply\nformat ascii 1.0\n");
    writeln!(text, "comment icosphere order {}", mesh.order).unwrap();
    writeln!(text, "element vertex {}", mesh.n_vertices()).unwrap();
    text.push_str("property double x\nproperty double y\nproperty double z\n");
    if let Some((name, _)) = scalar {
        writeln!(text, "property double {name}").unwrap();
    }
    writeln!(text, "element face {}", mesh.faces.len()).unwrap();
    text.push_str("property list uchar int vertex_indices\nend_header\n");
    for (v, [x, y, z]) in mesh.vertices.iter().enumerate() {
        write!(text, "{x} {y} {z}").unwrap();
        if let Some((_, values)) = scalar {
            write!(text, " {}", values[v]).unwrap();
        }
        text.push('\n');
    }
    for [a, b, c] in &mesh.faces {
        writeln!(text, "3 {a} {b} {c}").unwrap();
    }
    write_atomic(path, text.as_bytes())
}

/// Reads a mesh written by [`write_mesh_ply`], with its scalar if present.
pub fn read_mesh_ply(path: &Path) -> Result<(IcosphereMesh, Option<Vec<f64>>)> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| ScsrError::Truncated {
            path: path.to_path_buf(),
            detail: format!("missing {what}"),
        })
    };
    if next("magic")?.1 != "ply" {
        return Err(ScsrError::BadMagic {
            path: path.to_path_buf(),
            expected: "ply",
        });
    }
    let (mut n_vertices, mut n_faces, mut vertex_props) = (None, None, 0usize);
    loop {
        let (line, l) = next("header")?;
        let words: Vec<&str> = l.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] | ["comment", ..] => {}
            ["element", "vertex", n] => n_vertices = Some(parse::<usize>(path, line, n)?),
            ["element", "face", n] => n_faces = Some(parse::<usize>(path, line, n)?),
            ["property", "list", ..] => {}
            ["property", _, _] if n_faces.is_none() => vertex_props += 1,
            _ => {
                return Err(malformed(
                    path,
                    line,
                    format!("unsupported header line {l:?}"),
                ))
            }
        }
    }
    let (Some(nv), Some(nf)) = (n_vertices, n_faces) else {
        return Err(ScsrError::malformed(path, "missing element counts"));
    };
    if !(3..=4).contains(&vertex_props) {
        return Err(ScsrError::malformed(
            path,
            format!("{vertex_props} vertex properties"),
        ));
    }
    let Some(order) = order_for_vertex_count(nv) else {
        return Err(ScsrError::HeaderMismatch {
            path: path.to_path_buf(),
            detail: format!("{nv} vertices is not an icosphere size"),
        });
    };
    let mut vertices = Vec::with_capacity(nv);
    let mut scalar = (vertex_props == 4).then(|| Vec::with_capacity(nv));
    for _ in 0..nv {
        let (line, l) = next("vertex")?;
        let vals = l
            .split_whitespace()
            .map(|w| parse::<f64>(path, line, w))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != vertex_props {
            return Err(malformed(path, line, "wrong vertex property count"));
        }
        vertices.push([vals[0], vals[1], vals[2]]);
        if let Some(s) = scalar.as_mut() {
            s.push(vals[3]);
        }
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, l) = next("face")?;
        let idx = l
            .split_whitespace()
            .map(|w| parse::<usize>(path, line, w))
            .collect::<Result<Vec<_>>>()?;
        if idx.len() != 4 || idx[0] != 3 || idx[1..].iter().any(|&i| i >= nv) {
            return Err(malformed(path, line, "invalid triangle"));
        }
        faces.push([idx[1], idx[2], idx[3]]);
    }
    if let Some((line, _)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(ScsrError::SizeMismatch {
            path: path.to_path_buf(),
            detail: format!("unexpected data at line {line}"),
        });
    }
    let adjacency = adjacency_from_faces(nv, &faces);
    Ok((
        IcosphereMesh {
            order,
            vertices,
            faces,
            adjacency,
        },
        scalar,
    ))
}

#[derive(Debug, Serialize, Deserialize)]
struct ParcellationSidecar {
    format_version: u32,
    k: usize,
    roi_sets: BTreeMap<String, BTreeSet<usize>>,
}

/// `vertex_id,parcel_id` plus a JSON sidecar with `k` and the named ROIs.
pub fn write_parcellation(csv_path: &Path, parc: &Parcellation) -> Result<()> {
    let mut text = String::from(PARCELLATION_HEADER);
    text.push('\n');
    for (v, l) in parc.labels.iter().enumerate() {
        writeln!(text, "{v},{l}").unwrap();
    }
    write_atomic(csv_path, text.as_bytes())?;
    write_json(
        &sidecar_path(csv_path),
        &ParcellationSidecar {
            format_version: PARCELLATION_FORMAT_VERSION,
            k: parc.k,
            roi_sets: parc.roi_sets.clone(),
        },
    )
}

pub fn read_parcellation(csv_path: &Path) -> Result<Parcellation> {
    let side_path = sidecar_path(csv_path);
    let sidecar: ParcellationSidecar = versioned(
        &side_path,
        read_json(&side_path)?,
        PARCELLATION_FORMAT_VERSION,
    )?;
    let text = read_text(csv_path)?;
    let labels = csv_rows(csv_path, &text, PARCELLATION_HEADER, 2)?
        .iter()
        .enumerate()
        .map(|(i, f)| {
            check_vertex_id(csv_path, i, parse(csv_path, i + 2, f[0])?)?;
            parse(csv_path, i + 2, f[1])
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut parc = Parcellation::from_labels(labels, sidecar.k)?;
    for (name, ids) in &sidecar.roi_sets {
        parc = parc.define_roi(name, ids)?;
    }
    Ok(parc)
}

pub fn write_baseline(path: &Path, file: &BaselineFile) -> Result<()> {
    write_json(path, file)
}

pub fn read_baseline(path: &Path) -> Result<BaselineFile> {
    versioned(path, read_json(path)?, BASELINE_FORMAT_VERSION)
}
