use std::path::Path;

use serde::{Deserialize, Serialize};

use super::binary::{Reader, Writer};
use super::{read_bytes, versioned, write_atomic};
use crate::cohort::{Cohort, SubjectRecord};
use crate::error::{Result, ScsrError};
use crate::geometry::vertex_count;

pub const COHORT_MAGIC: &[u8; 8] = b"SCSRCOH1";
pub const COHORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortHeader {
    pub format_version: u32,
    pub n: usize,
    pub p: usize,
    pub mesh_order: u32,
    pub parcel_count: usize,
    pub generator_config_hash: String,
}

/// `magic | u64 len | header JSON | f32[n·p] | u64 len | subject JSON array`
pub fn write_cohort(path: &Path, cohort: &Cohort) -> Result<()> {
    let p = cohort.p();
    if let Some(s) = cohort.subjects.iter().find(|s| s.thickness.len() != p) {
        return Err(ScsrError::Shape {
            context: "subject thickness length",
            expected: p,
            actual: s.thickness.len(),
        });
    }
    let mut w = Writer::new(COHORT_MAGIC);
    w.json(&CohortHeader {
        format_version: COHORT_FORMAT_VERSION,
        n: cohort.len(),
        p,
        mesh_order: cohort.mesh_order,
        parcel_count: cohort.parcel_count,
        generator_config_hash: cohort.config_hash.clone(),
    });
    w.f32s(
        cohort
            .subjects
            .iter()
            .flat_map(|s| s.thickness.iter().copied()),
    );
    w.json(&cohort.subjects);
    write_atomic(path, &w.bytes)
}

pub fn read_cohort(path: &Path) -> Result<Cohort> {
    let bytes = read_bytes(path)?;
    let mut r = Reader::open(path, &bytes, COHORT_MAGIC)?;
    let header: CohortHeader = versioned(path, r.json_value("header")?, COHORT_FORMAT_VERSION)?;
    if header.mesh_order > crate::geometry::MAX_ORDER || header.p != vertex_count(header.mesh_order)
    {
        return Err(ScsrError::HeaderMismatch {
            path: path.to_path_buf(),
            detail: format!(
                "p = {} does not match mesh order {}",
                header.p, header.mesh_order
            ),
        });
    }
    let count = header
        .n
        .checked_mul(header.p)
        .ok_or_else(|| ScsrError::HeaderMismatch {
            path: path.to_path_buf(),
            detail: "n·p overflows".into(),
        })?;
    let matrix = r.f32s(count, "thickness matrix")?;
    let mut subjects: Vec<SubjectRecord> = r.json("subject metadata")?;
    r.finish()?;
    if subjects.len() != header.n {
        return Err(ScsrError::SizeMismatch {
            path: path.to_path_buf(),
            detail: format!(
                "{} metadata records for {} matrix rows",
                subjects.len(),
                header.n
            ),
        });
    }
    if header.p > 0 {
        for (s, row) in subjects.iter_mut().zip(matrix.chunks_exact(header.p)) {
            s.thickness = row.to_vec();
        }
    }
    Ok(Cohort {
        mesh_order: header.mesh_order,
        parcel_count: header.parcel_count,
        config_hash: header.generator_config_hash,
        subjects,
    })
}
