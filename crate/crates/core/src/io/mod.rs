//! On-disk formats. Binary files are little-endian and start with an 8-byte
//! magic followed by a length-prefixed JSON header; text exports are CSV
//! with JSON sidecars. See `docs/formats.md` for byte layouts.

mod binary;
mod cohort;
mod model;
mod text;

pub use cohort::{read_cohort, write_cohort, CohortHeader, COHORT_FORMAT_VERSION, COHORT_MAGIC};
pub use model::{
    read_model, write_model, ModelHeader, ModelMeta, MODEL_FORMAT_VERSION, MODEL_MAGIC,
};
pub use text::{
    map_paths, read_baseline, read_map, read_mesh_ply, read_parcellation, read_sigma,
    write_baseline, write_map, write_mesh_ply, write_parcellation, write_sigma, MapSidecar,
    MAP_FORMAT_VERSION,
};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Result, ScsrError};

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| ScsrError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut file = fs::File::create(&tmp).map_err(|e| ScsrError::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| ScsrError::io(&tmp, e))?;
    file.sync_all().map_err(|e| ScsrError::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| ScsrError::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| ScsrError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| ScsrError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| ScsrError::malformed(path, e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| ScsrError::malformed(path, e.to_string()))
}

/// Checks a `format_version` field before full deserialization so version
/// errors are reported as such.
fn versioned<T: DeserializeOwned>(
    path: &Path,
    value: serde_json::Value,
    expected: u32,
) -> Result<T> {
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| ScsrError::malformed(path, "missing format_version"))?;
    if found != u64::from(expected) {
        return Err(ScsrError::UnsupportedVersion {
            path: path.to_path_buf(),
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected,
        });
    }
    serde_json::from_value(value).map_err(|e| ScsrError::malformed(path, e.to_string()))
}
