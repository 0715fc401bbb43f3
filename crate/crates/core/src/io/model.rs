use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::binary::{Reader, Writer};
use super::{read_bytes, versioned, write_atomic};
use crate::error::{Result, ScsrError};
use crate::nn::{Activation, Architecture, BatchNorm, Dense, FeatureScaler, Mlp, TrainConfig};

pub const MODEL_MAGIC: &[u8; 8] = b"SCSRMDL1";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Training provenance stored with a checkpoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub train_config: Option<TrainConfig>,
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub format_version: u32,
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub architecture: Architecture,
    pub scaler: FeatureScaler,
    pub train_sampling_rate: f64,
    /// Number of float32 values in the payload.
    pub value_count: usize,
    pub meta: ModelMeta,
}

/// Float32 payload length for an architecture: every layer's weight
/// (`fan_in × fan_out`, row-major) and bias, then for every hidden block
/// γ, β, running mean and running variance.
fn value_count(dims: &[usize]) -> usize {
    let affine: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let norms: usize = dims[1..dims.len() - 1].iter().map(|d| 4 * d).sum();
    affine + norms
}

/// `magic | u64 len | header JSON | f32 parameters`
pub fn write_model(path: &Path, model: &Mlp<f32>, meta: &ModelMeta) -> Result<()> {
    let dims = model.arch.dims.clone();
    let mut w = Writer::new(MODEL_MAGIC);
    w.json(&ModelHeader {
        format_version: MODEL_FORMAT_VERSION,
        value_count: value_count(&dims),
        dims,
        activation: model.arch.activation,
        architecture: model.arch.clone(),
        scaler: model.scaler.clone(),
        train_sampling_rate: model.train_sampling_rate,
        meta: meta.clone(),
    });
    for l in &model.layers {
        w.f32s(l.weight.iter().copied());
        w.f32s(l.bias.iter().copied());
    }
    for n in &model.norms {
        for a in [&n.gamma, &n.beta, &n.running_mean, &n.running_var] {
            w.f32s(a.iter().copied());
        }
    }
    write_atomic(path, &w.bytes)
}

pub fn read_model(path: &Path) -> Result<(Mlp<f32>, ModelMeta)> {
    let bytes = read_bytes(path)?;
    let mut r = Reader::open(path, &bytes, MODEL_MAGIC)?;
    let header: ModelHeader = versioned(path, r.json_value("header")?, MODEL_FORMAT_VERSION)?;
    let mismatch = |detail: String| ScsrError::HeaderMismatch {
        path: path.to_path_buf(),
        detail,
    };
    let arch = header.architecture;
    arch.validate().map_err(|e| mismatch(e.to_string()))?;
    if header.dims != arch.dims || header.activation != arch.activation {
        return Err(mismatch(format!(
            "dims {:?} disagree with architecture {:?}",
            header.dims, arch.dims
        )));
    }
    if header.scaler.len() != arch.p() || header.scaler.std.len() != arch.p() {
        return Err(mismatch(format!(
            "scaler length {} does not match p = {}",
            header.scaler.len(),
            arch.p()
        )));
    }
    let expected = value_count(&arch.dims);
    if header.value_count != expected {
        return Err(mismatch(format!(
            "declared {} parameters, architecture needs {expected}",
            header.value_count
        )));
    }

    let layers = arch
        .dims
        .windows(2)
        .map(|w| {
            let weight = r.f32s(w[0] * w[1], "layer weights")?;
            let bias = r.f32s(w[1], "layer bias")?;
            Ok(Dense {
                weight: Array2::from_shape_vec((w[0], w[1]), weight).expect("sized read"),
                bias: Array1::from(bias),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let norms = arch.dims[1..arch.dims.len() - 1]
        .iter()
        .map(|&d| {
            let mut next = |what| r.f32s(d, what).map(Array1::from);
            Ok(BatchNorm {
                gamma: next("batch-norm gamma")?,
                beta: next("batch-norm beta")?,
                running_mean: next("running mean")?,
                running_var: next("running variance")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    if norms
        .iter()
        .any(|n| n.running_var.iter().any(|&v| !(v > 0.0)))
    {
        return Err(ScsrError::malformed(path, "non-positive running variance"));
    }
    Ok((
        Mlp {
            arch,
            layers,
            norms,
            scaler: header.scaler,
            train_sampling_rate: header.train_sampling_rate,
        },
        header.meta,
    ))
}
