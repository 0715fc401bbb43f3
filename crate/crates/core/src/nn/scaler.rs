use serde::{Deserialize, Serialize};

use super::Real;
use crate::cohort::Cohort;
use crate::error::{Result, ScsrError};

pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScalerMode {
    /// Subtract the mean and divide by the standard deviation.
    #[default]
    Standardize,
    /// Subtract the mean only.
    CenterOnly,
}

/// Per-vertex standardization fitted on training thicknesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at [`STD_FLOOR`]. All ones in
    /// [`ScalerMode::CenterOnly`].
    pub std: Vec<f64>,
    pub mode: ScalerMode,
}

impl FeatureScaler {
    pub fn identity(p: usize) -> Self {
        Self {
            mean: vec![0.0; p],
            std: vec![1.0; p],
            mode: ScalerMode::Standardize,
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn transform<F: Real>(&self, thickness: &[f32]) -> Vec<F> {
        thickness
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&t, (&m, &s))| F::of((f64::from(t) - m) / s))
            .collect()
    }

    pub fn inverse(&self, j: usize, x_std: f64) -> f64 {
        x_std * self.std[j] + self.mean[j]
    }
}

/// Fits per-vertex mean and population std (n divisor) over a cohort.
pub fn fit_scaler(train: &Cohort, mode: ScalerMode) -> Result<FeatureScaler> {
    let n = train.len();
    if n < 2 {
        return Err(ScsrError::InsufficientData(format!(
            "scaler needs at least 2 subjects, got {n}"
        )));
    }
    let p = train.p();
    let mut mean = vec![0.0; p];
    for s in &train.subjects {
        for (m, &t) in mean.iter_mut().zip(&s.thickness) {
            *m += f64::from(t);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let std = match mode {
        ScalerMode::CenterOnly => vec![1.0; p],
        ScalerMode::Standardize => {
            let mut var = vec![0.0; p];
            for s in &train.subjects {
                for ((v, &m), &t) in var.iter_mut().zip(&mean).zip(&s.thickness) {
                    let d = f64::from(t) - m;
                    *v += d * d;
                }
            }
            var.into_iter()
                .map(|v| (v / n as f64).sqrt().max(STD_FLOOR))
                .collect()
        }
    };
    Ok(FeatureScaler { mean, std, mode })
}
