//! Classical normative models used as references: an age-bracket population
//! model at the vertex level and GAM, GAMLSS and BLR at the parcel level.

mod blr;
mod gam;
mod gamlss;
mod popref;

pub use blr::{bspline_basis, BlrModel, BlrParcel, BLR_PRIOR_PRECISION, BSPLINE_KNOTS};
pub use gam::{natural_spline_basis, GamModel, GamParcel, INTERIOR_KNOTS};
pub use gamlss::{
    fit_gamlss_parcel, mu_features, sigma_features, GamlssCoefficients, GamlssFitOptions,
    GamlssModel,
};
pub use popref::{Bracket, PopRefModel, PopRefZ, BRACKET_WIDTH_YEARS};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, SubjectRecord};
use crate::error::{Result, ScsrError};
use crate::geometry::Parcellation;

pub const BASELINE_FORMAT_VERSION: u32 = 1;

/// Parcel-mean thicknesses with age and sex, one row per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ParcelData {
    pub ages: Vec<f64>,
    pub sexes: Vec<u8>,
    /// `n × K` parcel means.
    pub values: Array2<f64>,
}

impl ParcelData {
    pub fn from_cohort(cohort: &Cohort, parc: &Parcellation) -> Result<Self> {
        let k = parc.k;
        let mut values = Array2::zeros((cohort.len(), k));
        for (mut row, s) in values.rows_mut().into_iter().zip(&cohort.subjects) {
            let means = parc.parcel_means(&s.thickness)?;
            row.iter_mut().zip(means).for_each(|(dst, m)| *dst = m);
        }
        Ok(Self {
            ages: cohort.subjects.iter().map(|s| s.age).collect(),
            sexes: cohort.subjects.iter().map(|s| s.sex).collect(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }

    pub fn n_parcels(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, parcel: usize) -> Vec<f64> {
        self.values.column(parcel).to_vec()
    }

    fn check(&self) -> Result<()> {
        if self.sexes.len() != self.len() || self.values.nrows() != self.len() {
            return Err(ScsrError::Shape {
                context: "parcel data rows",
                expected: self.len(),
                actual: self.values.nrows(),
            });
        }
        if let Some(a) = self.ages.iter().find(|a| !a.is_finite()) {
            return Err(ScsrError::Bounds {
                what: "age",
                detail: format!("{a} is not finite"),
            });
        }
        Ok(())
    }
}

/// A fitted parcel-level model that scores one subject.
pub trait ParcelNormativeModel {
    fn n_parcels(&self) -> usize;

    /// Z-score per parcel for a subject's parcel means.
    fn z_scores(&self, age: f64, sex: u8, parcel_values: &[f64]) -> Result<Vec<f64>>;
}

fn check_parcel_values(expected: usize, values: &[f64]) -> Result<()> {
    if values.len() != expected {
        return Err(ScsrError::Shape {
            context: "subject parcel values",
            expected,
            actual: values.len(),
        });
    }
    Ok(())
}

/// Any fitted baseline, as persisted to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Baseline {
    PopRef(PopRefModel),
    Gam(GamModel),
    Gamlss(GamlssModel),
    Blr(BlrModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFile {
    pub format_version: u32,
    pub model: Baseline,
}

/// Z-scores of one subject from any baseline: per vertex for Pop-Ref, per
/// parcel otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineZ {
    pub z: Vec<f64>,
    pub vertex_level: bool,
    /// Age was outside the fitted coverage and was clamped.
    pub clamped: bool,
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::PopRef(_) => "popref",
            Baseline::Gam(_) => "gam",
            Baseline::Gamlss(_) => "gamlss",
            Baseline::Blr(_) => "blr",
        }
    }

    pub fn score(&self, subject: &SubjectRecord, parc: &Parcellation) -> Result<BaselineZ> {
        let parcel_model: &dyn ParcelNormativeModel = match self {
            Baseline::PopRef(m) => {
                let r = m.z_scores(subject.age, &subject.thickness)?;
                return Ok(BaselineZ {
                    z: r.z,
                    vertex_level: true,
                    clamped: r.clamped,
                });
            }
            Baseline::Gam(m) => m,
            Baseline::Gamlss(m) => m,
            Baseline::Blr(m) => m,
        };
        let values = parc.parcel_means(&subject.thickness)?;
        Ok(BaselineZ {
            z: parcel_model.z_scores(subject.age, subject.sex, &values)?,
            vertex_level: false,
            clamped: false,
        })
    }

    /// Mean Z over an ROI given as parcel ids.
    pub fn roi_mean(
        &self,
        scored: &BaselineZ,
        parc: &Parcellation,
        roi_parcels: &[usize],
    ) -> Result<f64> {
        if roi_parcels.is_empty() {
            return Err(ScsrError::Config("ROI is empty".into()));
        }
        if scored.vertex_level {
            let vertices: Vec<usize> = (0..parc.n_vertices())
                .filter(|&v| roi_parcels.contains(&parc.labels[v]))
                .collect();
            Ok(vertices.iter().map(|&v| scored.z[v]).sum::<f64>() / vertices.len() as f64)
        } else {
            Ok(roi_parcels.iter().map(|&k| scored.z[k]).sum::<f64>() / roi_parcels.len() as f64)
        }
    }
}

/// Least squares via Householder QR; falls back to a ridge of `1e-8` when the
/// design is numerically rank deficient. Returns the coefficients and whether
/// the fallback was used.
pub(crate) fn least_squares(
    x: &nalgebra::DMatrix<f64>,
    y: &nalgebra::DVector<f64>,
) -> (nalgebra::DVector<f64>, bool) {
    const RIDGE: f64 = 1e-8;
    let k = x.ncols();
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let full_rank = x.nrows() >= k
        && r.diagonal()
            .iter()
            .all(|d| d.abs() > 1e-10 * scale.max(1e-300));
    if full_rank {
        let qty = qr.q().transpose() * y;
        if let Some(beta) = r.solve_upper_triangular(&qty) {
            return (beta, false);
        }
    }
    let mut aug = nalgebra::DMatrix::zeros(x.nrows() + k, k);
    aug.view_mut((0, 0), (x.nrows(), k)).copy_from(x);
    for j in 0..k {
        aug[(x.nrows() + j, j)] = RIDGE.sqrt();
    }
    let mut yaug = nalgebra::DVector::zeros(x.nrows() + k);
    yaug.rows_mut(0, x.nrows()).copy_from(y);
    let qr = aug.qr();
    let beta = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * yaug))
        .expect("ridge system is nonsingular");
    (beta, true)
}
