use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_parcel_values, least_squares, ParcelData, ParcelNormativeModel};
use crate::engine::interpolated_centile;
use crate::error::{Result, ScsrError};

pub const INTERIOR_KNOTS: usize = 5;

/// Natural cubic spline basis without the constant term: `x` followed by
/// one truncated-power column per interior knot. `knots` includes both
/// boundary knots.
pub fn natural_spline_basis(x: f64, knots: &[f64]) -> Vec<f64> {
    let k = knots.len();
    let last = knots[k - 1];
    let cube = |t: f64| t.max(0.0).powi(3);
    let d = |j: usize| {
        let span = last - knots[j];
        if span <= 0.0 {
            0.0
        } else {
            (cube(x - knots[j]) - cube(x - last)) / span
        }
    };
    let d_penultimate = d(k - 2);
    let mut out = Vec::with_capacity(k - 1);
    out.push(x);
    for j in 0..k - 2 {
        out.push(d(j) - d_penultimate);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamParcel {
    /// Intercept, spline coefficients, then the sex coefficient.
    pub coefficients: Vec<f64>,
    pub residual_std: f64,
    /// The design was rank deficient and a small ridge was added.
    pub regularized: bool,
}

/// `Y ~ α0 + f(age) + α1·sex` per parcel, `f` a natural cubic regression
/// spline with knots at age quantiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamModel {
    /// Boundary and interior knots on the rescaled age axis `[0, 1]`.
    pub knots: Vec<f64>,
    pub age_min: f64,
    pub age_max: f64,
    pub parcels: Vec<GamParcel>,
}

impl GamModel {
    fn scaled_age(&self, age: f64) -> f64 {
        let span = self.age_max - self.age_min;
        if span > 0.0 {
            (age - self.age_min) / span
        } else {
            age - self.age_min
        }
    }

    fn design_row(&self, age: f64, sex: u8) -> Vec<f64> {
        let mut row = vec![1.0];
        row.extend(natural_spline_basis(self.scaled_age(age), &self.knots));
        row.push(f64::from(sex));
        row
    }

    pub fn fit(data: &ParcelData) -> Result<Self> {
        data.check()?;
        let n = data.len();
        if n < INTERIOR_KNOTS + 3 {
            return Err(ScsrError::InsufficientData(format!(
                "GAM needs at least {} subjects, got {n}",
                INTERIOR_KNOTS + 3
            )));
        }
        let mut sorted = data.ages.clone();
        sorted.sort_by(f64::total_cmp);
        let (age_min, age_max) = (sorted[0], sorted[n - 1]);
        let mut model = Self {
            knots: Vec::new(),
            age_min,
            age_max,
            parcels: Vec::new(),
        };
        let scaled: Vec<f64> = sorted.iter().map(|&a| model.scaled_age(a)).collect();
        model.knots = std::iter::once(scaled[0])
            .chain((1..=INTERIOR_KNOTS).map(|j| {
                interpolated_centile(&scaled, j as f64 / (INTERIOR_KNOTS + 1) as f64)
                    .expect("non-empty")
            }))
            .chain(std::iter::once(scaled[n - 1]))
            .collect();

        let cols = model.knots.len() + 1;
        let mut x = DMatrix::zeros(n, cols);
        for i in 0..n {
            for (j, v) in model
                .design_row(data.ages[i], data.sexes[i])
                .into_iter()
                .enumerate()
            {
                x[(i, j)] = v;
            }
        }
        let dof = (n - cols).max(1) as f64;
        model.parcels = (0..data.n_parcels())
            .into_par_iter()
            .map(|k| {
                let y = DVector::from_vec(data.column(k));
                let (beta, regularized) = least_squares(&x, &y);
                let rss = (&y - &x * &beta).norm_squared();
                GamParcel {
                    coefficients: beta.iter().copied().collect(),
                    residual_std: (rss / dof).sqrt().max(1e-6),
                    regularized,
                }
            })
            .collect();
        Ok(model)
    }

    pub fn sex_effect(&self, parcel: usize) -> f64 {
        *self.parcels[parcel]
            .coefficients
            .last()
            .expect("non-empty coefficients")
    }

    pub fn predict(&self, parcel: usize, age: f64, sex: u8) -> f64 {
        self.design_row(age, sex)
            .iter()
            .zip(&self.parcels[parcel].coefficients)
            .map(|(a, b)| a * b)
            .sum()
    }
}

impl ParcelNormativeModel for GamModel {
    fn n_parcels(&self) -> usize {
        self.parcels.len()
    }

    fn z_scores(&self, age: f64, sex: u8, parcel_values: &[f64]) -> Result<Vec<f64>> {
        check_parcel_values(self.parcels.len(), parcel_values)?;
        Ok(parcel_values
            .iter()
            .enumerate()
            .map(|(k, y)| (y - self.predict(k, age, sex)) / self.parcels[k].residual_std)
            .collect())
    }
}
