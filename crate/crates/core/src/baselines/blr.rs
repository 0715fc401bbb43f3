use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_parcel_values, ParcelData, ParcelNormativeModel};
use crate::error::{Result, ScsrError};

pub const BLR_PRIOR_PRECISION: f64 = 1.0;
pub const BSPLINE_KNOTS: usize = 5;
const DEGREE: usize = 3;
const NOISE_VAR_FLOOR: f64 = 1e-12;
const MAX_EVIDENCE_ITERATIONS: usize = 500;

/// Clamped knot vector over `[lo, hi]` with `n_knots` evenly spaced
/// breakpoints including both ends.
fn knot_vector(lo: f64, hi: f64, n_knots: usize) -> Vec<f64> {
    let mut u = vec![lo; DEGREE];
    u.extend((0..n_knots).map(|i| lo + (hi - lo) * i as f64 / (n_knots - 1) as f64));
    u.extend(std::iter::repeat_n(hi, DEGREE));
    u
}

/// Cubic B-spline basis values at `x` for breakpoints `knots` (ascending,
/// boundaries included). Outside the boundary the end polynomial pieces
/// are continued, so the basis extrapolates smoothly.
pub fn bspline_basis(x: f64, knots: &[f64]) -> Vec<f64> {
    let u = knot_vector(knots[0], knots[knots.len() - 1], knots.len());
    let n_basis = knots.len() + DEGREE - 1;
    // last span with U[i] < U[i+1], or the first when x is left of it
    let span = (DEGREE..n_basis)
        .rev()
        .find(|&i| x >= u[i])
        .unwrap_or(DEGREE);

    let mut n = [0.0; DEGREE + 1];
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    n[0] = 1.0;
    for j in 1..=DEGREE {
        left[j] = x - u[span + 1 - j];
        right[j] = u[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    let mut out = vec![0.0; n_basis];
    out[span - DEGREE..=span].copy_from_slice(&n);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlrParcel {
    pub posterior_mean: Vec<f64>,
    /// Row-major posterior covariance.
    pub posterior_cov: Vec<f64>,
    pub noise_var: f64,
    pub evidence_iterations: usize,
}

/// Bayesian linear regression on `[B-spline(age), sex, 1]` with a fixed
/// isotropic weight prior and evidence-optimized noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlrModel {
    /// Spline breakpoints in years, boundaries included.
    pub knots: Vec<f64>,
    pub prior_precision: f64,
    pub parcels: Vec<BlrParcel>,
}

impl BlrModel {
    pub fn design_row(&self, age: f64, sex: u8) -> Vec<f64> {
        let mut row = bspline_basis(age, &self.knots);
        row.push(f64::from(sex));
        row.push(1.0);
        row
    }

    pub fn n_features(&self) -> usize {
        self.knots.len() + DEGREE + 1
    }

    pub fn fit(data: &ParcelData, prior_precision: f64) -> Result<Self> {
        data.check()?;
        if data.len() < 2 {
            return Err(ScsrError::InsufficientData(format!(
                "BLR needs at least 2 subjects, got {}",
                data.len()
            )));
        }
        if !(prior_precision > 0.0) {
            return Err(ScsrError::Config(format!(
                "prior precision {prior_precision} must be positive"
            )));
        }
        let lo = data.ages.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = data.ages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            hi = lo + 1.0;
        }
        let knots: Vec<f64> = (0..BSPLINE_KNOTS)
            .map(|i| lo + (hi - lo) * i as f64 / (BSPLINE_KNOTS - 1) as f64)
            .collect();
        let mut model = Self {
            knots,
            prior_precision,
            parcels: Vec::new(),
        };

        let n = data.len();
        let d = model.n_features();
        let mut x = DMatrix::zeros(n, d);
        for i in 0..n {
            for (j, v) in model
                .design_row(data.ages[i], data.sexes[i])
                .into_iter()
                .enumerate()
            {
                x[(i, j)] = v;
            }
        }
        let xtx = x.transpose() * &x;
        let eig = SymmetricEigen::new(xtx);
        let lambdas: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let v = eig.eigenvectors;

        model.parcels = (0..data.n_parcels())
            .into_par_iter()
            .map(|k| {
                fit_parcel(
                    &x,
                    &v,
                    &lambdas,
                    &DVector::from_vec(data.column(k)),
                    prior_precision,
                )
            })
            .collect();
        Ok(model)
    }

    pub fn predictive(&self, parcel: usize, age: f64, sex: u8) -> (f64, f64) {
        let p = &self.parcels[parcel];
        let row = self.design_row(age, sex);
        let d = row.len();
        let mean: f64 = row.iter().zip(&p.posterior_mean).map(|(a, b)| a * b).sum();
        let mut quad = 0.0;
        for i in 0..d {
            for j in 0..d {
                quad += row[i] * p.posterior_cov[i * d + j] * row[j];
            }
        }
        (mean, p.noise_var + quad.max(0.0))
    }
}

fn fit_parcel(
    x: &DMatrix<f64>,
    v: &DMatrix<f64>,
    lambdas: &[f64],
    y: &DVector<f64>,
    alpha: f64,
) -> BlrParcel {
    let n = y.len() as f64;
    let vt_xty = v.transpose() * (x.transpose() * y);
    let mean_y = y.mean();
    let var_y = y.iter().map(|t| (t - mean_y).powi(2)).sum::<f64>() / n;
    let mut beta = 1.0 / var_y.max(NOISE_VAR_FLOOR);

    let posterior_mean = |beta: f64| -> DVector<f64> {
        let scaled = DVector::from_iterator(
            lambdas.len(),
            vt_xty
                .iter()
                .zip(lambdas)
                .map(|(c, l)| beta * c / (alpha + beta * l)),
        );
        v * scaled
    };

    let mut iterations = 0;
    let mut mean = posterior_mean(beta);
    while iterations < MAX_EVIDENCE_ITERATIONS {
        iterations += 1;
        let rss = (y - x * &mean).norm_squared();
        let gamma: f64 = lambdas.iter().map(|l| beta * l / (alpha + beta * l)).sum();
        let next = if rss > 0.0 {
            ((n - gamma).max(0.0) / rss).min(1.0 / NOISE_VAR_FLOOR)
        } else {
            1.0 / NOISE_VAR_FLOOR
        };
        let next = next.max(f64::MIN_POSITIVE);
        let done = (next - beta).abs() <= 1e-10 * beta;
        beta = next;
        mean = posterior_mean(beta);
        if done {
            break;
        }
    }
    let d = lambdas.len();
    let inv = DVector::from_iterator(d, lambdas.iter().map(|l| 1.0 / (alpha + beta * l)));
    let cov = v * DMatrix::from_diagonal(&inv) * v.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    BlrParcel {
        posterior_mean: mean.iter().copied().collect(),
        posterior_cov: cov.transpose().iter().copied().collect(),
        noise_var: 1.0 / beta,
        evidence_iterations: iterations,
    }
}

impl ParcelNormativeModel for BlrModel {
    fn n_parcels(&self) -> usize {
        self.parcels.len()
    }

    fn z_scores(&self, age: f64, sex: u8, parcel_values: &[f64]) -> Result<Vec<f64>> {
        check_parcel_values(self.parcels.len(), parcel_values)?;
        Ok(parcel_values
            .iter()
            .enumerate()
            .map(|(k, y)| {
                let (mean, var) = self.predictive(k, age, sex);
                (y - mean) / var.sqrt()
            })
            .collect())
    }
}
