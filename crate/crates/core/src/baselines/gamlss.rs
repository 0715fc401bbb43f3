use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_parcel_values, ParcelData, ParcelNormativeModel};
use crate::error::{Result, ScsrError};

/// Location features: `1, age⁻², age⁻²·ln(age), sex`.
pub fn mu_features(age: f64, sex: u8) -> [f64; 4] {
    let inv2 = age.powi(-2);
    [1.0, inv2, inv2 * age.ln(), f64::from(sex)]
}

/// Scale features: `1, age⁻¹, age^0.5, sex`.
pub fn sigma_features(age: f64, sex: u8) -> [f64; 4] {
    [1.0, age.recip(), age.sqrt(), f64::from(sex)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GamlssFitOptions {
    pub max_iterations: usize,
    pub step: f64,
    /// Sufficient-increase constant of the backtracking line search.
    pub armijo: f64,
    /// Largest accepted gradient norm of the mean log-likelihood at the end.
    pub tolerance: f64,
}

impl Default for GamlssFitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            step: 1e-2,
            armijo: 1e-4,
            tolerance: 1e-2,
        }
    }
}

/// `log μ = α·x_μ`, `log σ = β·x_σ`; `γ0` is the skewness placeholder and
/// stays 0 (Gaussian likelihood).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GamlssCoefficients {
    pub alpha: [f64; 4],
    pub beta: [f64; 4],
    pub gamma0: f64,
}

impl GamlssCoefficients {
    pub fn mu(&self, age: f64, sex: u8) -> f64 {
        dot(&self.alpha, &mu_features(age, sex)).exp()
    }

    pub fn sigma(&self, age: f64, sex: u8) -> f64 {
        dot(&self.beta, &sigma_features(age, sex)).exp()
    }

    fn from_slice(theta: &[f64; 8]) -> Self {
        Self {
            alpha: theta[..4].try_into().unwrap(),
            beta: theta[4..].try_into().unwrap(),
            gamma0: 0.0,
        }
    }
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Problem<'a> {
    y: &'a [f64],
    xm: Vec<[f64; 4]>,
    xs: Vec<[f64; 4]>,
}

impl Problem<'_> {
    /// Mean Gaussian log-likelihood without the constant, and its gradient.
    fn evaluate(&self, theta: &[f64; 8]) -> (f64, [f64; 8]) {
        let c = GamlssCoefficients::from_slice(theta);
        let n = self.y.len() as f64;
        let mut ll = 0.0;
        let mut g = [0.0; 8];
        for ((y, xm), xs) in self.y.iter().zip(&self.xm).zip(&self.xs) {
            let mu = dot(&c.alpha, xm).exp();
            let log_sigma = dot(&c.beta, xs);
            let inv_var = (-2.0 * log_sigma).exp();
            let r = y - mu;
            ll += -log_sigma - 0.5 * r * r * inv_var;
            let d_mu = r * mu * inv_var;
            let d_sigma = r * r * inv_var - 1.0;
            for j in 0..4 {
                g[j] += d_mu * xm[j];
                g[4 + j] += d_sigma * xs[j];
            }
        }
        g.iter_mut().for_each(|v| *v /= n);
        (ll / n, g)
    }
}

fn norm(g: &[f64; 8]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Gradient ascent with backtracking from `α0 = ln(mean y)`,
/// `β0 = ln(std y)` and all other coefficients 0.
pub fn fit_gamlss_parcel(
    y: &[f64],
    ages: &[f64],
    sexes: &[u8],
    opts: &GamlssFitOptions,
) -> Result<GamlssCoefficients> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(mean > 0.0) || !(std > 0.0) {
        return Err(ScsrError::InsufficientData(
            "GAMLSS needs positive, non-constant responses".into(),
        ));
    }
    let problem = Problem {
        y,
        xm: ages
            .iter()
            .zip(sexes)
            .map(|(&a, &s)| mu_features(a, s))
            .collect(),
        xs: ages
            .iter()
            .zip(sexes)
            .map(|(&a, &s)| sigma_features(a, s))
            .collect(),
    };
    let mut theta = [0.0; 8];
    theta[0] = mean.ln();
    theta[4] = std.ln();
    let (mut ll, mut grad) = problem.evaluate(&theta);

    for _ in 0..opts.max_iterations {
        let g2 = grad.iter().map(|v| v * v).sum::<f64>();
        if g2.sqrt() < 1e-12 {
            break;
        }
        let mut t = opts.step;
        let accepted = loop {
            let mut next = theta;
            next.iter_mut().zip(&grad).for_each(|(th, g)| *th += t * g);
            let (ll_next, grad_next) = problem.evaluate(&next);
            if ll_next.is_finite() && ll_next >= ll + opts.armijo * t * g2 {
                break Some((next, ll_next, grad_next));
            }
            t *= 0.5;
            if t < 1e-20 {
                break None;
            }
        };
        let Some((next, ll_next, grad_next)) = accepted else {
            break;
        };
        theta = next;
        ll = ll_next;
        grad = grad_next;
    }
    let grad_norm = norm(&grad);
    if !(grad_norm <= opts.tolerance) {
        return Err(ScsrError::Convergence {
            iterations: opts.max_iterations,
            grad_norm,
            last_iterate: theta.to_vec(),
        });
    }
    Ok(GamlssCoefficients::from_slice(&theta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamlssModel {
    pub options: GamlssFitOptions,
    pub parcels: Vec<GamlssCoefficients>,
}

impl GamlssModel {
    pub fn fit(data: &ParcelData, opts: GamlssFitOptions) -> Result<Self> {
        data.check()?;
        if data.is_empty() {
            return Err(ScsrError::InsufficientData(
                "GAMLSS training set is empty".into(),
            ));
        }
        if let Some(a) = data.ages.iter().find(|&&a| !(a > 0.0)) {
            return Err(ScsrError::Bounds {
                what: "age",
                detail: format!("{a} must be positive"),
            });
        }
        let parcels = (0..data.n_parcels())
            .into_par_iter()
            .map(|k| fit_gamlss_parcel(&data.column(k), &data.ages, &data.sexes, &opts))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            options: opts,
            parcels,
        })
    }
}

impl ParcelNormativeModel for GamlssModel {
    fn n_parcels(&self) -> usize {
        self.parcels.len()
    }

    fn z_scores(&self, age: f64, sex: u8, parcel_values: &[f64]) -> Result<Vec<f64>> {
        check_parcel_values(self.parcels.len(), parcel_values)?;
        Ok(parcel_values
            .iter()
            .zip(&self.parcels)
            .map(|(y, c)| (y - c.mu(age, sex)) / c.sigma(age, sex))
            .collect())
    }
}
