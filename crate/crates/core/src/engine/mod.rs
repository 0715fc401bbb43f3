//! Stochastic self-reconstruction: repeated masked reconstructions of one
//! subject, a centile-based healthy reference, and Z-score deviation maps.

pub mod mask;

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, Diagnosis};
use crate::error::{Result, ScsrError};
use crate::geometry::Parcellation;
use crate::nn::{masked_input, Mlp};
use crate::stats;
use mask::{MaskSampler, SamplingMask, SamplingStrategy};

pub const SIGMA_FLOOR: f64 = 1e-6;

/// Name under which the whole-cortex mean Z is reported.
pub const CORTEX_ROI: &str = "cortex";

/// Reconstruction iterations evaluated per network call. Fixed so that
/// results do not depend on how work is spread over threads.
const ITERATIONS_PER_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScsrConfig {
    /// Fraction of eligible vertices revealed per iteration (`s`).
    pub sampling_rate: f64,
    /// Number of reconstructions (`m`).
    pub iterations: usize,
    /// Reference centile (`q`).
    pub centile: f64,
    pub base_seed: u64,
    pub strategy: SamplingStrategy,
    pub excluded_roi: Option<String>,
}

impl Default for ScsrConfig {
    fn default() -> Self {
        Self {
            sampling_rate: 0.2,
            iterations: 500,
            centile: 0.95,
            base_seed: 0,
            strategy: SamplingStrategy::Vertex,
            excluded_roi: None,
        }
    }
}

impl ScsrConfig {
    /// Parcel-sampling defaults (median reference).
    pub fn parcel() -> Self {
        Self {
            centile: 0.5,
            strategy: SamplingStrategy::Parcel,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(ScsrError::Config("iterations must be at least 1".into()));
        }
        check_centile(self.centile)
    }
}

fn check_centile(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(ScsrError::Config(format!("centile {q} not in (0, 1)")))
    }
}

/// Seed of reconstruction iteration `i`.
pub fn iteration_seed(base_seed: u64, i: usize) -> u64 {
    base_seed ^ i as u64
}

/// `p × m` predicted thicknesses in mm; NaN marks the positions that were
/// inputs (sampled) in that iteration.
#[derive(Debug, Clone)]
pub struct ReconstructionDistribution {
    pub values: Array2<f64>,
    pub seeds: Vec<u64>,
    /// Substitute for rows that were never predicted (the scaler mean).
    pub fallback_mm: Vec<f64>,
}

impl ReconstructionDistribution {
    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    /// Rows without a single prediction.
    pub fn uncovered_rows(&self) -> Vec<usize> {
        self.values
            .rows()
            .into_iter()
            .enumerate()
            .filter_map(|(v, row)| row.iter().all(|x| x.is_nan()).then_some(v))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub values: Vec<f64>,
    /// Rows that fell back to the scaler mean.
    pub fallback_rows: Vec<usize>,
}

/// Linear interpolation between order statistics of sorted values at rank
/// `q·(k − 1)`.
pub fn interpolated_centile(sorted: &[f64], q: f64) -> Option<f64> {
    let k = sorted.len();
    if k == 0 {
        return None;
    }
    let rank = q * (k - 1) as f64;
    let lo = rank.floor() as usize;
    if lo + 1 >= k {
        return Some(sorted[k - 1]);
    }
    let frac = rank - lo as f64;
    Some(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

/// Per-row centiles for several `q` at once, ignoring missing markers.
pub fn centile_select_many(
    dist: &ReconstructionDistribution,
    qs: &[f64],
) -> Result<Vec<Reference>> {
    for &q in qs {
        check_centile(q)?;
    }
    let p = dist.p();
    let mut out: Vec<Reference> = qs
        .iter()
        .map(|_| Reference {
            values: Vec::with_capacity(p),
            fallback_rows: Vec::new(),
        })
        .collect();
    let mut buf = Vec::with_capacity(dist.m());
    for (v, row) in dist.values.rows().into_iter().enumerate() {
        buf.clear();
        buf.extend(row.iter().copied().filter(|x| !x.is_nan()));
        buf.sort_unstable_by(f64::total_cmp);
        for (r, &q) in out.iter_mut().zip(qs) {
            match interpolated_centile(&buf, q) {
                Some(x) => r.values.push(x),
                None => {
                    r.values.push(dist.fallback_mm[v]);
                    r.fallback_rows.push(v);
                }
            }
        }
    }
    Ok(out)
}

/// The `q`-th centile of each row of the distribution.
pub fn centile_select(dist: &ReconstructionDistribution, q: f64) -> Result<Reference> {
    Ok(centile_select_many(dist, &[q])?.pop().expect("one centile"))
}

/// Population std over subjects of per-vertex residuals, floored.
pub fn residual_std(residuals: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = residuals.len();
    let Some(first) = residuals.first() else {
        return Err(ScsrError::InsufficientData("no residuals".into()));
    };
    let p = first.len();
    let mut mean = vec![0.0; p];
    for r in residuals {
        if r.len() != p {
            return Err(ScsrError::Shape {
                context: "residual length",
                expected: p,
                actual: r.len(),
            });
        }
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; p];
    for r in residuals {
        for ((acc, x), m) in var.iter_mut().zip(r).zip(&mean) {
            *acc += (x - m) * (x - m);
        }
    }
    Ok(var
        .into_iter()
        .map(|v| (v / n as f64).sqrt().max(SIGMA_FLOOR))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationMap {
    pub subject_id: String,
    pub thickness: Vec<f64>,
    pub reference: Vec<f64>,
    pub sigma: Vec<f64>,
    pub z: Vec<f64>,
    pub roi_means: BTreeMap<String, f64>,
    #[serde(default)]
    pub fallback_rows: Vec<usize>,
}

impl DeviationMap {
    /// `z = (Y − R)/σ` with σ floored, plus mean Z per ROI and over the cortex.
    pub fn compute(
        subject_id: &str,
        thickness: Vec<f64>,
        reference: Vec<f64>,
        sigma: &[f64],
        rois: &[(String, Vec<usize>)],
    ) -> Result<Self> {
        let p = thickness.len();
        for (context, len) in [
            ("reference length", reference.len()),
            ("sigma length", sigma.len()),
        ] {
            if len != p {
                return Err(ScsrError::Shape {
                    context,
                    expected: p,
                    actual: len,
                });
            }
        }
        let sigma: Vec<f64> = sigma.iter().map(|s| s.max(SIGMA_FLOOR)).collect();
        let z: Vec<f64> = thickness
            .iter()
            .zip(&reference)
            .zip(&sigma)
            .map(|((y, r), s)| (y - r) / s)
            .collect();
        let mut roi_means = BTreeMap::new();
        roi_means.insert(CORTEX_ROI.to_string(), z.iter().sum::<f64>() / p as f64);
        for (name, vertices) in rois {
            if vertices.is_empty() {
                return Err(ScsrError::Config(format!("ROI {name:?} is empty")));
            }
            if let Some(&bad) = vertices.iter().find(|&&v| v >= p) {
                return Err(ScsrError::Bounds {
                    what: "ROI vertex",
                    detail: format!("{bad} >= {p}"),
                });
            }
            let mean = vertices.iter().map(|&v| z[v]).sum::<f64>() / vertices.len() as f64;
            roi_means.insert(name.clone(), mean);
        }
        Ok(Self {
            subject_id: subject_id.to_string(),
            thickness,
            reference,
            sigma,
            z,
            roi_means,
            fallback_rows: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// A trained model bound to a reconstruction configuration.
#[derive(Debug, Clone)]
pub struct Reconstructor<'a> {
    model: &'a Mlp<f32>,
    sampler: MaskSampler,
    cfg: ScsrConfig,
}

impl<'a> Reconstructor<'a> {
    pub fn new(
        model: &'a Mlp<f32>,
        parcellation: Option<&Parcellation>,
        cfg: ScsrConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let sampler = MaskSampler::new(
            model.p(),
            cfg.sampling_rate,
            cfg.strategy,
            parcellation,
            cfg.excluded_roi.as_deref(),
        )?;
        Ok(Self {
            model,
            sampler,
            cfg,
        })
    }

    pub fn config(&self) -> &ScsrConfig {
        &self.cfg
    }

    pub fn mask(&self, iteration: usize) -> Result<SamplingMask> {
        let mut rng = ChaCha8Rng::seed_from_u64(iteration_seed(self.cfg.base_seed, iteration));
        self.sampler.draw(&mut rng)
    }

    fn check_len(&self, thickness: &[f32]) -> Result<()> {
        if thickness.len() != self.model.p() {
            return Err(ScsrError::Shape {
                context: "subject thickness length",
                expected: self.model.p(),
                actual: thickness.len(),
            });
        }
        Ok(())
    }

    /// Runs the `m` masked reconstructions of one subject. Iteration `i`
    /// always uses seed `base_seed ^ i`, whatever the thread schedule.
    pub fn distribution(&self, thickness: &[f32]) -> Result<ReconstructionDistribution> {
        self.check_len(thickness)?;
        let p = self.model.p();
        let m = self.cfg.iterations;
        let scaler = &self.model.scaler;
        let x_std: Vec<f32> = scaler.transform(thickness);
        let starts: Vec<usize> = (0..m).step_by(ITERATIONS_PER_CHUNK).collect();

        let chunks = starts
            .par_iter()
            .map(
                |&start| -> Result<(usize, Vec<SamplingMask>, Array2<f32>)> {
                    let end = (start + ITERATIONS_PER_CHUNK).min(m);
                    let masks = (start..end)
                        .map(|i| self.mask(i))
                        .collect::<Result<Vec<_>>>()?;
                    let x = Array2::from_shape_fn((end - start, p), |(_, j)| x_std[j]);
                    let input = masked_input(x.view(), &masks)?;
                    let pred = self.model.predict(input.view())?;
                    Ok((start, masks, pred))
                },
            )
            .collect::<Result<Vec<_>>>()?;

        let mut values = Array2::from_elem((p, m), f64::NAN);
        for (start, masks, pred) in chunks {
            for (offset, mask) in masks.iter().enumerate() {
                let i = start + offset;
                for (j, &sampled) in mask.sampled.iter().enumerate() {
                    if !sampled {
                        values[[j, i]] = scaler.inverse(j, f64::from(pred[[offset, j]]));
                    }
                }
            }
        }
        Ok(ReconstructionDistribution {
            values,
            seeds: (0..m)
                .map(|i| iteration_seed(self.cfg.base_seed, i))
                .collect(),
            fallback_mm: scaler.mean.clone(),
        })
    }

    /// Healthy reference at the configured centile.
    pub fn reference(&self, thickness: &[f32]) -> Result<Reference> {
        centile_select(&self.distribution(thickness)?, self.cfg.centile)
    }

    /// Per-vertex σ from the residuals `Y − R` of healthy subjects.
    pub fn residual_sigma(&self, healthy: &Cohort) -> Result<Vec<f64>> {
        if healthy.len() < 10 {
            return Err(ScsrError::InsufficientData(format!(
                "sigma estimation needs at least 10 subjects, got {}",
                healthy.len()
            )));
        }
        let residuals = healthy
            .subjects
            .par_iter()
            .map(|s| {
                let r = self.reference(&s.thickness)?;
                Ok(s.thickness
                    .iter()
                    .zip(&r.values)
                    .map(|(&y, r)| f64::from(y) - r)
                    .collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        residual_std(&residuals)
    }

    pub fn deviation_map(
        &self,
        subject_id: &str,
        thickness: &[f32],
        sigma: &[f64],
        rois: &[(String, Vec<usize>)],
    ) -> Result<DeviationMap> {
        let reference = self.reference(thickness)?;
        let y: Vec<f64> = thickness.iter().map(|&t| f64::from(t)).collect();
        let mut map = DeviationMap::compute(subject_id, y, reference.values, sigma, rois)?;
        map.fallback_rows = reference.fallback_rows;
        Ok(map)
    }

    /// Deviation maps for every subject of a cohort, in cohort order.
    pub fn deviation_maps(
        &self,
        cohort: &Cohort,
        sigma: &[f64],
        rois: &[(String, Vec<usize>)],
    ) -> Result<Vec<DeviationMap>> {
        cohort
            .subjects
            .par_iter()
            .map(|s| self.deviation_map(&s.id, &s.thickness, sigma, rois))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sampling_rate: f64,
    pub centile: f64,
    /// Mean vertex-level MSE between thickness and reference, per group.
    pub rec_error_cn: f64,
    pub rec_error_ad: f64,
    /// CN vs AD AUC of the ROI mean Z (negated so that AD scores higher).
    pub auc: f64,
}

/// Evaluates every `(s, q)` pair: σ is re-estimated on `healthy` for each
/// configuration, then reconstruction error and CN-vs-AD AUC on `val`.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    model: &Mlp<f32>,
    parcellation: Option<&Parcellation>,
    base: &ScsrConfig,
    healthy: &Cohort,
    val: &Cohort,
    roi: &[usize],
    s_grid: &[f64],
    q_grid: &[f64],
) -> Result<Vec<SweepRow>> {
    let cn = val.filter_diagnosis(Diagnosis::CN);
    let ad = val.filter_diagnosis(Diagnosis::AD);
    if cn.is_empty() || ad.is_empty() {
        return Err(ScsrError::InsufficientData(
            "sweep needs CN and AD subjects in the validation cohort".into(),
        ));
    }
    if healthy.len() < 10 {
        return Err(ScsrError::InsufficientData(format!(
            "sigma estimation needs at least 10 subjects, got {}",
            healthy.len()
        )));
    }
    if roi.is_empty() {
        return Err(ScsrError::Config("sweep ROI is empty".into()));
    }
    for &q in q_grid {
        check_centile(q)?;
    }

    let mut rows = Vec::with_capacity(s_grid.len() * q_grid.len());
    for &s in s_grid {
        let cfg = ScsrConfig {
            sampling_rate: s,
            ..base.clone()
        };
        let rec = Reconstructor::new(model, parcellation, cfg)?;
        let refs = |cohort: &Cohort| -> Result<Vec<Vec<Reference>>> {
            cohort
                .subjects
                .par_iter()
                .map(|subj| centile_select_many(&rec.distribution(&subj.thickness)?, q_grid))
                .collect()
        };
        let healthy_refs = refs(healthy)?;
        let cn_refs = refs(&cn)?;
        let ad_refs = refs(&ad)?;

        for (qi, &q) in q_grid.iter().enumerate() {
            let residuals: Vec<Vec<f64>> = healthy
                .subjects
                .iter()
                .zip(&healthy_refs)
                .map(|(subj, r)| {
                    subj.thickness
                        .iter()
                        .zip(&r[qi].values)
                        .map(|(&y, r)| f64::from(y) - r)
                        .collect()
                })
                .collect();
            let sigma = residual_std(&residuals)?;

            let group = |cohort: &Cohort, refs: &[Vec<Reference>]| -> (f64, Vec<f64>) {
                let mut err = 0.0;
                let mut scores = Vec::with_capacity(cohort.len());
                for (subj, r) in cohort.subjects.iter().zip(refs) {
                    let y: Vec<f64> = subj.thickness_f64();
                    err += stats::reconstruction_mse(&y, &r[qi].values).expect("equal lengths");
                    let roi_z = roi
                        .iter()
                        .map(|&v| (y[v] - r[qi].values[v]) / sigma[v])
                        .sum::<f64>()
                        / roi.len() as f64;
                    scores.push(-roi_z);
                }
                (err / cohort.len() as f64, scores)
            };
            let (rec_error_cn, cn_scores) = group(&cn, &cn_refs);
            let (rec_error_ad, ad_scores) = group(&ad, &ad_refs);
            let auc = stats::auc_two_groups(&ad_scores, &cn_scores)?;
            rows.push(SweepRow {
                sampling_rate: s,
                centile: q,
                rec_error_cn,
                rec_error_ad,
                auc,
            });
        }
    }
    Ok(rows)
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| ScsrError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Architecture, FeatureScaler};

    fn dist(rows: &[&[f64]]) -> ReconstructionDistribution {
        let m = rows[0].len();
        let values = Array2::from_shape_fn((rows.len(), m), |(i, j)| rows[i][j]);
        ReconstructionDistribution {
            values,
            seeds: (0..m as u64).collect(),
            fallback_mm: vec![-1.0; rows.len()],
        }
    }

    #[test]
    fn centile_examples() {
        let nan = f64::NAN;
        let d = dist(&[
            &[1.0, 2.0, 3.0, nan],
            &[4.0, 2.0, 3.0, 1.0],
            &[1.0, nan, 3.0, nan],
            &[nan; 4],
        ]);
        let r = centile_select(&d, 0.5).unwrap();
        assert_eq!(r.values[0], 2.0);
        assert_eq!(r.values[1], 2.5);
        assert_eq!(r.values[3], -1.0);
        assert_eq!(r.fallback_rows, vec![3]);
        let r = centile_select(&d, 0.95).unwrap();
        assert!((r.values[2] - 2.9).abs() < 1e-12);
        assert!(centile_select(&d, 1.0).is_err());
        assert_eq!(d.uncovered_rows(), vec![3]);
    }

    #[test]
    fn residual_std_examples() {
        let s = residual_std(&[vec![-1.0, 0.5], vec![1.0, 0.5]]).unwrap();
        assert_eq!(s, vec![1.0, SIGMA_FLOOR]);
    }

    #[test]
    fn deviation_arithmetic() {
        let rois = vec![("roi".to_string(), vec![0])];
        let map = DeviationMap::compute("s", vec![2.5, 3.0], vec![3.0, 3.0], &[0.25, 0.5], &rois)
            .unwrap();
        assert_eq!(map.z, vec![-2.0, 0.0]);
        assert_eq!(map.roi_means["roi"], -2.0);
        assert_eq!(map.roi_means[CORTEX_ROI], -1.0);

        let same =
            DeviationMap::compute("s", vec![2.0, 2.0], vec![2.0, 2.0], &[0.1, 0.1], &rois).unwrap();
        assert!(same.z.iter().all(|&z| z == 0.0));
        assert!(same.roi_means.values().all(|&m| m == 0.0));

        let empty = vec![("e".to_string(), vec![])];
        assert!(matches!(
            DeviationMap::compute("s", vec![1.0], vec![1.0], &[1.0], &empty),
            Err(ScsrError::Config(_))
        ));
    }

    fn toy_model(p: usize) -> Mlp<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut scaler = FeatureScaler::identity(p);
        scaler.mean = vec![2.5; p];
        scaler.std = vec![0.5; p];
        Mlp::init(Architecture::new(p, &[16, 16, 16]), scaler, &mut rng).unwrap()
    }

    #[test]
    fn distribution_marks_inputs_missing() {
        let model = toy_model(42);
        let cfg = ScsrConfig {
            iterations: 1,
            ..Default::default()
        };
        let rec = Reconstructor::new(&model, None, cfg).unwrap();
        let y = vec![2.5f32; 42];
        let d = rec.distribution(&y).unwrap();
        assert_eq!(d.m(), 1);
        let mask = rec.mask(0).unwrap();
        let missing = d.values.column(0).iter().filter(|x| x.is_nan()).count();
        assert_eq!(missing, mask.n_sampled());
        for (j, &s) in mask.sampled.iter().enumerate() {
            assert_eq!(s, d.values[[j, 0]].is_nan());
        }
        assert!(rec.distribution(&y[..41]).is_err());
    }

    #[test]
    fn distribution_is_deterministic_and_thread_independent() {
        let model = toy_model(42);
        let cfg = ScsrConfig {
            iterations: 70,
            base_seed: 99,
            ..Default::default()
        };
        let rec = Reconstructor::new(&model, None, cfg).unwrap();
        let y: Vec<f32> = (0..42).map(|i| 2.0 + (i as f32 * 0.1).sin()).collect();
        let a = with_threads(1, || rec.distribution(&y).unwrap()).unwrap();
        let b = with_threads(4, || rec.distribution(&y).unwrap()).unwrap();
        assert_eq!(a.seeds, b.seeds);
        let bits = |d: &ReconstructionDistribution| {
            d.values.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
        assert!(a.uncovered_rows().is_empty());
    }

    #[test]
    fn sigma_needs_ten_subjects() {
        let model = toy_model(42);
        let rec = Reconstructor::new(&model, None, ScsrConfig::default()).unwrap();
        let cohort = Cohort::empty(0);
        assert!(matches!(
            rec.residual_sigma(&cohort),
            Err(ScsrError::InsufficientData(_))
        ));
    }
}
