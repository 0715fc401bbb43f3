//! Synthetic cohorts of cortical thickness maps.
//!
//! Thickness at vertex `v` for one subject is
//!
//! ```text
//! mean + slope·(age − 65) + sex_effect·(sex − ½) + Σ_j L(v, j)·z_j
//!      + site_offset(site) + ε(v) − severity·depth·falloff(v)
//! ```
//!
//! where `L` holds `n_latent` smooth spatial modes shared by the whole cohort
//! and `z_j ~ N(0, 1)` per subject. The smooth modes give the maps the
//! cross-cortex correlation a self-reconstruction model can learn.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ScsrError};
use crate::geometry::{vertex_count, IcosphereMesh, Parcellation};

pub const THICKNESS_MIN_MM: f64 = 0.3;
pub const THICKNESS_MAX_MM: f64 = 6.0;
const REFERENCE_AGE: f64 = 65.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Diagnosis {
    CN,
    MCI,
    AD,
}

impl Diagnosis {
    pub const ALL: [Diagnosis; 3] = [Diagnosis::CN, Diagnosis::MCI, Diagnosis::AD];

    /// Ordinal disease stage: CN 0, MCI 1, AD 2.
    pub fn ordinal(self) -> u8 {
        match self {
            Diagnosis::CN => 0,
            Diagnosis::MCI => 1,
            Diagnosis::AD => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Diagnosis::CN => "CN",
            Diagnosis::MCI => "MCI",
            Diagnosis::AD => "AD",
        }
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Diagnosis {
    type Err = ScsrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CN" => Ok(Diagnosis::CN),
            "MCI" => Ok(Diagnosis::MCI),
            "AD" => Ok(Diagnosis::AD),
            other => Err(ScsrError::Config(format!("unknown diagnosis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub age: f64,
    pub sex: u8,
    pub site: u32,
    pub diagnosis: Diagnosis,
    #[serde(skip)]
    pub thickness: Vec<f32>,
}

impl SubjectRecord {
    pub fn thickness_f64(&self) -> Vec<f64> {
        self.thickness.iter().map(|&t| f64::from(t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub mesh_order: u32,
    pub parcel_count: usize,
    pub config_hash: String,
    pub subjects: Vec<SubjectRecord>,
}

impl Cohort {
    pub fn empty(mesh_order: u32) -> Self {
        Self {
            mesh_order,
            parcel_count: 0,
            config_hash: String::new(),
            subjects: Vec::new(),
        }
    }

    /// Vertices per subject.
    pub fn p(&self) -> usize {
        vertex_count(self.mesh_order)
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn with_subjects(&self, subjects: Vec<SubjectRecord>) -> Self {
        Self {
            mesh_order: self.mesh_order,
            parcel_count: self.parcel_count,
            config_hash: self.config_hash.clone(),
            subjects,
        }
    }

    pub fn filter_diagnosis(&self, diagnosis: Diagnosis) -> Self {
        self.with_subjects(
            self.subjects
                .iter()
                .filter(|s| s.diagnosis == diagnosis)
                .cloned()
                .collect(),
        )
    }

    pub fn count(&self, diagnosis: Diagnosis) -> usize {
        self.subjects
            .iter()
            .filter(|s| s.diagnosis == diagnosis)
            .count()
    }

    pub fn find(&self, id: &str) -> Option<&SubjectRecord> {
        self.subjects.iter().find(|s| s.id == id)
    }

    /// Subjects × vertices matrix.
    pub fn thickness_matrix(&self) -> Array2<f32> {
        let p = self.p();
        let mut out = Array2::zeros((self.len(), p));
        for (mut row, s) in out.rows_mut().into_iter().zip(&self.subjects) {
            row.assign(&ndarray::ArrayView1::from(&s.thickness[..]));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtrophySpec {
    pub roi: String,
    pub depth_mm: f64,
    /// Width in hops of the cosine taper outside the ROI.
    pub spread: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub n_per_group: BTreeMap<Diagnosis, usize>,
    pub mesh_order: u32,
    pub mean_map_mm: f64,
    pub age_slope_mm_per_year: f64,
    pub age_range: (f64, f64),
    pub sex_effect_mm: f64,
    pub n_latent: usize,
    pub latent_scale_mm: f64,
    pub smoothing_passes: usize,
    pub noise_mm: f64,
    pub site_count: u32,
    pub site_offset_mm: f64,
    pub atrophy: BTreeMap<Diagnosis, AtrophySpec>,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            n_per_group: BTreeMap::from([(Diagnosis::CN, 100)]),
            mesh_order: 3,
            mean_map_mm: 2.5,
            age_slope_mm_per_year: -0.005,
            age_range: (50.0, 80.0),
            sex_effect_mm: 0.05,
            n_latent: 16,
            latent_scale_mm: 0.12,
            smoothing_passes: 10,
            noise_mm: 0.08,
            site_count: 3,
            site_offset_mm: 0.05,
            atrophy: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl CohortConfig {
    pub fn with_groups(mut self, groups: &[(Diagnosis, usize)]) -> Self {
        self.n_per_group = groups.iter().copied().collect();
        self
    }

    /// Atrophy of `depth_mm` for AD and half of it for MCI.
    pub fn with_ad_atrophy(mut self, roi: &str, depth_mm: f64, spread: u32) -> Self {
        for (diagnosis, severity) in [(Diagnosis::MCI, 0.5), (Diagnosis::AD, 1.0)] {
            self.atrophy.insert(
                diagnosis,
                AtrophySpec {
                    roi: roi.to_string(),
                    depth_mm: depth_mm * severity,
                    spread,
                },
            );
        }
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ScsrError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let scales = [
            ("latent_scale_mm", self.latent_scale_mm),
            ("noise_mm", self.noise_mm),
            ("site_offset_mm", self.site_offset_mm),
            ("sex_effect_mm", self.sex_effect_mm),
        ];
        for (name, v) in scales {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ScsrError::Config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if self.n_latent == 0 {
            return Err(ScsrError::Config("n_latent must be at least 1".into()));
        }
        if self.site_count == 0 {
            return Err(ScsrError::Config("site_count must be at least 1".into()));
        }
        let (lo, hi) = self.age_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(ScsrError::Config(format!("invalid age range {lo}..{hi}")));
        }
        for (d, a) in &self.atrophy {
            if !(a.depth_mm.is_finite() && a.depth_mm >= 0.0) {
                return Err(ScsrError::Config(format!(
                    "atrophy depth for {d} must be non-negative"
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Cohort-level quantities shared by every subject: latent loadings, site
/// offsets and per-diagnosis atrophy profiles.
#[derive(Debug, Clone)]
pub struct CohortGenerator {
    cfg: CohortConfig,
    p: usize,
    /// `n_latent × p`, already scaled to millimetres.
    loadings: Array2<f64>,
    site_offsets: Vec<f64>,
    atrophy: BTreeMap<Diagnosis, Vec<f64>>,
}

impl CohortGenerator {
    pub fn new(
        cfg: &CohortConfig,
        mesh: &IcosphereMesh,
        parcellation: &Parcellation,
    ) -> Result<Self> {
        cfg.validate()?;
        if mesh.order != cfg.mesh_order {
            return Err(ScsrError::Config(format!(
                "config mesh_order {} does not match mesh order {}",
                cfg.mesh_order, mesh.order
            )));
        }
        let p = mesh.n_vertices();
        if parcellation.n_vertices() != p {
            return Err(ScsrError::Shape {
                context: "parcellation vertex count",
                expected: p,
                actual: parcellation.n_vertices(),
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut loadings = Array2::zeros((cfg.n_latent, p));
        for mut mode in loadings.rows_mut() {
            let mut field: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            for _ in 0..cfg.smoothing_passes {
                field = smooth_once(mesh, &field);
            }
            let rms = (field.iter().map(|x| x * x).sum::<f64>() / p as f64).sqrt();
            let scale = if rms > 0.0 {
                cfg.latent_scale_mm / rms
            } else {
                0.0
            };
            for (dst, x) in mode.iter_mut().zip(field) {
                *dst = x * scale;
            }
        }

        let centre = f64::from(cfg.site_count - 1) / 2.0;
        let site_offsets = (0..cfg.site_count)
            .map(|s| cfg.site_offset_mm * (f64::from(s) - centre))
            .collect();

        let mut atrophy = BTreeMap::new();
        for (&diagnosis, spec) in &cfg.atrophy {
            let roi = parcellation.roi_vertices(&spec.roi)?;
            atrophy.insert(diagnosis, atrophy_profile(mesh, &roi, spec));
        }

        Ok(Self {
            cfg: cfg.clone(),
            p,
            loadings,
            site_offsets,
            atrophy,
        })
    }

    /// Per-vertex thickness decrement for a diagnosis (zero if none configured).
    pub fn atrophy_profile(&self, diagnosis: Diagnosis) -> Vec<f64> {
        self.atrophy
            .get(&diagnosis)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.p])
    }

    /// Draws subject `index`. The random stream depends only on the seed and
    /// the index, so two diagnoses with the same index share covariates,
    /// latent scores and noise.
    pub fn subject(&self, index: u64, diagnosis: Diagnosis) -> SubjectRecord {
        let cfg = &self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index + 1);

        let (lo, hi) = cfg.age_range;
        let age = if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        };
        let sex: u8 = rng.random_range(0..2);
        let site: u32 = rng.random_range(0..cfg.site_count);
        let z: Vec<f64> = (0..cfg.n_latent)
            .map(|_| rng.sample(StandardNormal))
            .collect();

        let base = cfg.mean_map_mm
            + cfg.age_slope_mm_per_year * (age - REFERENCE_AGE)
            + cfg.sex_effect_mm * (f64::from(sex) - 0.5)
            + self.site_offsets[site as usize];
        let atrophy = self.atrophy.get(&diagnosis);

        let thickness = (0..self.p)
            .map(|v| {
                let latent: f64 = z
                    .iter()
                    .enumerate()
                    .map(|(j, zj)| self.loadings[[j, v]] * zj)
                    .sum();
                let noise: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.noise_mm;
                let mut t = base + latent + noise;
                if let Some(profile) = atrophy {
                    t -= profile[v];
                }
                t.clamp(THICKNESS_MIN_MM, THICKNESS_MAX_MM) as f32
            })
            .collect();

        SubjectRecord {
            id: format!("sub-{index:05}"),
            age,
            sex,
            site,
            diagnosis,
            thickness,
        }
    }
}

fn smooth_once(mesh: &IcosphereMesh, field: &[f64]) -> Vec<f64> {
    mesh.adjacency
        .iter()
        .enumerate()
        .map(|(v, nb)| {
            (field[v] + nb.iter().map(|&u| field[u]).sum::<f64>()) / (1 + nb.len()) as f64
        })
        .collect()
}

fn atrophy_profile(mesh: &IcosphereMesh, roi: &[usize], spec: &AtrophySpec) -> Vec<f64> {
    if roi.is_empty() {
        return vec![0.0; mesh.n_vertices()];
    }
    let width = f64::from(spec.spread + 1);
    mesh.hop_distances(roi)
        .into_iter()
        .map(|d| match d {
            0 => spec.depth_mm,
            d if d <= spec.spread => {
                spec.depth_mm * 0.5 * (1.0 + (std::f64::consts::PI * f64::from(d) / width).cos())
            }
            _ => 0.0,
        })
        .collect()
}

/// Generates the cohort described by `cfg`: groups in CN, MCI, AD order,
/// subject indices running across groups.
pub fn synth_cohort(
    cfg: &CohortConfig,
    mesh: &IcosphereMesh,
    parcellation: &Parcellation,
) -> Result<Cohort> {
    let generator = CohortGenerator::new(cfg, mesh, parcellation)?;
    let mut subjects = Vec::with_capacity(cfg.n_per_group.values().sum());
    let mut index = 0u64;
    for (&diagnosis, &n) in &cfg.n_per_group {
        for _ in 0..n {
            subjects.push(generator.subject(index, diagnosis));
            index += 1;
        }
    }
    Ok(Cohort {
        mesh_order: cfg.mesh_order,
        parcel_count: parcellation.k,
        config_hash: cfg.hash(),
        subjects,
    })
}

/// Stratified (by diagnosis) train/val/test split. Within each stratum the
/// counts follow largest-remainder apportionment; subjects keep their cohort
/// order inside each part.
pub fn split_cohort(
    cohort: &Cohort,
    fractions: [f64; 3],
    seed: u64,
) -> Result<(Cohort, Cohort, Cohort)> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(ScsrError::Split(format!(
            "fractions {fractions:?} must be in [0,1] and sum to 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();

    for diagnosis in Diagnosis::ALL {
        let mut idx: Vec<usize> = (0..cohort.len())
            .filter(|&i| cohort.subjects[i].diagnosis == diagnosis)
            .collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let counts = apportion(idx.len(), fractions);
        for (part, (&count, &frac)) in counts.iter().zip(&fractions).enumerate() {
            if frac > 0.0 && count == 0 {
                return Err(ScsrError::Split(format!(
                    "{diagnosis} stratum ({} subjects) leaves part {part} empty at fraction {frac}",
                    idx.len()
                )));
            }
        }
        let mut start = 0;
        for (part, &count) in counts.iter().enumerate() {
            parts[part].extend_from_slice(&idx[start..start + count]);
            start += count;
        }
    }

    let build = |mut ids: Vec<usize>| {
        ids.sort_unstable();
        cohort.with_subjects(
            ids.into_iter()
                .map(|i| cohort.subjects[i].clone())
                .collect(),
        )
    };
    let [a, b, c] = parts;
    Ok((build(a), build(b), build(c)))
}

fn apportion(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        // guard against 0.8 * 100 = 79.99999...
        *c = (e + 1e-9).floor() as usize;
    }
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if fractions[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_icosphere, generate_parcellation};

    fn setup(order: u32) -> (IcosphereMesh, Parcellation) {
        let mesh = build_icosphere(order).unwrap();
        let parc = generate_parcellation(&mesh, 34.min(mesh.n_vertices()), 7)
            .unwrap()
            .define_roi("ad_roi", &[2, 5, 9, 11, 17].into())
            .unwrap();
        (mesh, parc)
    }

    #[test]
    fn degenerate_generator_is_constant() {
        let (mesh, parc) = setup(2);
        let cfg = CohortConfig {
            mesh_order: 2,
            age_slope_mm_per_year: 0.0,
            sex_effect_mm: 0.0,
            latent_scale_mm: 0.0,
            noise_mm: 0.0,
            site_offset_mm: 0.0,
            ..Default::default()
        }
        .with_groups(&[(Diagnosis::CN, 5)]);
        let cohort = synth_cohort(&cfg, &mesh, &parc).unwrap();
        for s in &cohort.subjects {
            assert!(s.thickness.iter().all(|&t| t == 2.5));
        }
    }

    #[test]
    fn grand_mean_near_base() {
        let (mesh, parc) = setup(3);
        let cfg = CohortConfig::default().with_groups(&[(Diagnosis::CN, 2000)]);
        let cohort = synth_cohort(&cfg, &mesh, &parc).unwrap();
        let total: f64 = cohort
            .subjects
            .iter()
            .flat_map(|s| s.thickness.iter().map(|&t| f64::from(t)))
            .sum();
        let mean = total / (2000.0 * 642.0);
        assert!((mean - 2.5).abs() < 0.02, "grand mean {mean}");
    }

    #[test]
    fn ad_roi_group_difference_matches_depth() {
        let (mesh, parc) = setup(3);
        let cfg = CohortConfig::default()
            .with_groups(&[(Diagnosis::CN, 300), (Diagnosis::AD, 300)])
            .with_ad_atrophy("ad_roi", 0.4, 2);
        let cohort = synth_cohort(&cfg, &mesh, &parc).unwrap();
        let roi = parc.roi_vertices("ad_roi").unwrap();
        let group_mean = |d: Diagnosis| {
            let g = cohort.filter_diagnosis(d);
            g.subjects
                .iter()
                .map(|s| {
                    roi.iter().map(|&v| f64::from(s.thickness[v])).sum::<f64>() / roi.len() as f64
                })
                .sum::<f64>()
                / g.len() as f64
        };
        let diff = group_mean(Diagnosis::CN) - group_mean(Diagnosis::AD);
        assert!((diff - 0.4).abs() < 0.05, "difference {diff}");
    }

    #[test]
    fn atrophy_is_local_and_bit_identical_outside() {
        let (mesh, parc) = setup(3);
        let cfg = CohortConfig::default().with_ad_atrophy("ad_roi", 0.4, 2);
        let gen = CohortGenerator::new(&cfg, &mesh, &parc).unwrap();
        let profile = gen.atrophy_profile(Diagnosis::AD);
        let dist = mesh.hop_distances(&parc.roi_vertices("ad_roi").unwrap());
        for index in 0..20 {
            let cn = gen.subject(index, Diagnosis::CN);
            let ad = gen.subject(index, Diagnosis::AD);
            for v in 0..mesh.n_vertices() {
                if dist[v] > 2 {
                    assert_eq!(cn.thickness[v].to_bits(), ad.thickness[v].to_bits());
                    assert_eq!(profile[v], 0.0);
                }
            }
        }
    }

    #[test]
    fn clamping_rarely_active() {
        let (mesh, parc) = setup(3);
        let cfg = CohortConfig::default().with_groups(&[(Diagnosis::CN, 200)]);
        let cohort = synth_cohort(&cfg, &mesh, &parc).unwrap();
        let total = cohort.len() * cohort.p();
        let clamped = cohort
            .subjects
            .iter()
            .flat_map(|s| &s.thickness)
            .filter(|&&t| f64::from(t) <= THICKNESS_MIN_MM || f64::from(t) >= THICKNESS_MAX_MM)
            .count();
        assert!((clamped as f64) < 0.001 * total as f64);
    }

    #[test]
    fn adjacent_vertices_correlate_more_than_antipodal() {
        let (mesh, parc) = setup(3);
        let cfg = CohortConfig::default().with_groups(&[(Diagnosis::CN, 600)]);
        let cohort = synth_cohort(&cfg, &mesh, &parc).unwrap();
        let x = cohort.thickness_matrix().mapv(f64::from);
        let corr = |a: usize, b: usize| {
            let (ca, cb) = (x.column(a), x.column(b));
            let (ma, mb) = (ca.mean().unwrap(), cb.mean().unwrap());
            let cov: f64 = ca.iter().zip(cb).map(|(p, q)| (p - ma) * (q - mb)).sum();
            let va: f64 = ca.iter().map(|p| (p - ma).powi(2)).sum();
            let vb: f64 = cb.iter().map(|q| (q - mb).powi(2)).sum();
            cov / (va * vb).sqrt()
        };
        let antipode = |v: usize| {
            let [x0, y0, z0] = mesh.vertices[v];
            (0..mesh.n_vertices())
                .min_by(|&a, &b| {
                    let d = |u: usize| {
                        let [x, y, z] = mesh.vertices[u];
                        (x + x0).powi(2) + (y + y0).powi(2) + (z + z0).powi(2)
                    };
                    d(a).total_cmp(&d(b))
                })
                .unwrap()
        };
        let (mut adj, mut anti) = (0.0, 0.0);
        let sample: Vec<usize> = (0..mesh.n_vertices()).step_by(16).collect();
        for &v in &sample {
            adj += corr(v, mesh.adjacency[v][0]).abs();
            anti += corr(v, antipode(v)).abs();
        }
        assert!(adj > anti, "adjacent {adj} vs antipodal {anti}");
    }

    #[test]
    fn unknown_roi_is_config_error() {
        let (mesh, parc) = setup(2);
        let cfg = CohortConfig {
            mesh_order: 2,
            ..Default::default()
        }
        .with_ad_atrophy("nope", 0.4, 1);
        assert!(matches!(
            synth_cohort(&cfg, &mesh, &parc),
            Err(ScsrError::Config(_))
        ));
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let (mesh, parc) = setup(1);
        let cfg = CohortConfig {
            mesh_order: 1,
            ..Default::default()
        }
        .with_groups(&[(Diagnosis::CN, 100), (Diagnosis::AD, 100)]);
        let cohort = synth_cohort(&cfg, &mesh, &parc).unwrap();
        let (train, val, test) = split_cohort(&cohort, [0.8, 0.2, 0.0], 3).unwrap();
        assert_eq!(train.count(Diagnosis::CN), 80);
        assert_eq!(train.count(Diagnosis::AD), 80);
        assert_eq!(val.count(Diagnosis::CN), 20);
        assert_eq!(val.count(Diagnosis::AD), 20);
        assert!(test.is_empty());
        let again = split_cohort(&cohort, [0.8, 0.2, 0.0], 3).unwrap();
        assert_eq!(train, again.0);
        assert_eq!(val, again.1);

        let mut ids: Vec<&str> = train
            .subjects
            .iter()
            .chain(&val.subjects)
            .map(|s| s.id.as_str())
            .collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 200);

        let (all, _, _) = split_cohort(&cohort, [1.0, 0.0, 0.0], 9).unwrap();
        assert_eq!(all, cohort);
    }

    #[test]
    fn split_rejects_empty_stratum_part() {
        let (mesh, parc) = setup(1);
        let cfg = CohortConfig {
            mesh_order: 1,
            ..Default::default()
        }
        .with_groups(&[(Diagnosis::CN, 1)]);
        let cohort = synth_cohort(&cfg, &mesh, &parc).unwrap();
        assert!(matches!(
            split_cohort(&cohort, [0.5, 0.5, 0.0], 0),
            Err(ScsrError::Split(_))
        ));
        assert!(split_cohort(&cohort, [0.5, 0.6, 0.0], 0).is_err());
    }

    #[test]
    fn config_parses_from_toml() {
        let cfg = CohortConfig::from_toml_str(
            r#"
            mesh_order = 2
            seed = 11
            n_per_group = { CN = 10, AD = 5 }
            [atrophy.AD]
            roi = "ad_roi"
            depth_mm = 0.4
            spread = 2
            "#,
        )
        .unwrap();
        assert_eq!(cfg.mesh_order, 2);
        assert_eq!(cfg.n_per_group[&Diagnosis::AD], 5);
        assert_eq!(cfg.atrophy[&Diagnosis::AD].depth_mm, 0.4);
        assert_eq!(cfg.noise_mm, 0.08);
        assert!(CohortConfig::from_toml_str("bogus = 1").is_err());
    }
}
