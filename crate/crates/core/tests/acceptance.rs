//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero on any
//! failure not listed in `KNOWN_FAILURES`, and on a listed criterion that
//! starts passing. Run with `cargo test -p scsr-core --test acceptance`.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use scsr::baselines::*;
use scsr::cohort::{synth_cohort, Cohort, CohortConfig, CohortGenerator, Diagnosis};
use scsr::engine::mask::MaskSampler;
use scsr::engine::*;
use scsr::geometry::{
    build_icosphere, generate_parcellation, vertex_count, IcosphereMesh, Parcellation,
};
use scsr::io::{self, MapSidecar, MAP_FORMAT_VERSION};
use scsr::nn::{train, Architecture, FeatureScaler, Mlp, TrainConfig};
use scsr::stats::*;

const GEOMETRY_BUDGET: Duration = Duration::from_secs(5);
const GRADIENT_BUDGET: Duration = Duration::from_secs(30);
const GRADIENT_PROBES: usize = 200;
const GRADIENT_STEP: f64 = 1e-4;
const GRADIENT_TOL: f64 = 1e-4;
const CENTILE_TOL: f64 = 1e-12;
const AUC_TOL: f64 = 1e-12;
const EXACT_TEST_MAX_N: usize = 10;
const PHI_TOL: f64 = 1e-6;
const GAMLSS_TOL: f64 = 0.05;
const GAM_SEX_TOL: f64 = 0.01;
const BLR_RESIDUAL_TOL: f64 = 1e-6;
const ORDERING_P: f64 = 0.01;
const MIN_AUC: f64 = 0.85;
const MAX_SPEARMAN: f64 = -0.3;

/// Criteria that fail on the reference setup. AC7: MCI atrophy (half the AD
/// depth, ROI only) raises whole-cortex MAE by far less than the
/// between-subject spread of MAE, since the reconstruction follows atrophy
/// visible at sampled ROI vertices; CN vs MCI is not separable at n = 100.
const KNOWN_FAILURES: &[&str] = &["AC7"];

/// Study setup shared by the cohort-level criteria.
const STUDY_ORDER: u32 = 3;
const STUDY_PARCELS: usize = 34;
const STUDY_ROI: [usize; 5] = [2, 5, 9, 11, 17];
const STUDY_SEED: u64 = 7;
const STUDY_DEPTH_MM: f64 = 0.4;
const STUDY_EPOCHS: usize = 150;
const N_TRAIN: usize = 2000;
const N_VAL: usize = 200;
const N_TEST: usize = 100;
const STUDY_S: f64 = 0.2;
const STUDY_Q: f64 = 0.95;
const STUDY_M: usize = 100;
const SWEEP_S: [f64; 4] = [0.05, 0.1, 0.2, 0.25];
const SWEEP_Q: [f64; 2] = [0.5, 0.95];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = Result<Outcome, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn geometry() -> Check {
    let start = Instant::now();
    let mut problems = Vec::new();
    for order in 0..=5u32 {
        let mesh = build_icosphere(order).map_err(err)?;
        let expected = 10 * 4usize.pow(order) + 2;
        if mesh.n_vertices() != expected || vertex_count(order) != expected {
            problems.push(format!("order {order}: {} vertices", mesh.n_vertices()));
        }
        if mesh.euler_characteristic() != 2 {
            problems.push(format!(
                "order {order}: euler {}",
                mesh.euler_characteristic()
            ));
        }
    }
    let elapsed = start.elapsed();
    let pass = problems.is_empty() && elapsed < GEOMETRY_BUDGET;
    Ok(outcome(
        pass,
        format!(
            "orders 0-5, order 5 has {} vertices, {elapsed:.2?} {}",
            vertex_count(5),
            problems.join("; ")
        ),
    ))
}

fn gradient() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let p = 12;
    let mut model: Mlp<f64> = Mlp::init(
        Architecture::new(p, &[8, 8, 8]),
        FeatureScaler::identity(p),
        &mut rng,
    )
    .map_err(err)?;
    for bn in &mut model.norms {
        bn.gamma.mapv_inplace(|_| rng.random_range(0.5..1.5));
        bn.beta.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let batch = 4;
    let x = Array2::from_shape_simple_fn((batch, p), || rng.random_range(-2.0..2.0));
    let target = Array2::from_shape_simple_fn((batch, p), || rng.random_range(-2.0..2.0));
    let sampler = MaskSampler::vertex(p, 0.25).map_err(err)?;
    let masks = (0..batch)
        .map(|_| sampler.draw(&mut rng))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let dropout = model.sample_dropout(batch, &mut rng);

    let loss = |m: &Mlp<f64>| {
        m.loss_and_gradients(x.view(), &masks, target.view(), dropout.as_ref())
            .map(|r| r.0)
    };
    let (_, grads, _) = model
        .loss_and_gradients(x.view(), &masks, target.view(), dropout.as_ref())
        .map_err(err)?;
    let analytic: Vec<Vec<f64>> = grads.blocks().iter().map(|b| b.to_vec()).collect();

    let mut worst = 0.0f64;
    for _ in 0..GRADIENT_PROBES {
        let block = rng.random_range(0..analytic.len());
        let idx = rng.random_range(0..analytic[block].len());
        let original = model.param_blocks_mut()[block].1[idx];
        model.param_blocks_mut()[block].1[idx] = original + GRADIENT_STEP;
        let plus = loss(&model).map_err(err)?;
        model.param_blocks_mut()[block].1[idx] = original - GRADIENT_STEP;
        let minus = loss(&model).map_err(err)?;
        model.param_blocks_mut()[block].1[idx] = original;
        let numeric = (plus - minus) / (2.0 * GRADIENT_STEP);
        let a = analytic[block][idx];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
    }
    let elapsed = start.elapsed();
    Ok(outcome(
        worst < GRADIENT_TOL && elapsed < GRADIENT_BUDGET,
        format!("max relative error {worst:.2e} over {GRADIENT_PROBES} probes, {elapsed:.2?}"),
    ))
}

fn oracle_centile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = q * (v.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn centile_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut fallbacks = 0;
    for _ in 0..1000 {
        let (p, m) = (rng.random_range(1..=50), rng.random_range(1..=20));
        let missing = rng.random_range(0.0..=0.5);
        let mut values = Array2::from_shape_fn((p, m), |_| rng.random_range(0.5..4.0));
        values.iter_mut().for_each(|x| {
            if rng.random::<f64>() < missing {
                *x = f64::NAN;
            }
        });
        let q: f64 = rng.random_range(1e-9..1.0);
        let fallback: Vec<f64> = (0..p).map(|v| v as f64).collect();
        let dist = ReconstructionDistribution {
            values: values.clone(),
            seeds: vec![0; m],
            fallback_mm: fallback.clone(),
        };
        let got = centile_select(&dist, q).map_err(err)?;
        for (v, row) in values.rows().into_iter().enumerate() {
            let present: Vec<f64> = row.iter().copied().filter(|x| !x.is_nan()).collect();
            let want = if present.is_empty() {
                fallbacks += 1;
                fallback[v]
            } else {
                oracle_centile(&present, q)
            };
            worst = worst.max((got.values[v] - want).abs());
        }
    }
    Ok(outcome(
        worst <= CENTILE_TOL,
        format!("1000 matrices, max deviation {worst:.1e}, {fallbacks} all-missing rows"),
    ))
}

/// Two-sided p from exhaustive relabelling, in doubled-rank integers.
fn enumerated_rank_sum_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks: Vec<i64> = midranks(&pooled)
        .iter()
        .map(|r| (2.0 * r).round() as i64)
        .collect();
    let n = pooled.len();
    let observed: i64 = ranks[..a.len()].iter().sum();
    let (mut le, mut ge, mut total) = (0u64, 0u64, 0u64);
    for bits in 0u32..(1 << n) {
        if bits.count_ones() as usize != a.len() {
            continue;
        }
        let s: i64 = (0..n)
            .filter(|i| bits >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        total += 1;
        le += u64::from(s <= observed);
        ge += u64::from(s >= observed);
    }
    (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
}

fn enumerated_signed_rank_p(d: &[f64]) -> f64 {
    let d: Vec<f64> = d.iter().copied().filter(|&x| x != 0.0).collect();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks: Vec<i64> = midranks(&abs)
        .iter()
        .map(|r| (2.0 * r).round() as i64)
        .collect();
    let observed: i64 = ranks
        .iter()
        .zip(&d)
        .filter(|(_, &x)| x > 0.0)
        .map(|(r, _)| r)
        .sum();
    let n = d.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for bits in 0u32..(1 << n) {
        let s: i64 = (0..n)
            .filter(|i| bits >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        le += u64::from(s <= observed);
        ge += u64::from(s >= observed);
    }
    (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
}

fn exact_tests() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut cases = 0usize;
    let mut mismatches = Vec::new();
    for n in 2..=EXACT_TEST_MAX_N {
        for na in 1..n {
            // every split of the untied ranks 1..n, then tied samples
            for bits in 0u32..(1 << n) {
                if bits.count_ones() as usize != na {
                    continue;
                }
                let (a, b): (Vec<f64>, Vec<f64>) = (1..=n)
                    .map(|r| r as f64)
                    .partition(|&r| bits >> (r as usize - 1) & 1 == 1);
                let got = wilcoxon_rank_sum(&a, &b).map_err(err)?;
                cases += 1;
                if !got.exact || got.p_value != enumerated_rank_sum_p(&a, &b) {
                    mismatches.push(format!("rank-sum {a:?} {b:?}"));
                }
            }
            for _ in 0..50 {
                let a: Vec<f64> = (0..na)
                    .map(|_| f64::from(rng.random_range(0..4u8)))
                    .collect();
                let b: Vec<f64> = (0..n - na)
                    .map(|_| f64::from(rng.random_range(0..4u8)))
                    .collect();
                let got = wilcoxon_rank_sum(&a, &b).map_err(err)?;
                cases += 1;
                if !got.exact || got.p_value != enumerated_rank_sum_p(&a, &b) {
                    mismatches.push(format!("rank-sum {a:?} {b:?}"));
                }
            }
        }
    }
    for n in 1..=EXACT_TEST_MAX_N {
        for signs in 0u32..(1 << n) {
            let d: Vec<f64> = (0..n)
                .map(|i| {
                    if signs >> i & 1 == 1 {
                        (i + 1) as f64
                    } else {
                        -((i + 1) as f64)
                    }
                })
                .collect();
            let got = wilcoxon_signed_rank(&d).map_err(err)?;
            cases += 1;
            if !got.exact || got.p_value != enumerated_signed_rank_p(&d) {
                mismatches.push(format!("signed-rank {d:?}"));
            }
        }
        for _ in 0..50 {
            let d: Vec<f64> = (0..n)
                .map(|_| f64::from(rng.random_range(-3..=3i8)))
                .collect();
            if d.iter().all(|&x| x == 0.0) {
                continue;
            }
            let got = wilcoxon_signed_rank(&d).map_err(err)?;
            cases += 1;
            if !got.exact || got.p_value != enumerated_signed_rank_p(&d) {
                mismatches.push(format!("signed-rank {d:?}"));
            }
        }
    }
    Ok(outcome(
        mismatches.is_empty(),
        format!(
            "{cases} cases up to n = {EXACT_TEST_MAX_N}, {} mismatches {}",
            mismatches.len(),
            mismatches.first().cloned().unwrap_or_default()
        ),
    ))
}

fn auc_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=200);
        let grid = rng.random_range(2..=20u32);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.random_range(0..grid)))
            .collect();
        let got = roc_auc(&scores, &labels).map_err(err)?;
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        worst = worst.max((got - wins / pairs).abs());
    }
    Ok(outcome(
        worst <= AUC_TOL,
        format!("1000 tied instances, max deviation {worst:.1e}"),
    ))
}

fn study_parcellation(mesh: &IcosphereMesh) -> Result<Parcellation, String> {
    generate_parcellation(mesh, STUDY_PARCELS, STUDY_SEED)
        .and_then(|p| p.define_roi("ad_roi", &STUDY_ROI.into_iter().collect::<BTreeSet<_>>()))
        .map_err(err)
}

/// synth, train and deviate at a small scale; returns the bytes of every
/// written map and sidecar.
fn small_pipeline(threads: usize) -> Result<Vec<Vec<u8>>, String> {
    let mesh = build_icosphere(2).map_err(err)?;
    let parc = study_parcellation(&mesh)?;
    let cfg = CohortConfig {
        mesh_order: 2,
        seed: 13,
        ..Default::default()
    }
    .with_groups(&[(Diagnosis::CN, 160), (Diagnosis::AD, 40)])
    .with_ad_atrophy("ad_roi", STUDY_DEPTH_MM, 2);
    let cohort = synth_cohort(&cfg, &mesh, &parc).map_err(err)?;
    let cn = cohort.filter_diagnosis(Diagnosis::CN);
    let (tr, va) = cn.subjects.split_at(120);
    let train_cfg = TrainConfig {
        epochs: 5,
        hidden: vec![256, 256, 256],
        ..Default::default()
    };
    let sampler = MaskSampler::vertex(cohort.p(), train_cfg.sampling_rate).map_err(err)?;
    let model = train(
        &cn.with_subjects(tr.to_vec()),
        &cn.with_subjects(va.to_vec()),
        &train_cfg,
        &sampler,
    )
    .map_err(err)?
    .model;
    let scsr_cfg = ScsrConfig {
        iterations: 50,
        ..Default::default()
    };
    let rois = vec![(
        "ad_roi".to_string(),
        parc.roi_vertices("ad_roi").map_err(err)?,
    )];
    let dir = tempfile::tempdir().map_err(err)?;
    let maps = with_threads(threads, || -> scsr::Result<Vec<DeviationMap>> {
        let rec = Reconstructor::new(&model, Some(&parc), scsr_cfg.clone())?;
        let sigma = rec.residual_sigma(&cn.with_subjects(va.to_vec()))?;
        rec.deviation_maps(&cohort, &sigma, &rois)
    })
    .map_err(err)?
    .map_err(err)?;
    let mut bytes = Vec::new();
    for map in &maps {
        let (csv, json) = io::map_paths(dir.path(), &map.subject_id);
        let sidecar = MapSidecar {
            format_version: MAP_FORMAT_VERSION,
            subject_id: map.subject_id.clone(),
            q: scsr_cfg.centile,
            s: scsr_cfg.sampling_rate,
            m: scsr_cfg.iterations,
            base_seed: scsr_cfg.base_seed,
            strategy: scsr_cfg.strategy,
            excluded_roi: None,
            seeds: (0..scsr_cfg.iterations)
                .map(|i| iteration_seed(0, i))
                .collect(),
            roi_means: map.roi_means.clone(),
            fallback_rows: map.fallback_rows.clone(),
        };
        io::write_map(&csv, map, &sidecar).map_err(err)?;
        bytes.push(std::fs::read(csv).map_err(err)?);
        bytes.push(std::fs::read(json).map_err(err)?);
    }
    Ok(bytes)
}

fn determinism() -> Check {
    let first = small_pipeline(1)?;
    let second = small_pipeline(1)?;
    let threaded = small_pipeline(4)?;
    let same = first == second;
    let same_threads = first == threaded;
    Ok(outcome(
        same && same_threads && !first.is_empty(),
        format!(
            "{} map files, rerun identical: {same}, 4 threads vs 1 identical: {same_threads}",
            first.len()
        ),
    ))
}

struct Study {
    parc: Parcellation,
    train: Cohort,
    test: Cohort,
    val: Cohort,
    model: Mlp<f32>,
    maps: Vec<DeviationMap>,
    /// Cortex-mean injected atrophy in mm, by diagnosis ordinal.
    injected_mm: [f64; 3],
    best_epoch: usize,
    elapsed: Duration,
}

fn build_study() -> Result<Study, String> {
    let start = Instant::now();
    let mesh = build_icosphere(STUDY_ORDER).map_err(err)?;
    let parc = study_parcellation(&mesh)?;
    let cfg = CohortConfig {
        mesh_order: STUDY_ORDER,
        seed: STUDY_SEED,
        ..Default::default()
    }
    .with_groups(&[
        (Diagnosis::CN, N_TRAIN + N_VAL + N_TEST),
        (Diagnosis::MCI, N_TEST),
        (Diagnosis::AD, N_TEST),
    ])
    .with_ad_atrophy("ad_roi", STUDY_DEPTH_MM, 2);
    let cohort = synth_cohort(&cfg, &mesh, &parc).map_err(err)?;
    let generator = CohortGenerator::new(&cfg, &mesh, &parc).map_err(err)?;
    let injected_mm = Diagnosis::ALL.map(|d| {
        let profile = generator.atrophy_profile(d);
        profile.iter().sum::<f64>() / profile.len() as f64
    });
    let subjects = &cohort.subjects;
    let train_set = cohort.with_subjects(subjects[..N_TRAIN].to_vec());
    let val = cohort.with_subjects(subjects[N_TRAIN..N_TRAIN + N_VAL].to_vec());
    let test = cohort.with_subjects(subjects[N_TRAIN + N_VAL..].to_vec());

    let train_cfg = TrainConfig {
        epochs: STUDY_EPOCHS,
        sampling_rate: STUDY_S,
        ..Default::default()
    };
    let sampler = MaskSampler::vertex(cohort.p(), STUDY_S).map_err(err)?;
    let outcome = train(&train_set, &val, &train_cfg, &sampler).map_err(err)?;

    let scsr_cfg = ScsrConfig {
        sampling_rate: STUDY_S,
        centile: STUDY_Q,
        iterations: STUDY_M,
        ..Default::default()
    };
    let rois = vec![(
        "ad_roi".to_string(),
        parc.roi_vertices("ad_roi").map_err(err)?,
    )];
    let rec = Reconstructor::new(&outcome.model, Some(&parc), scsr_cfg).map_err(err)?;
    let sigma = rec.residual_sigma(&val).map_err(err)?;
    let maps = rec.deviation_maps(&test, &sigma, &rois).map_err(err)?;
    Ok(Study {
        parc,
        train: train_set,
        test,
        val,
        model: outcome.model,
        maps,
        injected_mm,
        best_epoch: outcome.best_epoch,
        elapsed: start.elapsed(),
    })
}

fn by_group(study: &Study, value: impl Fn(&DeviationMap) -> f64) -> [Vec<f64>; 3] {
    let mut out: [Vec<f64>; 3] = Default::default();
    for (s, map) in study.test.subjects.iter().zip(&study.maps) {
        out[usize::from(s.diagnosis.ordinal())].push(value(map));
    }
    out
}

fn healthy_reference(study: &Study) -> Check {
    let mae = by_group(study, |m| {
        reconstruction_mae(&m.thickness, &m.reference).unwrap()
    });
    let means: Vec<f64> = mae
        .iter()
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .collect();
    let p_cn_mci = wilcoxon_rank_sum(&mae[0], &mae[1]).map_err(err)?.p_value;
    let p_mci_ad = wilcoxon_rank_sum(&mae[1], &mae[2]).map_err(err)?.p_value;
    let ordered = means[0] < means[1] && means[1] < means[2];
    let cn_sd =
        (mae[0].iter().map(|x| (x - means[0]).powi(2)).sum::<f64>() / mae[0].len() as f64).sqrt();
    let inj = study.injected_mm;
    Ok(outcome(
        ordered && p_cn_mci < ORDERING_P && p_mci_ad < ORDERING_P,
        format!(
            "mean MAE CN {:.4} MCI {:.4} AD {:.4} mm, p(CN,MCI) {p_cn_mci:.2e}, p(MCI,AD) {p_mci_ad:.2e}; \
             cortex-mean injected atrophy MCI {:.4} AD {:.4} mm, CN MAE sd {cn_sd:.4} mm",
            means[0], means[1], means[2], inj[1], inj[2]
        ),
    ))
}

fn discrimination(study: &Study) -> Check {
    let roi = by_group(study, |m| m.roi_means["ad_roi"]);
    let neg = |xs: &[f64]| xs.iter().map(|x| -x).collect::<Vec<_>>();
    let auc_scsr = auc_two_groups(&neg(&roi[2]), &neg(&roi[0])).map_err(err)?;

    let popref =
        Baseline::PopRef(PopRefModel::fit(&study.train, BRACKET_WIDTH_YEARS).map_err(err)?);
    let mut pop: [Vec<f64>; 2] = Default::default();
    for s in &study.test.subjects {
        let slot = match s.diagnosis {
            Diagnosis::CN => 0,
            Diagnosis::AD => 1,
            Diagnosis::MCI => continue,
        };
        let scored = popref.score(s, &study.parc).map_err(err)?;
        pop[slot].push(
            -popref
                .roi_mean(&scored, &study.parc, &STUDY_ROI)
                .map_err(err)?,
        );
    }
    let auc_pop = auc_two_groups(&pop[1], &pop[0]).map_err(err)?;

    let ordinal: Vec<f64> = study
        .test
        .subjects
        .iter()
        .map(|s| f64::from(s.diagnosis.ordinal()))
        .collect();
    let z: Vec<f64> = study.maps.iter().map(|m| m.roi_means["ad_roi"]).collect();
    let rho = spearman(&ordinal, &z).map_err(err)?;
    Ok(outcome(
        auc_scsr >= MIN_AUC && auc_scsr >= auc_pop && rho <= MAX_SPEARMAN,
        format!("AUC SCSR {auc_scsr:.3}, Pop-Ref {auc_pop:.3}, Spearman {rho:.3}"),
    ))
}

fn sweep_shape(study: &Study) -> Check {
    let roi = study.parc.roi_vertices("ad_roi").map_err(err)?;
    let base = ScsrConfig {
        iterations: STUDY_M,
        ..Default::default()
    };
    let rows = sweep(
        &study.model,
        Some(&study.parc),
        &base,
        &study.val,
        &study.test,
        &roi,
        &SWEEP_S,
        &SWEEP_Q,
    )
    .map_err(err)?;
    let at = |s: f64, q: f64| {
        rows.iter()
            .find(|r| r.sampling_rate == s && r.centile == q)
            .unwrap()
    };
    let mut problems = Vec::new();
    for &q in &SWEEP_Q {
        let (lo, hi) = (at(SWEEP_S[0], q), at(SWEEP_S[SWEEP_S.len() - 1], q));
        if lo.rec_error_cn <= hi.rec_error_cn {
            problems.push(format!(
                "CN q={q}: {:.5} <= {:.5}",
                lo.rec_error_cn, hi.rec_error_cn
            ));
        }
        if lo.rec_error_ad <= hi.rec_error_ad {
            problems.push(format!(
                "AD q={q}: {:.5} <= {:.5}",
                lo.rec_error_ad, hi.rec_error_ad
            ));
        }
    }
    for r in &rows {
        if r.rec_error_ad <= r.rec_error_cn {
            problems.push(format!(
                "s={} q={}: AD {:.5} <= CN {:.5}",
                r.sampling_rate, r.centile, r.rec_error_ad, r.rec_error_cn
            ));
        }
    }
    let table: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "s={} q={} CN {:.5} AD {:.5}",
                r.sampling_rate, r.centile, r.rec_error_cn, r.rec_error_ad
            )
        })
        .collect();
    Ok(outcome(
        problems.is_empty(),
        format!(
            "{}{}",
            table.join(" | "),
            if problems.is_empty() {
                String::new()
            } else {
                format!(" || violations: {}", problems.join("; "))
            }
        ),
    ))
}

fn covariates(n: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u8>) {
    let ages = (0..n).map(|_| rng.random_range(50.0..80.0)).collect();
    let sexes = (0..n).map(|_| rng.random_range(0..2u8)).collect();
    (ages, sexes)
}

fn baseline_recovery() -> Check {
    let truth = GamlssCoefficients {
        alpha: [0.9, 0.0, 0.0, 0.02],
        beta: [-2.0, 0.0, 0.0, 0.0],
        gamma0: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (ages, sexes) = covariates(5000, &mut rng);
    let normal = Normal::new(0.0, 1.0).map_err(err)?;
    let y: Vec<f64> = ages
        .iter()
        .zip(&sexes)
        .map(|(&a, &s)| truth.mu(a, s) + truth.sigma(a, s) * normal.sample(&mut rng))
        .collect();
    let fit = fit_gamlss_parcel(&y, &ages, &sexes, &GamlssFitOptions::default()).map_err(err)?;
    let gamlss_err = fit
        .alpha
        .iter()
        .chain(&fit.beta)
        .zip(truth.alpha.iter().chain(&truth.beta))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 2000;
    let (ages, sexes) = covariates(n, &mut rng);
    let noise = Normal::new(0.0, 0.1).map_err(err)?;
    let values = Array2::from_shape_fn((n, 1), |(i, _)| {
        2.8 - 0.0003 * (ages[i] - 50.0).powi(2)
            + 0.05 * f64::from(sexes[i])
            + noise.sample(&mut rng)
    });
    let gam = GamModel::fit(&ParcelData {
        ages,
        sexes,
        values,
    })
    .map_err(err)?;
    let sex_err = (gam.sex_effect(0) - 0.05).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 500;
    let (ages, sexes) = covariates(n, &mut rng);
    let placeholder = ParcelData {
        ages: ages.clone(),
        sexes: sexes.clone(),
        values: Array2::from_elem((n, 1), 1.0),
    };
    let layout = BlrModel::fit(&placeholder, BLR_PRIOR_PRECISION).map_err(err)?;
    let w: Vec<f64> = (0..layout.n_features())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let truth_at = |a: f64, s: u8| {
        layout
            .design_row(a, s)
            .iter()
            .zip(&w)
            .map(|(x, w)| x * w)
            .sum::<f64>()
            + 2.5
    };
    let values = Array2::from_shape_fn((n, 1), |(i, _)| truth_at(ages[i], sexes[i]));
    let blr = BlrModel::fit(
        &ParcelData {
            ages: ages.clone(),
            sexes: sexes.clone(),
            values: values.clone(),
        },
        BLR_PRIOR_PRECISION,
    )
    .map_err(err)?;
    let blr_err = (0..n)
        .map(|i| (blr.predictive(0, ages[i], sexes[i]).0 - values[[i, 0]]).abs())
        .fold(0.0, f64::max);

    Ok(outcome(
        gamlss_err <= GAMLSS_TOL && sex_err <= GAM_SEX_TOL && blr_err < BLR_RESIDUAL_TOL,
        format!("GAMLSS max coefficient error {gamlss_err:.4}, GAM sex effect error {sex_err:.4}, BLR max residual {blr_err:.1e}"),
    ))
}

/// Φ(z) from the all-positive series
/// erf(x) = 2/√π · e^(−x²) · Σ 2ⁿ x^(2n+1) / (1·3·…·(2n+1)).
fn phi_series(z: f64) -> f64 {
    let x = z.abs() / std::f64::consts::SQRT_2;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term > sum * 1e-18 {
        n += 1.0;
        term *= 2.0 * x * x / (2.0 * n + 1.0);
        sum += term;
    }
    let erf = 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum;
    if z >= 0.0 {
        0.5 * (1.0 + erf)
    } else {
        0.5 * (1.0 - erf)
    }
}

fn centile_function() -> Check {
    let worst = (-600..=600)
        .map(|i| {
            let z = f64::from(i) * 0.01;
            (z_to_centile(z) - phi_series(z)).abs()
        })
        .fold(0.0, f64::max);
    Ok(outcome(
        worst < PHI_TOL,
        format!("1201 grid points, max error {worst:.1e}"),
    ))
}

fn sign_property(study: &Study) -> Check {
    let cortex = by_group(study, |m| m.roi_means[CORTEX_ROI]);
    let mean = cortex[0].iter().sum::<f64>() / cortex[0].len() as f64;
    Ok(outcome(
        mean < 0.0,
        format!(
            "mean cortex z of {} healthy subjects {mean:.3}",
            cortex[0].len()
        ),
    ))
}

/// Prints the criterion line; returns whether the result is as expected.
fn report(id: &str, name: &str, result: Check) -> bool {
    let (pass, detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let known = KNOWN_FAILURES.contains(&id);
    let status = match (pass, known) {
        (true, false) => "PASS",
        (true, true) => "PASS (listed as known failure)",
        (false, false) => "FAIL",
        (false, true) => "FAIL (known)",
    };
    println!("{id:<5} {name:<28} {status}  {detail}");
    pass != known
}

fn main() -> ExitCode {
    let mut as_expected = true;
    as_expected &= report("AC1", "geometry", geometry());
    as_expected &= report("AC2", "gradient fidelity", gradient());
    as_expected &= report("AC3", "centile oracle", centile_oracle());
    as_expected &= report("AC4", "exact-test oracles", exact_tests());
    as_expected &= report("AC5", "AUC oracle", auc_oracle());
    as_expected &= report("AC6", "determinism", determinism());

    let study = build_study();
    if let Ok(s) = &study {
        println!(
            "      study: {} train, {} val, {} test, best epoch {} of {STUDY_EPOCHS}, {:.0?}",
            s.train.len(),
            s.val.len(),
            s.test.len(),
            s.best_epoch,
            s.elapsed
        );
    }
    let with_study = |f: fn(&Study) -> Check| match &study {
        Ok(s) => f(s),
        Err(e) => Err(format!("study setup failed: {e}")),
    };
    as_expected &= report(
        "AC7",
        "healthy-reference ordering",
        with_study(healthy_reference),
    );
    as_expected &= report("AC8", "discrimination", with_study(discrimination));
    as_expected &= report("AC9", "sweep shape", with_study(sweep_shape));
    as_expected &= report("AC10", "baseline recovery", baseline_recovery());
    as_expected &= report("AC11", "z to centile", centile_function());
    as_expected &= report("AC12", "q=0.95 sign property", with_study(sign_property));

    if as_expected {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
