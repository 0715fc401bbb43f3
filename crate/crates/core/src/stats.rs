//! Evaluation statistics: ROC AUC, Spearman correlation, Wilcoxon tests,
//! multiple-comparison corrections, a permutation test and error metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Diagnosis;
use crate::error::{Result, ScsrError};
use crate::geometry::Parcellation;

/// Group sizes up to this total use exact null distributions.
pub const EXACT_MAX_N: usize = 12;

/// Permutations per independently seeded block.
const PERMUTATION_BLOCK: usize = 1000;

fn check_finite(what: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(ScsrError::UndefinedMetric(format!(
            "{what} contains non-finite values"
        )));
    }
    Ok(())
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn midranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && xs[idx[j]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Sizes of tie groups.
fn tie_sizes(xs: &[f64]) -> Vec<usize> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .chunk_by(|a, b| a == b)
        .map(<[f64]>::len)
        .filter(|&t| t > 1)
        .collect()
}

/// `P(positive > negative) + ½·P(tie)` over all cross pairs.
pub fn auc_two_groups(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(ScsrError::UndefinedMetric("AUC needs both classes".into()));
    }
    check_finite("scores", positive)?;
    check_finite("scores", negative)?;
    let pooled: Vec<f64> = positive.iter().chain(negative).copied().collect();
    let ranks = midranks(&pooled);
    let (np, nn) = (positive.len() as f64, negative.len() as f64);
    let rank_sum: f64 = ranks[..positive.len()].iter().sum();
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(ScsrError::Shape {
            context: "AUC labels",
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    auc_two_groups(&pos, &neg)
}

/// Mean of the pairwise AUCs over the diagnosis pairs present, the more
/// advanced diagnosis taken as positive.
pub fn multiclass_auc(scores: &[f64], labels: &[Diagnosis]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(ScsrError::Shape {
            context: "AUC labels",
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let groups: Vec<Vec<f64>> = Diagnosis::ALL
        .iter()
        .map(|d| {
            scores
                .iter()
                .zip(labels)
                .filter(|(_, l)| *l == d)
                .map(|(&s, _)| s)
                .collect()
        })
        .collect();
    let mut aucs = Vec::new();
    for lo in 0..groups.len() {
        for hi in lo + 1..groups.len() {
            if !groups[lo].is_empty() && !groups[hi].is_empty() {
                aucs.push(auc_two_groups(&groups[hi], &groups[lo])?);
            }
        }
    }
    if aucs.is_empty() {
        return Err(ScsrError::UndefinedMetric(
            "multiclass AUC needs at least two classes".into(),
        ));
    }
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(ScsrError::UndefinedMetric(
            "correlation of a constant input".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of midranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(ScsrError::Shape {
            context: "spearman inputs",
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(ScsrError::UndefinedMetric(
            "spearman needs at least 3 pairs".into(),
        ));
    }
    check_finite("x", x)?;
    check_finite("y", y)?;
    pearson(&midranks(x), &midranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
}

fn normal_two_sided(deviation: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return 1.0;
    }
    let z = ((deviation.abs() - 0.5) / sd).max(0.0);
    libm::erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Two-sided p from a discrete null given as `(value, count)` pairs.
fn exact_two_sided(null: &[(i64, f64)], observed: i64) -> f64 {
    let total: f64 = null.iter().map(|(_, c)| c).sum();
    let le: f64 = null
        .iter()
        .filter(|(v, _)| *v <= observed)
        .map(|(_, c)| c)
        .sum();
    let ge: f64 = null
        .iter()
        .filter(|(v, _)| *v >= observed)
        .map(|(_, c)| c)
        .sum();
    (2.0 * le.min(ge) / total).min(1.0)
}

/// Counts of subset sums of `values` restricted to subsets of size `k`.
fn subset_sum_counts(values: &[i64], k: usize) -> Vec<(i64, f64)> {
    let max: i64 = values.iter().sum();
    let width = max as usize + 1;
    // counts[j][s]: subsets of size j with sum s
    let mut counts = vec![vec![0.0f64; width]; k + 1];
    counts[0][0] = 1.0;
    for &v in values {
        for j in (1..=k).rev() {
            let (prev, cur) = counts.split_at_mut(j);
            for s in (v as usize..width).rev() {
                cur[0][s] += prev[j - 1][s - v as usize];
            }
        }
    }
    counts[k]
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0.0)
        .map(|(s, &c)| (s as i64, c))
        .collect()
}

/// Mann-Whitney U of `a` and its two-sided p-value.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(ScsrError::UndefinedMetric(
            "rank-sum test needs two non-empty groups".into(),
        ));
    }
    check_finite("a", a)?;
    check_finite("b", b)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let rank_sum: f64 = ranks[..na].iter().sum();
    let u = rank_sum - (na * (na + 1)) as f64 / 2.0;

    if n <= EXACT_MAX_N {
        let doubled: Vec<i64> = ranks.iter().map(|r| (2.0 * r).round() as i64).collect();
        let null = subset_sum_counts(&doubled, na);
        let observed = (2.0 * rank_sum).round() as i64;
        return Ok(TestResult {
            statistic: u,
            p_value: exact_two_sided(&null, observed),
            exact: true,
        });
    }
    let (naf, nbf, nf) = (na as f64, nb as f64, n as f64);
    let ties: f64 = tie_sizes(&pooled)
        .iter()
        .map(|&t| (t * t * t - t) as f64)
        .sum();
    let var = naf * nbf / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    Ok(TestResult {
        statistic: u,
        p_value: normal_two_sided(u - naf * nbf / 2.0, var.sqrt()),
        exact: false,
    })
}

/// Wilcoxon signed-rank test on paired differences; zeros are dropped and
/// the statistic is the sum of ranks of positive differences.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<TestResult> {
    check_finite("differences", diffs)?;
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(ScsrError::UndefinedMetric(
            "all paired differences are zero".into(),
        ));
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w: f64 = ranks
        .iter()
        .zip(&nonzero)
        .filter(|(_, &d)| d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let n = nonzero.len();

    if n <= EXACT_MAX_N {
        let doubled: Vec<i64> = ranks.iter().map(|r| (2.0 * r).round() as i64).collect();
        let null: Vec<(i64, f64)> = (0..=n).flat_map(|k| subset_sum_counts(&doubled, k)).fold(
            Vec::new(),
            |mut acc: Vec<(i64, f64)>, (s, c)| {
                match acc.iter_mut().find(|(v, _)| *v == s) {
                    Some(e) => e.1 += c,
                    None => acc.push((s, c)),
                }
                acc
            },
        );
        return Ok(TestResult {
            statistic: w,
            p_value: exact_two_sided(&null, (2.0 * w).round() as i64),
            exact: true,
        });
    }
    let nf = n as f64;
    let ties: f64 = tie_sizes(&abs)
        .iter()
        .map(|&t| (t * t * t - t) as f64)
        .sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    Ok(TestResult {
        statistic: w,
        p_value: normal_two_sided(w - nf * (nf + 1.0) / 4.0, var.sqrt()),
        exact: false,
    })
}

fn check_p_values(ps: &[f64]) -> Result<()> {
    match ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(p) => Err(ScsrError::Bounds {
            what: "p-value",
            detail: format!("{p} not in [0, 1]"),
        }),
        None => Ok(()),
    }
}

pub fn bonferroni(ps: &[f64]) -> Result<Vec<f64>> {
    check_p_values(ps)?;
    let k = ps.len() as f64;
    Ok(ps.iter().map(|p| (p * k).min(1.0)).collect())
}

/// Benjamini-Hochberg step-up adjusted p-values.
pub fn benjamini_hochberg(ps: &[f64]) -> Result<Vec<f64>> {
    check_p_values(ps)?;
    let k = ps.len();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| ps[a].total_cmp(&ps[b]));
    let mut out = vec![0.0; k];
    let mut running = 1.0f64;
    for (rank, &i) in idx.iter().enumerate().rev() {
        running = running.min(ps[i] * k as f64 / (rank + 1) as f64);
        out[i] = running;
    }
    Ok(out)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    })
}

/// `median(a) − median(b)` with an add-one two-sided permutation p-value.
/// Permutations run in fixed-size blocks, each seeded from `seed` and its
/// block index, so the result does not depend on the thread count.
pub fn permutation_median_diff(
    a: &[f64],
    b: &[f64],
    n_perm: usize,
    seed: u64,
) -> Result<TestResult> {
    let (Some(ma), Some(mb)) = (median(a), median(b)) else {
        return Err(ScsrError::UndefinedMetric(
            "permutation test needs two non-empty groups".into(),
        ));
    };
    check_finite("a", a)?;
    check_finite("b", b)?;
    let observed = ma - mb;
    let threshold = observed.abs() * (1.0 - 1e-12);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let blocks = n_perm.div_ceil(PERMUTATION_BLOCK);
    let extreme: usize = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            let mut buf = pooled.clone();
            let count = PERMUTATION_BLOCK.min(n_perm - block * PERMUTATION_BLOCK);
            (0..count)
                .filter(|_| {
                    buf.shuffle(&mut rng);
                    let (pa, pb) = buf.split_at(a.len());
                    let stat = median(pa).unwrap() - median(pb).unwrap();
                    stat.abs() >= threshold
                })
                .count()
        })
        .sum();
    Ok(TestResult {
        statistic: observed,
        p_value: (1 + extreme) as f64 / (n_perm + 1) as f64,
        exact: false,
    })
}

/// Standard normal CDF.
pub fn z_to_centile(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMetric {
    Mse,
    Mae,
}

#[derive(Debug, Clone, Copy)]
pub enum ErrorLevel<'a> {
    Vertex,
    /// Errors between parcel means.
    Parcel(&'a Parcellation),
}

pub fn reconstruction_error(
    y: &[f64],
    r: &[f64],
    level: ErrorLevel<'_>,
    metric: ErrorMetric,
) -> Result<f64> {
    if y.len() != r.len() {
        return Err(ScsrError::Shape {
            context: "reconstruction error inputs",
            expected: y.len(),
            actual: r.len(),
        });
    }
    let (y, r) = match level {
        ErrorLevel::Vertex => (y.to_vec(), r.to_vec()),
        ErrorLevel::Parcel(parc) => {
            if parc.n_vertices() != y.len() {
                return Err(ScsrError::Shape {
                    context: "parcellation vertex count",
                    expected: y.len(),
                    actual: parc.n_vertices(),
                });
            }
            (parc.parcel_means(y)?, parc.parcel_means(r)?)
        }
    };
    if y.is_empty() {
        return Err(ScsrError::UndefinedMetric(
            "reconstruction error of an empty map".into(),
        ));
    }
    let sum: f64 = y
        .iter()
        .zip(&r)
        .map(|(a, b)| match metric {
            ErrorMetric::Mse => (a - b) * (a - b),
            ErrorMetric::Mae => (a - b).abs(),
        })
        .sum();
    Ok(sum / y.len() as f64)
}

pub fn reconstruction_mse(y: &[f64], r: &[f64]) -> Result<f64> {
    reconstruction_error(y, r, ErrorLevel::Vertex, ErrorMetric::Mse)
}

pub fn reconstruction_mae(y: &[f64], r: &[f64]) -> Result<f64> {
    reconstruction_error(y, r, ErrorLevel::Vertex, ErrorMetric::Mae)
}
