//! Group comparisons of per-subject ROI scores.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use scsr::cohort::{Cohort, Diagnosis};
use scsr::stats;
use scsr::{Result, ScsrError};

pub const REPORT_HEADER: &str = "metric,dataset,groups,n_a,n_b,value,p_value,p_bonferroni,p_bh";

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub metric: &'static str,
    pub dataset: String,
    pub groups: String,
    pub n_a: usize,
    pub n_b: usize,
    pub value: f64,
    pub p_value: Option<f64>,
    pub p_bonferroni: Option<f64>,
    pub p_bh: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub dataset: String,
    pub roi: String,
    pub n_per_group: BTreeMap<Diagnosis, usize>,
    pub rows: Vec<ReportRow>,
}

pub struct EvalOptions {
    pub n_perm: usize,
    pub seed: u64,
}

/// Scores are deviation Z (lower = more atrophic). Each pair is reported
/// with the more advanced stage as group `a`; AUC uses `−z` so that a
/// higher score means more diseased.
pub fn evaluate(
    dataset: &str,
    roi: &str,
    scores: &[(String, f64)],
    labels: &Cohort,
    opts: &EvalOptions,
) -> Result<Report> {
    let mut groups: BTreeMap<Diagnosis, Vec<f64>> = BTreeMap::new();
    let mut ordinal = Vec::with_capacity(scores.len());
    let mut z = Vec::with_capacity(scores.len());
    let mut diagnoses = Vec::with_capacity(scores.len());
    for (id, score) in scores {
        let subject = labels.find(id).ok_or_else(|| {
            ScsrError::Config(format!("subject {id:?} has no label in the cohort"))
        })?;
        groups.entry(subject.diagnosis).or_default().push(*score);
        ordinal.push(f64::from(subject.diagnosis.ordinal()));
        z.push(*score);
        diagnoses.push(subject.diagnosis);
    }
    if groups.len() < 2 {
        return Err(ScsrError::InsufficientData(
            "evaluation needs at least two diagnostic groups".into(),
        ));
    }

    let mut rows = Vec::new();
    let row = |metric, groups: String, n_a, n_b, value, p_value| ReportRow {
        metric,
        dataset: dataset.to_string(),
        groups,
        n_a,
        n_b,
        value,
        p_value,
        p_bonferroni: None,
        p_bh: None,
    };
    let present: Vec<Diagnosis> = groups.keys().copied().collect();
    for (i, &lo) in present.iter().enumerate() {
        for &hi in &present[i + 1..] {
            let (a, b) = (&groups[&hi], &groups[&lo]);
            let name = format!("{hi}-vs-{lo}");
            let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
            let auc = stats::auc_two_groups(&neg(a), &neg(b))?;
            rows.push(row("auc", name.clone(), a.len(), b.len(), auc, None));
            let rs = stats::wilcoxon_rank_sum(a, b)?;
            rows.push(row(
                "rank_sum_u",
                name.clone(),
                a.len(),
                b.len(),
                rs.statistic,
                Some(rs.p_value),
            ));
            let perm = stats::permutation_median_diff(a, b, opts.n_perm, opts.seed)?;
            rows.push(row(
                "median_diff",
                name,
                a.len(),
                b.len(),
                perm.statistic,
                Some(perm.p_value),
            ));
        }
    }
    let n = scores.len();
    rows.push(row(
        "multiclass_auc",
        "all".into(),
        n,
        0,
        stats::multiclass_auc(&z.iter().map(|x| -x).collect::<Vec<_>>(), &diagnoses)?,
        None,
    ));
    rows.push(row(
        "spearman",
        "all".into(),
        n,
        0,
        stats::spearman(&ordinal, &z)?,
        None,
    ));

    let tested: Vec<usize> = (0..rows.len())
        .filter(|&i| rows[i].p_value.is_some())
        .collect();
    let ps: Vec<f64> = tested.iter().map(|&i| rows[i].p_value.unwrap()).collect();
    let bonf = stats::bonferroni(&ps)?;
    let bh = stats::benjamini_hochberg(&ps)?;
    for (j, &i) in tested.iter().enumerate() {
        rows[i].p_bonferroni = Some(bonf[j]);
        rows[i].p_bh = Some(bh[j]);
    }

    Ok(Report {
        dataset: dataset.to_string(),
        roi: roi.to_string(),
        n_per_group: groups.iter().map(|(d, v)| (*d, v.len())).collect(),
        rows,
    })
}

pub fn to_csv(report: &Report) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{:.6},{},{},{}",
            r.metric,
            r.dataset,
            r.groups,
            r.n_a,
            r.n_b,
            r.value,
            opt(r.p_value),
            opt(r.p_bonferroni),
            opt(r.p_bh)
        )
        .unwrap();
    }
    out
}
