use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Result, ScsrError};

const STD_FLOOR: f64 = 1e-6;

/// Age range `[lo, hi)` with its per-vertex mean and std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub n_subjects: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const BRACKET_WIDTH_YEARS: f64 = 5.0;

/// Age-bracket population reference at the vertex level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopRefModel {
    pub bracket_width: f64,
    /// Brackets in age order; the last one is closed on the right.
    pub brackets: Vec<Bracket>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopRefZ {
    pub z: Vec<f64>,
    pub bracket: usize,
    pub clamped: bool,
}

/// Bracket edges `lo, lo + w, …` starting at a multiple of `w` and covering
/// `max_age`.
fn bracket_edges(min_age: f64, max_age: f64, width: f64) -> Vec<f64> {
    let lo = (min_age / width).floor() * width;
    let count = (((max_age - lo) / width).ceil() as usize).max(1);
    (0..=count).map(|i| lo + i as f64 * width).collect()
}

fn bracket_index(edges: &[f64], age: f64) -> usize {
    let last = edges.len() - 2;
    (0..=last).find(|&b| age < edges[b + 1]).unwrap_or(last)
}

impl PopRefModel {
    pub fn fit(train: &Cohort, width_years: f64) -> Result<Self> {
        if !(width_years > 0.0) {
            return Err(ScsrError::Config(format!(
                "bracket width {width_years} must be positive"
            )));
        }
        if train.len() < 2 {
            return Err(ScsrError::InsufficientData(format!(
                "Pop-Ref needs at least 2 training subjects, got {}",
                train.len()
            )));
        }
        let ages: Vec<f64> = train.subjects.iter().map(|s| s.age).collect();
        let min = ages.iter().copied().fold(f64::INFINITY, f64::min);
        let max = ages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut edges = bracket_edges(min, max, width_years);

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); edges.len() - 1];
        for (i, &a) in ages.iter().enumerate() {
            members[bracket_index(&edges, a)].push(i);
        }
        // merge under-populated brackets into their right neighbor (left for the last)
        while members.len() > 1 {
            let Some(b) = members.iter().position(|m| m.len() < 2) else {
                break;
            };
            let (keep, drop) = if b + 1 < members.len() {
                (b + 1, b)
            } else {
                (b - 1, b)
            };
            let moved = std::mem::take(&mut members[drop]);
            members[keep].extend(moved);
            members.remove(drop);
            // removing bracket `drop` removes the edge it shares with `keep`
            edges.remove(if keep > drop { drop + 1 } else { drop });
        }

        let p = train.subjects[0].thickness.len();
        if let Some(s) = train.subjects.iter().find(|s| s.thickness.len() != p) {
            return Err(ScsrError::Shape {
                context: "subject thickness length",
                expected: p,
                actual: s.thickness.len(),
            });
        }
        let brackets = members
            .iter()
            .enumerate()
            .map(|(b, idx)| {
                let n = idx.len() as f64;
                let mut mean = vec![0.0; p];
                for &i in idx {
                    for (m, &t) in mean.iter_mut().zip(&train.subjects[i].thickness) {
                        *m += f64::from(t);
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; p];
                for &i in idx {
                    for ((v, &t), m) in var.iter_mut().zip(&train.subjects[i].thickness).zip(&mean)
                    {
                        *v += (f64::from(t) - m).powi(2);
                    }
                }
                Bracket {
                    lo: edges[b],
                    hi: edges[b + 1],
                    n_subjects: idx.len(),
                    mean,
                    std: var
                        .into_iter()
                        .map(|v| (v / n).sqrt().max(STD_FLOOR))
                        .collect(),
                }
            })
            .collect();
        Ok(Self {
            bracket_width: width_years,
            brackets,
        })
    }

    pub fn p(&self) -> usize {
        self.brackets.first().map_or(0, |b| b.mean.len())
    }

    /// Bracket for an age and whether the age had to be clamped into range.
    pub fn bracket_for(&self, age: f64) -> (usize, bool) {
        let first = &self.brackets[0];
        let last = self.brackets.len() - 1;
        if age < first.lo {
            return (0, true);
        }
        if age > self.brackets[last].hi {
            return (last, true);
        }
        let b = self
            .brackets
            .iter()
            .position(|b| age < b.hi)
            .unwrap_or(last);
        (b, false)
    }

    pub fn z_scores(&self, age: f64, thickness: &[f32]) -> Result<PopRefZ> {
        if thickness.len() != self.p() {
            return Err(ScsrError::Shape {
                context: "subject thickness length",
                expected: self.p(),
                actual: thickness.len(),
            });
        }
        let (bracket, clamped) = self.bracket_for(age);
        let b = &self.brackets[bracket];
        let z = thickness
            .iter()
            .zip(b.mean.iter().zip(&b.std))
            .map(|(&y, (m, s))| (f64::from(y) - m) / s)
            .collect();
        Ok(PopRefZ {
            z,
            bracket,
            clamped,
        })
    }
}
