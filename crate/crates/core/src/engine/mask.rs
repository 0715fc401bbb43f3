use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScsrError};
use crate::geometry::Parcellation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplingStrategy {
    #[default]
    Vertex,
    Parcel,
}

impl std::str::FromStr for SamplingStrategy {
    type Err = ScsrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vertex" => Ok(Self::Vertex),
            "parcel" => Ok(Self::Parcel),
            other => Err(ScsrError::Config(format!(
                "unknown sampling strategy {other:?}"
            ))),
        }
    }
}

/// Which vertices are revealed to the model as predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    pub sampled: Vec<bool>,
    pub rate: f64,
    pub strategy: SamplingStrategy,
}

impl SamplingMask {
    /// Mask from an explicit list of sampled positions.
    pub fn from_indices(p: usize, sampled: &[usize]) -> Self {
        let mut mask = vec![false; p];
        for &i in sampled {
            mask[i] = true;
        }
        Self {
            sampled: mask,
            rate: sampled.len() as f64 / p as f64,
            strategy: SamplingStrategy::Vertex,
        }
    }

    pub fn len(&self) -> usize {
        self.sampled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sampled.is_empty()
    }

    pub fn n_sampled(&self) -> usize {
        self.sampled.iter().filter(|&&s| s).count()
    }
}

/// Precomputed eligibility for repeated mask draws.
#[derive(Debug, Clone)]
pub struct MaskSampler {
    p: usize,
    rate: f64,
    strategy: SamplingStrategy,
    eligible: Vec<usize>,
    /// Vertex lists of the eligible parcels (parcel strategy only).
    parcels: Vec<Vec<usize>>,
    vertex_count: usize,
    excluded_roi: Option<String>,
}

/// Round half away from zero.
fn round_half_away(x: f64) -> usize {
    x.round() as usize
}

impl MaskSampler {
    pub fn vertex(p: usize, rate: f64) -> Result<Self> {
        Self::new(p, rate, SamplingStrategy::Vertex, None, None)
    }

    pub fn new(
        p: usize,
        rate: f64,
        strategy: SamplingStrategy,
        parcellation: Option<&Parcellation>,
        excluded_roi: Option<&str>,
    ) -> Result<Self> {
        if !(rate > 0.0 && rate < 1.0) {
            return Err(ScsrError::Config(format!(
                "sampling rate {rate} not in (0, 1)"
            )));
        }
        if let Some(parc) = parcellation {
            if parc.n_vertices() != p {
                return Err(ScsrError::Shape {
                    context: "parcellation vertex count",
                    expected: p,
                    actual: parc.n_vertices(),
                });
            }
        }
        let excluded = match excluded_roi {
            Some(name) => {
                let parc = parcellation.ok_or_else(|| {
                    ScsrError::Config("ROI exclusion requires a parcellation".into())
                })?;
                parc.roi_mask(name)?
            }
            None => vec![false; p],
        };
        let eligible: Vec<usize> = (0..p).filter(|&v| !excluded[v]).collect();
        let pe = eligible.len();
        if pe == 0 {
            return Err(ScsrError::DegenerateMask("no eligible vertices".into()));
        }

        let (parcels, vertex_count) = match strategy {
            SamplingStrategy::Vertex => {
                if round_half_away(rate * pe as f64) >= pe {
                    return Err(ScsrError::DegenerateMask(format!(
                        "rate {rate} of {pe} eligible vertices leaves nothing to reconstruct"
                    )));
                }
                (Vec::new(), round_half_away(rate * pe as f64).max(1))
            }
            SamplingStrategy::Parcel => {
                let parc = parcellation.ok_or_else(|| {
                    ScsrError::Config("parcel sampling requires a parcellation".into())
                })?;
                let mut lists = vec![Vec::new(); parc.k];
                for &v in &eligible {
                    lists[parc.labels[v]].push(v);
                }
                lists.retain(|l| !l.is_empty());
                if lists.len() < 2 {
                    return Err(ScsrError::DegenerateMask(
                        "parcel sampling needs at least two eligible parcels".into(),
                    ));
                }
                (lists, 0)
            }
        };

        Ok(Self {
            p,
            rate,
            strategy,
            eligible,
            parcels,
            vertex_count,
            excluded_roi: excluded_roi.map(str::to_string),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn strategy(&self) -> SamplingStrategy {
        self.strategy
    }

    pub fn excluded_roi(&self) -> Option<&str> {
        self.excluded_roi.as_deref()
    }

    pub fn n_eligible(&self) -> usize {
        self.eligible.len()
    }

    /// Vertex strategy: uniform sample without replacement among eligible
    /// vertices. Parcel strategy: whole parcels in random order until the
    /// sampled vertex count first reaches `rate · p_eligible`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SamplingMask> {
        let mut sampled = vec![false; self.p];
        match self.strategy {
            SamplingStrategy::Vertex => {
                for i in index::sample(rng, self.eligible.len(), self.vertex_count) {
                    sampled[self.eligible[i]] = true;
                }
            }
            SamplingStrategy::Parcel => {
                let target = self.rate * self.eligible.len() as f64;
                let mut order: Vec<usize> = (0..self.parcels.len()).collect();
                order.shuffle(rng);
                let mut count = 0usize;
                for i in order {
                    if count as f64 >= target {
                        break;
                    }
                    for &v in &self.parcels[i] {
                        sampled[v] = true;
                    }
                    count += self.parcels[i].len();
                }
                if sampled.iter().all(|&s| s) {
                    return Err(ScsrError::DegenerateMask(
                        "parcel draw sampled every vertex".into(),
                    ));
                }
            }
        }
        Ok(SamplingMask {
            sampled,
            rate: self.rate,
            strategy: self.strategy,
        })
    }
}
