//! Slice decoding-time models: the exponential model the MDP plans with, and
//! the empirical and truncated distributions used to drive simulations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::FrameType;

/// Probability that a slice of mean complexity `mean_cycles` finishes within
/// one slot at `frequency_hz`.
pub fn decode_prob(frequency_hz: f64, slot_duration: f64, mean_cycles: f64) -> Result<f64> {
    for (name, v) in [
        ("frequency", frequency_hz),
        ("slot duration", slot_duration),
        ("mean cycles", mean_cycles),
    ] {
        if v.is_nan() || v <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    Ok(-(-frequency_hz * slot_duration / mean_cycles).exp_m1())
}

/// Distribution of the number of slices (0 or 1) one processor finishes in a
/// slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeparturePmf {
    pub p0: f64,
    pub p1: f64,
}

pub fn departure_pmf(theta: f64, scheduled: bool) -> DeparturePmf {
    if scheduled {
        DeparturePmf {
            p0: 1.0 - theta,
            p1: theta,
        }
    } else {
        DeparturePmf { p0: 1.0, p1: 0.0 }
    }
}

/// Empirical cycle-count distribution with a right-continuous step CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument(
                "empirical distribution needs samples".into(),
            ));
        }
        if let Some(bad) = samples.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "sample {bad} is not a positive cycle count"
            )));
        }
        samples.sort_by(f64::total_cmp);
        Ok(EmpiricalDistribution { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.samples[0]
    }

    pub fn max(&self) -> f64 {
        self.samples[self.samples.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Fraction of samples `<= w`.
    pub fn cdf(&self, w: f64) -> f64 {
        self.samples.partition_point(|&s| s <= w) as f64 / self.samples.len() as f64
    }

    /// Probability that a slice with `cycles_done` cycles already executed
    /// finishes within the next slot at `frequency_hz`.
    pub fn conditional_decode_prob(
        &self,
        cycles_done: f64,
        frequency_hz: f64,
        slot_duration: f64,
    ) -> Result<f64> {
        let before = self.cdf(cycles_done);
        if before >= 1.0 {
            return Err(Error::SliceAlreadyDone(cycles_done));
        }
        let after = self.cdf(cycles_done + frequency_hz * slot_duration);
        Ok((after - before) / (1.0 - before))
    }
}

/// Empirical distributions split by frame type; types without samples are
/// absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmpiricalComplexity {
    pub per_type: [Option<EmpiricalDistribution>; 3],
}

impl EmpiricalComplexity {
    pub fn from_samples(samples: impl IntoIterator<Item = (FrameType, f64)>) -> Result<Self> {
        let mut by_type: [Vec<f64>; 3] = Default::default();
        for (t, w) in samples {
            by_type[t.index()].push(w);
        }
        let mut out = EmpiricalComplexity::default();
        for (i, v) in by_type.into_iter().enumerate() {
            if !v.is_empty() {
                out.per_type[i] = Some(EmpiricalDistribution::new(v)?);
            }
        }
        Ok(out)
    }

    pub fn get(&self, t: FrameType) -> Option<&EmpiricalDistribution> {
        self.per_type[t.index()].as_ref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComplexityKind {
    Exponential,
    /// Resampled from per-type empirical samples.
    Empirical,
    /// Exponential, rejection-sampled into `[lower·β, upper·β]`.
    Truncated {
        lower: f64,
        upper: f64,
    },
}

impl ComplexityKind {
    pub const DEFAULT_TRUNCATED: ComplexityKind = ComplexityKind::Truncated {
        lower: 0.25,
        upper: 4.0,
    };
}

/// Per-type mean slice complexity in cycles, indexed by [`FrameType::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityModel {
    pub mean_cycles: [f64; 3],
    pub kind: ComplexityKind,
    pub empirical: Option<EmpiricalComplexity>,
}

impl ComplexityModel {
    pub fn new(mean_cycles: [f64; 3], kind: ComplexityKind) -> Result<Self> {
        if let Some(b) = mean_cycles.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "mean complexity {b} must be positive"
            )));
        }
        if let ComplexityKind::Truncated { lower, upper } = kind {
            if !((0.0..1.0).contains(&lower) && upper > 1.0 && upper.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "truncation factors [{lower}, {upper}] must bracket the mean"
                )));
            }
        }
        Ok(ComplexityModel {
            mean_cycles,
            kind,
            empirical: None,
        })
    }

    /// Empirical model whose planning means are the per-type sample means.
    /// Types without samples keep the given fallback means.
    pub fn empirical(samples: EmpiricalComplexity, fallback_means: [f64; 3]) -> Result<Self> {
        let mut means = fallback_means;
        for t in FrameType::ALL {
            if let Some(d) = samples.get(t) {
                means[t.index()] = d.mean();
            }
        }
        let mut m = ComplexityModel::new(means, ComplexityKind::Empirical)?;
        m.empirical = Some(samples);
        Ok(m)
    }

    pub fn mean(&self, t: FrameType) -> f64 {
        self.mean_cycles[t.index()]
    }

    fn empirical_dist(&self, t: FrameType) -> Option<&EmpiricalDistribution> {
        self.empirical.as_ref().and_then(|e| e.get(t))
    }

    /// Sampling bounds for a type, if the kind is bounded.
    pub fn bounds(&self, t: FrameType) -> Option<(f64, f64)> {
        match self.kind {
            ComplexityKind::Exponential => None,
            ComplexityKind::Empirical => self.empirical_dist(t).map(|d| (d.min(), d.max())),
            ComplexityKind::Truncated { lower, upper } => {
                Some((lower * self.mean(t), upper * self.mean(t)))
            }
        }
    }
}

/// Independent generator for one slice, so that sampled complexities do not
/// depend on the order or number of draws elsewhere.
pub fn slice_rng(seed: u64, gop: u64, position: u32, slice: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((gop << 24) ^ ((position as u64) << 12) ^ slice as u64);
    rng
}

pub fn sample_complexity<R: Rng + ?Sized>(
    model: &ComplexityModel,
    frame_type: FrameType,
    rng: &mut R,
) -> f64 {
    if model.kind == ComplexityKind::Empirical {
        if let Some(d) = model.empirical_dist(frame_type) {
            return d.samples[rng.random_range(0..d.samples.len())];
        }
    }
    let beta = model.mean(frame_type);
    let exp = Exp::new(1.0 / beta).expect("positive mean");
    match model.bounds(frame_type) {
        None => exp.sample(rng),
        Some((lo, hi)) => loop {
            let w = exp.sample(rng);
            if (lo..=hi).contains(&w) {
                break w;
            }
        },
    }
}
