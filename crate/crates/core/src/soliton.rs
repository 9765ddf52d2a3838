//! Ideal and Robust Soliton code-degree distributions, and the storage-degree
//! law induced by per-node Bernoulli acceptance.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionKind {
    Ideal,
    Robust { c0: f64, delta: f64 },
}

impl DistributionKind {
    /// Builds the distribution of this family for `k` sources.
    pub fn build(self, k: usize) -> Result<DegreeDistribution> {
        match self {
            DistributionKind::Ideal => ideal_soliton(k),
            DistributionKind::Robust { c0, delta } => robust_soliton(k, c0, delta),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DistributionKind::Ideal => "ideal",
            DistributionKind::Robust { .. } => "robust",
        }
    }
}

/// Probability mass over code degrees `1..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    kind: DistributionKind,
    /// `pmf[i - 1]` is the probability of degree `i`.
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl DegreeDistribution {
    /// Wraps arbitrary nonnegative weights over degrees `1..=k`; they are
    /// normalized to sum to one.
    pub fn from_weights(kind: DistributionKind, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::param("degree distribution needs at least one degree"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::param("degree weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::param("degree weights sum to zero"));
        }
        let pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        // Guard the last bucket against rounding so every uniform draw lands.
        *cdf.last_mut().unwrap() = 1.0;
        Ok(DegreeDistribution { kind, pmf, cdf })
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.pmf.len()
    }

    /// Probability of `degree`; zero outside `1..=k`.
    pub fn prob(&self, degree: usize) -> f64 {
        if degree == 0 {
            0.0
        } else {
            self.pmf.get(degree - 1).copied().unwrap_or(0.0)
        }
    }

    /// Weights for degrees `1..=k`.
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Inverse-CDF sampling.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) + 1
    }
}

pub fn ideal_soliton(k: usize) -> Result<DegreeDistribution> {
    if k == 0 {
        return Err(Error::param("ideal soliton needs k >= 1"));
    }
    let weights = (1..=k)
        .map(|i| {
            if i == 1 {
                1.0 / k as f64
            } else {
                1.0 / (i as f64 * (i as f64 - 1.0))
            }
        })
        .collect();
    DegreeDistribution::from_weights(DistributionKind::Ideal, weights)
}

/// Parameters shared by the robust soliton constructor and its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustShape {
    /// `c0 * sqrt(k) * ln(k / delta)`.
    pub r: f64,
    /// Degree carrying the extra spike, `round(k / R)` (at least 1).
    pub spike: usize,
    /// Unnormalized spike weight `R ln(R / delta) / k`.
    pub spike_weight: f64,
    /// Normalizer: sum over degrees of `tau(i) + ideal(i)`.
    pub beta: f64,
}

pub fn robust_shape(k: usize, c0: f64, delta: f64) -> Result<RobustShape> {
    let offending = || format!("(k={k}, c0={c0}, delta={delta})");
    if k < 2 {
        return Err(Error::param(format!("robust soliton needs k >= 2 {}", offending())));
    }
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(Error::param(format!("robust soliton needs c0 > 0 {}", offending())));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!(
            "robust soliton needs 0 < delta < 1 {}",
            offending()
        )));
    }
    let kf = k as f64;
    let r = c0 * kf.sqrt() * (kf / delta).ln();
    if r >= kf {
        return Err(Error::param(format!(
            "R = {r:.4} >= k puts the spike out of range {}",
            offending()
        )));
    }
    let spike_weight = r * (r / delta).ln() / kf;
    if spike_weight < 0.0 {
        return Err(Error::param(format!(
            "R = {r:.4} < delta gives a negative spike weight {}",
            offending()
        )));
    }
    let spike = ((kf / r).round() as usize).clamp(1, k);
    let tau_sum: f64 = (1..spike).map(|i| r / (i as f64 * kf)).sum::<f64>() + spike_weight;
    // The ideal soliton part sums to exactly one.
    Ok(RobustShape {
        r,
        spike,
        spike_weight,
        beta: tau_sum + 1.0,
    })
}

pub fn robust_soliton(k: usize, c0: f64, delta: f64) -> Result<DegreeDistribution> {
    let shape = robust_shape(k, c0, delta)?;
    let ideal = ideal_soliton(k)?;
    let kf = k as f64;
    let weights = (1..=k)
        .map(|i| {
            let tau = if i < shape.spike {
                shape.r / (i as f64 * kf)
            } else if i == shape.spike {
                shape.spike_weight
            } else {
                0.0
            };
            (tau + ideal.prob(i)) / shape.beta
        })
        .collect();
    DegreeDistribution::from_weights(DistributionKind::Robust { c0, delta }, weights)
}

/// Probability mass over storage degrees `0..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageDegreePmf {
    pmf: Vec<f64>,
}

impl StorageDegreePmf {
    pub fn k(&self) -> usize {
        self.pmf.len() - 1
    }

    /// `pmf()[i]` is the probability that a node ends up storing `i` sources.
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }
}

/// Storage-degree law when every node draws `d` from `dist` and then accepts
/// each of the `k` sources independently with probability `d / k`:
///
/// `P(i) = sum_d C(k, i) (d/k)^i (1 - d/k)^(k - i) dist(d)` for `i = 0..=k`.
pub fn storage_degree_pmf(dist: &DegreeDistribution) -> StorageDegreePmf {
    let k = dist.k();
    let mut pmf = vec![0.0; k + 1];
    for d in 1..=k {
        let weight = dist.prob(d);
        if weight == 0.0 {
            continue;
        }
        for (i, mass) in binomial_pmf(k, d as f64 / k as f64).into_iter().enumerate() {
            pmf[i] += weight * mass;
        }
    }
    StorageDegreePmf { pmf }
}

/// Binomial(`trials`, `p`) masses for `0..=trials`, evaluated in log space.
fn binomial_pmf(trials: usize, p: f64) -> Vec<f64> {
    if p >= 1.0 {
        let mut v = vec![0.0; trials + 1];
        v[trials] = 1.0;
        return v;
    }
    if p <= 0.0 {
        let mut v = vec![0.0; trials + 1];
        v[0] = 1.0;
        return v;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let mut ln_choose = 0.0;
    (0..=trials)
        .map(|i| {
            if i > 0 {
                ln_choose += ((trials - i + 1) as f64).ln() - (i as f64).ln();
            }
            (ln_choose + i as f64 * lp + (trials - i) as f64 * lq).exp()
        })
        .collect()
}
