//! Local estimates of the network size and the source count from the times at
//! which random-walk packets visit a node.
//!
//! For one walk the mean return time to `u` is `mu * n / d(u)`; for `k`
//! interleaved walks the mean gap between consecutive arrivals of any packet
//! is that divided by `k`. A node therefore takes its mean return time as its
//! estimate of `n` and the ratio of the two means as its estimate of `k`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Visit times per source id, in rounds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VisitLog {
    visits: BTreeMap<usize, Vec<u64>>,
}

impl VisitLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a visit. Times for one source must be strictly increasing.
    pub fn record(&mut self, source: usize, time: u64) -> Result<()> {
        let times = self.visits.entry(source).or_default();
        if let Some(&last) = times.last() {
            if time <= last {
                return Err(Error::param(format!(
                    "visit times for source {source} must increase ({time} after {last})"
                )));
            }
        }
        times.push(time);
        Ok(())
    }

    pub fn visits(&self, source: usize) -> &[u64] {
        self.visits.get(&source).map_or(&[], Vec::as_slice)
    }

    pub fn visit_count(&self, source: usize) -> usize {
        self.visits(source).len()
    }

    /// Number of distinct sources seen.
    pub fn sources_seen(&self) -> usize {
        self.visits.len()
    }

    pub fn total_visits(&self) -> usize {
        self.visits.values().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[u64])> {
        self.visits.iter().map(|(&s, t)| (s, t.as_slice()))
    }
}

impl FromIterator<(usize, Vec<u64>)> for VisitLog {
    fn from_iter<I: IntoIterator<Item = (usize, Vec<u64>)>>(iter: I) -> Self {
        VisitLog {
            visits: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimates {
    pub mean_intervisit: f64,
    pub mean_interpacket: f64,
    pub n_hat: f64,
    pub k_hat: usize,
    pub sources_seen: usize,
}

/// Mean gap between consecutive recorded visits of `source`:
/// `(t_last - t_first) / (J - 1)`.
pub fn per_source_intervisit(log: &VisitLog, source: usize) -> Result<f64> {
    let times = log.visits(source);
    match times {
        [first, .., last] => Ok((last - first) as f64 / (times.len() - 1) as f64),
        _ => Err(Error::InsufficientVisits {
            source_id: source,
            visits: times.len(),
        }),
    }
}

pub fn compute_estimates(log: &VisitLog) -> Result<Estimates> {
    let intervisits: Vec<f64> = log
        .iter()
        .filter(|(_, t)| t.len() >= 2)
        .map(|(s, _)| per_source_intervisit(log, s))
        .collect::<Result<_>>()?;
    if intervisits.is_empty() {
        return Err(Error::NoQualifyingSource);
    }
    let mean_intervisit = intervisits.iter().sum::<f64>() / intervisits.len() as f64;

    // Span of all arrivals divided by the number of gaps between them.
    let first = log.iter().filter_map(|(_, t)| t.first()).min().copied();
    let last = log.iter().filter_map(|(_, t)| t.last()).max().copied();
    let (first, last) = first.zip(last).ok_or(Error::NoQualifyingSource)?;
    let total = log.total_visits();
    let mean_interpacket = (last - first) as f64 / (total - 1) as f64;

    let k_hat = (mean_intervisit / mean_interpacket).round().max(1.0) as usize;
    Ok(Estimates {
        mean_intervisit,
        mean_interpacket,
        n_hat: mean_intervisit,
        k_hat,
        sources_seen: log.sources_seen(),
    })
}
