//! Successful-decoding probability by Monte Carlo querying of storage
//! snapshots, and the parameter sweep driving whole experiment grids.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiment::{realize, CellSpec};
use crate::ltcodec::{peel_decode, Payload};
use crate::seeding::{derive_seed, fnv1a, rng_from, Stream};
use crate::soliton::DistributionKind;
use crate::walksim::{Algorithm, StorageSnapshot};

pub const DEFAULT_TRIALS: usize = 200;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryPlan {
    pub h: usize,
    pub trials: usize,
    /// Decoding ratio `h / k`.
    pub eta: f64,
}

impl QueryPlan {
    pub fn new(h: usize, trials: usize, k: usize) -> Result<Self> {
        if h == 0 || trials == 0 || k == 0 {
            return Err(Error::param(format!(
                "query plan needs h, trials, k >= 1 (h={h}, trials={trials}, k={k})"
            )));
        }
        Ok(QueryPlan {
            h,
            trials,
            eta: h as f64 / k as f64,
        })
    }

    /// Query size for a decoding ratio: `h = round(eta * k)`, at least 1.
    pub fn for_ratio(eta: f64, k: usize, trials: usize) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::param(format!("decoding ratio must be positive, got {eta}")));
        }
        Self::new(query_size(eta, k), trials, k)
    }
}

pub fn query_size(eta: f64, k: usize) -> usize {
    ((eta * k as f64).round() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsEstimate {
    pub successes: usize,
    pub trials: usize,
    pub p_s: f64,
    /// Normal-approximation 95% half-width, `1.96 * sqrt(p (1 - p) / M)`.
    pub confidence_halfwidth: f64,
}

impl PsEstimate {
    pub fn from_counts(successes: usize, trials: usize) -> Self {
        let p = successes as f64 / trials as f64;
        PsEstimate {
            successes,
            trials,
            p_s: p,
            confidence_halfwidth: Z95 * (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }
}

/// Queries `plan.trials` uniformly random `h`-subsets of the snapshot and
/// counts the subsets from which every source is recovered bit-exact.
///
/// Trials run in parallel; each draws from its own stream derived from one
/// seed taken from `rng`, so the result does not depend on scheduling.
pub fn evaluate_ps<R: Rng + ?Sized>(
    snapshot: &StorageSnapshot,
    sources: &[Payload],
    plan: &QueryPlan,
    rng: &mut R,
) -> Result<PsEstimate> {
    let n = snapshot.node_count();
    if plan.h > n {
        return Err(Error::param(format!("cannot query h={} of n={n} nodes", plan.h)));
    }
    if sources.len() != snapshot.k {
        return Err(Error::param(format!(
            "snapshot has k={} sources, {} payloads given",
            snapshot.k,
            sources.len()
        )));
    }
    let base: u64 = rng.gen();
    let outcomes: Vec<bool> = (0..plan.trials)
        .into_par_iter()
        .map(|trial| {
            let mut trial_rng = rng_from(derive_seed(base, &[trial as u64]));
            let chosen = index::sample(&mut trial_rng, n, plan.h);
            let packets = chosen.iter().map(|u| &snapshot.packets[u]);
            peel_decode(packets, snapshot.k).map(|r| r.matches(sources))
        })
        .collect::<Result<_>>()?;
    let successes = outcomes.into_iter().filter(|&ok| ok).count();
    Ok(PsEstimate::from_counts(successes, plan.trials))
}

/// How many sources a grid point has.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceCount {
    Exact(usize),
    /// `k = round(fraction * n)`, at least 1.
    Fraction(f64),
}

impl SourceCount {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            SourceCount::Exact(k) => k,
            SourceCount::Fraction(f) => ((f * n as f64).round() as usize).max(1),
        }
    }
}

/// A full experiment grid. Every combination of the list-valued fields is
/// one grid point; each point is realized `seeds` times and queried at every
/// decoding ratio in `etas`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub algorithms: Vec<Algorithm>,
    pub ns: Vec<usize>,
    pub source_counts: Vec<SourceCount>,
    pub side_lengths: Vec<f64>,
    pub distributions: Vec<DistributionKind>,
    pub c1s: Vec<f64>,
    pub c2s: Vec<usize>,
    pub c3s: Vec<f64>,
    pub etas: Vec<f64>,
    pub trials: usize,
    pub seeds: usize,
    pub payload_len: usize,
    pub master_seed: u64,
    /// Also emit one row per seed in addition to the aggregated rows.
    pub per_seed_rows: bool,
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut cells = Vec::new();
        for &algorithm in &self.algorithms {
            for &n in &self.ns {
                for &count in &self.source_counts {
                    for &side_length in &self.side_lengths {
                        for &distribution in &self.distributions {
                            for &c1 in &self.c1s {
                                for &c2 in &self.c2s {
                                    for &c3 in &self.c3s {
                                        cells.push(CellSpec {
                                            algorithm,
                                            n,
                                            k: count.resolve(n),
                                            side_length,
                                            distribution,
                                            c1,
                                            c2,
                                            c3,
                                            payload_len: self.payload_len,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        cells
    }

    fn validate(&self) -> Result<()> {
        let empty = [
            ("algorithm", self.algorithms.is_empty()),
            ("n", self.ns.is_empty()),
            ("k", self.source_counts.is_empty()),
            ("L", self.side_lengths.is_empty()),
            ("distribution", self.distributions.is_empty()),
            ("c1", self.c1s.is_empty()),
            ("c2", self.c2s.is_empty()),
            ("c3", self.c3s.is_empty()),
            ("eta", self.etas.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("sweep grid has no values for `{name}`")));
        }
        if self.trials == 0 || self.seeds == 0 {
            return Err(Error::Config("sweep needs trials >= 1 and seeds >= 1".into()));
        }
        Ok(())
    }
}

/// Seed of realization `seed_index` of `cell`: the master seed folded with
/// the FNV-1a hash of the cell's canonical text and the seed index.
pub fn cell_seed(master: u64, cell: &CellSpec, seed_index: usize) -> u64 {
    derive_seed(master, &[fnv1a(cell.canonical().as_bytes()), seed_index as u64])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: CellSpec,
    pub eta: f64,
    pub h: usize,
    pub trials: usize,
    pub successes: usize,
    pub p_s: f64,
    pub ci95: f64,
    /// Seed index for per-seed rows, `all` for aggregated rows.
    pub seed_group: String,
    pub feasible: bool,
}

impl SweepRow {
    fn infeasible(cell: CellSpec, eta: f64, h: usize, seed_group: String) -> Self {
        SweepRow {
            cell,
            eta,
            h,
            trials: 0,
            successes: 0,
            p_s: f64::NAN,
            ci95: f64::NAN,
            seed_group,
            feasible: false,
        }
    }

    fn from_estimate(cell: CellSpec, eta: f64, h: usize, est: PsEstimate, seed_group: String) -> Self {
        SweepRow {
            cell,
            eta,
            h,
            trials: est.trials,
            successes: est.successes,
            p_s: est.p_s,
            ci95: est.confidence_halfwidth,
            seed_group,
            feasible: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn aggregated(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.seed_group == "all")
    }

    pub fn all_infeasible(&self) -> bool {
        self.rows.iter().all(|r| !r.feasible)
    }
}

/// Runs the grid. Realizations run in parallel; rows come out in grid order
/// (cell, then eta), with per-seed rows, when requested, right before their
/// aggregated row.
pub fn sweep(grid: &SweepGrid) -> Result<SweepTable> {
    grid.validate()?;
    let cells = grid.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..grid.seeds).map(move |s| (c, s)))
        .collect();

    // Per job: one estimate per eta, or None when the cell is infeasible.
    let results: Vec<Option<Vec<Option<PsEstimate>>>> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let cell = &cells[c];
            if cell.k == 0 || cell.k > cell.n {
                return Ok(None);
            }
            let seed = cell_seed(grid.master_seed, cell, s);
            let real = realize(cell, seed)?;
            let estimates = grid
                .etas
                .iter()
                .map(|&eta| {
                    let h = query_size(eta, cell.k);
                    if h > cell.n {
                        return Ok(None);
                    }
                    let plan = QueryPlan::new(h, grid.trials, cell.k)?;
                    let mut rng = Stream::Query.rng(seed, &[eta.to_bits()]);
                    evaluate_ps(&real.snapshot, real.sources.payloads(), &plan, &mut rng).map(Some)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Some(estimates))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        let per_seed = &results[c * grid.seeds..(c + 1) * grid.seeds];
        for (e, &eta) in grid.etas.iter().enumerate() {
            let h = query_size(eta, cell.k);
            let mut successes = 0;
            let mut trials = 0;
            let mut feasible = true;
            for (s, result) in per_seed.iter().enumerate() {
                let est = result.as_ref().and_then(|v| v[e]);
                match est {
                    Some(est) => {
                        successes += est.successes;
                        trials += est.trials;
                        if grid.per_seed_rows {
                            rows.push(SweepRow::from_estimate(*cell, eta, h, est, s.to_string()));
                        }
                    }
                    None => {
                        feasible = false;
                        if grid.per_seed_rows {
                            rows.push(SweepRow::infeasible(*cell, eta, h, s.to_string()));
                        }
                    }
                }
            }
            rows.push(if feasible {
                SweepRow::from_estimate(*cell, eta, h, PsEstimate::from_counts(successes, trials), "all".into())
            } else {
                SweepRow::infeasible(*cell, eta, h, "all".into())
            });
        }
    }
    Ok(SweepTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltcodec::StoragePacket;
    use crate::seeding::rng_from;
    use crate::walksim::Phase;

    fn snapshot_of(packets: Vec<StoragePacket>, k: usize) -> StorageSnapshot {
        let n = packets.len();
        StorageSnapshot {
            algorithm: Algorithm::LtcdsI,
            k,
            source_nodes: (0..k).collect(),
            packets,
            code_degrees: vec![None; n],
            estimates: vec![None; n],
            phases: vec![Phase::Done; n],
            decided: vec![k; n],
            final_counters: vec![0; k],
            transmissions: 0,
            rounds: 0,
        }
    }

    fn payloads(k: usize) -> Vec<Payload> {
        (0..k).map(|i| Payload::new(vec![i as u8 + 1; 8])).collect()
    }

    #[test]
    fn identity_storage_always_decodes() {
        let src = payloads(6);
        let packets = (0..6).map(|i| StoragePacket::from_sources(&[i], &src).unwrap()).collect();
        let snap = snapshot_of(packets, 6);
        let plan = QueryPlan::new(6, 50, 6).unwrap();
        let est = evaluate_ps(&snap, &src, &plan, &mut rng_from(1)).unwrap();
        assert_eq!(est.p_s, 1.0);
        assert_eq!(est.successes, 50);
        assert_eq!(est.confidence_halfwidth, 0.0);
    }

    #[test]
    fn empty_storage_never_decodes() {
        let src = payloads(3);
        let snap = snapshot_of(vec![StoragePacket::empty(8); 10], 3);
        let est = evaluate_ps(&snap, &src, &QueryPlan::new(10, 20, 3).unwrap(), &mut rng_from(1)).unwrap();
        assert_eq!(est.p_s, 0.0);
    }

    #[test]
    fn corrupted_payload_is_not_success() {
        let src = payloads(2);
        let mut wrong = src.clone();
        wrong[1] = Payload::new(vec![0xFF; 8]);
        let packets = (0..2).map(|i| StoragePacket::from_sources(&[i], &wrong).unwrap()).collect();
        let snap = snapshot_of(packets, 2);
        let est = evaluate_ps(&snap, &src, &QueryPlan::new(2, 10, 2).unwrap(), &mut rng_from(1)).unwrap();
        assert_eq!(est.p_s, 0.0);
    }

    #[test]
    fn plan_validation() {
        assert!(QueryPlan::new(0, 10, 5).is_err());
        assert!(QueryPlan::new(3, 0, 5).is_err());
        assert_eq!(QueryPlan::new(10, 5, 5).unwrap().eta, 2.0);
        assert_eq!(QueryPlan::for_ratio(1.5, 10, 5).unwrap().h, 15);
        let snap = snapshot_of(vec![StoragePacket::empty(8); 4], 1);
        let plan = QueryPlan::new(5, 1, 1).unwrap();
        assert!(evaluate_ps(&snap, &payloads(1), &plan, &mut rng_from(0)).is_err());
    }

    #[test]
    fn halfwidth_formula() {
        let est = PsEstimate::from_counts(50, 200);
        assert!((est.confidence_halfwidth - Z95 * (0.25f64 * 0.75 / 200.0).sqrt()).abs() < 1e-15);
        assert_eq!(est.p_s, 0.25);
    }

    #[test]
    fn fraction_resolution() {
        assert_eq!(SourceCount::Fraction(0.1).resolve(500), 50);
        assert_eq!(SourceCount::Fraction(0.001).resolve(100), 1);
        assert_eq!(SourceCount::Exact(7).resolve(100), 7);
    }
}
