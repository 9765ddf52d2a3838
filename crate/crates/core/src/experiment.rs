//! One experiment cell: build a connected network, place sources, run a
//! storage protocol. All randomness descends from a single cell seed.

use crate::error::{Error, Result};
use crate::ltcodec::random_sources;
use crate::netmodel::{generate_connected_rgg, select_sources, Graph};
use crate::seeding::Stream;
use crate::walksim::{run_ltcds_i, run_ltcds_ii, Algorithm, SourceSet, StorageSnapshot};
use crate::soliton::DistributionKind;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSpec {
    pub algorithm: Algorithm,
    pub n: usize,
    pub k: usize,
    pub side_length: f64,
    pub distribution: DistributionKind,
    pub c1: f64,
    pub c2: usize,
    pub c3: f64,
    pub payload_len: usize,
}

impl CellSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param(format!("n must be at least 2, got {}", self.n)));
        }
        if self.k == 0 || self.k > self.n {
            return Err(Error::param(format!("k must be in 1..={}, got {}", self.n, self.k)));
        }
        if !(self.side_length > 1.0) {
            return Err(Error::param(format!("L must exceed 1, got {}", self.side_length)));
        }
        if self.payload_len == 0 {
            return Err(Error::param("payload length must be positive"));
        }
        match self.algorithm {
            Algorithm::LtcdsI if !(self.c1 > 0.0) => {
                Err(Error::param(format!("C1 must be positive, got {}", self.c1)))
            }
            Algorithm::LtcdsII if self.c2 < 2 => {
                Err(Error::param(format!("C2 must be at least 2, got {}", self.c2)))
            }
            Algorithm::LtcdsII if !(self.c3 > 0.0) => {
                Err(Error::param(format!("C3 must be positive, got {}", self.c3)))
            }
            _ => Ok(()),
        }
    }

    /// Canonical text used to derive this cell's seeds. Stable across
    /// releases; changing it reshuffles every sweep.
    pub fn canonical(&self) -> String {
        let dist = match self.distribution {
            DistributionKind::Ideal => "ideal".to_string(),
            DistributionKind::Robust { c0, delta } => format!("robust:{c0}:{delta}"),
        };
        format!(
            "{}|n={}|k={}|L={}|{}|c1={}|c2={}|c3={}|B={}",
            self.algorithm.name(),
            self.n,
            self.k,
            self.side_length,
            dist,
            self.c1,
            self.c2,
            self.c3,
            self.payload_len
        )
    }
}

/// Everything produced by one seeded realization of a cell.
#[derive(Debug, Clone)]
pub struct Realization {
    pub graph: Graph,
    pub graph_attempts: u32,
    pub sources: SourceSet,
    pub snapshot: StorageSnapshot,
}

pub fn build_network(cell: &CellSpec, seed: u64) -> Result<(Graph, u32, SourceSet)> {
    cell.validate()?;
    let (graph, attempts) = generate_connected_rgg(cell.n, cell.side_length, |attempt| {
        Stream::Graph.rng(seed, &[u64::from(attempt)])
    })?;
    let nodes = select_sources(&graph, cell.k, &mut Stream::Sources.rng(seed, &[]))?;
    let payloads = random_sources(cell.k, cell.payload_len, &mut Stream::Payloads.rng(seed, &[]));
    Ok((graph, attempts, SourceSet::new(nodes, payloads)?))
}

pub fn run_storage(cell: &CellSpec, graph: &Graph, sources: &SourceSet, seed: u64) -> Result<StorageSnapshot> {
    let mut rng = Stream::Simulation.rng(seed, &[]);
    match cell.algorithm {
        Algorithm::LtcdsI => {
            let dist = cell.distribution.build(cell.k)?;
            run_ltcds_i(graph, sources, &dist, cell.c1, &mut rng)
        }
        Algorithm::LtcdsII => run_ltcds_ii(graph, sources, cell.distribution, cell.c2, cell.c3, &mut rng),
    }
}

pub fn realize(cell: &CellSpec, seed: u64) -> Result<Realization> {
    let (graph, graph_attempts, sources) = build_network(cell, seed)?;
    let snapshot = run_storage(cell, &graph, &sources, seed)?;
    Ok(Realization {
        graph,
        graph_attempts,
        sources,
        snapshot,
    })
}
