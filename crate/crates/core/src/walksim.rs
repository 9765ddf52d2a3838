//! Synchronous-round random-walk engine and the two storage protocols built on
//! it, plus the data-update walk and long-walk statistics.
//!
//! Round model: in every round each node with a nonempty forward queue sends
//! its head-of-line packet to a uniformly random neighbor. All sends of a
//! round are collected first and then delivered in ascending
//! `(sender, source)` order, so a packet received in round `r` is forwarded in
//! round `r + 1` at the earliest. Initialization is round 0: every source
//! sends its own packet to a random neighbor.
//!
//! A packet's counter is the number of transmissions it has undergone. It also
//! carries the number of those transmissions made by senders past inference;
//! when `n` and `k` are known up front the two are equal. On a first visit
//! (the receiver has not ruled on that source yet) the packet is always
//! re-queued. On a revisit it is dropped once its post-inference count has
//! reached the receiver's threshold `ceil(C * n * ln n)`, with `n` replaced by
//! the receiver's own estimate when sizes are inferred. Nodes still in
//! inference never drop packets.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimation::{compute_estimates, Estimates, VisitLog};
use crate::ltcodec::{Payload, StoragePacket};
use crate::netmodel::{is_connected, Graph};
use crate::soliton::{ideal_soliton, DegreeDistribution, DistributionKind};

/// Forwarding budget `ceil(c * n * ln n)`, never below 1.
pub fn counter_threshold(c: f64, n: f64) -> u64 {
    ((c * n * n.ln()).ceil() as u64).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Nodes know `n` and `k`.
    LtcdsI,
    /// Nodes infer `n` and `k` from visit timing first.
    LtcdsII,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::LtcdsI => "ltcds1",
            Algorithm::LtcdsII => "ltcds2",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ltcds1" => Ok(Algorithm::LtcdsI),
            "ltcds2" => Ok(Algorithm::LtcdsII),
            other => Err(Error::Config(format!(
                "unknown algorithm `{other}` (expected ltcds1 or ltcds2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Inference,
    Encoding,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Initial,
    Update,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketToken {
    pub source: usize,
    /// Source block, or the old/new difference block for updates.
    pub payload: Payload,
    pub counter: u64,
    /// Transmissions made by senders past inference. Equals `counter` when
    /// every node knows `n` and `k` from the start.
    pub encoding_hops: u64,
    pub token: TokenKind,
}

/// Per-node protocol state.
#[derive(Debug, Clone)]
pub struct NodeState {
    id: usize,
    phase: Phase,
    code_degree: Option<usize>,
    /// Source count used in the acceptance probability: `k`, or `k_hat`.
    k_used: Option<usize>,
    threshold: Option<u64>,
    storage: StoragePacket,
    forward_queue: VecDeque<PacketToken>,
    decided: Vec<bool>,
    decided_count: usize,
    visit_log: Option<VisitLog>,
    estimates: Option<Estimates>,
}

impl NodeState {
    fn new(id: usize, k: usize, payload_len: usize, phase: Phase) -> Self {
        NodeState {
            id,
            phase,
            code_degree: None,
            k_used: None,
            threshold: None,
            storage: StoragePacket::empty(payload_len),
            forward_queue: VecDeque::new(),
            decided: vec![false; k],
            decided_count: 0,
            visit_log: (phase == Phase::Inference).then(VisitLog::new),
            estimates: None,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn code_degree(&self) -> Option<usize> {
        self.code_degree
    }

    pub fn storage(&self) -> &StoragePacket {
        &self.storage
    }

    pub fn has_decided(&self, source: usize) -> bool {
        self.decided[source]
    }

    pub fn decided_count(&self) -> usize {
        self.decided_count
    }

    pub fn estimates(&self) -> Option<&Estimates> {
        self.estimates.as_ref()
    }

    pub fn queue_len(&self) -> usize {
        self.forward_queue.len()
    }
}

/// Where the sources live and what they hold. Source `i` sits on node
/// `nodes[i]` and carries `payloads[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet {
    nodes: Vec<usize>,
    payloads: Vec<Payload>,
}

impl SourceSet {
    pub fn new(nodes: Vec<usize>, payloads: Vec<Payload>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::param("at least one source is required"));
        }
        if nodes.len() != payloads.len() {
            return Err(Error::param(format!(
                "{} source nodes but {} payloads",
                nodes.len(),
                payloads.len()
            )));
        }
        let len = payloads[0].len();
        if let Some(p) = payloads.iter().find(|p| p.len() != len) {
            return Err(Error::PayloadLength {
                left: len,
                right: p.len(),
            });
        }
        let mut sorted = nodes.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("source nodes must be distinct"));
        }
        Ok(SourceSet { nodes, payloads })
    }

    pub fn k(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn payloads(&self) -> &[Payload] {
        &self.payloads
    }

    pub fn payload_len(&self) -> usize {
        self.payloads[0].len()
    }

    fn validate_against(&self, g: &Graph) -> Result<()> {
        let n = g.node_count();
        if self.k() > n {
            return Err(Error::param(format!("k={} exceeds n={n}", self.k())));
        }
        if let Some(&bad) = self.nodes.iter().find(|&&u| u >= n) {
            return Err(Error::param(format!("source node {bad} is not in the graph")));
        }
        Ok(())
    }
}

/// The outcome of a storage (or update) run.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageSnapshot {
    pub algorithm: Algorithm,
    pub k: usize,
    pub source_nodes: Vec<usize>,
    pub packets: Vec<StoragePacket>,
    pub code_degrees: Vec<Option<usize>>,
    pub estimates: Vec<Option<Estimates>>,
    pub phases: Vec<Phase>,
    /// Number of distinct sources each node ruled on.
    pub decided: Vec<usize>,
    /// Final counter of every packet, indexed by source id.
    pub final_counters: Vec<u64>,
    pub transmissions: u64,
    pub rounds: u64,
}

impl StorageSnapshot {
    pub fn node_count(&self) -> usize {
        self.packets.len()
    }

    pub fn storage_degrees(&self) -> Vec<usize> {
        self.packets.iter().map(StoragePacket::degree).collect()
    }

    /// True iff every stored payload is the XOR of the sources it lists.
    pub fn is_consistent(&self, sources: &[Payload]) -> bool {
        self.packets.iter().all(|p| p.is_consistent(sources))
    }
}

enum Mode {
    KnownSize,
    Inferred {
        family: DistributionKind,
        c2: usize,
        c3: f64,
        cache: HashMap<usize, DegreeDistribution>,
    },
}

struct Engine<'g, 'r, R: Rng> {
    graph: &'g Graph,
    nodes: Vec<NodeState>,
    live: usize,
    final_counters: Vec<u64>,
    transmissions: u64,
    rng: &'r mut R,
    mode: Mode,
}

impl<'g, 'r, R: Rng> Engine<'g, 'r, R> {
    fn random_neighbor(&mut self, u: usize) -> usize {
        let nbrs = self.graph.neighbors(u);
        nbrs[self.rng.gen_range(0..nbrs.len())]
    }

    /// One delivery of `packet` (counter already incremented) to `v` at `time`.
    fn receive(&mut self, v: usize, packet: PacketToken, time: u64) -> Result<()> {
        let s = packet.source;
        if self.nodes[v].phase == Phase::Inference {
            self.observe(v, s, time)?;
            self.nodes[v].forward_queue.push_back(packet);
            return Ok(());
        }

        if !self.nodes[v].decided[s] {
            self.rule(v, &packet)?;
            self.nodes[v].forward_queue.push_back(packet);
            return Ok(());
        }

        let threshold = self.nodes[v].threshold.expect("encoding node has a threshold");
        if packet.encoding_hops >= threshold {
            self.final_counters[s] = packet.counter;
            self.live -= 1;
        } else {
            self.nodes[v].forward_queue.push_back(packet);
        }
        Ok(())
    }

    /// First visit of a source at a node that is past inference.
    fn rule(&mut self, v: usize, packet: &PacketToken) -> Result<()> {
        let node = &mut self.nodes[v];
        if node.phase == Phase::Encoding {
            let d = node.code_degree.expect("encoding node has a code degree") as f64;
            let k = node.k_used.expect("encoding node has a source count") as f64;
            if self.rng.gen::<f64>() < d / k {
                node.storage.toggle(packet.source, &packet.payload)?;
            }
        }
        node.decided[packet.source] = true;
        node.decided_count += 1;
        if node.decided_count >= node.k_used.unwrap_or(usize::MAX) {
            node.phase = Phase::Done;
        }
        Ok(())
    }

    /// Inference-phase visit: log it and leave inference as soon as any one
    /// source has visited `c2` times. Waiting on one particular source would
    /// strand the node for good if that packet is dropped first.
    fn observe(&mut self, v: usize, source: usize, time: u64) -> Result<()> {
        let Mode::Inferred { family, c2, c3, cache, .. } = &mut self.mode else {
            unreachable!("only inferred-size runs have an inference phase");
        };
        let node = &mut self.nodes[v];
        let log = node.visit_log.as_mut().expect("inference node keeps a log");
        log.record(source, time)?;
        if log.visit_count(source) < *c2 {
            return Ok(());
        }

        let est = compute_estimates(log)?;
        let k_hat = est.k_hat.max(1);
        let dist = match cache.get(&k_hat) {
            Some(d) => d,
            None => {
                // Small estimates can fall outside the robust family's domain.
                let d = family.build(k_hat).or_else(|_| ideal_soliton(k_hat))?;
                cache.entry(k_hat).or_insert(d)
            }
        };
        node.code_degree = Some(dist.sample(self.rng));
        node.k_used = Some(k_hat);
        node.threshold = Some(counter_threshold(*c3, est.n_hat));
        node.estimates = Some(est);
        node.visit_log = None;
        node.phase = Phase::Encoding;
        Ok(())
    }

    fn run(mut self, sources: &SourceSet, round_cap: Option<u64>) -> Result<StorageSnapshot> {
        let mut arrivals: Vec<(usize, usize, PacketToken)> = Vec::with_capacity(sources.k());
        for (s, (&node, payload)) in sources.nodes.iter().zip(&sources.payloads).enumerate() {
            let to = self.random_neighbor(node);
            let packet = PacketToken {
                source: s,
                payload: payload.clone(),
                counter: 1,
                encoding_hops: u64::from(self.nodes[node].phase != Phase::Inference),
                token: TokenKind::Initial,
            };
            arrivals.push((node, to, packet));
        }
        self.transmissions += arrivals.len() as u64;
        self.deliver(&mut arrivals, 0)?;

        let mut round = 0;
        while self.live > 0 {
            round += 1;
            if let Some(cap) = round_cap {
                if round > cap {
                    return Err(Error::RoundCap {
                        cap,
                        pending: self.live,
                    });
                }
            }
            debug_assert_eq!(
                self.nodes.iter().map(NodeState::queue_len).sum::<usize>(),
                self.live
            );
            for u in 0..self.nodes.len() {
                if let Some(mut packet) = self.nodes[u].forward_queue.pop_front() {
                    let to = self.random_neighbor(u);
                    packet.counter += 1;
                    if self.nodes[u].phase != Phase::Inference {
                        packet.encoding_hops += 1;
                    }
                    arrivals.push((u, to, packet));
                }
            }
            self.transmissions += arrivals.len() as u64;
            self.deliver(&mut arrivals, round)?;
        }

        debug_assert_eq!(self.final_counters.iter().sum::<u64>(), self.transmissions);
        let algorithm = match self.mode {
            Mode::KnownSize => Algorithm::LtcdsI,
            Mode::Inferred { .. } => Algorithm::LtcdsII,
        };
        Ok(StorageSnapshot {
            algorithm,
            k: sources.k(),
            source_nodes: sources.nodes.clone(),
            code_degrees: self.nodes.iter().map(|n| n.code_degree).collect(),
            estimates: self.nodes.iter().map(|n| n.estimates).collect(),
            phases: self.nodes.iter().map(|n| n.phase).collect(),
            decided: self.nodes.iter().map(|n| n.decided_count).collect(),
            packets: self.nodes.into_iter().map(|n| n.storage).collect(),
            final_counters: self.final_counters,
            transmissions: self.transmissions,
            rounds: round,
        })
    }

    fn deliver(&mut self, arrivals: &mut Vec<(usize, usize, PacketToken)>, time: u64) -> Result<()> {
        arrivals.sort_by_key(|(from, _, p)| (*from, p.source));
        for (_, to, packet) in arrivals.drain(..) {
            self.receive(to, packet, time)?;
        }
        Ok(())
    }
}

fn check_run_inputs(g: &Graph, sources: &SourceSet) -> Result<()> {
    sources.validate_against(g)?;
    if !is_connected(g) {
        return Err(Error::Disconnected);
    }
    Ok(())
}

/// Storage with known `n` and `k`: every node draws its code degree from
/// `dist` up front and accepts each source on its first visit with
/// probability `d / k`.
pub fn run_ltcds_i<R: Rng>(
    g: &Graph,
    sources: &SourceSet,
    dist: &DegreeDistribution,
    c1: f64,
    rng: &mut R,
) -> Result<StorageSnapshot> {
    check_run_inputs(g, sources)?;
    if !(c1 > 0.0) {
        return Err(Error::param(format!("C1 must be positive, got {c1}")));
    }
    let k = sources.k();
    if dist.k() != k {
        return Err(Error::param(format!(
            "degree distribution is over {} sources, run has k={k}",
            dist.k()
        )));
    }
    let n = g.node_count();
    let threshold = counter_threshold(c1, n as f64);
    let nodes = (0..n)
        .map(|u| {
            let mut node = NodeState::new(u, k, sources.payload_len(), Phase::Encoding);
            node.code_degree = Some(dist.sample(rng));
            node.k_used = Some(k);
            node.threshold = Some(threshold);
            node
        })
        .collect();
    Engine {
        graph: g,
        nodes,
        live: k,
        final_counters: vec![0; k],
        transmissions: 0,
        rng,
        mode: Mode::KnownSize,
    }
    .run(sources, None)
}

/// Storage without global knowledge: nodes first estimate `n` and `k` from
/// visit timing, then encode as in [`run_ltcds_i`] using their own estimates.
pub fn run_ltcds_ii<R: Rng>(
    g: &Graph,
    sources: &SourceSet,
    family: DistributionKind,
    c2: usize,
    c3: f64,
    rng: &mut R,
) -> Result<StorageSnapshot> {
    check_run_inputs(g, sources)?;
    if c2 < 2 {
        return Err(Error::param(format!("C2 must be at least 2, got {c2}")));
    }
    if !(c3 > 0.0) {
        return Err(Error::param(format!("C3 must be positive, got {c3}")));
    }
    let k = sources.k();
    let n = g.node_count();
    let cap = 100 * counter_threshold(c3, n as f64);
    let nodes = (0..n)
        .map(|u| NodeState::new(u, k, sources.payload_len(), Phase::Inference))
        .collect();
    Engine {
        graph: g,
        nodes,
        live: k,
        final_counters: vec![0; k],
        transmissions: 0,
        rng,
        mode: Mode::Inferred {
            family,
            c2,
            c3,
            cache: HashMap::new(),
        },
    }
    .run(sources, Some(cap))
}

/// Propagates source updates through an existing storage snapshot.
///
/// Each update travels as one random walk from its source node carrying
/// `old ^ new`. Every node whose stored id set contains the source XORs the
/// difference in, at most once per walk; the walk is dropped when its
/// counter reaches `ceil(C1 * n * ln n)`. The returned snapshot holds the
/// updated storage; its `transmissions`, `rounds` and `final_counters`
/// describe the update walks only (`final_counters` is indexed like
/// `updates`, in ascending source id).
pub fn run_update<R: Rng>(
    snapshot: &StorageSnapshot,
    g: &Graph,
    updates: &BTreeMap<usize, (Payload, Payload)>,
    c1: f64,
    rng: &mut R,
) -> Result<StorageSnapshot> {
    if g.node_count() != snapshot.node_count() {
        return Err(Error::param(format!(
            "snapshot has {} nodes, graph has {}",
            snapshot.node_count(),
            g.node_count()
        )));
    }
    if !is_connected(g) {
        return Err(Error::Disconnected);
    }
    if !(c1 > 0.0) {
        return Err(Error::param(format!("C1 must be positive, got {c1}")));
    }
    if let Some(&bad) = updates.keys().find(|&&s| s >= snapshot.k) {
        return Err(Error::UnknownSource(bad));
    }

    let n = g.node_count();
    let threshold = counter_threshold(c1, n as f64);
    let mut out = snapshot.clone();
    out.final_counters.clear();
    out.transmissions = 0;
    out.rounds = 0;

    for (&source, (old, new)) in updates {
        let mut token = PacketToken {
            source,
            payload: crate::ltcodec::xor_payload(old, new)?,
            counter: 0,
            encoding_hops: 0,
            token: TokenKind::Update,
        };
        let mut applied = vec![false; n];
        let mut at = snapshot.source_nodes[source];
        loop {
            let nbrs = g.neighbors(at);
            at = nbrs[rng.gen_range(0..nbrs.len())];
            token.counter += 1;
            let packet = &mut out.packets[at];
            if !applied[at] && packet.contains(source) {
                packet.apply_difference(&token.payload)?;
                applied[at] = true;
            }
            if token.counter >= threshold {
                break;
            }
        }
        out.transmissions += token.counter;
        out.rounds = out.rounds.max(token.counter);
        out.final_counters.push(token.counter);
    }
    Ok(out)
}

/// Empirical occupancy and return times of one long simple random walk.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkStatistics {
    pub steps: u64,
    /// Times each node was occupied, counting the start node at time 0.
    pub visits: Vec<u64>,
    pub frequency: Vec<f64>,
    pub returns: Vec<u64>,
    /// Mean gap between consecutive visits, when the node was revisited.
    pub mean_return_time: Vec<Option<f64>>,
}

pub const MIN_WALK_STEPS: u64 = 100_000;

pub fn measure_walk_statistics<R: Rng>(g: &Graph, steps: u64, rng: &mut R) -> Result<WalkStatistics> {
    if steps < MIN_WALK_STEPS {
        return Err(Error::param(format!(
            "need at least {MIN_WALK_STEPS} steps, got {steps}"
        )));
    }
    if !is_connected(g) {
        return Err(Error::Disconnected);
    }
    let n = g.node_count();
    let mut visits = vec![0u64; n];
    let mut last_visit = vec![None::<u64>; n];
    let mut return_sum = vec![0u64; n];
    let mut returns = vec![0u64; n];

    let mut at = rng.gen_range(0..n);
    visits[at] = 1;
    last_visit[at] = Some(0);
    for t in 1..=steps {
        let nbrs = g.neighbors(at);
        at = nbrs[rng.gen_range(0..nbrs.len())];
        visits[at] += 1;
        if let Some(prev) = last_visit[at] {
            return_sum[at] += t - prev;
            returns[at] += 1;
        }
        last_visit[at] = Some(t);
    }

    let total = (steps + 1) as f64;
    Ok(WalkStatistics {
        steps,
        frequency: visits.iter().map(|&v| v as f64 / total).collect(),
        mean_return_time: return_sum
            .iter()
            .zip(&returns)
            .map(|(&sum, &r)| (r > 0).then(|| sum as f64 / r as f64))
            .collect(),
        visits,
        returns,
    })
}

/// Per-node arrival statistics of several independent walks moving in
/// lockstep.
#[derive(Debug, Clone, PartialEq)]
pub struct InterPacketStatistics {
    pub visits: Vec<u64>,
    /// Mean gap between consecutive arrivals of any walk; simultaneous
    /// arrivals contribute a zero gap.
    pub mean_interpacket: Vec<Option<f64>>,
}

pub fn measure_interpacket_times<R: Rng>(
    g: &Graph,
    walks: usize,
    steps: u64,
    rng: &mut R,
) -> Result<InterPacketStatistics> {
    if walks == 0 {
        return Err(Error::param("need at least one walk"));
    }
    if !is_connected(g) {
        return Err(Error::Disconnected);
    }
    let n = g.node_count();
    let mut positions: Vec<usize> = (0..walks).map(|_| rng.gen_range(0..n)).collect();
    let mut visits = vec![0u64; n];
    let mut first = vec![None::<u64>; n];
    let mut last = vec![0u64; n];
    for t in 1..=steps {
        for pos in positions.iter_mut() {
            let nbrs = g.neighbors(*pos);
            *pos = nbrs[rng.gen_range(0..nbrs.len())];
            visits[*pos] += 1;
            first[*pos].get_or_insert(t);
            last[*pos] = t;
        }
    }
    let mean_interpacket = (0..n)
        .map(|u| match first[u] {
            Some(f) if visits[u] >= 2 => Some((last[u] - f) as f64 / (visits[u] - 1) as f64),
            _ => None,
        })
        .collect();
    Ok(InterPacketStatistics {
        visits,
        mean_interpacket,
    })
}
