//! XOR payload algebra, the peeling decoder and a centralized LT encoder.
//!
//! Source ids are zero-based: a run with `k` sources uses ids `0..k`.

use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::Reverse;
use std::fmt;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::soliton::DegreeDistribution;

pub const DEFAULT_PAYLOAD_LEN: usize = 16;

/// Fixed-length opaque data block.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Payload(Vec<u8>);

impl Payload {
    pub fn new(bytes: Vec<u8>) -> Self {
        Payload(bytes)
    }

    pub fn zero(len: usize) -> Self {
        Payload(vec![0; len])
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut bytes = vec![0; len];
        rng.fill_bytes(&mut bytes);
        Payload(bytes)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn xor_assign(&mut self, other: &Payload) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::PayloadLength {
                left: self.len(),
                right: other.len(),
            });
        }
        self.0.iter_mut().zip(&other.0).for_each(|(a, b)| *a ^= b);
        Ok(())
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Payload({})", self.to_hex())
    }
}

pub fn xor_payload(a: &Payload, b: &Payload) -> Result<Payload> {
    let mut out = a.clone();
    out.xor_assign(b)?;
    Ok(out)
}

/// `count` random payloads of `len` bytes, one per source.
pub fn random_sources<R: Rng + ?Sized>(count: usize, len: usize, rng: &mut R) -> Vec<Payload> {
    (0..count).map(|_| Payload::random(len, rng)).collect()
}

/// A stored XOR combination together with the ids it covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoragePacket {
    ids: Vec<usize>,
    payload: Payload,
}

impl StoragePacket {
    pub fn empty(payload_len: usize) -> Self {
        StoragePacket {
            ids: Vec::new(),
            payload: Payload::zero(payload_len),
        }
    }

    /// XOR of the given sources. Duplicate ids cancel, as they would in the
    /// payload.
    pub fn from_sources(ids: &[usize], sources: &[Payload]) -> Result<Self> {
        let len = sources.first().map_or(DEFAULT_PAYLOAD_LEN, Payload::len);
        let mut packet = StoragePacket::empty(len);
        for &id in ids {
            let payload = sources.get(id).ok_or(Error::UnknownSource(id))?;
            packet.toggle(id, payload)?;
        }
        Ok(packet)
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn degree(&self) -> usize {
        self.ids.len()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    /// XORs a source into the packet, adding its id, or removing it when
    /// already present.
    pub fn toggle(&mut self, id: usize, payload: &Payload) -> Result<()> {
        self.payload.xor_assign(payload)?;
        match self.ids.binary_search(&id) {
            Ok(pos) => {
                self.ids.remove(pos);
            }
            Err(pos) => self.ids.insert(pos, id),
        }
        Ok(())
    }

    /// XORs a block into the payload without touching the id set.
    pub fn apply_difference(&mut self, diff: &Payload) -> Result<()> {
        self.payload.xor_assign(diff)
    }

    /// True iff the payload equals the XOR of the listed sources.
    pub fn is_consistent(&self, sources: &[Payload]) -> bool {
        let mut acc = Payload::zero(self.payload.len());
        for &id in &self.ids {
            match sources.get(id) {
                Some(p) if acc.xor_assign(p).is_ok() => {}
                _ => return false,
            }
        }
        acc == self.payload
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub success: bool,
    pub recovered: BTreeMap<usize, Payload>,
    /// Number of degree-one resolutions performed.
    pub rounds: usize,
}

impl DecodeResult {
    /// True iff every source was recovered and matches `sources` bit-exact.
    pub fn matches(&self, sources: &[Payload]) -> bool {
        self.success
            && self.recovered.len() == sources.len()
            && self
                .recovered
                .iter()
                .all(|(&id, p)| sources.get(id) == Some(p))
    }
}

/// Message-passing (peeling) decoder.
///
/// Repeatedly takes the lowest-indexed packet with exactly one unresolved id,
/// resolves that source and substitutes it into every other packet containing
/// it. Stops when no degree-one packet is left.
pub fn peel_decode<'a, I>(packets: I, k: usize) -> Result<DecodeResult>
where
    I: IntoIterator<Item = &'a StoragePacket>,
{
    let packets: Vec<&StoragePacket> = packets.into_iter().collect();
    let mut payloads: Vec<Payload> = Vec::with_capacity(packets.len());
    let mut remaining: Vec<usize> = Vec::with_capacity(packets.len());
    // Sum of unresolved ids; identifies the last one once `remaining == 1`.
    let mut id_sum: Vec<usize> = Vec::with_capacity(packets.len());
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut ready = BinaryHeap::new();

    for (idx, packet) in packets.iter().enumerate() {
        for &id in packet.ids() {
            if id >= k {
                return Err(Error::UnknownSource(id));
            }
            holders[id].push(idx);
        }
        payloads.push(packet.payload().clone());
        remaining.push(packet.degree());
        id_sum.push(packet.ids().iter().sum());
        if packet.degree() == 1 {
            ready.push(Reverse(idx));
        }
    }

    let mut recovered: BTreeMap<usize, Payload> = BTreeMap::new();
    let mut rounds = 0;
    while let Some(Reverse(idx)) = ready.pop() {
        if remaining[idx] != 1 {
            continue;
        }
        let source = id_sum[idx];
        let value = std::mem::replace(&mut payloads[idx], Payload::zero(0));
        remaining[idx] = 0;
        rounds += 1;
        for &other in &holders[source] {
            if remaining[other] == 0 {
                continue;
            }
            payloads[other].xor_assign(&value)?;
            remaining[other] -= 1;
            id_sum[other] -= source;
            if remaining[other] == 1 {
                ready.push(Reverse(other));
            }
        }
        recovered.insert(source, value);
    }

    Ok(DecodeResult {
        success: recovered.len() == k,
        recovered,
        rounds,
    })
}

/// Centralized LT encoder: each of the `m` packets XORs a degree drawn from
/// `dist` worth of distinct sources chosen uniformly.
pub fn central_lt_encode<R: Rng + ?Sized>(
    sources: &[Payload],
    dist: &DegreeDistribution,
    m: usize,
    rng: &mut R,
) -> Result<Vec<StoragePacket>> {
    let k = sources.len();
    if m == 0 {
        return Err(Error::param("need at least one encoded packet"));
    }
    if dist.k() != k {
        return Err(Error::param(format!(
            "distribution is over {} sources but {k} were given",
            dist.k()
        )));
    }
    (0..m)
        .map(|_| {
            let degree = dist.sample(rng);
            let ids = index::sample(rng, k, degree).into_vec();
            StoragePacket::from_sources(&ids, sources)
        })
        .collect()
}
