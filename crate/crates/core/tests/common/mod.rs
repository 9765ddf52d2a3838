//! Test oracles shared by the integration tests.

#![allow(dead_code)]

use ltcds::ltcodec::{Payload, StoragePacket};

/// Full-rank recovery by Gaussian elimination over GF(2). Returns every
/// source payload when the packets' id sets span all `k` unit vectors, and
/// `None` otherwise.
pub fn gf2_solve(packets: &[StoragePacket], k: usize) -> Option<Vec<Payload>> {
    let words = k.div_ceil(64);
    let mut rows: Vec<(Vec<u64>, Payload)> = packets
        .iter()
        .map(|p| {
            let mut bits = vec![0u64; words];
            for &id in p.ids() {
                bits[id / 64] ^= 1 << (id % 64);
            }
            (bits, p.payload().clone())
        })
        .collect();

    for col in 0..k {
        let bit = |row: &(Vec<u64>, Payload)| row.0[col / 64] >> (col % 64) & 1 == 1;
        let found = (col..rows.len()).find(|&r| bit(&rows[r]))?;
        rows.swap(col, found);
        let (pivot_bits, pivot_payload) = rows[col].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != col && bit(row) {
                row.0.iter_mut().zip(&pivot_bits).for_each(|(a, b)| *a ^= b);
                row.1.xor_assign(&pivot_payload).unwrap();
            }
        }
    }
    // Row `i` now holds exactly source `i`.
    Some(rows.into_iter().take(k).map(|(_, payload)| payload).collect())
}

/// Mean and population coefficient of variation.
pub fn mean_cv(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt() / mean)
}
