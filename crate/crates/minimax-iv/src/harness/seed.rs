//! Stable seed derivation for replication sweeps.
//!
//! Seeds are derived by FNV-1a hashing of length-prefixed fields, so every
//! (master seed, estimator, n, replication) cell gets the same seed on
//! every platform and run, and reordering the estimator list never changes
//! any cell's stream.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over a byte slice.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn feed(h: &mut u64, bytes: &[u8]) {
    let len = (bytes.len() as u64).to_le_bytes();
    for &b in len.iter().chain(bytes) {
        *h ^= b as u64;
        *h = h.wrapping_mul(FNV_PRIME);
    }
}

/// Seed for one replication cell.
pub fn rep_seed(master: u64, estimator: &str, n: usize, rep: usize) -> u64 {
    let mut h = FNV_OFFSET;
    feed(&mut h, &master.to_le_bytes());
    feed(&mut h, estimator.as_bytes());
    feed(&mut h, &(n as u64).to_le_bytes());
    feed(&mut h, &(rep as u64).to_le_bytes());
    h
}

/// Independent stream derived from a base seed and a purpose tag.
pub fn sub_seed(base: u64, tag: &str) -> u64 {
    let mut h = FNV_OFFSET;
    feed(&mut h, &base.to_le_bytes());
    feed(&mut h, tag.as_bytes());
    h
}
