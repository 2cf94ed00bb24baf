//! Keyed random streams: each `(seed, domain, index)` triple gets its own
//! ChaCha stream, so replication `r` draws the same numbers no matter
//! which thread runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream domains. Distinct tags keep e.g. replication 3 and oracle chunk 3 apart.
pub mod domain {
    pub const GENERATE: u64 = 1;
    pub const REPLICATION: u64 = 2;
    pub const ORACLE_X: u64 = 3;
    pub const ORACLE_FULL: u64 = 4;
}

pub fn stream_rng(seed: u64, domain: u64, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
