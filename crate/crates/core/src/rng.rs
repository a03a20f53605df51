//! Counter-based seeding.
//!
//! Every random quantity in the crate is a word of a ChaCha8 keystream addressed
//! by `(seed, stream, position)`, so values never depend on evaluation order or
//! on how work is split across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Domain tags for [`derive_seed`]. Distinct tags give unrelated seeds for the
/// same `(master, index)` pair.
pub mod domain {
    pub const FAMILY: u64 = 0;
    pub const KEYSET: u64 = 1;
    pub const QUERY: u64 = 2;
    pub const CUCKOO: u64 = 3;
    pub const BLOOM: u64 = 4;
    pub const FILTER: u64 = 5;
}

/// Keystream positioned at word 0 of `stream`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The `index`-th 64-bit word of stream `stream` under `seed`.
pub fn word(seed: u64, stream_id: u64, index: u64) -> u64 {
    let mut rng = stream(seed, stream_id);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

/// Seed for trial/instance `index` of an experiment keyed by `master`.
pub fn derive_seed(master: u64, domain: u64, index: u64) -> u64 {
    word(master, index, domain)
}
