//! Counter-keyed random streams.
//!
//! Every consumer of randomness derives its own ChaCha stream from
//! `(seed, domain, step, index)`, so results never depend on the order in
//! which examples are generated or on how work is split across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes that draw from the same run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Train = 1,
    Eval = 2,
    Init = 3,
    Analysis = 4,
    NaturalLanguage = 5,
    Corpus = 6,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The ChaCha stream for one `(seed, domain, step, index)` cell.
pub fn stream(seed: u64, domain: Domain, step: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let words = [
        splitmix(seed),
        splitmix(seed ^ splitmix(domain as u64)),
        splitmix(step.wrapping_add(0x5851_F42D_4C95_7F2D)),
        splitmix(index ^ 0x2545_F491_4F6C_DD1D),
    ];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
