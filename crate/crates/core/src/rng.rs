//! Seeded random streams. Every run derives independent streams from one
//! seed so that, for example, the index stream of SSQP-Skip matches that of
//! SSQP under the same seed regardless of how many coin flips it draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as RunRng;

/// Stream identifiers.
pub const INDEX_STREAM: u64 = 0;
pub const COIN_STREAM: u64 = 1;
pub const DATA_STREAM: u64 = 2;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `batch` component indices. Finite sums sample uniformly with
/// replacement from `0..n`; streaming oracles (`n == 0`) receive fresh
/// sample identifiers.
pub fn draw_batch(rng: &mut ChaCha8Rng, n: usize, batch: usize, out: &mut alloc::vec::Vec<usize>) {
    out.clear();
    for _ in 0..batch {
        let i = if n == 0 { rng.random::<u32>() as usize } else { rng.random_range(0..n) };
        out.push(i);
    }
}
