//! Shared fixtures for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trirng_core::bits::BitBlock;
use trirng_core::uniform::ToeplitzSeed;

pub const BLOCK_N: usize = 1536;
pub const BLOCK_M: usize = 1024;

/// A random Toeplitz seed and `count` random input blocks.
pub fn toeplitz_fixture(count: usize, seed: u64) -> (ToeplitzSeed, Vec<BitBlock>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = ToeplitzSeed::new(
        BitBlock::random(BLOCK_N + BLOCK_M - 1, &mut rng),
        BLOCK_N,
        BLOCK_M,
    )
    .expect("seed length matches geometry");
    let inputs = (0..count)
        .map(|_| BitBlock::random(BLOCK_N, &mut rng))
        .collect();
    (s, inputs)
}
