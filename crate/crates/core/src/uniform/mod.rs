//! Uniform extraction: Toeplitz hashing seeded by a two-source Dodis extractor.

pub mod clmul;
pub mod dodis;
pub mod toeplitz;

use serde::{Deserialize, Serialize};

pub use dodis::{dodis_extract, is_admissible, smallest_admissible, ADMISSIBLE_PRIMES};
pub use toeplitz::{toeplitz_extract, toeplitz_extract_fast, ToeplitzKernel, ToeplitzSeed};

use crate::bits::BitBlock;
use crate::error::{Error, Result};

/// Something that hands out raw bit blocks on request.
pub trait BitSource {
    /// Next `len` raw bits, or `None` when the source is exhausted.
    fn next_block(&mut self, len: usize) -> Option<BitBlock>;
}

/// Sequential reader over a fixed bit string.
#[derive(Debug, Clone)]
pub struct BitStream {
    bits: BitBlock,
    pos: usize,
}

impl BitStream {
    pub fn new(bits: BitBlock) -> Self {
        BitStream { bits, pos: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }
}

impl BitSource for BitStream {
    fn next_block(&mut self, len: usize) -> Option<BitBlock> {
        let block = self.bits.slice(self.pos, len).ok()?;
        self.pos += len;
        Some(block)
    }
}

impl<F: FnMut(usize) -> Option<BitBlock>> BitSource for F {
    fn next_block(&mut self, len: usize) -> Option<BitBlock> {
        self(len)
    }
}

/// Input and output lengths of one Dodis invocation during seeding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DodisGeometry {
    pub n: usize,
    pub m: usize,
}

impl DodisGeometry {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if !is_admissible(n) {
            return Err(Error::InadmissibleLength { n });
        }
        if m == 0 || m > n {
            return Err(Error::invalid("dodis_m", format!("need 1 ≤ m ≤ n = {n}")));
        }
        Ok(DodisGeometry { n, m })
    }

    /// Sizes the inputs for `chunk_out` output bits from two sources of
    /// `h_min_per_bit` each: `n·(2h - 1) ≥ chunk_out + 2·log2(1/ε)`, rounded up
    /// to the smallest admissible prime.
    pub fn for_entropy(chunk_out: usize, h_min_per_bit: f64, epsilon: f64) -> Result<Self> {
        if !(h_min_per_bit > 0.5 && h_min_per_bit <= 1.0) {
            return Err(Error::invalid(
                "h_min_per_bit",
                format!("two-source seeding needs more than 1/2 bit of min-entropy per bit, got {h_min_per_bit}"),
            ));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid("epsilon", "must lie in (0, 1)"));
        }
        let needed = (chunk_out as f64 - 2.0 * epsilon.log2()) / (2.0 * h_min_per_bit - 1.0);
        let n = smallest_admissible((needed.ceil() as usize).max(chunk_out));
        DodisGeometry::new(n, chunk_out)
    }
}

/// Assembles an `n + m - 1` bit Toeplitz seed from repeated Dodis calls, each
/// fed two fresh raw blocks (`x` then `y`) from `source`.
pub fn seed_chain<S: BitSource + ?Sized>(
    source: &mut S,
    geometry: DodisGeometry,
    n: usize,
    m: usize,
) -> Result<ToeplitzSeed> {
    if m == 0 || m > n {
        return Err(Error::invalid(
            "m",
            format!("need 1 ≤ m ≤ n, got m = {m}, n = {n}"),
        ));
    }
    let needed = n + m - 1;
    let mut seed = BitBlock::with_capacity(needed + geometry.m);
    while seed.len() < needed {
        let exhausted = || Error::StreamExhausted {
            produced: seed.len(),
            needed,
        };
        let x = source.next_block(geometry.n).ok_or_else(exhausted)?;
        let y = source.next_block(geometry.n).ok_or_else(exhausted)?;
        seed.extend_from(&dodis_extract(&x, &y, geometry.m)?);
    }
    ToeplitzSeed::new(seed.slice(0, needed)?, n, m)
}
