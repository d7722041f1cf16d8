//! Seeded Toeplitz hashing over GF(2).
//!
//! Matrix convention: the extractor maps `n` input bits to `m` output bits with
//! an `m × n` matrix `T[j][k] = s[j + n - 1 - k]` built from seed bits
//! `s[0 .. n + m - 1]`. The first row (top, left to right) is
//! `s[n-1], s[n-2], …, s[0]`; the first column (top to bottom) is
//! `s[n-1], s[n], …, s[n+m-2]`; every other entry copies its upper-left
//! neighbour. Output bit `j` is `⊕_k T[j][k] · x[k]`.
//!
//! Read as polynomials `S(t) = Σ s_i t^i` and `X(t) = Σ x_k t^k`, output bit `j`
//! is the coefficient of `t^(n-1+j)` in `S·X`, which is what the fast path
//! computes with carry-less multiplication.
//!
//! Worked example (`n = 4`, `m = 2`, seed `10110`, input `1100`):
//! row 0 is `1101`, row 1 is `0110`, output is `01`.

use std::io::{Read, Write};

use rayon::prelude::*;

use super::clmul::poly_mul_window;
use crate::bits::BitBlock;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToeplitzSeed {
    bits: BitBlock,
    n: usize,
    m: usize,
}

impl ToeplitzSeed {
    pub fn new(bits: BitBlock, n: usize, m: usize) -> Result<Self> {
        if m == 0 || m > n {
            return Err(Error::invalid(
                "m",
                format!("need 1 ≤ m ≤ n, got m = {m}, n = {n}"),
            ));
        }
        if bits.len() != n + m - 1 {
            return Err(Error::LengthMismatch {
                expected: n + m - 1,
                actual: bits.len(),
            });
        }
        Ok(ToeplitzSeed { bits, n, m })
    }

    pub fn bits(&self) -> &BitBlock {
        &self.bits
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Matrix entry `T[row][col]`.
    pub fn entry(&self, row: usize, col: usize) -> bool {
        self.bits.get(row + self.n - 1 - col)
    }

    /// Cache file layout: u32 LE `n`, u32 LE `m`, then the `n + m - 1` seed bits
    /// packed MSB-first, zero-padded to a whole byte.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&(self.m as u32).to_le_bytes())?;
        w.write_all(&self.bits.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 8];
        r.read_exact(&mut header)?;
        let n = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
        let m = u32::from_le_bytes(header[4..].try_into().unwrap()) as usize;
        if m == 0 || m > n {
            return Err(Error::invalid(
                "seed file",
                format!("bad geometry n = {n}, m = {m}"),
            ));
        }
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        let len = n + m - 1;
        if body.len() != len.div_ceil(8) {
            return Err(Error::LengthMismatch {
                expected: len.div_ceil(8),
                actual: body.len(),
            });
        }
        ToeplitzSeed::new(BitBlock::from_bytes(&body, len)?, n, m)
    }
}

fn check_input(input: &BitBlock, seed: &ToeplitzSeed, m: usize) -> Result<()> {
    if input.len() != seed.n {
        return Err(Error::LengthMismatch {
            expected: seed.n,
            actual: input.len(),
        });
    }
    if m != seed.m {
        return Err(Error::LengthMismatch {
            expected: seed.m,
            actual: m,
        });
    }
    Ok(())
}

/// Direct matrix-vector product, one parity per output bit.
pub fn toeplitz_extract(input: &BitBlock, seed: &ToeplitzSeed, m: usize) -> Result<BitBlock> {
    check_input(input, seed, m)?;
    let x = input.to_bools();
    let s = seed.bits.to_bools();
    let n = seed.n;
    let mut out = BitBlock::zeros(m);
    for j in 0..m {
        let mut parity = false;
        for (k, &xk) in x.iter().enumerate() {
            parity ^= xk & s[j + n - 1 - k];
        }
        out.set(j, parity);
    }
    Ok(out)
}

/// Toeplitz hashing by carry-less multiplication. Holds the seed in limb form so
/// repeated extractions with a cached seed skip the conversion.
#[derive(Debug, Clone)]
pub struct ToeplitzKernel {
    seed: ToeplitzSeed,
    seed_limbs: Vec<u64>,
    first_limb: usize,
    last_limb: usize,
}

/// MSB-first block words to little-endian polynomial limbs.
fn to_limbs(bits: &BitBlock) -> Vec<u64> {
    bits.words().iter().map(|w| w.reverse_bits()).collect()
}

impl ToeplitzKernel {
    pub fn new(seed: ToeplitzSeed) -> Self {
        let n = seed.n;
        let m = seed.m;
        ToeplitzKernel {
            seed_limbs: to_limbs(&seed.bits),
            first_limb: (n - 1) / 64,
            last_limb: (n + m - 2) / 64,
            seed,
        }
    }

    pub fn seed(&self) -> &ToeplitzSeed {
        &self.seed
    }

    pub fn n(&self) -> usize {
        self.seed.n
    }

    pub fn m(&self) -> usize {
        self.seed.m
    }

    pub fn extract(&self, input: &BitBlock) -> Result<BitBlock> {
        check_input(input, &self.seed, self.seed.m)?;
        let mut window = vec![0u64; self.last_limb - self.first_limb + 2];
        Ok(self.extract_with(input, &mut window))
    }

    fn extract_with(&self, input: &BitBlock, window: &mut [u64]) -> BitBlock {
        let x = to_limbs(input);
        let width = self.last_limb - self.first_limb + 1;
        poly_mul_window(
            &self.seed_limbs,
            &x,
            self.first_limb,
            self.last_limb,
            &mut window[..width],
        );
        window[width] = 0;
        // coefficient n-1+j sits at bit `shift + j` of the window
        let shift = (self.seed.n - 1) % 64;
        let m = self.seed.m;
        let words = (0..m.div_ceil(64))
            .map(|t| {
                let lo = window[t] >> shift;
                let hi = if shift == 0 {
                    0
                } else {
                    window[t + 1] << (64 - shift)
                };
                (lo | hi).reverse_bits()
            })
            .collect();
        BitBlock::from_words(words, m).expect("word count matches m")
    }

    /// Extracts many blocks in parallel on the current rayon pool; output order follows input order.
    pub fn extract_batch(&self, inputs: &[BitBlock]) -> Result<Vec<BitBlock>> {
        for input in inputs {
            check_input(input, &self.seed, self.seed.m)?;
        }
        let width = self.last_limb - self.first_limb + 2;
        Ok(inputs
            .par_iter()
            .map_init(
                || vec![0u64; width],
                |window, input| self.extract_with(input, window),
            )
            .collect())
    }
}

/// Same contract as [`toeplitz_extract`], computed by carry-less multiplication.
pub fn toeplitz_extract_fast(input: &BitBlock, seed: &ToeplitzSeed, m: usize) -> Result<BitBlock> {
    check_input(input, seed, m)?;
    ToeplitzKernel::new(seed.clone()).extract(input)
}
