//! Packed bit strings.
//!
//! Bit `i` of a [`BitBlock`] lives in word `i / 64` at position `63 - i % 64`,
//! so the block serializes to bytes MSB-first by writing each word big-endian.
//! Padding bits past `len` are always zero.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitBlock {
    words: Vec<u64>,
    len: usize,
}

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitBlock {
    pub fn zeros(len: usize) -> Self {
        BitBlock {
            words: vec![0; words_for(len)],
            len,
        }
    }

    pub fn with_capacity(bits: usize) -> Self {
        BitBlock {
            words: Vec::with_capacity(words_for(bits)),
            len: 0,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut out = BitBlock::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                out.set(i, true);
            }
        }
        out
    }

    /// Parses a string of `0`/`1` characters, ignoring whitespace and `_`.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::invalid(
                    "bits",
                    format!("unexpected character {other:?}"),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_bools(&bits))
    }

    /// Takes the first `len` bits of `bytes`, MSB-first.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if len > bytes.len() * 8 {
            return Err(Error::InsufficientSamples {
                needed: len,
                got: bytes.len() * 8,
            });
        }
        let mut words = vec![0u64; words_for(len)];
        for (w, chunk) in words.iter_mut().zip(bytes.chunks(8)) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            *w = u64::from_be_bytes(buf);
        }
        let mut out = BitBlock { words, len };
        out.clear_padding();
        Ok(out)
    }

    /// Builds a block from raw words in the internal MSB-first layout.
    pub fn from_words(words: Vec<u64>, len: usize) -> Result<Self> {
        if words.len() != words_for(len) {
            return Err(Error::LengthMismatch {
                expected: words_for(len),
                actual: words.len(),
            });
        }
        let mut out = BitBlock { words, len };
        out.clear_padding();
        Ok(out)
    }

    /// Concatenates the low `bits` bits of every code, most significant first.
    /// Negative codes contribute their two's-complement pattern.
    pub fn from_codes(codes: &[i32], bits: u32) -> Self {
        let mut out = BitBlock::with_capacity(codes.len() * bits as usize);
        let mask = if bits == 32 {
            u32::MAX
        } else {
            (1u32 << bits) - 1
        };
        for &c in codes {
            out.push_bits(u64::from(c as u32 & mask), bits);
        }
        out
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let words = (0..words_for(len)).map(|_| rng.random::<u64>()).collect();
        let mut out = BitBlock { words, len };
        out.clear_padding();
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        (self.words[i / 64] >> (63 - i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        let mask = 1u64 << (63 - i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn push(&mut self, value: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, value);
    }

    /// Appends the low `count` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, count: u32) {
        debug_assert!(count <= 64);
        if count == 0 {
            return;
        }
        let value = if count == 64 {
            value
        } else {
            value & ((1u64 << count) - 1)
        };
        let offset = (self.len % 64) as u32;
        if offset == 0 {
            self.words.push(value << (64 - count));
        } else {
            let free = 64 - offset;
            let last = self.words.len() - 1;
            if count <= free {
                self.words[last] |= value << (free - count);
            } else {
                self.words[last] |= value >> (count - free);
                self.words.push(value << (64 - (count - free)));
            }
        }
        self.len += count as usize;
    }

    pub fn extend_from(&mut self, other: &BitBlock) {
        if self.len % 64 == 0 {
            self.words.extend_from_slice(&other.words);
            self.len += other.len;
            return;
        }
        let mut remaining = other.len;
        for &w in &other.words {
            let take = remaining.min(64) as u32;
            self.push_bits(w >> (64 - take), take);
            remaining -= take as usize;
        }
    }

    /// Copies bits `[start, start + len)` into a new block.
    pub fn slice(&self, start: usize, len: usize) -> Result<BitBlock> {
        if start + len > self.len {
            return Err(Error::InsufficientSamples {
                needed: start + len,
                got: self.len,
            });
        }
        let mut out = BitBlock::with_capacity(len);
        let mut pos = start;
        let end = start + len;
        while pos < end {
            let take = (end - pos).min(64) as u32;
            out.push_bits(self.read_bits(pos, take), take);
            pos += take as usize;
        }
        Ok(out)
    }

    /// Reads `count <= 64` bits starting at `pos` as an integer (first bit most significant).
    pub fn read_bits(&self, pos: usize, count: u32) -> u64 {
        debug_assert!(count <= 64 && pos + count as usize <= self.len);
        if count == 0 {
            return 0;
        }
        let w = pos / 64;
        let off = (pos % 64) as u32;
        let hi = self.words[w] << off;
        let combined = if off == 0 || w + 1 >= self.words.len() {
            hi
        } else {
            hi | (self.words[w + 1] >> (64 - off))
        };
        combined >> (64 - count)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn xor(&self, other: &BitBlock) -> Result<BitBlock> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                actual: other.len,
            });
        }
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a ^ b)
            .collect();
        Ok(BitBlock {
            words,
            len: self.len,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.iter().collect()
    }

    /// MSB-first bytes; a partial final byte is zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_be_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
    }

    fn clear_padding(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= !0u64 << (64 - rem);
            }
        }
    }
}

impl fmt::Debug for BitBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitBlock({}; ", self.len)?;
        for (i, b) in self.iter().take(128).enumerate() {
            if i > 0 && i % 8 == 0 {
                f.write_str("_")?;
            }
            f.write_str(if b { "1" } else { "0" })?;
        }
        if self.len > 128 {
            f.write_str("…")?;
        }
        f.write_str(")")
    }
}
