//! Digitizer model.
//!
//! Codes are signed two's-complement integers in `[-2^(N-1), 2^(N-1) - 1]`;
//! internally the code index is offset-binary (`code + 2^(N-1)`). The ideal
//! bin of code `c` is `[c·Δx, (c+1)·Δx)` with `Δx = range_v / 2^N`, so 0 V
//! lands in code 0 and the span is `[-range_v/2, range_v/2)`.
//!
//! Differential nonlinearity is modeled as independent jitter on every interior
//! bin edge, uniform in `±dnl_max·Δx/2`. Realized bin widths therefore stay
//! within `Δx(1 ± dnl_max)`, so `dnl_max` is a true bound on the width
//! deviation used by the nonlinear entropy bound. Edge offsets are derived from
//! a counter-based hash of `(dnl_seed, edge)`, so no table is stored even at 24 bits.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::{Channel, QuadratureFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcSpec {
    pub bits: u32,
    /// Full conversion span, peak-to-peak volts.
    pub range_v: f64,
    /// Bound on bin-width deviation, in units of the ideal bin width.
    #[serde(default)]
    pub dnl_max: f64,
    #[serde(default)]
    pub dnl_seed: u64,
}

impl Default for AdcSpec {
    /// 16-bit, 128 mVpp digitizer with a ±0.2 LSB DNL datasheet bound.
    fn default() -> Self {
        AdcSpec {
            bits: 16,
            range_v: 0.128,
            dnl_max: 0.2,
            dnl_seed: 0x5eed_0adc,
        }
    }
}

impl AdcSpec {
    pub fn ideal(bits: u32, range_v: f64) -> Self {
        AdcSpec {
            bits,
            range_v,
            dnl_max: 0.0,
            dnl_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(4..=24).contains(&self.bits) {
            return Err(Error::invalid(
                "bits",
                format!("{} not in [4, 24]", self.bits),
            ));
        }
        if !(self.range_v > 0.0 && self.range_v.is_finite()) {
            return Err(Error::invalid("range_v", "must be positive"));
        }
        if !(self.dnl_max >= 0.0) {
            return Err(Error::invalid("dnl_max", "must be non-negative"));
        }
        if self.dnl_max >= 0.5 {
            return Err(Error::invalid("dnl_max", "≥ 0.5 would allow inverted bins"));
        }
        Ok(())
    }

    pub fn bin_width(&self) -> f64 {
        self.range_v / (1u64 << self.bits) as f64
    }

    pub fn min_code(&self) -> i32 {
        -(1i32 << (self.bits - 1))
    }

    pub fn max_code(&self) -> i32 {
        (1i32 << (self.bits - 1)) - 1
    }

    /// Number of interior bin edges, `2^N - 1`.
    pub fn edge_count(&self) -> usize {
        (1usize << self.bits) - 1
    }

    /// Offset of interior edge `j` (0-based, the lower edge of code `min_code + 1 + j`), volts.
    #[inline]
    fn edge_offset(&self, j: u64) -> f64 {
        if self.dnl_max == 0.0 {
            return 0.0;
        }
        let h = splitmix64(self.dnl_seed ^ splitmix64(j));
        // uniform in [-1, 1)
        let u = (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
        u * 0.5 * self.dnl_max * self.bin_width()
    }

    /// Lower edge of `code`; the bottom code extends to -range_v/2.
    #[inline]
    pub fn lower_edge(&self, code: i32) -> f64 {
        let ideal = code as f64 * self.bin_width();
        if code <= self.min_code() {
            ideal
        } else {
            ideal + self.edge_offset((code - self.min_code() - 1) as u64)
        }
    }

    #[inline]
    pub fn upper_edge(&self, code: i32) -> f64 {
        if code >= self.max_code() {
            (code as f64 + 1.0) * self.bin_width()
        } else {
            self.lower_edge(code + 1)
        }
    }

    /// Code for one voltage and whether it was clamped at full scale.
    #[inline]
    pub fn code_for(&self, v: f64) -> (i32, bool) {
        let (lo, hi) = (self.min_code(), self.max_code());
        let guess = (v / self.bin_width()).floor();
        if guess.is_nan() || guess < lo as f64 {
            return (lo, true);
        }
        if guess > hi as f64 {
            return (hi, true);
        }
        let mut c = guess as i32;
        if c > lo && v < self.lower_edge(c) {
            c -= 1;
        } else if c < hi && v >= self.lower_edge(c + 1) {
            c += 1;
        }
        (c, false)
    }

    /// Bin center for `code`.
    pub fn dequantize(&self, code: i32) -> f64 {
        0.5 * (self.lower_edge(code) + self.upper_edge(code))
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-edge offsets in volts, one per interior edge, lowest edge first.
pub fn dnl_profile(spec: &AdcSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok((0..spec.edge_count() as u64)
        .map(|j| spec.edge_offset(j))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeBlock {
    pub codes: Vec<i32>,
    pub spec: AdcSpec,
    /// Samples that fell outside full scale and were clamped.
    pub clamped: usize,
}

impl CodeBlock {
    pub fn new(codes: Vec<i32>, spec: AdcSpec) -> Result<Self> {
        spec.validate()?;
        if let Some(c) = codes
            .iter()
            .find(|&&c| c < spec.min_code() || c > spec.max_code())
        {
            return Err(Error::invalid(
                "codes",
                format!("code {c} out of range for {} bits", spec.bits),
            ));
        }
        Ok(CodeBlock {
            codes,
            spec,
            clamped: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn clamped_fraction(&self) -> f64 {
        if self.codes.is_empty() {
            0.0
        } else {
            self.clamped as f64 / self.codes.len() as f64
        }
    }

    pub fn to_volts(&self) -> Vec<f64> {
        self.codes
            .iter()
            .map(|&c| self.spec.dequantize(c))
            .collect()
    }

    /// Little-endian i16 per code. Requires `bits <= 16`.
    pub fn write_i16_le<W: Write>(&self, mut w: W) -> Result<()> {
        if self.spec.bits > 16 {
            return Err(Error::invalid("bits", "i16 export needs at most 16 bits"));
        }
        let bytes: Vec<u8> = self
            .codes
            .iter()
            .flat_map(|&c| (c as i16).to_le_bytes())
            .collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_i16_le(bytes: &[u8], spec: AdcSpec) -> Result<Self> {
        if bytes.len() % 2 != 0 {
            return Err(Error::invalid("codes", "odd byte count in i16 file"));
        }
        let codes = bytes
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as i32)
            .collect();
        CodeBlock::new(codes, spec)
    }
}

pub fn quantize_channel(samples: &[f64], spec: &AdcSpec) -> Result<CodeBlock> {
    spec.validate()?;
    let mut clamped = 0;
    let codes = samples
        .iter()
        .map(|&v| {
            let (c, hit) = spec.code_for(v);
            clamped += hit as usize;
            c
        })
        .collect();
    Ok(CodeBlock {
        codes,
        spec: *spec,
        clamped,
    })
}

/// Digitizes both quadratures with the same converter model.
pub fn quantize(frame: &QuadratureFrame, spec: &AdcSpec) -> Result<(CodeBlock, CodeBlock)> {
    Ok((
        quantize_channel(frame.channel(Channel::I), spec)?,
        quantize_channel(frame.channel(Channel::Q), spec)?,
    ))
}
