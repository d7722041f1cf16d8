//! Carry-less (GF(2)[t]) multiplication on 64-bit limbs.
//!
//! Polynomials are little-endian limb vectors: coefficient `k` is bit `k % 64`
//! of limb `k / 64`. On x86-64 with PCLMULQDQ the hardware instruction is used;
//! elsewhere a 4-bit windowed software multiply.

/// Full 128-bit carry-less product as `(low, high)`.
#[inline]
pub fn clmul64(a: u64, b: u64) -> (u64, u64) {
    #[cfg(target_arch = "x86_64")]
    {
        if has_pclmul() {
            // SAFETY: guarded by runtime feature detection.
            return unsafe { clmul64_pclmul(a, b) };
        }
    }
    clmul64_soft(a, b)
}

#[cfg(target_arch = "x86_64")]
#[inline]
fn has_pclmul() -> bool {
    use std::sync::OnceLock;
    static DETECTED: OnceLock<bool> = OnceLock::new();
    *DETECTED.get_or_init(|| std::arch::is_x86_feature_detected!("pclmulqdq"))
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "pclmulqdq")]
unsafe fn clmul64_pclmul(a: u64, b: u64) -> (u64, u64) {
    use std::arch::x86_64::*;
    let va = _mm_set_epi64x(0, a as i64);
    let vb = _mm_set_epi64x(0, b as i64);
    let r = _mm_clmulepi64_si128(va, vb, 0x00);
    let lo = _mm_cvtsi128_si64(r) as u64;
    let hi = _mm_cvtsi128_si64(_mm_unpackhi_epi64(r, r)) as u64;
    (lo, hi)
}

/// Portable windowed multiply.
pub fn clmul64_soft(a: u64, b: u64) -> (u64, u64) {
    // table[i] = a · i for 4-bit i, as 68-bit values split into (lo, hi)
    let mut table = [(0u64, 0u64); 16];
    for i in 1..16usize {
        let mut lo = 0u64;
        let mut hi = 0u64;
        for bit in 0..4 {
            if i >> bit & 1 == 1 {
                lo ^= a << bit;
                if bit > 0 {
                    hi ^= a >> (64 - bit);
                }
            }
        }
        table[i] = (lo, hi);
    }
    let mut lo = 0u64;
    let mut hi = 0u64;
    for nib in (0..16).rev() {
        // shift accumulator left by 4
        hi = (hi << 4) | (lo >> 60);
        lo <<= 4;
        let (tl, th) = table[((b >> (nib * 4)) & 0xF) as usize];
        lo ^= tl;
        hi ^= th;
    }
    (lo, hi)
}

/// Reference bit-by-bit multiply.
pub fn clmul64_naive(a: u64, b: u64) -> (u64, u64) {
    let mut lo = 0u64;
    let mut hi = 0u64;
    for i in 0..64 {
        if b >> i & 1 == 1 {
            lo ^= a << i;
            if i > 0 {
                hi ^= a >> (64 - i);
            }
        }
    }
    (lo, hi)
}

/// `out = a · b` over GF(2); `out` must hold `a.len() + b.len()` limbs.
pub fn poly_mul(a: &[u64], b: &[u64], out: &mut [u64]) {
    assert!(out.len() >= a.len() + b.len());
    out.iter_mut().for_each(|w| *w = 0);
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            let (lo, hi) = clmul64(x, y);
            out[i + j] ^= lo;
            out[i + j + 1] ^= hi;
        }
    }
}

/// Limbs `[first, last]` (inclusive) of `a · b`, written to `out[0..]`.
/// Skips every partial product that cannot reach the window.
pub fn poly_mul_window(a: &[u64], b: &[u64], first: usize, last: usize, out: &mut [u64]) {
    let width = last - first + 1;
    assert!(out.len() >= width);
    out[..width].iter_mut().for_each(|w| *w = 0);
    for (j, &y) in b.iter().enumerate() {
        if y == 0 || j > last {
            continue;
        }
        // limb i of a lands in limbs i + j and i + j + 1
        let i_lo = (first + 1).saturating_sub(j + 1).saturating_sub(1);
        let i_hi = (last - j).min(a.len() - 1);
        for i in i_lo..=i_hi {
            let (lo, hi) = clmul64(a[i], y);
            let k = i + j;
            if k >= first && k <= last {
                out[k - first] ^= lo;
            }
            if k + 1 >= first && k < last {
                out[k + 1 - first] ^= hi;
            }
        }
    }
}
