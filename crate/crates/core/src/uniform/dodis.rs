//! Two-source extraction by cyclic convolution over GF(2).
//!
//! For an admissible length `n` (a prime with 2 as a primitive root, so that
//! `(t^n - 1)/(t - 1)` is irreducible over GF(2)) the extractor returns the
//! first `m` coefficients of `x(t)·y(t) mod (t^n - 1)`:
//! `z_i = ⊕_j x_j · y_((i - j) mod n)`.

use crate::bits::BitBlock;
use crate::error::{Error, Result};

/// Admissible lengths below 4100, ascending. Checked against
/// [`is_admissible`] in the tests.
pub const ADMISSIBLE_PRIMES: &[usize] = &[
    3, 5, 11, 13, 19, 29, 37, 53, 59, 61, 67, 83, 101, 107, 131, 139, 149, 163, 173, 179, 181, 197,
    211, 227, 269, 293, 317, 347, 349, 373, 379, 389, 419, 421, 443, 461, 467, 491, 509, 523, 541,
    547, 557, 563, 587, 613, 619, 653, 659, 661, 677, 701, 709, 757, 773, 787, 797, 821, 827, 829,
    853, 859, 877, 883, 907, 941, 947, 1019, 1061, 1091, 1109, 1117, 1123, 1171, 1187, 1213, 1229,
    1237, 1259, 1277, 1283, 1291, 1301, 1307, 1373, 1381, 1427, 1451, 1453, 1483, 1493, 1499, 1523,
    1531, 1549, 1571, 1619, 1621, 1637, 1667, 1669, 1693, 1733, 1741, 1747, 1787, 1861, 1867, 1877,
    1901, 1907, 1931, 1949, 1973, 1979, 1987, 1997, 2027, 2029, 2053, 2069, 2083, 2099, 2131, 2141,
    2213, 2221, 2237, 2243, 2267, 2269, 2293, 2309, 2333, 2339, 2357, 2371, 2389, 2437, 2459, 2467,
    2477, 2531, 2539, 2549, 2557, 2579, 2621, 2659, 2677, 2683, 2693, 2699, 2707, 2741, 2789, 2797,
    2803, 2819, 2837, 2843, 2851, 2861, 2909, 2939, 2957, 2963, 3011, 3019, 3037, 3067, 3083, 3187,
    3203, 3253, 3299, 3307, 3323, 3347, 3371, 3413, 3461, 3467, 3469, 3491, 3499, 3517, 3533, 3539,
    3547, 3557, 3571, 3581, 3613, 3637, 3643, 3659, 3677, 3691, 3701, 3709, 3733, 3779, 3797, 3803,
    3851, 3853, 3877, 3907, 3917, 3923, 3931, 3947, 3989, 4003, 4013, 4019, 4021, 4091, 4093, 4099,
];

fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// `n` is an odd prime and 2 generates the multiplicative group mod `n`.
pub fn is_admissible(n: usize) -> bool {
    if n < 3 || !is_prime(n) {
        return false;
    }
    let order = (n - 1) as u64;
    let mut rest = order;
    let mut f = 2;
    while f * f <= rest {
        if rest % f == 0 {
            if pow_mod(2, order / f, n as u64) == 1 {
                return false;
            }
            while rest % f == 0 {
                rest /= f;
            }
        }
        f += 1;
    }
    rest <= 1 || pow_mod(2, order / rest, n as u64) != 1
}

/// Smallest admissible length `>= at_least`.
pub fn smallest_admissible(at_least: usize) -> usize {
    match ADMISSIBLE_PRIMES.iter().find(|&&p| p >= at_least) {
        Some(&p) => p,
        None => (at_least.max(3)..)
            .find(|&n| is_admissible(n))
            .expect("admissible primes are unbounded"),
    }
}

/// First `m` bits of the cyclic GF(2) convolution of `x` and `y`.
pub fn dodis_extract(x: &BitBlock, y: &BitBlock, m: usize) -> Result<BitBlock> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if !is_admissible(n) {
        return Err(Error::InadmissibleLength { n });
    }
    if m > n {
        return Err(Error::invalid(
            "m",
            format!("output length {m} exceeds input length {n}"),
        ));
    }
    // yy = y ‖ y, so y_((i - j) mod n) = yy[n - j + i]
    let mut yy = y.clone();
    yy.extend_from(y);
    let words = m.div_ceil(64);
    let mut acc = vec![0u64; words];
    for j in (0..n).filter(|&j| x.get(j)) {
        let start = n - j;
        for (t, a) in acc.iter_mut().enumerate() {
            let pos = start + 64 * t;
            let take = (m - 64 * t).min(64) as u32;
            *a ^= yy.read_bits(pos, take) << (64 - take);
        }
    }
    BitBlock::from_words(acc, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive(x: &[bool], y: &[bool], m: usize) -> Vec<bool> {
        let n = x.len();
        (0..m)
            .map(|i| (0..n).fold(false, |acc, j| acc ^ (x[j] & y[(i + n - j) % n])))
            .collect()
    }

    #[test]
    fn table_is_exactly_the_admissible_set() {
        let computed: Vec<usize> = (0..4100).filter(|&n| is_admissible(n)).collect();
        assert_eq!(computed, ADMISSIBLE_PRIMES);
        assert_eq!(
            &ADMISSIBLE_PRIMES[..10],
            &[3, 5, 11, 13, 19, 29, 37, 53, 59, 61]
        );
        assert!(!is_admissible(7)); // 2 has order 3 mod 7
        assert!(!is_admissible(17));
        assert_eq!(smallest_admissible(690), 701);
        assert!(is_admissible(smallest_admissible(5000)));
    }

    #[test]
    fn unit_vector_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = BitBlock::random(61, &mut rng);
        let mut e0 = BitBlock::zeros(61);
        e0.set(0, true);
        assert_eq!(dodis_extract(&e0, &y, 40).unwrap(), y.slice(0, 40).unwrap());
        assert_eq!(
            dodis_extract(&BitBlock::zeros(61), &y, 61)
                .unwrap()
                .count_ones(),
            0
        );
    }

    #[test]
    fn matches_naive_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..10_000 {
            let x = BitBlock::random(19, &mut rng);
            let y = BitBlock::random(19, &mut rng);
            let out = dodis_extract(&x, &y, 19).unwrap();
            assert_eq!(out.to_bools(), naive(&x.to_bools(), &y.to_bools(), 19));
        }
        let x = BitBlock::random(701, &mut rng);
        let y = BitBlock::random(701, &mut rng);
        assert_eq!(
            dodis_extract(&x, &y, 256).unwrap().to_bools(),
            naive(&x.to_bools(), &y.to_bools(), 256)
        );
    }

    #[test]
    fn rejects_bad_lengths() {
        let z = BitBlock::zeros(7);
        assert_eq!(
            dodis_extract(&z, &z, 3),
            Err(Error::InadmissibleLength { n: 7 })
        );
        let z = BitBlock::zeros(11);
        assert!(dodis_extract(&z, &z, 12).is_err());
        assert!(dodis_extract(&z, &BitBlock::zeros(13), 5).is_err());
    }
}
