//! Gaussian extraction: MSB truncation followed by repeated orthogonal
//! mixing of a normalized pool (Wallace-style recursive matrix passes).

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::adc::CodeBlock;
use crate::entropy::EntropyReport;
use crate::error::{Error, Result};
use crate::source::Channel;
use crate::stats::{gof_pair, GofReport, ReferenceKind, DEFAULT_ALPHA};

pub const DEFAULT_K: usize = 4;
pub const DEFAULT_POOL_SIZE: usize = 65_536;
pub const DEFAULT_PASSES_I: u32 = 5;
pub const DEFAULT_PASSES_Q: u32 = 4;
pub const DEFAULT_GRID_SIGMA: f64 = 5.0;
pub const DEFAULT_GOF_BINS: usize = 100;
/// Upper bound on passes in auto mode.
pub const AUTO_MAX_PASSES: u32 = 32;

const ORTHOGONALITY_TOLERANCE: f64 = 1e-12;

/// Keeps the top `m_bits` of each code, sign preserved (arithmetic shift).
pub fn msb_truncate(codes: &CodeBlock, m_bits: u32) -> Result<Vec<i32>> {
    let bits = codes.spec.bits;
    if m_bits == 0 || m_bits > bits {
        return Err(Error::invalid(
            "m_bits",
            format!("need 1 ≤ m_bits ≤ {bits}, got {m_bits}"),
        ));
    }
    let shift = bits - m_bits;
    Ok(codes.codes.iter().map(|&c| c >> shift).collect())
}

/// Real values for truncated codes: the center of each coarse bin.
pub fn truncated_values(truncated: &[i32]) -> Vec<f64> {
    truncated.iter().map(|&c| c as f64 + 0.5).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPool {
    pub values: Vec<f64>,
    pub k: usize,
    pub l: usize,
    pub pass_count: u32,
}

impl GaussianPool {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
    }
}

/// Scales `values` to unit mean square and arranges them as `l` groups of `k`.
pub fn normalize_pool(mut values: Vec<f64>, k: usize) -> Result<GaussianPool> {
    if k < 2 {
        return Err(Error::invalid("k", "group size must be at least 2"));
    }
    if values.is_empty() || values.len() % k != 0 {
        return Err(Error::invalid(
            "pool_size",
            format!("{} values do not split into groups of {k}", values.len()),
        ));
    }
    let ms = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
    if !(ms > 0.0) || !ms.is_finite() {
        return Err(Error::ZeroPool);
    }
    let scale = ms.sqrt().recip();
    values.iter_mut().for_each(|v| *v *= scale);
    let l = values.len() / k;
    Ok(GaussianPool {
        values,
        k,
        l,
        pass_count: 0,
    })
}

/// Orthogonal `k×k` mixing matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveMatrix {
    k: usize,
    entries: Vec<f64>,
}

impl RecursiveMatrix {
    pub fn new(k: usize, entries: Vec<f64>) -> Result<Self> {
        if k < 2 || entries.len() != k * k {
            return Err(Error::LengthMismatch {
                expected: k * k,
                actual: entries.len(),
            });
        }
        let m = RecursiveMatrix { k, entries };
        let deviation = m.orthogonality_deviation();
        if !(deviation <= ORTHOGONALITY_TOLERANCE) {
            return Err(Error::NotOrthogonal { deviation });
        }
        Ok(m)
    }

    /// Sylvester Hadamard matrix scaled by `1/√k`; `k` must be a power of two.
    pub fn hadamard(k: usize) -> Result<Self> {
        if k < 2 || !k.is_power_of_two() {
            return Err(Error::invalid(
                "k",
                "Hadamard order must be a power of two ≥ 2",
            ));
        }
        let scale = (k as f64).sqrt().recip();
        let entries = (0..k * k)
            .map(|idx| {
                let (r, c) = (idx / k, idx % k);
                if (r & c).count_ones() % 2 == 0 {
                    scale
                } else {
                    -scale
                }
            })
            .collect();
        RecursiveMatrix::new(k, entries)
    }

    pub fn identity(k: usize) -> Result<Self> {
        RecursiveMatrix::new(
            k,
            (0..k * k)
                .map(|i| f64::from(u8::from(i / k == i % k)))
                .collect(),
        )
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.k + col]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    /// `max |MᵀM − I|` over all entries.
    pub fn orthogonality_deviation(&self) -> f64 {
        let k = self.k;
        let mut worst = 0.0f64;
        for a in 0..k {
            for b in 0..k {
                let dot: f64 = (0..k).map(|r| self.entry(r, a) * self.entry(r, b)).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.entries[r * self.k..(r + 1) * self.k]
                .iter()
                .zip(input)
                .map(|(m, x)| m * x)
                .sum();
        }
    }
}

impl Serialize for RecursiveMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RecursiveMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(serde::de::Error::custom("matrix must be square"));
        }
        RecursiveMatrix::new(k, rows.concat()).map_err(serde::de::Error::custom)
    }
}

/// One mixing pass. Group `j` gathers `values[j + c·l]` for `c < k` (reading the
/// `k×l` arrangement by column), is multiplied by `matrix`, and lands at
/// `j·k .. j·k + k`. The global sum of squares is then restored.
pub fn wallace_pass(pool: &GaussianPool, matrix: &RecursiveMatrix) -> Result<GaussianPool> {
    let (k, l) = (pool.k, pool.l);
    if matrix.k() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            actual: matrix.k(),
        });
    }
    if pool.values.len() != k * l {
        return Err(Error::LengthMismatch {
            expected: k * l,
            actual: pool.values.len(),
        });
    }
    let deviation = matrix.orthogonality_deviation();
    if !(deviation <= ORTHOGONALITY_TOLERANCE) {
        return Err(Error::NotOrthogonal { deviation });
    }
    let before: f64 = pool.values.iter().map(|v| v * v).sum();
    let src = &pool.values;
    let mut out = vec![0.0; k * l];
    out.par_chunks_mut(k)
        .enumerate()
        .with_min_len(256)
        .for_each_init(
            || vec![0.0; k],
            |group, (j, dst)| {
                for (c, g) in group.iter_mut().enumerate() {
                    *g = src[j + c * l];
                }
                matrix.apply(group, dst);
            },
        );
    let after: f64 = out.iter().map(|v| v * v).sum();
    if after > 0.0 {
        let fix = (before / after).sqrt();
        out.iter_mut().for_each(|v| *v *= fix);
    }
    Ok(GaussianPool {
        values: out,
        k,
        l,
        pass_count: pool.pass_count + 1,
    })
}

/// Rounds unit-variance values onto a symmetric `n_out`-bit grid spanning
/// `±grid_sigma`, returning signed grid indices.
pub fn requantize(values: &[f64], n_out: u32, grid_sigma: f64) -> Result<Vec<i32>> {
    if !(2..=16).contains(&n_out) {
        return Err(Error::invalid(
            "n_out",
            format!("output precision {n_out} outside 2..=16 bits"),
        ));
    }
    if !(grid_sigma > 0.0) {
        return Err(Error::invalid("output_grid_sigma", "must be positive"));
    }
    let half = 1i64 << (n_out - 1);
    let scale = half as f64 / grid_sigma;
    Ok(values
        .iter()
        .map(|&x| ((x * scale).round() as i64).clamp(-half, half - 1) as i32)
        .collect())
}

/// Pass count per channel: a fixed number, or run until both GoF tests pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Passes {
    Fixed(u32),
    Auto,
}

impl Serialize for Passes {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Passes::Fixed(n) => s.serialize_u32(*n),
            Passes::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for Passes {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u32),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Passes::Fixed(n)),
            Raw::S(s) if s == "auto" => Ok(Passes::Auto),
            Raw::S(s) => Err(serde::de::Error::custom(format!(
                "passes must be an integer or \"auto\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianConfig {
    pub k: usize,
    pub pool_size: usize,
    pub passes_i: Passes,
    pub passes_q: Passes,
    /// Inline `k×k` matrix; the scaled Hadamard matrix when absent.
    pub matrix: Option<RecursiveMatrix>,
    pub output_grid_sigma: f64,
    pub gof_bins: usize,
    pub alpha: f64,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        GaussianConfig {
            k: DEFAULT_K,
            pool_size: DEFAULT_POOL_SIZE,
            passes_i: Passes::Fixed(DEFAULT_PASSES_I),
            passes_q: Passes::Fixed(DEFAULT_PASSES_Q),
            matrix: None,
            output_grid_sigma: DEFAULT_GRID_SIGMA,
            gof_bins: DEFAULT_GOF_BINS,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl GaussianConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid("k", "group size must be at least 2"));
        }
        if self.pool_size == 0 || self.pool_size % self.k != 0 {
            return Err(Error::invalid(
                "pool_size",
                format!("must be a positive multiple of k = {}", self.k),
            ));
        }
        for (name, p) in [("passes_i", self.passes_i), ("passes_q", self.passes_q)] {
            if p == Passes::Fixed(0) {
                return Err(Error::invalid(name, "at least one pass is required"));
            }
        }
        if let Some(m) = &self.matrix {
            if m.k() != self.k {
                return Err(Error::invalid(
                    "matrix",
                    format!("is {0}×{0}, k = {1}", m.k(), self.k),
                ));
            }
        }
        if !(self.output_grid_sigma > 0.0) {
            return Err(Error::invalid("output_grid_sigma", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Result<RecursiveMatrix> {
        match &self.matrix {
            Some(m) => Ok(m.clone()),
            None => RecursiveMatrix::hadamard(self.k),
        }
    }

    pub fn passes(&self, channel: Channel) -> Passes {
        match channel {
            Channel::I => self.passes_i,
            Channel::Q => self.passes_q,
        }
    }
}

/// `n = m + k − 1`.
pub fn output_precision(m_bits: u32, k: usize) -> u32 {
    m_bits + k as u32 - 1
}

/// Extracted fixed-point Gaussian values for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianOutput {
    pub channel: Option<Channel>,
    /// Signed grid indices, `n_out` bits wide.
    pub codes: Vec<i32>,
    pub n_out: u32,
    pub m_bits: u32,
    pub grid_sigma: f64,
    pub passes: u32,
    pub gof: Vec<GofReport>,
}

impl GaussianOutput {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Values in units of the pool standard deviation.
    pub fn values(&self) -> Vec<f64> {
        let step = self.grid_sigma / (1u32 << (self.n_out - 1)) as f64;
        self.codes.iter().map(|&c| c as f64 * step).collect()
    }

    /// Grid indices left-justified in 16 bits.
    pub fn left_justified(&self) -> Vec<i16> {
        let shift = 16 - self.n_out;
        self.codes.iter().map(|&c| (c << shift) as i16).collect()
    }

    pub fn write_i16_le<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for v in self.left_justified() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn passed(&self) -> bool {
        self.gof.iter().all(|g| g.pass)
    }
}

/// KS and chi-squared of raw codes against a fitted Gaussian.
pub fn code_gof(codes: &[i32], bins: usize, alpha: f64) -> Result<[GofReport; 2]> {
    gof_pair(
        &truncated_values(codes),
        ReferenceKind::Gaussian,
        bins,
        alpha,
    )
}

/// Full chain for one channel: truncate, then per pool normalize, mix and
/// requantize. Trailing codes that do not fill a pool are left unused.
pub fn gaussian_extract_channel(
    codes: &CodeBlock,
    m_bits: u32,
    passes: Passes,
    cfg: &GaussianConfig,
) -> Result<GaussianOutput> {
    cfg.validate()?;
    if codes.len() < cfg.pool_size {
        return Err(Error::InsufficientSamples {
            needed: cfg.pool_size,
            got: codes.len(),
        });
    }
    let matrix = cfg.matrix()?;
    let n_out = output_precision(m_bits, cfg.k);
    let values = truncated_values(&msb_truncate(codes, m_bits)?);
    let pools: Vec<GaussianPool> = values
        .chunks_exact(cfg.pool_size)
        .map(|c| normalize_pool(c.to_vec(), cfg.k))
        .collect::<Result<_>>()?;

    let emit = |pools: &[GaussianPool], passes: u32| -> Result<GaussianOutput> {
        let mut out = Vec::with_capacity(pools.len() * cfg.pool_size);
        for p in pools {
            out.extend(requantize(&p.values, n_out, cfg.output_grid_sigma)?);
        }
        let step = cfg.output_grid_sigma / (1u32 << (n_out - 1)) as f64;
        let vals: Vec<f64> = out.iter().map(|&c| c as f64 * step).collect();
        let gof = gof_pair(&vals, ReferenceKind::Gaussian, cfg.gof_bins, cfg.alpha)?.to_vec();
        Ok(GaussianOutput {
            channel: None,
            codes: out,
            n_out,
            m_bits,
            grid_sigma: cfg.output_grid_sigma,
            passes,
            gof,
        })
    };

    let mix = |pools: Vec<GaussianPool>| -> Result<Vec<GaussianPool>> {
        pools.iter().map(|p| wallace_pass(p, &matrix)).collect()
    };

    match passes {
        Passes::Fixed(n) => {
            let mut pools = pools;
            for _ in 0..n {
                pools = mix(pools)?;
            }
            emit(&pools, n)
        }
        Passes::Auto => {
            let mut pools = pools;
            let mut last = None;
            for n in 1..=AUTO_MAX_PASSES {
                pools = mix(pools)?;
                let o = emit(&pools, n)?;
                if o.passed() {
                    return Ok(o);
                }
                last = Some(o);
            }
            Ok(last.expect("at least one pass"))
        }
    }
}

/// Both channels, run in parallel. `m_bits` comes from the report's MSB rule.
pub fn gaussian_extract(
    codes_i: &CodeBlock,
    codes_q: &CodeBlock,
    report: &EntropyReport,
    cfg: &GaussianConfig,
) -> Result<(GaussianOutput, GaussianOutput)> {
    let m_bits = report.msb_count();
    let (i, q) = rayon::join(
        || gaussian_extract_channel(codes_i, m_bits, cfg.passes_i, cfg),
        || gaussian_extract_channel(codes_q, m_bits, cfg.passes_q, cfg),
    );
    let (mut i, mut q) = (i?, q?);
    i.channel = Some(Channel::I);
    q.channel = Some(Channel::Q);
    Ok((i, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adc::AdcSpec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussians(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn truncation_examples() {
        let spec = AdcSpec::ideal(16, 0.128);
        let block = CodeBlock::new(vec![0x7FFF, -1, -32768, 31, 32], spec).unwrap();
        assert_eq!(
            msb_truncate(&block, 11).unwrap(),
            vec![0x03FF, -1, -1024, 0, 1]
        );
        assert_eq!(msb_truncate(&block, 16).unwrap(), block.codes);
        assert!(msb_truncate(&block, 0).is_err());
        assert!(msb_truncate(&block, 17).is_err());
    }

    #[test]
    fn default_precision() {
        assert_eq!(output_precision(11, 4), 14);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize_pool(vec![2.0; 4], 4).unwrap().values,
            vec![1.0; 4]
        );
        let alt = vec![1.0, -1.0, 1.0, -1.0];
        assert_eq!(normalize_pool(alt.clone(), 2).unwrap().values, alt);
        assert_eq!(
            normalize_pool(vec![0.0; 8], 4).unwrap_err(),
            Error::ZeroPool
        );
        assert!(normalize_pool(vec![1.0; 6], 4).is_err());
        let p = normalize_pool(
            gaussians(4096, 1).iter().map(|x| 3.0 * x + 1.0).collect(),
            4,
        )
        .unwrap();
        assert!((p.mean_square() - 1.0).abs() < 1e-12);
        assert_eq!((p.k, p.l), (4, 1024));
    }

    #[test]
    fn hadamard_is_orthogonal_with_half_entries() {
        let h = RecursiveMatrix::hadamard(4).unwrap();
        assert!(h.orthogonality_deviation() < 1e-15);
        assert!(h
            .rows()
            .iter()
            .flatten()
            .all(|&e| (e.abs() - 0.5).abs() < 1e-15));
        assert!(matches!(
            RecursiveMatrix::new(2, vec![1.0, 1.0, 0.0, 1.0]),
            Err(Error::NotOrthogonal { .. })
        ));
    }

    #[test]
    fn identity_pass_only_permutes() {
        let p = normalize_pool(gaussians(64, 2), 4).unwrap();
        let out = wallace_pass(&p, &RecursiveMatrix::identity(4).unwrap()).unwrap();
        let mut a = p.values.clone();
        let mut b = out.values.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        assert_ne!(p.values, out.values);
        // transpose: value at j + c·l moves to j·k + c
        assert_eq!(out.values[4 * 3 + 2], p.values[3 + 2 * 16]);
        assert_eq!(out.pass_count, 1);
    }

    #[test]
    fn sum_of_squares_is_kept() {
        let p = normalize_pool(gaussians(4096, 3), 4).unwrap();
        let mut cur = p;
        for _ in 0..5 {
            cur = wallace_pass(&cur, &RecursiveMatrix::hadamard(4).unwrap()).unwrap();
            assert!((cur.mean_square() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_pool_stays_gaussian() {
        let h = RecursiveMatrix::hadamard(4).unwrap();
        let mut pool = normalize_pool(gaussians(65_536, 4), 4).unwrap();
        for _ in 0..5 {
            pool = wallace_pass(&pool, &h).unwrap();
            let r = crate::stats::ks_test(
                &pool.values,
                &crate::stats::Reference::standard_gaussian(),
                0.01,
            )
            .unwrap();
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn one_input_reaches_most_outputs() {
        let h = RecursiveMatrix::hadamard(4).unwrap();
        let base = normalize_pool(gaussians(4096, 5), 4).unwrap();
        let mut flipped = base.clone();
        flipped.values[1234] = -flipped.values[1234];
        let (mut a, mut b) = (base, flipped);
        // ⌈log4 4096⌉ = 6
        for _ in 0..6 {
            a = wallace_pass(&a, &h).unwrap();
            b = wallace_pass(&b, &h).unwrap();
        }
        let changed = a
            .values
            .iter()
            .zip(&b.values)
            .filter(|(x, y)| (*x - *y).abs() > 1e-12 * x.abs().max(1e-300))
            .count();
        assert!(changed * 2 >= a.len(), "{changed}");
    }

    #[test]
    fn requantize_grid() {
        let q = requantize(&[0.0, 5.0, -5.0, 10.0, 5.0 / 8192.0 * 0.6], 14, 5.0).unwrap();
        assert_eq!(q, vec![0, 8191, -8192, 8191, 1]);
        assert!(requantize(&[0.0], 17, 5.0).is_err());
    }

    #[test]
    fn passes_parse() {
        #[derive(Deserialize)]
        struct T {
            p: Passes,
        }
        assert_eq!(toml::from_str::<T>("p = 5").unwrap().p, Passes::Fixed(5));
        assert_eq!(toml::from_str::<T>("p = \"auto\"").unwrap().p, Passes::Auto);
        assert!(toml::from_str::<T>("p = \"many\"").is_err());
    }

    #[test]
    fn config_matrix_round_trip() {
        let cfg = GaussianConfig {
            matrix: Some(RecursiveMatrix::hadamard(4).unwrap()),
            ..Default::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: GaussianConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert!(
            toml::from_str::<GaussianConfig>("matrix = [[1.0, 1.0], [0.0, 1.0]]\nk = 2").is_err()
        );
    }

    #[test]
    fn deterministic_extraction() {
        let spec = AdcSpec::default();
        let codes: Vec<i32> = gaussians(8192, 6)
            .iter()
            .map(|x| (x * 3000.0) as i32)
            .collect();
        let block = CodeBlock::new(codes, spec).unwrap();
        let cfg = GaussianConfig {
            pool_size: 4096,
            ..Default::default()
        };
        let a = gaussian_extract_channel(&block, 11, Passes::Fixed(3), &cfg).unwrap();
        let b = gaussian_extract_channel(&block, 11, Passes::Fixed(3), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8192);
        assert_eq!(a.n_out, 14);
        let lj = a.left_justified();
        assert!(lj.iter().all(|v| v & 0b11 == 0));
    }

    proptest! {
        #[test]
        fn output_entropy_bounded_by_precision(seed in any::<u64>(), n_out in 2u32..10) {
            let q = requantize(&gaussians(4096, seed), n_out, 5.0).unwrap();
            let distinct: std::collections::HashSet<_> = q.iter().collect();
            prop_assert!(distinct.len() <= 1 << n_out);
        }

        #[test]
        fn group_norm_conserved(vals in proptest::collection::vec(-10.0f64..10.0, 4)) {
            let h = RecursiveMatrix::hadamard(4).unwrap();
            let mut out = [0.0; 4];
            h.apply(&vals, &mut out);
            let a: f64 = vals.iter().map(|v| v * v).sum();
            let b: f64 = out.iter().map(|v| v * v).sum();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-12));
        }
    }
}
