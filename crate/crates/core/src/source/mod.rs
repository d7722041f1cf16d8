//! Simulated dual-quadrature homodyne source.
//!
//! Each channel is bandwidth-limited vacuum noise (white Gaussian noise of
//! variance `sigma_q2` passed through a unit-energy FIR) plus classical excess
//! noise of variance `sigma_e2`. A configurable share of the excess noise is
//! carried by a random telegraph ("burst" or popcorn) process, which makes the
//! raw record measurably non-Gaussian the way real transimpedance front ends are.
//!
//! Gaussian deviates come from the ziggurat sampler in `rand_distr`
//! ([`rand_distr::StandardNormal`]) driven by ChaCha8, one stream per channel.

mod psd;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use psd::{psd_estimate, Psd};

use crate::error::{Error, Result};

/// Tolerance on the unit-energy normalization of `filter_taps`.
pub const TAP_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Quantum (shot-noise) variance per quadrature, V².
    pub sigma_q2: f64,
    /// Classical excess-noise variance, V².
    pub sigma_e2: f64,
    /// Detector bandwidth response; sum of squares must be 1.
    pub filter_taps: Vec<f64>,
    pub lo_power_mw: f64,
    /// Shot-noise slope, V² per mW of LO power.
    pub responsivity: f64,
    /// Fraction of `sigma_e2` carried by burst (telegraph) noise, in [0, 1].
    #[serde(default)]
    pub burst_fraction: f64,
    /// Per-sample flip probability of the burst process. 0.5 makes it white.
    #[serde(default = "default_switch_prob")]
    pub burst_switch_prob: f64,
    /// Excess variance override for the Q channel.
    #[serde(default)]
    pub sigma_e2_q: Option<f64>,
    /// Soft-clip level of the detector output stage, V. `None` disables saturation.
    #[serde(default)]
    pub saturation_v: Option<f64>,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
}

fn default_switch_prob() -> f64 {
    0.5
}

fn default_sample_rate() -> f64 {
    2.0e9
}

impl NoiseModel {
    /// White, Gaussian, unfiltered model with the given variances.
    pub fn white(sigma_q2: f64, sigma_e2: f64) -> Self {
        NoiseModel {
            sigma_q2,
            sigma_e2,
            filter_taps: vec![1.0],
            lo_power_mw: 1.0,
            responsivity: sigma_q2,
            burst_fraction: 0.0,
            burst_switch_prob: 0.5,
            sigma_e2_q: None,
            saturation_v: None,
            sample_rate_hz: default_sample_rate(),
        }
    }

    /// Operating point used throughout the documentation and acceptance tests:
    /// 4.13 mW of LO per diode, an 8-tap single-pole bandwidth response, and
    /// excess noise equal to the shot noise, all of it burst-type. With the
    /// 16-bit / 128 mVpp digitizer preset this certifies roughly 0.73 bits of
    /// min-entropy per raw bit.
    pub fn calibrated() -> Self {
        let lo_power_mw = 4.13;
        let sigma_q2 = 1.28e-4;
        NoiseModel {
            sigma_q2,
            sigma_e2: 1.28e-4,
            filter_taps: single_pole_taps(0.78, 8),
            lo_power_mw,
            responsivity: sigma_q2 / lo_power_mw,
            burst_fraction: 1.0,
            burst_switch_prob: 0.5,
            sigma_e2_q: None,
            saturation_v: None,
            sample_rate_hz: default_sample_rate(),
        }
    }

    /// Same source with the classical excess noise removed.
    pub fn without_excess(&self) -> Self {
        NoiseModel {
            sigma_e2: 0.0,
            sigma_e2_q: None,
            ..self.clone()
        }
    }

    /// Same source re-pointed at a different LO power (linear regime).
    pub fn at_lo_power(&self, lo_power_mw: f64) -> Self {
        NoiseModel {
            lo_power_mw,
            sigma_q2: self.responsivity * lo_power_mw,
            ..self.clone()
        }
    }

    pub fn excess_variance(&self, channel: Channel) -> f64 {
        match channel {
            Channel::I => self.sigma_e2,
            Channel::Q => self.sigma_e2_q.unwrap_or(self.sigma_e2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_q2 > 0.0 && self.sigma_q2.is_finite()) {
            return Err(Error::invalid("sigma_q2", "must be positive"));
        }
        self.validate_common()?;
        let expected = self.responsivity * self.lo_power_mw;
        if (self.sigma_q2 - expected).abs() > 1e-9 * self.sigma_q2.max(expected) {
            return Err(Error::invalid(
                "sigma_q2",
                format!("must equal responsivity × lo_power_mw = {expected:e}"),
            ));
        }
        Ok(())
    }

    /// Checks everything except the shot-noise term, which may be zero for dark records.
    fn validate_common(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_e2", Some(self.sigma_e2)),
            ("sigma_e2_q", self.sigma_e2_q),
        ] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::invalid(name, "must be non-negative"));
                }
            }
        }
        if self.lo_power_mw < 0.0 || self.responsivity < 0.0 {
            return Err(Error::invalid(
                "lo_power_mw",
                "power and responsivity must be non-negative",
            ));
        }
        if !(0.0..=1.0).contains(&self.burst_fraction) {
            return Err(Error::invalid("burst_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.burst_switch_prob) {
            return Err(Error::invalid("burst_switch_prob", "must lie in [0, 1]"));
        }
        if let Some(s) = self.saturation_v {
            if !(s > 0.0) {
                return Err(Error::invalid("saturation_v", "must be positive"));
            }
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::invalid("sample_rate_hz", "must be positive"));
        }
        check_taps(&self.filter_taps)
    }
}

pub fn check_taps(taps: &[f64]) -> Result<()> {
    if taps.is_empty() {
        return Err(Error::invalid("filter_taps", "must not be empty"));
    }
    let sum_sq: f64 = taps.iter().map(|t| t * t).sum();
    if !sum_sq.is_finite() || (sum_sq - 1.0).abs() > TAP_NORM_TOLERANCE {
        return Err(Error::FilterNotNormalized { sum_sq });
    }
    Ok(())
}

/// Unit-energy FIR `h[k] ∝ pole^k`, a truncated single-pole (RC-like) response.
pub fn single_pole_taps(pole: f64, len: usize) -> Vec<f64> {
    normalize_taps((0..len).map(|k| pole.powi(k as i32)).collect())
}

pub fn normalize_taps(mut taps: Vec<f64>) -> Vec<f64> {
    let norm = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    if norm > 0.0 {
        taps.iter_mut().for_each(|t| *t /= norm);
    }
    taps
}

/// Autocorrelation of a tap vector at `lag` (equals the output autocorrelation
/// coefficient for unit-energy taps driven by white noise).
pub fn tap_autocorrelation(taps: &[f64], lag: usize) -> f64 {
    taps.iter()
        .zip(taps.iter().skip(lag))
        .map(|(a, b)| a * b)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    I,
    Q,
}

impl Channel {
    fn stream(self) -> u64 {
        match self {
            Channel::I => 0,
            Channel::Q => 1,
        }
    }
}

/// Paired, synchronized quadrature records in volts.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureFrame {
    pub i_samples: Vec<f64>,
    pub q_samples: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl QuadratureFrame {
    pub fn new(i_samples: Vec<f64>, q_samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if i_samples.len() != q_samples.len() {
            return Err(Error::LengthMismatch {
                expected: i_samples.len(),
                actual: q_samples.len(),
            });
        }
        Ok(QuadratureFrame {
            i_samples,
            q_samples,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.i_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i_samples.is_empty()
    }

    pub fn channel(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::I => &self.i_samples,
            Channel::Q => &self.q_samples,
        }
    }

    /// Interleaved `I, Q` pairs as little-endian f32.
    pub fn write_f32_le<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(self.len() * 8);
        for (i, q) in self.i_samples.iter().zip(&self.q_samples) {
            buf.extend_from_slice(&(*i as f32).to_le_bytes());
            buf.extend_from_slice(&(*q as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_f32_le(bytes: &[u8], sample_rate_hz: f64) -> Result<Self> {
        if bytes.len() % 8 != 0 {
            return Err(Error::invalid(
                "frame",
                "raw f32 frame length must be a multiple of 8 bytes",
            ));
        }
        let (mut i, mut q) = (Vec::new(), Vec::new());
        for pair in bytes.chunks_exact(8) {
            i.push(f32::from_le_bytes(pair[..4].try_into().unwrap()) as f64);
            q.push(f32::from_le_bytes(pair[4..].try_into().unwrap()) as f64);
        }
        QuadratureFrame::new(i, q, sample_rate_hz)
    }

    /// CSV with header `index,I,Q`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,I,Q")?;
        for (k, (i, q)) in self.i_samples.iter().zip(&self.q_samples).enumerate() {
            writeln!(w, "{k},{i:e},{q:e}")?;
        }
        Ok(())
    }
}

/// One channel of the streaming generator.
#[derive(Debug, Clone)]
struct ChannelGen {
    rng: ChaCha8Rng,
    taps: Vec<f64>,
    /// Most recent white quantum samples, newest last; length = taps.len() - 1.
    history: Vec<f64>,
    quantum_sd: f64,
    gauss_sd: f64,
    burst_amp: f64,
    switch_prob: f64,
    burst_state: f64,
    saturation_v: Option<f64>,
}

impl ChannelGen {
    fn new(model: &NoiseModel, sigma_q2: f64, channel: Channel, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(channel.stream());
        let quantum_sd = sigma_q2.sqrt();
        let excess = model.excess_variance(channel);
        let history = (1..model.filter_taps.len())
            .map(|_| quantum_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let burst_state = if rng.random::<bool>() { 1.0 } else { -1.0 };
        ChannelGen {
            rng,
            taps: model.filter_taps.clone(),
            history,
            quantum_sd,
            gauss_sd: (excess * (1.0 - model.burst_fraction)).sqrt(),
            burst_amp: (excess * model.burst_fraction).sqrt(),
            switch_prob: model.burst_switch_prob,
            burst_state,
            saturation_v: model.saturation_v,
        }
    }

    #[inline]
    fn next(&mut self) -> f64 {
        let white = self.quantum_sd * self.rng.sample::<f64, _>(StandardNormal);
        // taps[0] weights the newest sample
        let mut v = self.taps[0] * white;
        let h = self.history.len();
        for (k, tap) in self.taps.iter().enumerate().skip(1) {
            v += tap * self.history[h - k];
        }
        if h > 0 {
            self.history.rotate_left(1);
            self.history[h - 1] = white;
        }
        if self.gauss_sd > 0.0 {
            v += self.gauss_sd * self.rng.sample::<f64, _>(StandardNormal);
        }
        if self.burst_amp > 0.0 {
            if self.rng.random::<f64>() < self.switch_prob {
                self.burst_state = -self.burst_state;
            }
            v += self.burst_amp * self.burst_state;
        }
        match self.saturation_v {
            Some(s) => s * (v / s).tanh(),
            None => v,
        }
    }
}

/// Stateful generator: repeated [`QuadratureSource::fill`] calls continue the
/// same record, so chunked generation matches one-shot generation exactly.
#[derive(Debug, Clone)]
pub struct QuadratureSource {
    i: ChannelGen,
    q: ChannelGen,
    sample_rate_hz: f64,
    produced: u64,
}

impl QuadratureSource {
    pub fn new(model: &NoiseModel, seed: u64) -> Result<Self> {
        model.validate()?;
        Ok(Self::build(model, model.sigma_q2, seed))
    }

    /// LO blocked: excess noise only. Used for dark calibration records.
    pub fn dark(model: &NoiseModel, seed: u64) -> Result<Self> {
        model.validate_common()?;
        Ok(Self::build(model, 0.0, seed))
    }

    fn build(model: &NoiseModel, sigma_q2: f64, seed: u64) -> Self {
        QuadratureSource {
            i: ChannelGen::new(model, sigma_q2, Channel::I, seed),
            q: ChannelGen::new(model, sigma_q2, Channel::Q, seed),
            sample_rate_hz: model.sample_rate_hz,
            produced: 0,
        }
    }

    pub fn fill_into(&mut self, i: &mut [f64], q: &mut [f64]) {
        debug_assert_eq!(i.len(), q.len());
        for v in i.iter_mut() {
            *v = self.i.next();
        }
        for v in q.iter_mut() {
            *v = self.q.next();
        }
        self.produced += i.len() as u64;
    }

    pub fn fill(&mut self, count: usize) -> QuadratureFrame {
        let mut i = vec![0.0; count];
        let mut q = vec![0.0; count];
        self.fill_into(&mut i, &mut q);
        QuadratureFrame {
            i_samples: i,
            q_samples: q,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Samples produced per channel so far.
    pub fn produced(&self) -> u64 {
        self.produced
    }
}

pub fn simulate_quadratures(
    model: &NoiseModel,
    count: usize,
    prng_seed: u64,
) -> Result<QuadratureFrame> {
    if count == 0 {
        return Err(Error::invalid("count", "must be positive"));
    }
    Ok(QuadratureSource::new(model, prng_seed)?.fill(count))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub power_mw: f64,
    /// Variance of the full detector output.
    pub total_variance: f64,
    /// Variance with the LO blocked (electronic/excess background).
    pub excess_variance: f64,
}

impl SweepPoint {
    pub fn quantum_variance(&self) -> f64 {
        self.total_variance - self.excess_variance
    }
}

/// Simulates the shot-noise linearity check: for every LO power, the I-channel
/// variance with the LO on and with it blocked.
pub fn lo_power_sweep(
    model: &NoiseModel,
    powers: &[f64],
    samples_per_point: usize,
    prng_seed: u64,
) -> Result<Vec<SweepPoint>> {
    if powers.is_empty() {
        return Err(Error::invalid("powers", "must not be empty"));
    }
    if samples_per_point < 2 {
        return Err(Error::invalid(
            "samples_per_point",
            "need at least 2 samples",
        ));
    }
    if let Some(&p) = powers.iter().find(|p| !(**p >= 0.0)) {
        return Err(Error::invalid("powers", format!("negative power {p}")));
    }
    model.validate_common()?;
    let mut out = Vec::with_capacity(powers.len());
    for (k, &power) in powers.iter().enumerate() {
        let point_seed = prng_seed.wrapping_add(2 * k as u64);
        let sigma_q2 = model.responsivity * power;
        let lit = QuadratureSource::build(model, sigma_q2, point_seed).fill(samples_per_point);
        let dark = QuadratureSource::build(model, 0.0, point_seed + 1).fill(samples_per_point);
        out.push(SweepPoint {
            power_mw: power,
            total_variance: variance(&lit.i_samples),
            excess_variance: variance(&dark.i_samples),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation coefficient of the fitted data.
    pub r: f64,
}

/// Ordinary least squares `y = slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::invalid("x", "all abscissae are equal"));
    }
    let slope = sxy / sxx;
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r: if syy == 0.0 {
            1.0
        } else {
            sxy / (sxx * syy).sqrt()
        },
    })
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lag_corr(x: &[f64], lag: usize) -> f64 {
        let m = mean(x);
        let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>();
        x.iter()
            .zip(&x[lag..])
            .map(|(a, b)| (a - m) * (b - m))
            .sum::<f64>()
            / v
    }

    #[test]
    fn white_quantum_variance() {
        let model = NoiseModel::white(2.5e-4, 0.0);
        let f = simulate_quadratures(&model, 1_000_000, 7).unwrap();
        for ch in [Channel::I, Channel::Q] {
            let v = variance(f.channel(ch));
            assert!((v / 2.5e-4 - 1.0).abs() < 0.01, "{ch:?}: {v}");
        }
    }

    #[test]
    fn independent_variances_add() {
        let f = simulate_quadratures(&NoiseModel::white(1.0, 1.0), 1_000_000, 3).unwrap();
        let v = variance(&f.i_samples);
        assert!((v / 2.0 - 1.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn burst_noise_keeps_total_variance() {
        let mut model = NoiseModel::white(1.0, 1.0);
        model.burst_fraction = 1.0;
        let f = simulate_quadratures(&model, 1_000_000, 11).unwrap();
        let v = variance(&f.q_samples);
        assert!((v / 2.0 - 1.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn lag_one_autocorrelation_matches_taps() {
        // 8-tap single-pole low-pass; analytic output autocorrelation is the tap autocorrelation
        let taps = single_pole_taps(0.7, 8);
        let rho1 = tap_autocorrelation(&taps, 1);
        let expected: f64 = {
            let raw: Vec<f64> = (0..8).map(|k| 0.7f64.powi(k)).collect();
            let e: f64 = raw.iter().map(|t| t * t).sum();
            raw.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / e
        };
        assert!((rho1 - expected).abs() < 1e-12);

        let mut model = NoiseModel::white(1.0, 0.0);
        model.filter_taps = taps;
        let n = 1_000_000;
        let f = simulate_quadratures(&model, n, 5).unwrap();
        let est = lag_corr(&f.i_samples, 1);
        // Bartlett: var(r1) ≈ (1 - 3ρ1² + 4ρ1⁴ ... ) / n, bounded by (1 + 2Σρk²)/n
        let bound: f64 = (1.0
            + 2.0
                * (1..8)
                    .map(|k| tap_autocorrelation(&model.filter_taps, k).powi(2))
                    .sum::<f64>())
            / n as f64;
        assert!(
            (est - rho1).abs() < 3.0 * bound.sqrt(),
            "est {est} vs {rho1}"
        );
    }

    #[test]
    fn channels_are_independent() {
        let f = simulate_quadratures(&NoiseModel::calibrated(), 1_000_000, 99).unwrap();
        let (mi, mq) = (mean(&f.i_samples), mean(&f.q_samples));
        let cov: f64 = f
            .i_samples
            .iter()
            .zip(&f.q_samples)
            .map(|(a, b)| (a - mi) * (b - mq))
            .sum::<f64>()
            / f.len() as f64;
        let corr = cov / (variance(&f.i_samples) * variance(&f.q_samples)).sqrt();
        // both channels are colored the same way, so the lag-0 estimator has variance Σρk²/n
        let s: f64 = 1.0
            + 2.0
                * (1..8)
                    .map(|k| tap_autocorrelation(&NoiseModel::calibrated().filter_taps, k).powi(2))
                    .sum::<f64>();
        assert!(corr.abs() < 4.0 * (s / f.len() as f64).sqrt(), "{corr}");
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let model = NoiseModel::calibrated();
        let a = simulate_quadratures(&model, 10_000, 42).unwrap();
        let b = simulate_quadratures(&model, 10_000, 42).unwrap();
        let c = simulate_quadratures(&model, 10_000, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn chunked_generation_matches_one_shot() {
        let model = NoiseModel::calibrated();
        let whole = simulate_quadratures(&model, 1000, 1).unwrap();
        let mut src = QuadratureSource::new(&model, 1).unwrap();
        let mut i = Vec::new();
        let mut q = Vec::new();
        for n in [1, 99, 400, 500] {
            let part = src.fill(n);
            i.extend(part.i_samples);
            q.extend(part.q_samples);
        }
        assert_eq!(i, whole.i_samples);
        assert_eq!(q, whole.q_samples);
        assert_eq!(src.produced(), 1000);
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = NoiseModel::white(1.0, 0.0);
        assert!(simulate_quadratures(&model, 0, 1).is_err());
        let mut bad = model.clone();
        bad.filter_taps = vec![1.0, 1.0];
        assert!(matches!(
            simulate_quadratures(&bad, 10, 1),
            Err(Error::FilterNotNormalized { .. })
        ));
        let mut bad = model.clone();
        bad.sigma_q2 = 0.0;
        assert!(simulate_quadratures(&bad, 10, 1).is_err());
        let mut bad = model;
        bad.lo_power_mw = 3.0;
        assert!(simulate_quadratures(&bad, 10, 1).is_err());
    }

    #[test]
    fn sweep_without_lo_has_no_quantum_part() {
        let pts = lo_power_sweep(&NoiseModel::calibrated(), &[0.0], 200_000, 1).unwrap();
        let q = pts[0].quantum_variance();
        assert!(q.abs() < 0.02 * pts[0].excess_variance, "{q}");
    }

    #[test]
    fn sweep_is_linear_in_power() {
        let model = NoiseModel::white(1.0, 0.0);
        let pts = lo_power_sweep(&model, &[1.0, 2.0, 4.0], 400_000, 5).unwrap();
        let q: Vec<f64> = pts.iter().map(|p| p.quantum_variance()).collect();
        assert!((q[1] / q[0] - 2.0).abs() < 0.03, "{q:?}");
        assert!((q[2] / q[0] - 4.0).abs() < 0.06, "{q:?}");
        assert!(lo_power_sweep(&model, &[1.0, -0.5], 100, 5).is_err());
        assert!(lo_power_sweep(&model, &[], 100, 5).is_err());
    }

    #[test]
    fn saturation_rolls_off_the_sweep() {
        let mut model = NoiseModel::white(1e-4, 0.0);
        model.responsivity = 1e-4 / 4.13;
        model.lo_power_mw = 4.13;
        model.saturation_v = Some(0.02);
        let pts = lo_power_sweep(&model, &[1.0, 4.13, 8.0], 100_000, 2).unwrap();
        let gain_low = pts[0].quantum_variance() / 1.0;
        let gain_high = pts[2].quantum_variance() / 8.0;
        assert!(gain_high < 0.8 * gain_low, "{pts:?}");
    }

    #[test]
    fn frame_exports() {
        let f = QuadratureFrame::new(vec![0.5, -0.25], vec![1.0, 2.0], 1.0).unwrap();
        let mut raw = Vec::new();
        f.write_f32_le(&mut raw).unwrap();
        assert_eq!(raw.len(), 16);
        assert_eq!(&raw[..4], &0.5f32.to_le_bytes());
        assert_eq!(&raw[4..8], &1.0f32.to_le_bytes());
        assert_eq!(QuadratureFrame::read_f32_le(&raw, 1.0).unwrap(), f);
        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("index,I,Q\n0,5e-1,1e0\n"));
        assert!(QuadratureFrame::new(vec![1.0], vec![], 1.0).is_err());
    }
}
