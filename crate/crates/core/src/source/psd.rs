use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-sided power spectral density, V²/Hz, on bins `k = 0 ..= L/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub sample_rate_hz: f64,
    pub segment_length: usize,
    /// Number of averaged segments (1 for analytic spectra).
    pub segments: usize,
    pub density: Vec<f64>,
}

impl Psd {
    /// Builds a spectrum from one-sided density values, e.g. an analytic model.
    pub fn from_density(density: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if density.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: density.len(),
            });
        }
        Ok(Psd {
            sample_rate_hz,
            segment_length: 2 * (density.len() - 1),
            segments: 1,
            density,
        })
    }

    pub fn bin_width(&self) -> f64 {
        self.sample_rate_hz / self.segment_length as f64
    }

    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_width()
    }

    pub fn bins(&self) -> usize {
        self.density.len()
    }

    /// `Σ density × bin width`, the variance the spectrum accounts for.
    pub fn integrated(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.density
            .iter()
            .enumerate()
            .map(|(k, &d)| (self.frequency(k), d))
    }

    /// Bin-wise difference, e.g. measured minus dark-record spectrum.
    pub fn subtract(&self, other: &Psd) -> Result<Psd> {
        if self.density.len() != other.density.len() {
            return Err(Error::LengthMismatch {
                expected: self.density.len(),
                actual: other.density.len(),
            });
        }
        Ok(Psd {
            density: self
                .density
                .iter()
                .zip(&other.density)
                .map(|(a, b)| a - b)
                .collect(),
            segments: self.segments.min(other.segments),
            ..self.clone()
        })
    }

    /// Raises every bin to at least `fraction` of the mean density. Used on
    /// background-subtracted spectra, where estimator noise can push weak bins
    /// below zero.
    pub fn floor_relative(&self, fraction: f64) -> Psd {
        let mean = self.density.iter().sum::<f64>() / self.density.len() as f64;
        let floor = fraction * mean.max(0.0);
        Psd {
            density: self.density.iter().map(|d| d.max(floor)).collect(),
            ..self.clone()
        }
    }

    /// Autocovariance `R(0..=max_lag)` by inverse transform of the spectrum.
    pub fn autocovariance(&self, max_lag: usize) -> Vec<f64> {
        let l = self.segment_length;
        let half = l / 2;
        let df = self.bin_width();
        // R(τ) = Σ_k S_k cos(2πkτ/L) over the two-sided spectrum; interior bins appear twice
        (0..=max_lag)
            .map(|tau| {
                let mut acc =
                    self.density[0] + self.density[half] * if tau % 2 == 0 { 1.0 } else { -1.0 };
                for k in 1..half {
                    let phase = 2.0 * std::f64::consts::PI * (k * tau % l) as f64 / l as f64;
                    acc += self.density[k] * phase.cos();
                }
                acc * df
            })
            .collect()
    }
}

/// Welch estimate: Hann-windowed segments of `segment_length` with 50% overlap.
/// The record mean is removed once, globally, before segmenting.
pub fn psd_estimate(samples: &[f64], segment_length: usize, sample_rate_hz: f64) -> Result<Psd> {
    if segment_length < 8 || !segment_length.is_power_of_two() {
        return Err(Error::invalid(
            "segment_length",
            "must be a power of two ≥ 8",
        ));
    }
    if samples.len() < segment_length {
        return Err(Error::InsufficientSamples {
            needed: segment_length,
            got: samples.len(),
        });
    }
    if !(sample_rate_hz > 0.0) {
        return Err(Error::invalid("sample_rate_hz", "must be positive"));
    }
    let l = segment_length;
    let window: Vec<f64> = (0..l)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / l as f64).cos())
        .collect();
    let energy: f64 = window.iter().map(|w| w * w).sum();
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;

    let fft = FftPlanner::<f64>::new().plan_fft_forward(l);
    let mut buf = vec![Complex::new(0.0, 0.0); l];
    let mut acc = vec![0.0; l / 2 + 1];
    let step = l / 2;
    let mut segments = 0usize;
    let mut start = 0;
    while start + l <= samples.len() {
        for (b, (x, w)) in buf
            .iter_mut()
            .zip(samples[start..start + l].iter().zip(&window))
        {
            *b = Complex::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = 1.0 / (sample_rate_hz * energy * segments as f64);
    let half = l / 2;
    let density = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            if k == 0 || k == half {
                a * scale
            } else {
                2.0 * a * scale
            }
        })
        .collect();
    Ok(Psd {
        sample_rate_hz,
        segment_length: l,
        segments,
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{simulate_quadratures, single_pole_taps, variance, NoiseModel};

    #[test]
    fn white_spectrum_is_flat() {
        let f = simulate_quadratures(&NoiseModel::white(1.0, 0.0), 1 << 18, 4).unwrap();
        let psd = psd_estimate(&f.i_samples, 64, 1.0).unwrap();
        // one-sided density of unit white noise at fs = 1 is 2 on interior bins
        let se = 2.0 * (1.056 / psd.segments as f64).sqrt();
        for (k, &d) in psd.density.iter().enumerate().take(32).skip(1) {
            assert!((d - 2.0).abs() < 5.0 * se, "bin {k}: {d}");
        }
    }

    #[test]
    fn parseval_holds() {
        let model = NoiseModel::calibrated();
        let f = simulate_quadratures(&model, 1 << 18, 8).unwrap();
        let psd = psd_estimate(&f.i_samples, 256, model.sample_rate_hz).unwrap();
        let var = variance(&f.i_samples);
        assert!(
            (psd.integrated() / var - 1.0).abs() < 0.02,
            "{} vs {var}",
            psd.integrated()
        );
    }

    #[test]
    fn filtered_spectrum_follows_tap_response() {
        let taps = single_pole_taps(0.6, 8);
        let mut model = NoiseModel::white(1.0, 0.0);
        model.filter_taps = taps.clone();
        let l = 64;
        let f = simulate_quadratures(&model, 4000 * l / 2 + l, 12).unwrap();
        let psd = psd_estimate(&f.i_samples, l, 1.0).unwrap();
        assert!(psd.segments >= 200);
        let estimated_total = psd.integrated();
        for k in 1..l / 2 {
            let w = 2.0 * std::f64::consts::PI * k as f64 / l as f64;
            let (re, im) = taps
                .iter()
                .enumerate()
                .fold((0.0, 0.0), |(re, im), (n, t)| {
                    (re + t * (w * n as f64).cos(), im - t * (w * n as f64).sin())
                });
            let expected = 2.0 * (re * re + im * im);
            let rel = (psd.density[k] - expected).abs() / expected;
            assert!(rel < 0.10, "bin {k}: {} vs {expected}", psd.density[k]);
        }
        assert!((estimated_total - 1.0).abs() < 0.02);
    }

    #[test]
    fn tone_lands_in_its_bin() {
        let l = 128;
        let k0 = 17;
        let x: Vec<f64> = (0..l * 16)
            .map(|n| (2.0 * std::f64::consts::PI * (k0 * n) as f64 / l as f64).sin())
            .collect();
        let psd = psd_estimate(&x, l, 1.0).unwrap();
        let peak = psd
            .density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, k0);
    }

    #[test]
    fn autocovariance_of_white_spectrum() {
        let psd = Psd::from_density(vec![2.0; 33], 1.0).unwrap();
        let r = psd.autocovariance(3);
        // flat one-sided density 2 with DC/Nyquist doubled → check lag 0 and decay
        assert!((r[0] - psd.integrated()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_geometry() {
        let x = vec![0.0; 100];
        assert!(psd_estimate(&x, 48, 1.0).is_err());
        assert!(psd_estimate(&x, 4, 1.0).is_err());
        assert!(psd_estimate(&x, 128, 1.0).is_err());
    }
}
