//! Min-entropy certification of digitized homodyne samples.
//!
//! The bound treats the excess noise as side information held by an adversary.
//! With `Γ(n) = (√n + √(1+n))²` for a thermal state of mean photon number `n`,
//!
//! ```text
//! H_min ≥ -log2[ Γ(n) · erf( w / (2 g*) ) ],   erf(Δx / (2 g*)) = erfc(R / g*)
//! ```
//!
//! where `w` is the widest bin: `Δx` for an ideal converter, `Δx (1 + DNL_max)`
//! otherwise. `g*` is always solved with the ideal `Δx`. Correlated
//! (finite-bandwidth) noise enters through the effective photon number
//! `n = σ_M² / (2 σ_Q,c²) - 1/2`, with the conditional quantum variance taken as
//! the one-step linear-prediction error of the quantum spectrum.
//!
//! All logarithms are base 2.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};

use crate::adc::{AdcSpec, CodeBlock};
use crate::error::{Error, Result};
use crate::source::{psd_estimate, variance, Channel, Psd};

pub const DEFAULT_EPSILON: f64 = 1.0 / 4_294_967_296.0;
pub const DEFAULT_PREDICTION_ORDER: usize = 16;
pub const DEFAULT_SEGMENT_LENGTH: usize = 256;
/// Lower bound on the background-subtracted spectrum, relative to its mean.
pub const QUANTUM_PSD_FLOOR: f64 = 1e-3;

const BISECTION_LIMIT: usize = 2000;

fn g_star_residual(delta_x: f64, r: f64, g: f64) -> f64 {
    erf(delta_x / (2.0 * g)) - erfc(r / g)
}

/// Solves `erf(Δx/(2g)) = erfc(R/g)` for `g` by bisection.
///
/// The left side falls and the right side rises with `g`, so the root is
/// unique. The search runs in units of `R`, which makes the result exactly
/// proportional to a common rescaling of `(Δx, R)`.
pub fn solve_g_star(delta_x: f64, r: f64) -> Result<f64> {
    if !(delta_x > 0.0 && r > 0.0 && delta_x < r && r.is_finite()) {
        return Err(Error::invalid(
            "delta_x",
            format!("need 0 < Δx < R, got Δx = {delta_x:e}, R = {r:e}"),
        ));
    }
    let ratio = delta_x / r;
    let f = |u: f64| g_star_residual(ratio, 1.0, u);
    let (mut lo, mut hi) = (1e-3, 1e3);
    if !(f(lo) > 0.0 && f(hi) < 0.0) {
        return Err(Error::NoBracket {
            lo: lo * r,
            hi: hi * r,
        });
    }
    for _ in 0..BISECTION_LIMIT {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick whichever end of the final bracket has the smaller residual
    let u = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    Ok(u * r)
}

/// Relative residual `|erf(Δx/(2g)) - erfc(R/g)| / erf(Δx/(2g))`.
pub fn g_star_relative_residual(delta_x: f64, r: f64, g: f64) -> f64 {
    g_star_residual(delta_x, r, g).abs() / erf(delta_x / (2.0 * g))
}

/// `(√n + √(1+n))²`, the thermal-state prefactor.
pub fn thermal_prefactor(n_photon: f64) -> f64 {
    let s = n_photon.sqrt() + (1.0 + n_photon).sqrt();
    s * s
}

fn bound_bits(n_photon: f64, numerator: f64, g_star: f64) -> f64 {
    -(thermal_prefactor(n_photon) * erf(numerator / (2.0 * g_star))).log2()
}

/// Min-entropy per sample (bits) for an ideal converter with iid Gaussian noise.
pub fn min_entropy_iid(n_photon: f64, delta_x: f64, r: f64) -> Result<f64> {
    if !(n_photon >= 0.0) {
        return Err(Error::invalid("n_photon", "must be non-negative"));
    }
    let g = solve_g_star(delta_x, r)?;
    Ok(bound_bits(n_photon, delta_x, g))
}

/// Min-entropy per sample (bits) with the worst-case bin widened by `dnl_max`.
pub fn min_entropy_nonlinear(n_photon: f64, spec: &AdcSpec) -> Result<f64> {
    spec.validate()?;
    if !(n_photon >= 0.0) {
        return Err(Error::invalid("n_photon", "must be non-negative"));
    }
    let dx = spec.bin_width();
    let g = solve_g_star(dx, spec.range_v)?;
    Ok(bound_bits(n_photon, dx + spec.dnl_max * dx, g))
}

/// `n = σ_M²/(2σ_Q,c²) - 1/2`.
pub fn effective_photon_number(sigma_m2: f64, sigma_qc2: f64) -> Result<f64> {
    if !(sigma_qc2 > 0.0) || sigma_m2 < sigma_qc2 {
        return Err(Error::Unphysical {
            measured: sigma_m2,
            conditional: sigma_qc2,
        });
    }
    Ok(0.5 * sigma_m2 / sigma_qc2 - 0.5)
}

/// Levinson-Durbin recursion on `r[0..=order]`; returns the prediction-error
/// variance after each order (`errors[0] = r[0]`).
pub fn levinson_durbin(r: &[f64]) -> Vec<f64> {
    let order = r.len().saturating_sub(1);
    let mut a = vec![0.0; order + 1];
    let mut prev = vec![0.0; order + 1];
    let mut err = r[0];
    let mut errors = Vec::with_capacity(order + 1);
    errors.push(err);
    for k in 1..=order {
        if err <= 0.0 {
            errors.push(err.max(0.0));
            continue;
        }
        let acc = r[k] - (1..k).map(|j| a[j] * r[k - j]).sum::<f64>();
        let refl = acc / err;
        prev[..k].copy_from_slice(&a[..k]);
        a[k] = refl;
        for j in 1..k {
            a[j] = prev[j] - refl * prev[k - j];
        }
        err *= 1.0 - refl * refl;
        errors.push(err);
    }
    errors
}

/// One-step prediction-error variance of a stationary Gaussian process with
/// the given spectrum, using a linear predictor of `order` past samples.
pub fn conditional_variance(psd: &Psd, order: usize) -> Result<f64> {
    if let Some((bin, &value)) = psd.density.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(Error::DegenerateSpectrum { bin, value });
    }
    if order >= psd.segment_length {
        return Err(Error::invalid(
            "prediction_order",
            "must be below the spectrum segment length",
        ));
    }
    let r = psd.autocovariance(order);
    Ok(*levinson_durbin(&r).last().expect("order 0 always present"))
}

/// `floor(n·H - log2(1/(2ε²)))`, clamped at 0.
pub fn extractable_length(n_bits: usize, h_min_per_bit: f64, epsilon: f64) -> usize {
    let penalty = -(2.0 * epsilon * epsilon).log2();
    let l = (n_bits as f64 * h_min_per_bit - penalty).floor();
    if l > 0.0 {
        l as usize
    } else {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_order")]
    pub prediction_order: usize,
    #[serde(default = "default_segment")]
    pub segment_length: usize,
    /// Input block size used to report the extractable fraction.
    #[serde(default = "default_block_n")]
    pub block_n: usize,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_order() -> usize {
    DEFAULT_PREDICTION_ORDER
}
fn default_segment() -> usize {
    DEFAULT_SEGMENT_LENGTH
}
fn default_block_n() -> usize {
    1536
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            epsilon: DEFAULT_EPSILON,
            prediction_order: DEFAULT_PREDICTION_ORDER,
            segment_length: DEFAULT_SEGMENT_LENGTH,
            block_n: 1536,
        }
    }
}

impl CertifyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid("epsilon", "must lie in (0, 1)"));
        }
        if self.block_n == 0 {
            return Err(Error::invalid("block_n", "must be positive"));
        }
        Ok(())
    }
}

/// Certified entropy of one channel. Serialized field names are part of the
/// `certify` JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub channel: Option<Channel>,
    pub h_min_per_sample: f64,
    pub h_min_per_bit: f64,
    pub g_star: f64,
    pub n_eff: f64,
    pub sigma_m2: f64,
    pub sigma_qc2: f64,
    pub epsilon: f64,
    pub extractable_fraction: f64,
    pub adc_bits: u32,
    pub delta_x: f64,
    pub range_v: f64,
    pub dnl_max: f64,
    pub prediction_order: usize,
    pub segment_length: usize,
    pub window: String,
    pub n_samples: usize,
}

impl EntropyReport {
    /// Extractable output length for an input block of `n_bits`.
    pub fn extractable_length(&self, n_bits: usize) -> usize {
        extractable_length(n_bits, self.h_min_per_bit, self.epsilon)
    }

    /// MSB count retained by the Gaussian extractor: `floor(h_min_per_bit × bits)`, at least 1.
    pub fn msb_count(&self) -> u32 {
        ((self.h_min_per_bit * self.adc_bits as f64).floor() as u32).clamp(1, self.adc_bits)
    }
}

/// Builds a report from already-measured variances.
pub fn report_from_variances(
    sigma_m2: f64,
    sigma_qc2: f64,
    spec: &AdcSpec,
    cfg: &CertifyConfig,
) -> Result<EntropyReport> {
    cfg.validate()?;
    let n_eff = effective_photon_number(sigma_m2, sigma_qc2)?;
    let h = min_entropy_nonlinear(n_eff, spec)?.clamp(0.0, spec.bits as f64);
    let h_bit = h / spec.bits as f64;
    Ok(EntropyReport {
        channel: None,
        h_min_per_sample: h,
        h_min_per_bit: h_bit,
        g_star: solve_g_star(spec.bin_width(), spec.range_v)?,
        n_eff,
        sigma_m2,
        sigma_qc2,
        epsilon: cfg.epsilon,
        extractable_fraction: if h_bit > 0.0 {
            extractable_length(cfg.block_n, h_bit, cfg.epsilon) as f64 / cfg.block_n as f64
        } else {
            0.0
        },
        adc_bits: spec.bits,
        delta_x: spec.bin_width(),
        range_v: spec.range_v,
        dnl_max: spec.dnl_max,
        prediction_order: cfg.prediction_order,
        segment_length: cfg.segment_length,
        window: "hann-50%".into(),
        n_samples: 0,
    })
}

/// Certifies one channel from its digitized record and a dark (LO-blocked)
/// record of the same channel.
///
/// `σ_M²` is the variance of the dequantized record. The quantum spectrum is
/// the Welch spectrum of the record minus that of the dark record, floored at
/// [`QUANTUM_PSD_FLOOR`] of its mean; its
/// prediction-error variance is `σ_Q,c²`.
pub fn certify(
    codes: &CodeBlock,
    dark: &CodeBlock,
    sample_rate_hz: f64,
    cfg: &CertifyConfig,
) -> Result<EntropyReport> {
    cfg.validate()?;
    if codes.spec != dark.spec {
        return Err(Error::invalid(
            "dark",
            "dark record was taken with a different ADC spec",
        ));
    }
    let volts = codes.to_volts();
    let dark_volts = dark.to_volts();
    let sigma_m2 = variance(&volts);
    let measured = psd_estimate(&volts, cfg.segment_length, sample_rate_hz)?;
    let background = psd_estimate(&dark_volts, cfg.segment_length, sample_rate_hz)?;
    let quantum = measured
        .subtract(&background)?
        .floor_relative(QUANTUM_PSD_FLOOR);
    let sigma_qc2 = conditional_variance(&quantum, cfg.prediction_order)?;
    let mut report = report_from_variances(sigma_m2, sigma_qc2, &codes.spec, cfg)?;
    report.n_samples = codes.len();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Plain 200-step bisection on g in linear space: the ground truth for the solver.
    fn oracle_g_star(dx: f64, r: f64) -> f64 {
        let (mut lo, mut hi) = (r * 1e-3, r * 1e3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if erf(dx / (2.0 * mid)) > erfc(r / mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn g_star_matches_oracle_and_has_tiny_residual() {
        let (dx, r) = (2e-6, 0.064);
        let g = solve_g_star(dx, r).unwrap();
        assert!(g_star_relative_residual(dx, r, g) <= 1e-12);
        let oracle = oracle_g_star(dx, r);
        assert!((g / oracle - 1.0).abs() < 1e-12, "{g} vs {oracle}");
    }

    #[test]
    fn g_star_rejects_degenerate_geometry() {
        assert!(solve_g_star(0.064, 0.064).is_err());
        assert!(solve_g_star(0.0, 0.064).is_err());
        assert!(solve_g_star(0.1, 0.064).is_err());
    }

    #[test]
    fn g_star_scales_with_geometry() {
        let g1 = solve_g_star(2e-6, 0.064).unwrap();
        let g10 = solve_g_star(2e-5, 0.64).unwrap();
        assert!((g10 / g1 - 10.0).abs() <= 1e-12 * 10.0, "{g1} {g10}");
    }

    #[test]
    fn vacuum_prefactor_is_one() {
        let (dx, r) = (0.128 / 65536.0, 0.128);
        let g = solve_g_star(dx, r).unwrap();
        let h = min_entropy_iid(0.0, dx, r).unwrap();
        assert_eq!(thermal_prefactor(0.0), 1.0);
        assert!((h + erf(dx / (2.0 * g)).log2()).abs() < 1e-12);
    }

    #[test]
    fn more_photons_less_entropy() {
        let (dx, r) = (0.128 / 65536.0, 0.128);
        let mut prev = f64::INFINITY;
        for n in [0.0, 0.1, 1.0, 3.0, 10.0] {
            let h = min_entropy_iid(n, dx, r).unwrap();
            assert!(h < prev);
            prev = h;
        }
    }

    #[test]
    fn nonlinear_reduces_to_iid_and_is_smaller_with_dnl() {
        let ideal = AdcSpec::ideal(16, 0.128);
        for n in [0.0, 0.5, 2.0] {
            let a = min_entropy_nonlinear(n, &ideal).unwrap();
            let b = min_entropy_iid(n, ideal.bin_width(), ideal.range_v).unwrap();
            assert!((a - b).abs() <= 1e-12);
            let dnl = AdcSpec {
                dnl_max: 0.3,
                ..ideal
            };
            assert!(min_entropy_nonlinear(n, &dnl).unwrap() < a);
        }
    }

    #[test]
    fn photon_number_formula() {
        assert_eq!(effective_photon_number(2.0, 2.0).unwrap(), 0.0);
        assert!((effective_photon_number(3.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            effective_photon_number(1.0, 2.0),
            Err(Error::Unphysical { .. })
        ));
        assert!(effective_photon_number(1.0, 0.0).is_err());
    }

    fn ar1_psd(a: f64, sigma2: f64, half: usize) -> Psd {
        let innov = sigma2 * (1.0 - a * a);
        let l = 2 * half;
        let density = (0..=half)
            .map(|k| {
                let w = 2.0 * std::f64::consts::PI * k as f64 / l as f64;
                let mag = 1.0 - 2.0 * a * w.cos() + a * a;
                let two_sided = innov / mag;
                if k == 0 || k == half {
                    two_sided
                } else {
                    2.0 * two_sided
                }
            })
            .collect();
        Psd::from_density(density, 1.0).unwrap()
    }

    #[test]
    fn conditional_variance_of_ar1_is_innovation_variance() {
        let (a, s2) = (0.6, 2.5);
        let psd = ar1_psd(a, s2, 2048);
        assert!((psd.integrated() - s2).abs() < 1e-9);
        for order in [1, 4, 16] {
            let v = conditional_variance(&psd, order).unwrap();
            assert!((v - s2 * (1.0 - a * a)).abs() < 1e-9, "order {order}: {v}");
        }
        assert!((conditional_variance(&psd, 0).unwrap() - s2).abs() < 1e-9);
    }

    #[test]
    fn conditional_variance_of_white_is_total() {
        let mut density = vec![2.0; 129];
        density[0] = 1.0;
        density[128] = 1.0;
        let psd = Psd::from_density(density, 1.0).unwrap();
        let v = conditional_variance(&psd, 16).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn conditional_variance_rejects_degenerate_spectrum() {
        let psd = Psd::from_density(vec![1.0, 0.0, 1.0], 1.0).unwrap();
        assert!(matches!(
            conditional_variance(&psd, 1),
            Err(Error::DegenerateSpectrum { bin: 1, .. })
        ));
    }

    #[test]
    fn extractable_length_cases() {
        // penalty vanishes at ε = 1/√2
        assert_eq!(
            extractable_length(1000, 0.5, std::f64::consts::FRAC_1_SQRT_2),
            500
        );
        // 1536 · 0.73 = 1121.28; log2(1/(2·2^-64)) = 63
        assert_eq!(extractable_length(1536, 0.73, DEFAULT_EPSILON), 1058);
        assert_eq!(extractable_length(64, 0.5, DEFAULT_EPSILON), 0);
    }

    proptest! {
        #[test]
        fn residual_small_across_six_decades(exp in -7.0f64..-1.0, r in 1e-3f64..10.0) {
            let dx = r * 10f64.powf(exp);
            let g = solve_g_star(dx, r).unwrap();
            prop_assert!(g_star_relative_residual(dx, r, g) <= 1e-12);
        }

        #[test]
        fn entropy_monotone_in_bin_width(n in 0.0f64..20.0, bits in 8u32..20) {
            let r = 0.128;
            let fine = min_entropy_iid(n, r / (1u64 << bits) as f64, r).unwrap();
            let coarse = min_entropy_iid(n, r / (1u64 << (bits - 1)) as f64, r).unwrap();
            prop_assert!(coarse <= fine);
        }

        #[test]
        fn entropy_monotone_in_dnl(n in 0.0f64..20.0, d1 in 0.0f64..0.49, d2 in 0.0f64..0.49) {
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            let a = min_entropy_nonlinear(n, &AdcSpec { dnl_max: lo, ..AdcSpec::ideal(16, 0.128) }).unwrap();
            let b = min_entropy_nonlinear(n, &AdcSpec { dnl_max: hi, ..AdcSpec::ideal(16, 0.128) }).unwrap();
            prop_assert!(b <= a);
        }

        #[test]
        fn extractable_length_monotone(n in 1usize..100_000, h1 in 0.01f64..1.0, h2 in 0.01f64..1.0, e in 1e-30f64..0.5) {
            let (lo, hi) = if h1 < h2 { (h1, h2) } else { (h2, h1) };
            prop_assert!(extractable_length(n, lo, e) <= extractable_length(n, hi, e));
            prop_assert!(extractable_length(n, lo, e) <= extractable_length(n + 1, lo, e));
            prop_assert!(extractable_length(n, lo, e * 0.5) <= extractable_length(n, lo, e));
        }

        #[test]
        fn conditional_variance_non_increasing(a in -0.9f64..0.9, b in -0.5f64..0.5) {
            // MA(1) driven AR(1): strictly positive spectrum
            let half = 256;
            let l = 2 * half;
            let density: Vec<f64> = (0..=half).map(|k| {
                let w = 2.0 * std::f64::consts::PI * k as f64 / l as f64;
                let num = 1.0 + 2.0 * b * w.cos() + b * b;
                let den = 1.0 - 2.0 * a * w.cos() + a * a;
                let s = num / den;
                if k == 0 || k == half { s } else { 2.0 * s }
            }).collect();
            let psd = Psd::from_density(density, 1.0).unwrap();
            let r = psd.autocovariance(12);
            let errs = levinson_durbin(&r);
            for w in errs.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
            prop_assert!(*errs.last().unwrap() <= r[0]);
        }
    }
}
