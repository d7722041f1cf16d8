//! Goodness-of-fit tests against continuous references and a small set of
//! frequency/runs tests for bit strings.


pub use bit_tests::{
    bit_tests, block_frequency_test, longest_run_test, monobit_test, runs_test, BLOCK_FREQUENCY_M,
    LONGEST_RUN_M, MIN_BITS,
};

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// Default significance level.
pub const DEFAULT_ALPHA: f64 = 0.01;
/// KS p-values are asymptotic; below this the approximation is not trusted.
pub const KS_MIN_SAMPLES: usize = 100;

/// Outcome of one statistical test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub pass: bool,
    pub n_samples: usize,
    /// Reference parameters were estimated from the sample itself.
    #[serde(default)]
    pub parameters_estimated: bool,
}

impl GofReport {
    pub fn new(
        test_name: impl Into<String>,
        statistic: f64,
        p_value: f64,
        alpha: f64,
        n_samples: usize,
    ) -> Self {
        let p_value = if p_value.is_nan() {
            0.0
        } else {
            p_value.clamp(0.0, 1.0)
        };
        GofReport {
            test_name: test_name.into(),
            statistic,
            p_value,
            alpha,
            pass: p_value >= alpha,
            n_samples,
            parameters_estimated: false,
        }
    }

    fn estimated(mut self, flag: bool) -> Self {
        self.parameters_estimated = flag;
        self
    }
}

/// Family of a reference distribution, without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    Gaussian,
    Rayleigh,
    Uniform,
}

impl ReferenceKind {
    /// Parameters a method-of-moments fit estimates.
    pub fn parameter_count(self) -> usize {
        match self {
            ReferenceKind::Gaussian | ReferenceKind::Uniform => 2,
            ReferenceKind::Rayleigh => 1,
        }
    }
}

impl FromStr for ReferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(ReferenceKind::Gaussian),
            "rayleigh" => Ok(ReferenceKind::Rayleigh),
            "uniform" => Ok(ReferenceKind::Uniform),
            _ => Err(Error::UnknownReference(s.to_string())),
        }
    }
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceKind::Gaussian => "gaussian",
            ReferenceKind::Rayleigh => "rayleigh",
            ReferenceKind::Uniform => "uniform",
        })
    }
}

/// A fully parameterized continuous reference distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Reference {
    Gaussian { mean: f64, sd: f64 },
    Rayleigh { sigma: f64 },
    Uniform { a: f64, b: f64 },
}

impl Reference {
    pub fn standard_gaussian() -> Self {
        Reference::Gaussian { mean: 0.0, sd: 1.0 }
    }

    pub fn kind(&self) -> ReferenceKind {
        match self {
            Reference::Gaussian { .. } => ReferenceKind::Gaussian,
            Reference::Rayleigh { .. } => ReferenceKind::Rayleigh,
            Reference::Uniform { .. } => ReferenceKind::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Reference::Gaussian { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            Reference::Rayleigh { sigma } => sigma.is_finite() && sigma > 0.0,
            Reference::Uniform { a, b } => a.is_finite() && b.is_finite() && b > a,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "reference",
                format!("degenerate parameters {self:?}"),
            ))
        }
    }

    /// Method-of-moments fit of `kind` to `samples`.
    pub fn fit(kind: ReferenceKind, samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: samples.len(),
            });
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let r = match kind {
            ReferenceKind::Gaussian => Reference::Gaussian {
                mean,
                sd: var.sqrt(),
            },
            ReferenceKind::Rayleigh => {
                let ms = samples.iter().map(|x| x * x).sum::<f64>() / n;
                Reference::Rayleigh {
                    sigma: (ms / 2.0).sqrt(),
                }
            }
            ReferenceKind::Uniform => {
                let half = (3.0 * var).sqrt();
                Reference::Uniform {
                    a: mean - half,
                    b: mean + half,
                }
            }
        };
        r.validate()?;
        Ok(r)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Reference::Gaussian { mean, sd } => 0.5 * erfc(-(x - mean) / (sd * SQRT_2)),
            Reference::Rayleigh { sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x * x / (2.0 * sigma * sigma)).exp_m1()
                }
            }
            Reference::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
        }
    }
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^(k-1) exp(-2k²λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form converges faster for small λ
        let y = -PI * PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=7)
            .map(|k| ((2 * k - 1) as f64).powi(2) * y)
            .map(f64::exp)
            .sum();
        (1.0 - (2.0 * PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Asymptotic KS p-value for statistic `d` on `n` samples.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)
}

/// Two-sided one-sample KS statistic `D`.
pub fn ks_statistic(samples: &[f64], reference: &Reference) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = reference.cdf(x);
            (((i + 1) as f64 / n) - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// One-sample KS test against a supplied reference.
pub fn ks_test(samples: &[f64], reference: &Reference, alpha: f64) -> Result<GofReport> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: KS_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    reference.validate()?;
    let d = ks_statistic(samples, reference);
    Ok(GofReport::new(
        format!("ks-{}", reference.kind()),
        d,
        ks_p_value(d, samples.len()),
        alpha,
        samples.len(),
    ))
}

/// KS test against a method-of-moments fit of `kind`.
pub fn ks_test_fitted(samples: &[f64], kind: ReferenceKind, alpha: f64) -> Result<GofReport> {
    let reference = Reference::fit(kind, samples)?;
    Ok(ks_test(samples, &reference, alpha)?.estimated(true))
}

/// Observed counts per equal-probability bin, after merging so every bin
/// expects at least 5 samples.
pub fn equal_probability_counts(
    samples: &[f64],
    reference: &Reference,
    n_bins: usize,
) -> Result<Vec<u64>> {
    if n_bins < 5 {
        return Err(Error::invalid(
            "n_bins",
            format!("need at least 5, got {n_bins}"),
        ));
    }
    reference.validate()?;
    let bins = n_bins.min(samples.len() / 5);
    if bins < 2 {
        return Err(Error::InsufficientSamples {
            needed: 10,
            got: samples.len(),
        });
    }
    let mut counts = vec![0u64; bins];
    for &x in samples {
        let u = reference.cdf(x);
        if u.is_nan() {
            return Err(Error::invalid("samples", "NaN value"));
        }
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    Ok(counts)
}

/// Pearson chi-squared statistic and p-value for `counts` against equal expected mass.
pub fn chi2_equal_bins(counts: &[u64], fitted_params: usize) -> Result<(f64, f64, usize)> {
    let total: u64 = counts.iter().sum();
    if counts.is_empty() || total == 0 {
        return Err(Error::EmptyBin { bin: 0 });
    }
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dof = counts
        .len()
        .checked_sub(1 + fitted_params)
        .filter(|&d| d > 0)
        .ok_or_else(|| {
            Error::invalid(
                "n_bins",
                format!("{} bins leave no degrees of freedom", counts.len()),
            )
        })?;
    Ok((stat, chi2_survival(stat, dof), dof))
}

/// Upper tail of the chi-squared distribution.
pub fn chi2_survival(stat: f64, dof: usize) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, stat / 2.0)
}

/// Pearson chi-squared test on an equal-probability partition of `reference`.
/// `fitted_params` is subtracted from the degrees of freedom.
pub fn chi2_test(
    samples: &[f64],
    reference: &Reference,
    n_bins: usize,
    fitted_params: usize,
    alpha: f64,
) -> Result<GofReport> {
    let counts = equal_probability_counts(samples, reference, n_bins)?;
    let (stat, p, _) = chi2_equal_bins(&counts, fitted_params)?;
    Ok(GofReport::new(
        format!("chi2-{}", reference.kind()),
        stat,
        p,
        alpha,
        samples.len(),
    ))
}

/// Chi-squared test against a method-of-moments fit of `kind`.
pub fn chi2_test_fitted(
    samples: &[f64],
    kind: ReferenceKind,
    n_bins: usize,
    alpha: f64,
) -> Result<GofReport> {
    let reference = Reference::fit(kind, samples)?;
    Ok(chi2_test(samples, &reference, n_bins, kind.parameter_count(), alpha)?.estimated(true))
}

/// KS and chi-squared against a fitted reference, in that order.
pub fn gof_pair(
    samples: &[f64],
    kind: ReferenceKind,
    n_bins: usize,
    alpha: f64,
) -> Result<[GofReport; 2]> {
    Ok([
        ks_test_fitted(samples, kind, alpha)?,
        chi2_test_fitted(samples, kind, n_bins, alpha)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussians(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn kolmogorov_branches_agree() {
        // both series are valid at the switch point
        let lambda: f64 = 1.18;
        let alt: f64 = 2.0
            * (1..100)
                .map(|k| {
                    let t = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
                    if k % 2 == 1 {
                        t
                    } else {
                        -t
                    }
                })
                .sum::<f64>();
        assert!((kolmogorov_q(lambda - 1e-12) - alt).abs() < 1e-10);
        assert!((kolmogorov_q(1.3580986) - 0.05).abs() < 1e-5);
        assert!((kolmogorov_q(0.5) - 0.9639452).abs() < 1e-6);
    }

    #[test]
    fn ks_calibration_under_the_null() {
        let mut below = 0;
        for seed in 0..100 {
            let x = gaussians(100_000, seed);
            let r = ks_test(&x, &Reference::standard_gaussian(), 0.10).unwrap();
            below += usize::from(!r.pass);
        }
        assert!((5..=20).contains(&below), "{below} of 100 below 0.10");
    }

    #[test]
    fn p_values_are_roughly_uniform_under_the_null() {
        let ps: Vec<f64> = (0..200)
            .map(|s| {
                ks_test(
                    &gaussians(2000, 1000 + s),
                    &Reference::standard_gaussian(),
                    0.01,
                )
                .unwrap()
                .p_value
            })
            .collect();
        let r = ks_test(&ps, &Reference::Uniform { a: 0.0, b: 1.0 }, 0.001).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn constant_sample_fails() {
        let x = vec![0.3; 1000];
        for r in [
            Reference::standard_gaussian(),
            Reference::Rayleigh { sigma: 1.0 },
            Reference::Uniform { a: 0.0, b: 1.0 },
        ] {
            assert!(ks_test(&x, &r, 0.01).unwrap().p_value < 1e-12);
        }
    }

    #[test]
    fn larger_d_means_smaller_p() {
        let mut last = 1.0;
        for i in 1..200 {
            let p = ks_p_value(i as f64 * 1e-3, 5000);
            assert!(p <= last);
            last = p;
        }
    }

    #[test]
    fn chi2_mean_equals_dof() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 2000;
        let mean: f64 = (0..trials)
            .map(|_| {
                let x: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
                chi2_test(&x, &Reference::Uniform { a: 0.0, b: 1.0 }, 10, 0, 0.01)
                    .unwrap()
                    .statistic
            })
            .sum::<f64>()
            / trials as f64;
        assert!((mean - 9.0).abs() < 0.3, "{mean}");
    }

    #[test]
    fn chi2_calibration_on_gaussians() {
        let passes = (0..100)
            .filter(|&s| {
                chi2_test_fitted(
                    &gaussians(20_000, 500 + s),
                    ReferenceKind::Gaussian,
                    100,
                    0.01,
                )
                .unwrap()
                .pass
            })
            .count();
        assert!(passes >= 95, "{passes}");
    }

    #[test]
    fn chi2_survival_matches_closed_form() {
        // dof 2: exp(-x/2)
        for x in [0.1, 1.0, 5.0, 30.0] {
            assert!((chi2_survival(x, 2) - (-x / 2.0f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn bins_merge_for_small_samples() {
        let x = gaussians(30, 1);
        let c = equal_probability_counts(&x, &Reference::standard_gaussian(), 100).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(c.iter().sum::<u64>(), 30);
    }

    #[test]
    fn fits_match_moments() {
        let x = gaussians(100_000, 9);
        let Reference::Gaussian { mean, sd } = Reference::fit(ReferenceKind::Gaussian, &x).unwrap()
        else {
            unreachable!()
        };
        assert!(mean.abs() < 0.02 && (sd - 1.0).abs() < 0.02);
        let r: Vec<f64> = x.chunks(2).map(|p| p[0].hypot(p[1])).collect();
        let Reference::Rayleigh { sigma } = Reference::fit(ReferenceKind::Rayleigh, &r).unwrap()
        else {
            unreachable!()
        };
        assert!((sigma - 1.0).abs() < 0.02);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            "cauchy".parse::<ReferenceKind>(),
            Err(Error::UnknownReference(_))
        ));
        assert!(ks_test(&[0.0; 50], &Reference::standard_gaussian(), 0.01).is_err());
        assert!(chi2_test(
            &gaussians(1000, 1),
            &Reference::standard_gaussian(),
            4,
            0,
            0.01
        )
        .is_err());
        assert!(ks_test(
            &gaussians(1000, 1),
            &Reference::Gaussian { mean: 0.0, sd: 0.0 },
            0.01
        )
        .is_err());
    }

    #[test]
    fn report_pass_follows_alpha() {
        let r = GofReport::new("x", 1.0, 0.02, 0.01, 10);
        assert!(r.pass);
        assert!(!GofReport::new("x", 1.0, 0.005, 0.01, 10).pass);
    }
}
