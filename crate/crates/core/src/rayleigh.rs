//! Rayleigh amplitudes and uniform phases from paired quadratures, plus
//! Savitzky-Golay denoising. Outputs are denoised raw values with no
//! extraction guarantee.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::adc::CodeBlock;
use crate::error::{Error, Result};
use crate::stats::{
    chi2_survival, equal_probability_counts, GofReport, Reference, ReferenceKind, DEFAULT_ALPHA,
};

pub const DEFAULT_WINDOW: usize = 31;
pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_BINS: usize = 100;
/// Label carried by every Rayleigh output.
pub const OUTPUT_LABEL: &str = "denoised-raw, uncertified";

fn check_pairs(i: &[f64], q: &[f64]) -> Result<()> {
    if i.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: i.len(),
            actual: q.len(),
        });
    }
    Ok(())
}

/// `r = √(I² + Q²)` element-wise.
pub fn rayleigh_raw(i_vals: &[f64], q_vals: &[f64]) -> Result<Vec<f64>> {
    check_pairs(i_vals, q_vals)?;
    Ok(i_vals
        .iter()
        .zip(q_vals)
        .map(|(i, q)| (i * i + q * q).sqrt())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phases {
    /// Angles in `[0, 2π)`.
    pub values: Vec<f64>,
    /// Pairs at the origin, which have no angle.
    pub skipped: usize,
}

/// `θ = atan2(Q, I)` mapped into `[0, 2π)`.
pub fn phase_uniform(i_vals: &[f64], q_vals: &[f64]) -> Result<Phases> {
    check_pairs(i_vals, q_vals)?;
    let mut values = Vec::with_capacity(i_vals.len());
    let mut skipped = 0;
    for (&i, &q) in i_vals.iter().zip(q_vals) {
        if i == 0.0 && q == 0.0 {
            skipped += 1;
            continue;
        }
        let mut t = q.atan2(i);
        if t < 0.0 {
            t += TAU;
        }
        // -tiny + 2π rounds to 2π
        if t >= TAU {
            t = 0.0;
        }
        values.push(t);
    }
    Ok(Phases { values, skipped })
}

/// A pluggable smoothing stage.
pub trait Denoiser: Send + Sync {
    fn name(&self) -> &str;
    fn denoise(&self, values: &[f64]) -> Result<Vec<f64>>;
}

/// Least-squares weights that evaluate, at each of the `w` positions, the
/// degree-`order` polynomial fitted to `w` consecutive points. Row `p` holds the
/// weights for output position `p`.
fn fit_weights(w: usize, order: usize) -> Vec<Vec<f64>> {
    let cols = order + 1;
    let half = (w - 1) as f64 / 2.0;
    let scale = half.max(1.0);
    // orthonormalize Vandermonde columns (modified Gram-Schmidt)
    let mut q: Vec<Vec<f64>> = (0..cols)
        .map(|d| {
            (0..w)
                .map(|t| ((t as f64 - half) / scale).powi(d as i32))
                .collect()
        })
        .collect();
    for a in 0..cols {
        for b in 0..a {
            let dot: f64 = q[a].iter().zip(&q[b]).map(|(x, y)| x * y).sum();
            let qb = q[b].clone();
            q[a].iter_mut().zip(&qb).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = q[a].iter().map(|x| x * x).sum::<f64>().sqrt();
        q[a].iter_mut().for_each(|x| *x /= norm);
    }
    (0..w)
        .map(|p| {
            (0..w)
                .map(|t| q.iter().map(|col| col[p] * col[t]).sum())
                .collect()
        })
        .collect()
}

/// Savitzky-Golay smoother with a symmetric odd window. The first and last
/// `window / 2` outputs come from the polynomial fitted to the first or last
/// full window.
#[derive(Debug, Clone, PartialEq)]
pub struct SavitzkyGolay {
    window: usize,
    order: usize,
    weights: Vec<Vec<f64>>,
}

impl SavitzkyGolay {
    pub fn new(window: usize, order: usize) -> Result<Self> {
        if window % 2 == 0 || window < 3 {
            return Err(Error::invalid(
                "sg_window",
                format!("must be odd and ≥ 3, got {window}"),
            ));
        }
        if order >= window {
            return Err(Error::invalid(
                "sg_order",
                format!("must be below the window ({window}), got {order}"),
            ));
        }
        Ok(SavitzkyGolay {
            window,
            order,
            weights: fit_weights(window, order),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Interior convolution weights.
    pub fn center_weights(&self) -> &[f64] {
        &self.weights[self.window / 2]
    }
}

impl Denoiser for SavitzkyGolay {
    fn name(&self) -> &str {
        "savitzky-golay"
    }

    fn denoise(&self, values: &[f64]) -> Result<Vec<f64>> {
        let w = self.window;
        let n = values.len();
        if n < w {
            return Err(Error::InsufficientSamples { needed: w, got: n });
        }
        let half = w / 2;
        let dot = |row: &[f64], start: usize| -> f64 {
            row.iter()
                .zip(&values[start..start + w])
                .map(|(a, b)| a * b)
                .sum()
        };
        let mut out = vec![0.0; n];
        for (p, o) in out.iter_mut().enumerate().take(half) {
            *o = dot(&self.weights[p], 0);
        }
        let center = self.center_weights();
        for (t, o) in out.iter_mut().enumerate().take(n - half).skip(half) {
            *o = dot(center, t - half);
        }
        for p in 0..half {
            out[n - half + p] = dot(&self.weights[half + 1 + p], n - w);
        }
        Ok(out)
    }
}

/// Convenience wrapper for a one-off filter.
pub fn savitzky_golay(values: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    SavitzkyGolay::new(window, order)?.denoise(values)
}

/// Pearson chi-squared of `samples` against a fitted Rayleigh on an
/// equal-probability partition. With a denoiser, the bin counts are smoothed
/// before the statistic is formed.
pub fn histogram_chi2(
    samples: &[f64],
    bins: usize,
    denoiser: Option<&dyn Denoiser>,
    alpha: f64,
) -> Result<GofReport> {
    let reference = Reference::fit(ReferenceKind::Rayleigh, samples)?;
    let counts: Vec<f64> = equal_probability_counts(samples, &reference, bins)?
        .into_iter()
        .map(|c| c as f64)
        .collect();
    let counts = match denoiser {
        Some(d) => d.denoise(&counts)?,
        None => counts,
    };
    let expected = samples.len() as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|c| (c - expected).powi(2) / expected)
        .sum();
    let dof = counts.len().saturating_sub(2).max(1);
    let name = match denoiser {
        Some(d) => format!("chi2-rayleigh-histogram-{}", d.name()),
        None => "chi2-rayleigh-histogram".to_string(),
    };
    let mut r = GofReport::new(name, stat, chi2_survival(stat, dof), alpha, samples.len());
    r.parameters_estimated = true;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RayleighConfig {
    pub sg_window: usize,
    pub sg_order: usize,
    /// Smooth the GoF histogram instead of the sample stream.
    pub histogram_mode: bool,
    pub bins: usize,
    pub alpha: f64,
}

impl Default for RayleighConfig {
    fn default() -> Self {
        RayleighConfig {
            sg_window: DEFAULT_WINDOW,
            sg_order: DEFAULT_ORDER,
            histogram_mode: false,
            bins: DEFAULT_BINS,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighOutput {
    pub label: String,
    pub values: Vec<f64>,
    pub histogram_mode: bool,
    /// Chi-squared of the raw amplitudes, then of the filtered result.
    pub gof: Vec<GofReport>,
}

impl RayleighOutput {
    pub fn write_f32_le<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for v in &self.values {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }
}

/// Amplitudes from dequantized codes. In stream mode the amplitudes are
/// filtered; in histogram mode they are passed through and only the GoF
/// histogram is smoothed.
pub fn rayleigh_extract(
    codes_i: &CodeBlock,
    codes_q: &CodeBlock,
    cfg: &RayleighConfig,
) -> Result<RayleighOutput> {
    let sg = SavitzkyGolay::new(cfg.sg_window, cfg.sg_order)?;
    let raw = rayleigh_raw(&codes_i.to_volts(), &codes_q.to_volts())?;
    let raw_gof = histogram_chi2(&raw, cfg.bins, None, cfg.alpha)?;
    let (values, filtered_gof) = if cfg.histogram_mode {
        let g = histogram_chi2(&raw, cfg.bins, Some(&sg), cfg.alpha)?;
        (raw, g)
    } else {
        let v = sg.denoise(&raw)?;
        let g = histogram_chi2(&v, cfg.bins, None, cfg.alpha)?;
        (v, g)
    };
    Ok(RayleighOutput {
        label: OUTPUT_LABEL.to_string(),
        values,
        histogram_mode: cfg.histogram_mode,
        gof: vec![raw_gof, filtered_gof],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_test;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn pairs(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                )
            })
            .unzip()
    }

    #[test]
    fn amplitude_and_phase_examples() {
        assert_eq!(
            rayleigh_raw(&[3.0, 0.0], &[4.0, 0.0]).unwrap(),
            vec![5.0, 0.0]
        );
        let p = phase_uniform(&[1.0, 0.0, 0.0, -1.0], &[0.0, 1.0, 0.0, -0.0]).unwrap();
        assert_eq!(p.skipped, 1);
        assert_eq!(p.values[0], 0.0);
        assert!((p.values[1] - PI / 2.0).abs() < 1e-15);
        assert!(p.values.iter().all(|&t| (0.0..TAU).contains(&t)));
        assert!(rayleigh_raw(&[1.0], &[]).is_err());
    }

    #[test]
    fn polar_round_trip() {
        let (i, q) = pairs(10_000, 1);
        let r = rayleigh_raw(&i, &q).unwrap();
        let t = phase_uniform(&i, &q).unwrap().values;
        for k in 0..i.len() {
            assert!(
                (r[k] * r[k] - (i[k] * i[k] + q[k] * q[k])).abs() <= 2f64.powi(-40) * r[k] * r[k]
            );
            let (x, y) = (r[k] * t[k].cos(), r[k] * t[k].sin());
            assert!((x - i[k]).abs() <= 1e-9 * r[k] && (y - q[k]).abs() <= 1e-9 * r[k]);
        }
    }

    #[test]
    fn ideal_gaussians_give_rayleigh_and_uniform_phase() {
        let (i, q) = pairs(200_000, 2);
        let r = rayleigh_raw(&i, &q).unwrap();
        assert!(
            ks_test(&r, &Reference::Rayleigh { sigma: 1.0 }, 0.01)
                .unwrap()
                .pass
        );
        let t = phase_uniform(&i, &q).unwrap().values;
        assert!(
            ks_test(&t, &Reference::Uniform { a: 0.0, b: TAU }, 0.01)
                .unwrap()
                .pass
        );
    }

    #[test]
    fn filter_parameters_checked() {
        assert!(SavitzkyGolay::new(30, 3).is_err());
        assert!(SavitzkyGolay::new(5, 5).is_err());
        assert!(savitzky_golay(&[1.0; 10], 31, 3).is_err());
    }

    #[test]
    fn classic_five_point_quadratic_weights() {
        let sg = SavitzkyGolay::new(5, 2).unwrap();
        let expected = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
        for (a, b) in sg.center_weights().iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_is_reproduced() {
        let out = savitzky_golay(&[2.5; 100], 31, 3).unwrap();
        assert!(out.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn polynomials_are_reproduced(
            coeffs in proptest::collection::vec(-2.0f64..2.0, 1..5),
            half in 2usize..16,
            len in 40usize..120,
        ) {
            let order = 3;
            let degree = coeffs.len() - 1;
            prop_assume!(degree <= order);
            let x: Vec<f64> = (0..len)
                .map(|t| {
                    let u = t as f64 / len as f64;
                    coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
                })
                .collect();
            let y = savitzky_golay(&x, 2 * half + 1, order).unwrap();
            for (a, b) in x.iter().zip(&y) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn filter_is_linear(seed in any::<u64>()) {
            let (a, b) = pairs(200, seed);
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let fa = savitzky_golay(&a, 31, 3).unwrap();
            let fb = savitzky_golay(&b, 31, 3).unwrap();
            let fs = savitzky_golay(&sum, 31, 3).unwrap();
            for k in 0..200 {
                prop_assert!((fs[k] - fa[k] - fb[k]).abs() < 1e-10);
            }
        }
    }
}
