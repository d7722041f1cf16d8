//! Single-file pipeline configuration (TOML).

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adc::AdcSpec;
use crate::entropy::{
    extractable_length, CertifyConfig, EntropyReport, DEFAULT_EPSILON, DEFAULT_PREDICTION_ORDER,
    DEFAULT_SEGMENT_LENGTH,
};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianConfig, Passes, RecursiveMatrix};
use crate::rayleigh::RayleighConfig;
use crate::source::NoiseModel;
use crate::stats::DEFAULT_ALPHA;

/// Environment variable that overrides `service.listen`.
pub const LISTEN_ENV: &str = "TRIRNG_LISTEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub block_n: usize,
    pub block_m: usize,
    pub epsilon: f64,
    pub prediction_order: usize,
    pub segment_length: usize,
    /// Samples per channel in each certification record.
    pub calibration_samples: usize,
    /// Output bits per Dodis call while building the Toeplitz seed.
    pub dodis_chunk: usize,
    pub seed_cache_path: Option<PathBuf>,
    pub k: usize,
    pub pool_size: usize,
    pub passes_i: Passes,
    pub passes_q: Passes,
    pub matrix: Option<RecursiveMatrix>,
    pub output_grid_sigma: f64,
    pub sg_window: usize,
    pub sg_order: usize,
    pub histogram_mode: bool,
    pub gof_bins: usize,
    pub alpha: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        let g = GaussianConfig::default();
        let r = RayleighConfig::default();
        ExtractionConfig {
            block_n: 1536,
            block_m: 1024,
            epsilon: DEFAULT_EPSILON,
            prediction_order: DEFAULT_PREDICTION_ORDER,
            segment_length: DEFAULT_SEGMENT_LENGTH,
            calibration_samples: 1 << 18,
            dodis_chunk: 256,
            seed_cache_path: None,
            k: g.k,
            pool_size: g.pool_size,
            passes_i: g.passes_i,
            passes_q: g.passes_q,
            matrix: None,
            output_grid_sigma: g.output_grid_sigma,
            sg_window: r.sg_window,
            sg_order: r.sg_order,
            histogram_mode: r.histogram_mode,
            gof_bins: g.gof_bins,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl ExtractionConfig {
    pub fn certify(&self) -> CertifyConfig {
        CertifyConfig {
            epsilon: self.epsilon,
            prediction_order: self.prediction_order,
            segment_length: self.segment_length,
            block_n: self.block_n,
        }
    }

    pub fn gaussian(&self) -> GaussianConfig {
        GaussianConfig {
            k: self.k,
            pool_size: self.pool_size,
            passes_i: self.passes_i,
            passes_q: self.passes_q,
            matrix: self.matrix.clone(),
            output_grid_sigma: self.output_grid_sigma,
            gof_bins: self.gof_bins,
            alpha: self.alpha,
        }
    }

    pub fn rayleigh(&self) -> RayleighConfig {
        RayleighConfig {
            sg_window: self.sg_window,
            sg_order: self.sg_order,
            histogram_mode: self.histogram_mode,
            bins: self.gof_bins,
            alpha: self.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub max_request_bytes: usize,
    /// Bits per buffer that must pass the bit tests before it can be served.
    pub buffer_bits: usize,
    /// Certified uniform bytes held ready; production pauses above this.
    pub uniform_capacity_bytes: usize,
    pub gaussian_capacity_values: usize,
    pub rayleigh_capacity_values: usize,
    /// Run the bit tests on every `test_every`-th buffer; the others are served untested.
    pub test_every: u64,
    pub test_alpha: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8080".into(),
            max_request_bytes: 1 << 20,
            buffer_bits: 1 << 20,
            uniform_capacity_bytes: 1 << 23,
            gaussian_capacity_values: 1 << 18,
            rayleigh_capacity_values: 1 << 18,
            test_every: 1,
            test_alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master PRNG seed of the simulated source.
    pub seed: u64,
    /// Frames between entropy re-estimations.
    pub recertify_every: u64,
    /// Frames handed to the extraction stage at once.
    pub batch_frames: usize,
    pub source: NoiseModel,
    pub adc: AdcSpec,
    pub extraction: ExtractionConfig,
    pub service: ServiceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            recertify_every: 8192,
            batch_frames: 64,
            source: NoiseModel::calibrated(),
            adc: AdcSpec::default(),
            extraction: ExtractionConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Samples per channel in one block: `block_n / adc bits`.
    pub fn samples_per_block(&self) -> usize {
        self.extraction.block_n / self.adc.bits as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.adc.validate()?;
        let x = &self.extraction;
        if x.block_n == 0 || x.block_n % self.adc.bits as usize != 0 {
            return Err(Error::invalid(
                "block_n",
                format!(
                    "must be a positive multiple of the ADC resolution ({} bits)",
                    self.adc.bits
                ),
            ));
        }
        if x.block_m == 0 || x.block_m > x.block_n {
            return Err(Error::invalid(
                "block_m",
                format!("need 1 ≤ block_m ≤ block_n = {}", x.block_n),
            ));
        }
        if x.calibration_samples < 4 * x.segment_length {
            return Err(Error::invalid(
                "calibration_samples",
                "too short for the spectral estimate",
            ));
        }
        if x.dodis_chunk == 0 {
            return Err(Error::invalid("dodis_chunk", "must be positive"));
        }
        x.certify().validate()?;
        x.gaussian().validate()?;
        crate::rayleigh::SavitzkyGolay::new(x.sg_window, x.sg_order)?;
        if x.sg_window > self.samples_per_block() {
            return Err(Error::invalid(
                "sg_window",
                "longer than one block of samples",
            ));
        }
        if self.recertify_every == 0 {
            return Err(Error::invalid("recertify_every", "must be positive"));
        }
        if self.batch_frames == 0 {
            return Err(Error::invalid("batch_frames", "must be positive"));
        }
        let s = &self.service;
        if s.buffer_bits == 0 || s.buffer_bits % 8 != 0 {
            return Err(Error::invalid(
                "buffer_bits",
                "must be a positive multiple of 8",
            ));
        }
        if s.max_request_bytes == 0 || s.test_every == 0 {
            return Err(Error::invalid(
                "service",
                "max_request_bytes and test_every must be positive",
            ));
        }
        Ok(())
    }

    /// Listen address, with [`LISTEN_ENV`] taking precedence over the file.
    pub fn listen_addr(&self) -> Result<SocketAddr> {
        let raw = std::env::var(LISTEN_ENV).unwrap_or_else(|_| self.service.listen.clone());
        raw.parse()
            .map_err(|_| Error::Config(format!("listen address {raw:?} is not host:port")))
    }

    /// Startup gate: the configured output length must fit the certified budget.
    pub fn check_budget(&self, report: &EntropyReport) -> Result<()> {
        let x = &self.extraction;
        let extractable = extractable_length(x.block_n, report.h_min_per_bit, x.epsilon);
        if x.block_m > extractable {
            return Err(Error::ExtractionBudget {
                block_m: x.block_m,
                extractable,
                block_n: x.block_n,
                h_min_per_bit: report.h_min_per_bit,
                epsilon: x.epsilon,
            });
        }
        Ok(())
    }
}
