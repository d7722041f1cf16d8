use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adc::{quantize, CodeBlock};
use crate::bits::BitBlock;
use crate::config::PipelineConfig;
use crate::entropy::{certify, EntropyReport};
use crate::error::{Error, Result};
use crate::gaussian::{gaussian_extract_channel, GaussianConfig, GaussianOutput};
use crate::rayleigh::{rayleigh_raw, Denoiser, SavitzkyGolay};
use crate::source::{Channel, QuadratureSource};
use crate::uniform::{seed_chain, BitSource, DodisGeometry, ToeplitzKernel, ToeplitzSeed};

use super::Selection;

// the dark record uses its own noise realization
const DARK_SEED_SALT: u64 = 0xda4c_0000_0000_0001;

/// One certification event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertEntry {
    pub epoch: u64,
    /// First frame extracted under this certification.
    pub frame: u64,
    pub i: EntropyReport,
    pub q: EntropyReport,
    /// Smaller of the two channels' extractable lengths for one block.
    pub extractable: usize,
    pub block_n: usize,
    pub block_m: usize,
}

impl CertEntry {
    pub fn h_min_per_bit(&self) -> f64 {
        self.i.h_min_per_bit.min(self.q.h_min_per_bit)
    }
}

/// Append-only certification log, readable while the pipeline runs.
#[derive(Debug, Clone, Default)]
pub struct CertLog(Arc<RwLock<Vec<CertEntry>>>);

impl CertLog {
    pub fn push(&self, entry: CertEntry) {
        self.0.write().push(entry);
    }

    pub fn latest(&self) -> Option<CertEntry> {
        self.0.read().last().cloned()
    }

    pub fn snapshot(&self) -> Vec<CertEntry> {
        self.0.read().clone()
    }

    pub fn len(&self) -> usize {
        self.0.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.read().is_empty()
    }
}

/// Running totals, shared with observers.
#[derive(Debug, Default)]
pub struct Counters {
    /// Samples per channel fed to the extractors.
    pub raw_samples: AtomicU64,
    /// Samples per channel spent on certification and seeding.
    pub calibration_samples: AtomicU64,
    pub frames: AtomicU64,
    pub uniform_bits: AtomicU64,
    pub gaussian_values: AtomicU64,
    pub rayleigh_values: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub raw_samples: u64,
    pub calibration_samples: u64,
    pub frames: u64,
    pub uniform_bits: u64,
    pub gaussian_values: u64,
    pub rayleigh_values: u64,
}

impl Counters {
    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            raw_samples: self.raw_samples.load(Ordering::Relaxed),
            calibration_samples: self.calibration_samples.load(Ordering::Relaxed),
            frames: self.frames.load(Ordering::Relaxed),
            uniform_bits: self.uniform_bits.load(Ordering::Relaxed),
            gaussian_values: self.gaussian_values.load(Ordering::Relaxed),
            rayleigh_values: self.rayleigh_values.load(Ordering::Relaxed),
        }
    }
}

/// One block per channel of digitized samples, tagged with the certification
/// it was produced under.
#[derive(Debug, Clone)]
pub struct RawFrame {
    pub index: u64,
    pub epoch: u64,
    pub cert_frame: u64,
    pub m_bits: u32,
    pub i: CodeBlock,
    pub q: CodeBlock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformBlock {
    pub frame: u64,
    pub epoch: u64,
    pub cert_frame: u64,
    pub channel: Channel,
    pub bits: BitBlock,
}

impl UniformBlock {
    /// Frames elapsed since the certification this block was extracted under.
    pub fn cert_age(&self) -> u64 {
        self.frame - self.cert_frame
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBatch {
    /// Frame whose codes completed the pool.
    pub frame: u64,
    pub epoch: u64,
    pub output: GaussianOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayleighBatch {
    pub frame: u64,
    pub values: Vec<f64>,
}

/// Everything extracted from one batch of frames.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchOutput {
    /// I then Q for each frame, frames in order.
    pub uniform: Vec<UniformBlock>,
    pub gaussian: Vec<GaussianBatch>,
    pub rayleigh: Vec<RayleighBatch>,
}

/// Source, digitizer and periodic certification: the serial front of the pipeline.
pub struct Generator {
    cfg: PipelineConfig,
    source: QuadratureSource,
    dark: QuadratureSource,
    log: CertLog,
    counters: Arc<Counters>,
    next_frame: u64,
    epoch: u64,
    cert_frame: u64,
    m_bits: u32,
}

impl Generator {
    pub fn new(cfg: PipelineConfig, log: CertLog, counters: Arc<Counters>) -> Result<Self> {
        cfg.validate()?;
        let mut g = Generator {
            source: QuadratureSource::new(&cfg.source, cfg.seed)?,
            dark: QuadratureSource::dark(&cfg.source, cfg.seed ^ DARK_SEED_SALT)?,
            cfg,
            log,
            counters,
            next_frame: 0,
            epoch: 0,
            cert_frame: 0,
            m_bits: 0,
        };
        g.recertify()?;
        Ok(g)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn next_frame_index(&self) -> u64 {
        self.next_frame
    }

    /// Takes a fresh calibration record and dark record, certifies both
    /// channels and checks the extraction budget.
    pub fn recertify(&mut self) -> Result<CertEntry> {
        let n = self.cfg.extraction.calibration_samples;
        let ccfg = self.cfg.extraction.certify();
        let live = self.source.fill(n);
        let dark = self.dark.fill(n);
        self.counters
            .calibration_samples
            .fetch_add(n as u64, Ordering::Relaxed);
        let (li, lq) = quantize(&live, &self.cfg.adc)?;
        let (di, dq) = quantize(&dark, &self.cfg.adc)?;
        let (ri, rq) = rayon::join(
            || certify(&li, &di, live.sample_rate_hz, &ccfg),
            || certify(&lq, &dq, live.sample_rate_hz, &ccfg),
        );
        let (mut ri, mut rq) = (ri?, rq?);
        ri.channel = Some(Channel::I);
        rq.channel = Some(Channel::Q);
        self.cfg.check_budget(&ri)?;
        self.cfg.check_budget(&rq)?;
        let epoch = if self.log.is_empty() {
            0
        } else {
            self.epoch + 1
        };
        let entry = CertEntry {
            epoch,
            frame: self.next_frame,
            extractable: ri
                .extractable_length(self.cfg.extraction.block_n)
                .min(rq.extractable_length(self.cfg.extraction.block_n)),
            block_n: self.cfg.extraction.block_n,
            block_m: self.cfg.extraction.block_m,
            i: ri,
            q: rq,
        };
        self.epoch = epoch;
        self.cert_frame = self.next_frame;
        // one precision for both channels keeps the Gaussian outputs aligned
        self.m_bits = entry.i.msb_count().min(entry.q.msb_count());
        self.log.push(entry.clone());
        Ok(entry)
    }

    /// Raw bits for the Dodis seeding step: `x` blocks from I, `y` blocks from Q.
    pub fn seed_source(&mut self) -> impl BitSource + '_ {
        let bits = self.cfg.adc.bits;
        let mut take_q = false;
        move |len: usize| {
            let samples = len.div_ceil(bits as usize);
            let frame = self.source.fill(samples);
            self.counters
                .calibration_samples
                .fetch_add(samples as u64, Ordering::Relaxed);
            let (ci, cq) = quantize(&frame, &self.cfg.adc).ok()?;
            let codes = if take_q { cq } else { ci };
            take_q = !take_q;
            BitBlock::from_codes(&codes.codes, bits).slice(0, len).ok()
        }
    }

    pub fn next_raw(&mut self) -> Result<RawFrame> {
        let index = self.next_frame;
        if index - self.cert_frame >= self.cfg.recertify_every {
            self.recertify().map_err(|e| e.at_block(index))?;
        }
        let frame = self.source.fill(self.cfg.samples_per_block());
        let (i, q) = quantize(&frame, &self.cfg.adc).map_err(|e| e.at_block(index))?;
        self.next_frame += 1;
        Ok(RawFrame {
            index,
            epoch: self.epoch,
            cert_frame: self.cert_frame,
            m_bits: self.m_bits,
            i,
            q,
        })
    }
}

/// Builds the Toeplitz kernel: from the seed cache when present, otherwise by
/// Dodis seeding from the generator's raw stream (and written to the cache).
pub fn provision_seed(generator: &mut Generator) -> Result<ToeplitzKernel> {
    let x = generator.cfg.extraction.clone();
    if let Some(path) = &x.seed_cache_path {
        if path.exists() {
            let seed = ToeplitzSeed::read_from(BufReader::new(File::open(path)?))?;
            if seed.n() != x.block_n || seed.m() != x.block_m {
                return Err(Error::Config(format!(
                    "cached seed {} is {}×{}, config wants {}×{}",
                    path.display(),
                    seed.n(),
                    seed.m(),
                    x.block_n,
                    x.block_m
                )));
            }
            return Ok(ToeplitzKernel::new(seed));
        }
    }
    let h = generator
        .log
        .latest()
        .expect("generator certifies on creation")
        .h_min_per_bit();
    let geometry = DodisGeometry::for_entropy(x.dodis_chunk, h, x.epsilon)?;
    let seed = seed_chain(&mut generator.seed_source(), geometry, x.block_n, x.block_m)?;
    if let Some(path) = &x.seed_cache_path {
        seed.write_to(BufWriter::new(File::create(path)?))?;
    }
    Ok(ToeplitzKernel::new(seed))
}

/// Parallel back half: turns raw frames into outputs, keeping frame order.
pub struct Extractor {
    kernel: Arc<ToeplitzKernel>,
    gaussian: GaussianConfig,
    sg: SavitzkyGolay,
    histogram_mode: bool,
    bits: u32,
    pools: [Vec<i32>; 2],
    counters: Arc<Counters>,
}

impl Extractor {
    pub fn new(
        cfg: &PipelineConfig,
        kernel: ToeplitzKernel,
        counters: Arc<Counters>,
    ) -> Result<Self> {
        Ok(Extractor {
            kernel: Arc::new(kernel),
            gaussian: cfg.extraction.gaussian(),
            sg: SavitzkyGolay::new(cfg.extraction.sg_window, cfg.extraction.sg_order)?,
            histogram_mode: cfg.extraction.histogram_mode,
            bits: cfg.adc.bits,
            pools: [Vec::new(), Vec::new()],
            counters,
        })
    }

    pub fn kernel(&self) -> &ToeplitzKernel {
        &self.kernel
    }

    pub fn process(&mut self, frames: &[RawFrame], selection: Selection) -> Result<BatchOutput> {
        let mut out = BatchOutput::default();
        let samples: u64 = frames.iter().map(|f| f.i.len() as u64).sum();
        if selection.uniform() {
            let kernel = &self.kernel;
            let bits = self.bits;
            let blocks: Vec<Result<[UniformBlock; 2]>> = frames
                .par_iter()
                .map(|f| {
                    let mk = |channel, codes: &CodeBlock| -> Result<UniformBlock> {
                        let raw = BitBlock::from_codes(&codes.codes, bits);
                        Ok(UniformBlock {
                            frame: f.index,
                            epoch: f.epoch,
                            cert_frame: f.cert_frame,
                            channel,
                            bits: kernel.extract(&raw).map_err(|e| e.at_block(f.index))?,
                        })
                    };
                    Ok([mk(Channel::I, &f.i)?, mk(Channel::Q, &f.q)?])
                })
                .collect();
            for pair in blocks {
                out.uniform.extend(pair?);
            }
            let bits_out: u64 = out.uniform.iter().map(|b| b.bits.len() as u64).sum();
            self.counters
                .uniform_bits
                .fetch_add(bits_out, Ordering::Relaxed);
        }
        if selection.rayleigh() {
            let sg = &self.sg;
            let hist = self.histogram_mode;
            let batches: Vec<Result<RayleighBatch>> = frames
                .par_iter()
                .map(|f| {
                    let r = rayleigh_raw(&f.i.to_volts(), &f.q.to_volts())?;
                    let values = if hist { r } else { sg.denoise(&r)? };
                    Ok(RayleighBatch {
                        frame: f.index,
                        values,
                    })
                })
                .collect();
            for b in batches {
                let b = b?;
                self.counters
                    .rayleigh_values
                    .fetch_add(b.values.len() as u64, Ordering::Relaxed);
                out.rayleigh.push(b);
            }
        }
        if selection.gaussian() {
            for f in frames {
                for (slot, (channel, codes)) in [(Channel::I, &f.i), (Channel::Q, &f.q)]
                    .into_iter()
                    .enumerate()
                {
                    self.pools[slot].extend_from_slice(&codes.codes);
                    if self.pools[slot].len() >= self.gaussian.pool_size {
                        let pool: Vec<i32> =
                            self.pools[slot].drain(..self.gaussian.pool_size).collect();
                        let block = CodeBlock::new(pool, codes.spec)?;
                        let mut output = gaussian_extract_channel(
                            &block,
                            f.m_bits,
                            self.gaussian.passes(channel),
                            &self.gaussian,
                        )
                        .map_err(|e| e.at_block(f.index))?;
                        output.channel = Some(channel);
                        self.counters
                            .gaussian_values
                            .fetch_add(output.len() as u64, Ordering::Relaxed);
                        out.gaussian.push(GaussianBatch {
                            frame: f.index,
                            epoch: f.epoch,
                            output,
                        });
                    }
                }
            }
        }
        self.counters
            .raw_samples
            .fetch_add(samples, Ordering::Relaxed);
        self.counters
            .frames
            .fetch_add(frames.len() as u64, Ordering::Relaxed);
        Ok(out)
    }
}

/// Single-threaded driver over [`Generator`] and [`Extractor`].
pub struct Engine {
    pub generator: Generator,
    pub extractor: Extractor,
    pub log: CertLog,
    pub counters: Arc<Counters>,
}

impl Engine {
    /// Certifies, checks the block budget and provisions the Toeplitz seed.
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        let log = CertLog::default();
        let counters = Arc::new(Counters::default());
        let mut generator = Generator::new(cfg.clone(), log.clone(), counters.clone())?;
        let kernel = provision_seed(&mut generator)?;
        let extractor = Extractor::new(&cfg, kernel, counters.clone())?;
        Ok(Engine {
            generator,
            extractor,
            log,
            counters,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        self.generator.config()
    }

    pub fn raw_batch(&mut self, frames: usize) -> Result<Vec<RawFrame>> {
        (0..frames).map(|_| self.generator.next_raw()).collect()
    }

    pub fn run_frames(&mut self, frames: usize, selection: Selection) -> Result<BatchOutput> {
        let raw = self.raw_batch(frames)?;
        self.extractor.process(&raw, selection)
    }

    pub fn split(self) -> (Generator, Extractor, CertLog, Arc<Counters>) {
        (self.generator, self.extractor, self.log, self.counters)
    }
}
