//! Desk-scale throughput measurement. Numbers are wall-clock on the host and
//! carry no relation to hardware line rates.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{run_pipeline, Engine, Selection};
use crate::bits::BitBlock;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::gaussian::gaussian_extract_channel;
use crate::source::Channel;
use crate::uniform::{toeplitz_extract, ToeplitzKernel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub items: u64,
    pub seconds: f64,
    pub per_second: f64,
}

impl StageTiming {
    fn new(stage: &str, items: u64, elapsed: Duration) -> Self {
        let seconds = elapsed.as_secs_f64();
        StageTiming {
            stage: stage.into(),
            items,
            seconds,
            per_second: items as f64 / seconds.max(1e-12),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub threads: usize,
    pub blocks_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub available_cores: usize,
    pub block_n: usize,
    pub block_m: usize,
    /// Samples per second across both channels, end to end.
    pub raw_samples_per_s: f64,
    /// Raw bits fed to the uniform extractor per second, end to end.
    pub consumed_raw_bits_per_s: f64,
    pub uniform_bits_per_s: f64,
    /// `uniform_bits_per_s / consumed_raw_bits_per_s`.
    pub uniform_ratio: f64,
    pub gaussian_values_per_s: f64,
    pub toeplitz_fast_blocks_per_s: f64,
    pub toeplitz_naive_blocks_per_s: f64,
    pub scaling: Vec<ScalingPoint>,
    pub stages: Vec<StageTiming>,
}

/// Repeats `f` until `budget` has elapsed; returns iterations and elapsed time.
fn time_loop(budget: Duration, mut f: impl FnMut() -> Result<u64>) -> Result<(u64, Duration)> {
    let start = Instant::now();
    let mut items = 0;
    loop {
        items += f()?;
        let e = start.elapsed();
        if e >= budget {
            return Ok((items, e));
        }
    }
}

/// Blocks per second of fast Toeplitz extraction on a dedicated pool of `threads`.
pub fn toeplitz_scaling(
    kernel: &ToeplitzKernel,
    inputs: &[BitBlock],
    threads: usize,
    budget: Duration,
) -> Result<f64> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    pool.install(|| {
        kernel.extract_batch(inputs)?;
        let (items, e) = time_loop(budget, || Ok(kernel.extract_batch(inputs)?.len() as u64))?;
        Ok(items as f64 / e.as_secs_f64())
    })
}

pub fn bench(cfg: &PipelineConfig, seconds: f64) -> Result<BenchReport> {
    if !(seconds > 0.0) {
        return Err(Error::invalid("seconds", "must be positive"));
    }
    let share = Duration::from_secs_f64(seconds / 6.0);
    let spb = cfg.samples_per_block();
    let bits = cfg.adc.bits;
    let mut engine = Engine::new(cfg.clone())?;
    let mut stages = Vec::new();

    // warmup, excluded
    engine.run_frames(cfg.batch_frames, Selection::UNIFORM)?;

    let (frames, e) = time_loop(share, || {
        Ok(engine.raw_batch(cfg.batch_frames)?.len() as u64)
    })?;
    stages.push(StageTiming::new("source+adc frames", frames, e));

    let raw = engine.raw_batch(256)?;
    let inputs: Vec<BitBlock> = raw
        .iter()
        .flat_map(|f| {
            [
                BitBlock::from_codes(&f.i.codes, bits),
                BitBlock::from_codes(&f.q.codes, bits),
            ]
        })
        .collect();
    let kernel = engine.extractor.kernel().clone();
    let seed = kernel.seed().clone();
    let (fast, e) = time_loop(share, || {
        for x in &inputs {
            kernel.extract(x)?;
        }
        Ok(inputs.len() as u64)
    })?;
    stages.push(StageTiming::new("toeplitz fast blocks (1 thread)", fast, e));
    let fast_rate = fast as f64 / e.as_secs_f64();
    let (naive, e) = time_loop(share / 2, || {
        toeplitz_extract(&inputs[0], &seed, seed.m())?;
        Ok(1)
    })?;
    stages.push(StageTiming::new(
        "toeplitz naive blocks (1 thread)",
        naive,
        e,
    ));
    let naive_rate = naive as f64 / e.as_secs_f64();

    let scaling = [1usize, 4]
        .into_iter()
        .map(|t| {
            Ok(ScalingPoint {
                threads: t,
                blocks_per_second: toeplitz_scaling(&kernel, &inputs, t, share / 2)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let gcfg = cfg.extraction.gaussian();
    let pool_frames = gcfg.pool_size.div_ceil(spb);
    let pool_raw = engine.raw_batch(pool_frames)?;
    let codes: Vec<i32> = pool_raw
        .iter()
        .flat_map(|f| f.i.codes.iter().copied())
        .take(gcfg.pool_size)
        .collect();
    let block = crate::adc::CodeBlock::new(codes, cfg.adc)?;
    let m_bits = pool_raw[0].m_bits;
    let (values, e) = time_loop(share, || {
        Ok(gaussian_extract_channel(&block, m_bits, gcfg.passes(Channel::I), &gcfg)?.len() as u64)
    })?;
    stages.push(StageTiming::new("gaussian values (I)", values, e));
    let gaussian_rate = values as f64 / e.as_secs_f64();

    // end to end, uniform only
    let handles = run_pipeline(cfg.clone(), None, Selection::UNIFORM)?;
    let start = Instant::now();
    let before = handles.counters.snapshot();
    while start.elapsed() < share * 2 {
        if handles
            .uniform
            .recv_timeout(Duration::from_millis(200))
            .is_err()
            && handles.is_finished()
        {
            break;
        }
    }
    let after = handles.counters.snapshot();
    let e = start.elapsed().as_secs_f64();
    handles.join()?;
    let frames = after.frames - before.frames;
    let raw_samples = (after.raw_samples - before.raw_samples) * 2;
    let consumed_bits = raw_samples * bits as u64;
    let uniform_bits = after.uniform_bits - before.uniform_bits;
    stages.push(StageTiming::new(
        "pipeline frames",
        frames,
        Duration::from_secs_f64(e),
    ));

    Ok(BenchReport {
        available_cores: std::thread::available_parallelism().map_or(1, |n| n.get()),
        block_n: cfg.extraction.block_n,
        block_m: cfg.extraction.block_m,
        raw_samples_per_s: raw_samples as f64 / e,
        consumed_raw_bits_per_s: consumed_bits as f64 / e,
        uniform_bits_per_s: uniform_bits as f64 / e,
        uniform_ratio: if consumed_bits > 0 {
            uniform_bits as f64 / consumed_bits as f64
        } else {
            0.0
        },
        gaussian_values_per_s: gaussian_rate,
        toeplitz_fast_blocks_per_s: fast_rate,
        toeplitz_naive_blocks_per_s: naive_rate,
        scaling,
        stages,
    })
}
