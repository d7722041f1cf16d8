use std::time::{Duration, Instant};

use crossbeam_channel::RecvTimeoutError;

use trirng_core::config::PipelineConfig;
use trirng_core::pipeline::{bench::bench, run_pipeline, Engine, Selection};
use trirng_core::source::{Channel, NoiseModel};
use trirng_core::uniform::ToeplitzSeed;

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.extraction.calibration_samples = 1 << 16;
    cfg.extraction.pool_size = 4096;
    cfg
}

#[test]
fn one_frame_gives_1024_bits_per_channel() {
    let start = Instant::now();
    let mut engine = Engine::new(small_config()).unwrap();
    let out = engine.run_frames(1, Selection::UNIFORM).unwrap();
    assert_eq!(out.uniform.len(), 2);
    assert_eq!(out.uniform[0].channel, Channel::I);
    assert_eq!(out.uniform[1].channel, Channel::Q);
    assert!(out.uniform.iter().all(|b| b.bits.len() == 1024));
    let c = engine.counters.snapshot();
    assert_eq!((c.frames, c.raw_samples, c.uniform_bits), (1, 96, 2048));
    eprintln!("startup + 1 frame: {:?}", start.elapsed());
}

#[test]
fn recertifies_on_schedule() {
    let mut cfg = small_config();
    cfg.recertify_every = 10;
    let mut engine = Engine::new(cfg).unwrap();
    let out = engine.run_frames(35, Selection::UNIFORM).unwrap();
    assert_eq!(engine.log.len(), 4);
    let frames: Vec<u64> = engine.log.snapshot().iter().map(|e| e.frame).collect();
    assert_eq!(frames, vec![0, 10, 20, 30]);
    assert!(out.uniform.iter().all(|b| b.cert_age() < 10));
    assert_eq!(out.uniform.last().unwrap().epoch, 3);
}

#[test]
fn switching_output_type_keeps_consumption_rate() {
    let handles = run_pipeline(small_config(), Some(20_000), Selection::UNIFORM).unwrap();
    let mut uniform_blocks = 0usize;
    let mut rayleigh = 0usize;
    let mut switched = false;
    let (mut u_done, mut r_done) = (false, false);
    let deadline = Instant::now() + Duration::from_secs(120);
    while !(u_done && r_done) && Instant::now() < deadline {
        match handles.uniform.recv_timeout(Duration::from_millis(10)) {
            Ok(b) => uniform_blocks += b.len(),
            Err(RecvTimeoutError::Disconnected) => u_done = true,
            Err(RecvTimeoutError::Timeout) => {}
        }
        match handles.rayleigh.recv_timeout(Duration::from_millis(10)) {
            Ok(b) => rayleigh += b.iter().map(|r| r.values.len()).sum::<usize>(),
            Err(RecvTimeoutError::Disconnected) => r_done = true,
            Err(RecvTimeoutError::Timeout) => {}
        }
        if !switched && uniform_blocks >= 200 {
            handles.selection.set(Selection::RAYLEIGH);
            switched = true;
        }
    }
    let c = handles.counters.snapshot();
    assert_eq!(c.frames, 20_000);
    assert_eq!(
        c.raw_samples,
        20_000 * 96,
        "every frame consumes one block of samples"
    );
    assert!(uniform_blocks > 0 && rayleigh > 0);
    assert_eq!(
        uniform_blocks as u64 * 1024 + (rayleigh as u64 / 96) * 2048,
        20_000 * 2048
    );
    handles.wait().unwrap();
}

#[test]
fn no_excess_noise_certifies_higher() {
    let noisy = Engine::new(small_config()).unwrap().log.latest().unwrap();
    let mut cfg = small_config();
    cfg.source = NoiseModel::calibrated().without_excess();
    let clean = Engine::new(cfg).unwrap().log.latest().unwrap();
    assert!(clean.i.h_min_per_bit > noisy.i.h_min_per_bit);
    assert!(clean.q.h_min_per_bit > noisy.q.h_min_per_bit);
}

#[test]
fn startup_budget_violation_is_fatal() {
    let mut cfg = small_config();
    cfg.extraction.block_m = 1500;
    let err = Engine::new(cfg).err().expect("block_m above budget");
    let text = err.to_string();
    assert!(text.contains("1500"), "{text}");
}

#[test]
fn cached_seed_gives_identical_mapping() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("seed.bin");
    let mut cfg = small_config();
    cfg.extraction.seed_cache_path = Some(path.clone());
    let a = Engine::new(cfg.clone()).unwrap();
    assert!(path.exists());
    let stored = ToeplitzSeed::read_from(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(stored.bits().len(), 2559);
    cfg.seed = 99;
    let b = Engine::new(cfg).unwrap();
    assert_eq!(a.extractor.kernel().seed(), b.extractor.kernel().seed());
}

#[test]
fn gaussian_pools_flow_through() {
    let mut engine = Engine::new(small_config()).unwrap();
    let out = engine.run_frames(43, Selection::GAUSSIAN).unwrap();
    // 43 × 96 = 4128 codes: one 4096-value pool per channel
    assert_eq!(out.gaussian.len(), 2);
    assert!(out
        .gaussian
        .iter()
        .all(|g| g.output.len() == 4096 && g.output.n_out == 14));
}

#[test]
fn bench_reports_block_ratio() {
    let r = bench(&small_config(), 3.0).unwrap();
    assert!(
        (r.uniform_ratio - 1024.0 / 1536.0).abs() < 0.01 * 1024.0 / 1536.0,
        "{r:?}"
    );
    assert!(r.toeplitz_fast_blocks_per_s >= r.toeplitz_naive_blocks_per_s);
    let rate = |t: usize| {
        r.scaling
            .iter()
            .find(|p| p.threads == t)
            .map(|p| p.blocks_per_second)
    };
    if let (Some(one), Some(four)) = (rate(1), rate(4)) {
        if r.available_cores >= 4 {
            assert!(four >= 1.5 * one, "1 thread {one}, 4 threads {four}");
        } else {
            println!(
                "{} core(s): scaling not checked ({one:.0} vs {four:.0} blocks/s)",
                r.available_cores
            );
        }
    }
    println!("{}", serde_json::to_string_pretty(&r).unwrap());
}
