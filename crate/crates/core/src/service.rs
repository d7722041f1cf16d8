//! Buffering core of the random-number service: certified, tested buffers
//! handed out exactly once. The HTTP layer lives in the CLI crate.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::select;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::bits::BitBlock;
use crate::config::{PipelineConfig, ServiceConfig};
use crate::error::{Error, Result};
use crate::pipeline::{run_pipeline, CertSummary, CounterSnapshot, PipelineHandles, Selection};
use crate::rayleigh::OUTPUT_LABEL;
use crate::stats::bit_tests;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputType {
    Uniform,
    Gaussian,
    Rayleigh,
}

impl OutputType {
    /// Bytes per value in a response.
    pub fn value_size(self) -> usize {
        match self {
            OutputType::Uniform => 1,
            OutputType::Gaussian => 2,
            OutputType::Rayleigh => 4,
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            OutputType::Uniform => "application/octet-stream",
            OutputType::Gaussian => "application/x-trirng-gaussian-i16le",
            OutputType::Rayleigh => "application/x-trirng-rayleigh-f32le",
        }
    }
}

impl FromStr for OutputType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(OutputType::Uniform),
            "gaussian" => Ok(OutputType::Gaussian),
            "rayleigh" => Ok(OutputType::Rayleigh),
            _ => Err(Error::invalid("type", format!("unknown output type {s:?}"))),
        }
    }
}

impl fmt::Display for OutputType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputType::Uniform => "uniform",
            OutputType::Gaussian => "gaussian",
            OutputType::Rayleigh => "rayleigh",
        })
    }
}

/// Why a request could not be served.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TakeError {
    /// Malformed request (maps to HTTP 400).
    BadRequest(String),
    /// Not enough certified output buffered right now (maps to HTTP 503).
    Unavailable { requested: usize, available: usize },
}

impl fmt::Display for TakeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TakeError::BadRequest(m) => f.write_str(m),
            TakeError::Unavailable {
                requested,
                available,
            } => {
                write!(
                    f,
                    "{requested} bytes requested, {available} certified bytes buffered"
                )
            }
        }
    }
}

impl std::error::Error for TakeError {}

/// A served range of one output stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Served {
    /// Position of the first byte in the stream of all bytes served for this type.
    pub offset: u64,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferFill {
    pub uniform_bytes: usize,
    pub gaussian_bytes: usize,
    pub rayleigh_bytes: usize,
    pub uniform_capacity_bytes: usize,
}

/// `/health` body. Field set is part of the service contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    /// `starting`, `ok`, `paused` or `failed`.
    pub status: String,
    pub certified: bool,
    pub certification: Option<CertSummary>,
    pub certifications: usize,
    pub recertify_every: u64,
    pub buffers: BufferFill,
    pub buffers_accepted: u64,
    pub buffers_discarded: u64,
    pub stale_blocks_dropped: u64,
    pub served_uniform_bytes: u64,
    pub served_gaussian_bytes: u64,
    pub served_rayleigh_bytes: u64,
    pub counters: CounterSnapshot,
    pub rayleigh_label: String,
    pub last_error: Option<String>,
}

#[derive(Default)]
struct State {
    uniform: VecDeque<u8>,
    gaussian: VecDeque<u8>,
    rayleigh: VecDeque<u8>,
    pending: Option<BitBlock>,
    buffers_seen: u64,
    accepted: u64,
    discarded: u64,
    stale: u64,
    served: [u64; 3],
    failed: Option<String>,
    stopped: bool,
}

pub struct Service {
    cfg: ServiceConfig,
    recertify_every: u64,
    state: Mutex<State>,
    pipeline: Mutex<Option<PipelineHandles>>,
    log: crate::pipeline::CertLog,
    counters: Arc<crate::pipeline::Counters>,
    selection: crate::pipeline::SelectionHandle,
    shutdown: AtomicBool,
    filler: Mutex<Option<JoinHandle<()>>>,
}

impl Service {
    /// Starts the pipeline and the buffer filler. Startup certification
    /// errors are returned here.
    pub fn start(cfg: PipelineConfig) -> Result<Arc<Service>> {
        let handles = run_pipeline(cfg.clone(), None, Selection::ALL)?;
        let svc = Arc::new(Service {
            cfg: cfg.service.clone(),
            recertify_every: cfg.recertify_every,
            state: Mutex::new(State::default()),
            log: handles.log.clone(),
            counters: handles.counters.clone(),
            selection: handles.selection.clone(),
            pipeline: Mutex::new(Some(handles)),
            shutdown: AtomicBool::new(false),
            filler: Mutex::new(None),
        });
        let worker = svc.clone();
        let t = std::thread::Builder::new()
            .name("trirng-filler".into())
            .spawn(move || worker.fill_loop())?;
        *svc.filler.lock() = Some(t);
        Ok(svc)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    fn fill_loop(&self) {
        let (u, g, r) = {
            let p = self.pipeline.lock();
            let h = p.as_ref().expect("pipeline present while filling");
            (h.uniform.clone(), h.gaussian.clone(), h.rayleigh.clone())
        };
        while !self.shutdown.load(Ordering::SeqCst) {
            select! {
                recv(u) -> msg => match msg {
                    Ok(blocks) => self.accept_uniform(blocks),
                    Err(_) => break,
                },
                recv(g) -> msg => if let Ok(batches) = msg {
                    let mut st = self.state.lock();
                    for b in batches {
                        for v in b.output.left_justified() {
                            st.gaussian.extend(v.to_le_bytes());
                        }
                    }
                },
                recv(r) -> msg => if let Ok(batches) = msg {
                    let mut st = self.state.lock();
                    for b in batches {
                        for v in b.values {
                            st.rayleigh.extend((v as f32).to_le_bytes());
                        }
                    }
                },
                default(Duration::from_millis(100)) => {
                    let finished = self.pipeline.lock().as_ref().map_or(true, |h| h.is_finished());
                    if finished {
                        break;
                    }
                }
            }
            self.update_selection();
        }
        // collect the pipeline's exit status
        if let Some(h) = self.pipeline.lock().take() {
            if let Err(e) = h.join() {
                self.state.lock().failed = Some(e.to_string());
            }
        }
        self.state.lock().stopped = true;
        self.selection.set(Selection::NONE);
    }

    fn accept_uniform(&self, blocks: Vec<crate::pipeline::UniformBlock>) {
        let buffer_bits = self.cfg.buffer_bits;
        let mut st = self.state.lock();
        for b in blocks {
            if b.cert_age() >= self.recertify_every {
                st.stale += 1;
                continue;
            }
            let pending = st
                .pending
                .get_or_insert_with(|| BitBlock::with_capacity(buffer_bits));
            pending.extend_from(&b.bits);
            if pending.len() < buffer_bits {
                continue;
            }
            let full = st.pending.take().expect("pending buffer present");
            let buffer = full.slice(0, buffer_bits).expect("buffer long enough");
            let rest = full
                .slice(buffer_bits, full.len() - buffer_bits)
                .expect("tail in range");
            if !rest.is_empty() {
                st.pending = Some(rest);
            }
            st.buffers_seen += 1;
            let tested = (st.buffers_seen - 1) % self.cfg.test_every == 0;
            let ok = !tested
                || bit_tests(&buffer, self.cfg.test_alpha)
                    .map(|r| r.iter().all(|g| g.pass))
                    .unwrap_or(false);
            if ok {
                st.accepted += 1;
                st.uniform.extend(buffer.to_bytes());
            } else {
                st.discarded += 1;
            }
        }
    }

    fn update_selection(&self) {
        let st = self.state.lock();
        let sel = Selection::NONE
            .with(
                Selection::UNIFORM,
                st.uniform.len() < self.cfg.uniform_capacity_bytes,
            )
            .with(
                Selection::GAUSSIAN,
                st.gaussian.len() < 2 * self.cfg.gaussian_capacity_values,
            )
            .with(
                Selection::RAYLEIGH,
                st.rayleigh.len() < 4 * self.cfg.rayleigh_capacity_values,
            );
        drop(st);
        self.selection.set(sel);
    }

    /// Removes and returns the next `bytes` of `kind`. Served bytes are never
    /// handed out again.
    pub fn take(&self, kind: OutputType, bytes: usize) -> std::result::Result<Served, TakeError> {
        if bytes == 0 {
            return Err(TakeError::BadRequest("bytes must be positive".into()));
        }
        if bytes > self.cfg.max_request_bytes {
            return Err(TakeError::BadRequest(format!(
                "bytes must not exceed {}",
                self.cfg.max_request_bytes
            )));
        }
        if bytes % kind.value_size() != 0 {
            return Err(TakeError::BadRequest(format!(
                "{kind} responses are whole {}-byte values",
                kind.value_size()
            )));
        }
        let out = {
            let mut st = self.state.lock();
            let idx = kind as usize;
            let queue = match kind {
                OutputType::Uniform => &mut st.uniform,
                OutputType::Gaussian => &mut st.gaussian,
                OutputType::Rayleigh => &mut st.rayleigh,
            };
            if queue.len() < bytes {
                return Err(TakeError::Unavailable {
                    requested: bytes,
                    available: queue.len(),
                });
            }
            let data: Vec<u8> = queue.drain(..bytes).collect();
            let offset = st.served[idx];
            st.served[idx] += bytes as u64;
            Served { offset, data }
        };
        self.update_selection();
        Ok(out)
    }

    pub fn health(&self) -> Health {
        let latest = self.log.latest();
        let st = self.state.lock();
        let status = if st.failed.is_some() {
            "failed"
        } else if st.stopped {
            "stopped"
        } else if latest.is_none() || st.accepted == 0 && st.uniform.is_empty() {
            "starting"
        } else if self.selection.get().is_empty() {
            "paused"
        } else {
            "ok"
        };
        Health {
            status: status.into(),
            certified: latest.is_some() && st.failed.is_none(),
            certification: latest.as_ref().map(CertSummary::from),
            certifications: self.log.len(),
            recertify_every: self.recertify_every,
            buffers: BufferFill {
                uniform_bytes: st.uniform.len(),
                gaussian_bytes: st.gaussian.len(),
                rayleigh_bytes: st.rayleigh.len(),
                uniform_capacity_bytes: self.cfg.uniform_capacity_bytes,
            },
            buffers_accepted: st.accepted,
            buffers_discarded: st.discarded,
            stale_blocks_dropped: st.stale,
            served_uniform_bytes: st.served[0],
            served_gaussian_bytes: st.served[1],
            served_rayleigh_bytes: st.served[2],
            counters: self.counters.snapshot(),
            rayleigh_label: OUTPUT_LABEL.into(),
            last_error: st.failed.clone(),
        }
    }

    /// Blocks until `bytes` of `kind` are buffered or `timeout` passes.
    pub fn wait_for(&self, kind: OutputType, bytes: usize, timeout: Duration) -> bool {
        let start = std::time::Instant::now();
        loop {
            let have = {
                let st = self.state.lock();
                match kind {
                    OutputType::Uniform => st.uniform.len(),
                    OutputType::Gaussian => st.gaussian.len(),
                    OutputType::Rayleigh => st.rayleigh.len(),
                }
            };
            if have >= bytes {
                return true;
            }
            if start.elapsed() >= timeout || self.state.lock().stopped {
                return false;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
    }

    pub fn shutdown(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.pipeline.lock().as_ref() {
            h.stop();
        }
        if let Some(t) = self.filler.lock().take() {
            let _ = t.join();
        }
    }
}
