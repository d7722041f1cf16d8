//! Streaming pipeline: source → ADC → certification → extractors.
//!
//! A generator thread produces digitized frames (one block per channel) and
//! re-certifies every `recertify_every` frames. An extraction thread turns
//! batches of frames into outputs, in parallel across frames and in frame
//! order. Both hand-offs are bounded channels, so a stalled consumer stops
//! the source instead of losing output. Merged uniform output alternates
//! I and Q blocks of each frame.

pub mod bench;
mod engine;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{bounded, Receiver, SendTimeoutError, Sender};
use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};

pub use engine::{
    provision_seed, BatchOutput, CertEntry, CertLog, CounterSnapshot, Counters, Engine, Extractor,
    GaussianBatch, Generator, RawFrame, RayleighBatch, UniformBlock,
};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};

/// Which outputs are routed to consumers. Changing it never changes how the
/// source is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Selection(u8);

impl Selection {
    pub const NONE: Selection = Selection(0);
    pub const UNIFORM: Selection = Selection(1);
    pub const GAUSSIAN: Selection = Selection(2);
    pub const RAYLEIGH: Selection = Selection(4);
    pub const ALL: Selection = Selection(7);

    pub fn uniform(self) -> bool {
        self.0 & 1 != 0
    }

    pub fn gaussian(self) -> bool {
        self.0 & 2 != 0
    }

    pub fn rayleigh(self) -> bool {
        self.0 & 4 != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn with(self, other: Selection, on: bool) -> Selection {
        if on {
            Selection(self.0 | other.0)
        } else {
            Selection(self.0 & !other.0)
        }
    }
}

impl std::ops::BitOr for Selection {
    type Output = Selection;

    fn bitor(self, rhs: Selection) -> Selection {
        Selection(self.0 | rhs.0)
    }
}

impl FromStr for Selection {
    type Err = Error;

    /// Comma-separated list of `uniform`, `gaussian`, `rayleigh`, or `all`.
    fn from_str(s: &str) -> Result<Self> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .try_fold(Selection::NONE, |acc, t| {
                Ok(acc
                    | match t {
                        "uniform" => Selection::UNIFORM,
                        "gaussian" => Selection::GAUSSIAN,
                        "rayleigh" => Selection::RAYLEIGH,
                        "all" => Selection::ALL,
                        _ => {
                            return Err(Error::invalid(
                                "type",
                                format!("unknown output type {t:?}"),
                            ))
                        }
                    })
            })
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.uniform(), "uniform"),
            (self.gaussian(), "gaussian"),
            (self.rayleigh(), "rayleigh"),
        ]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect();
        f.write_str(&names.join(","))
    }
}

/// Shared, changeable output selection. An empty selection pauses the source.
#[derive(Debug, Clone, Default)]
pub struct SelectionHandle(Arc<(Mutex<Selection>, Condvar)>);

impl SelectionHandle {
    pub fn new(initial: Selection) -> Self {
        SelectionHandle(Arc::new((Mutex::new(initial), Condvar::new())))
    }

    pub fn get(&self) -> Selection {
        *self.0 .0.lock()
    }

    pub fn set(&self, selection: Selection) {
        let mut s = self.0 .0.lock();
        if *s != selection {
            *s = selection;
            self.0 .1.notify_all();
        }
    }

    /// Waits up to `timeout` for a non-empty selection.
    fn wait_active(&self, timeout: Duration) -> Selection {
        let mut s = self.0 .0.lock();
        if s.is_empty() {
            self.0 .1.wait_for(&mut s, timeout);
        }
        *s
    }
}

const POLL: Duration = Duration::from_millis(50);

/// Consumer ends of a running pipeline.
pub struct PipelineHandles {
    pub uniform: Receiver<Vec<UniformBlock>>,
    pub gaussian: Receiver<Vec<GaussianBatch>>,
    pub rayleigh: Receiver<Vec<RayleighBatch>>,
    pub log: CertLog,
    pub counters: Arc<Counters>,
    pub selection: SelectionHandle,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<Result<()>>>,
}

impl PipelineHandles {
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
        self.selection.0 .1.notify_all();
    }

    pub fn is_finished(&self) -> bool {
        self.threads.iter().all(JoinHandle::is_finished)
    }

    /// Stops the pipeline and returns the first stage error, if any.
    pub fn join(mut self) -> Result<()> {
        self.stop();
        let mut first = Ok(());
        for t in self.threads.drain(..) {
            let r = t
                .join()
                .unwrap_or_else(|_| Err(Error::Io("pipeline thread panicked".into())));
            if first.is_ok() {
                first = r;
            }
        }
        first
    }

    /// Waits for a bounded run to end on its own, without stopping it.
    pub fn wait(mut self) -> Result<()> {
        let mut first = Ok(());
        for t in self.threads.drain(..) {
            let r = t
                .join()
                .unwrap_or_else(|_| Err(Error::Io("pipeline thread panicked".into())));
            if first.is_ok() {
                first = r;
            }
        }
        first
    }
}

impl Drop for PipelineHandles {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Sends unless stopped; `false` once the pipeline should wind down.
fn send<T>(tx: &Sender<T>, mut value: T, stop: &AtomicBool) -> bool {
    loop {
        if stop.load(Ordering::SeqCst) {
            return false;
        }
        match tx.send_timeout(value, POLL) {
            Ok(()) => return true,
            Err(SendTimeoutError::Timeout(v)) => value = v,
            Err(SendTimeoutError::Disconnected(_)) => return false,
        }
    }
}

struct RawBatch {
    frames: Vec<RawFrame>,
    selection: Selection,
}

/// Starts the pipeline. Certification, the budget check and seeding happen
/// before this returns, so startup errors surface here. `duration_frames`
/// bounds the run; `None` runs until stopped.
pub fn run_pipeline(
    cfg: PipelineConfig,
    duration_frames: Option<u64>,
    selection: Selection,
) -> Result<PipelineHandles> {
    let batch = cfg.batch_frames;
    let engine = Engine::new(cfg)?;
    let (mut generator, mut extractor, log, counters) = engine.split();
    let selection = SelectionHandle::new(selection);
    let stop = Arc::new(AtomicBool::new(false));

    let (raw_tx, raw_rx) = bounded::<RawBatch>(2);
    let (u_tx, u_rx) = bounded(16);
    let (g_tx, g_rx) = bounded(4);
    let (r_tx, r_rx) = bounded(16);

    let gen_thread = {
        let selection = selection.clone();
        let stop = stop.clone();
        std::thread::Builder::new()
            .name("trirng-source".into())
            .spawn(move || -> Result<()> {
                loop {
                    if stop.load(Ordering::SeqCst) {
                        return Ok(());
                    }
                    let produced = generator.next_frame_index();
                    let remaining =
                        duration_frames.map_or(batch as u64, |d| d.saturating_sub(produced));
                    if remaining == 0 {
                        return Ok(());
                    }
                    let sel = selection.wait_active(POLL);
                    if sel.is_empty() {
                        continue;
                    }
                    let n = remaining.min(batch as u64) as usize;
                    let frames = (0..n)
                        .map(|_| generator.next_raw())
                        .collect::<Result<Vec<_>>>()?;
                    if !send(
                        &raw_tx,
                        RawBatch {
                            frames,
                            selection: sel,
                        },
                        &stop,
                    ) {
                        return Ok(());
                    }
                }
            })?
    };

    let ext_thread = {
        let stop = stop.clone();
        std::thread::Builder::new()
            .name("trirng-extract".into())
            .spawn(move || -> Result<()> {
                while let Ok(batch) = raw_rx.recv() {
                    let out = extractor.process(&batch.frames, batch.selection)?;
                    if !out.uniform.is_empty() && !send(&u_tx, out.uniform, &stop) {
                        return Ok(());
                    }
                    if !out.gaussian.is_empty() && !send(&g_tx, out.gaussian, &stop) {
                        return Ok(());
                    }
                    if !out.rayleigh.is_empty() && !send(&r_tx, out.rayleigh, &stop) {
                        return Ok(());
                    }
                }
                Ok(())
            })?
    };

    Ok(PipelineHandles {
        uniform: u_rx,
        gaussian: g_rx,
        rayleigh: r_rx,
        log,
        counters,
        selection,
        stop,
        threads: vec![gen_thread, ext_thread],
    })
}

/// Serializable summary of a certification log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertSummary {
    pub epoch: u64,
    pub frame: u64,
    pub h_min_per_bit_i: f64,
    pub h_min_per_bit_q: f64,
    pub extractable: usize,
    pub block_n: usize,
    pub block_m: usize,
}

impl From<&CertEntry> for CertSummary {
    fn from(e: &CertEntry) -> Self {
        CertSummary {
            epoch: e.epoch,
            frame: e.frame,
            h_min_per_bit_i: e.i.h_min_per_bit,
            h_min_per_bit_q: e.q.h_min_per_bit,
            extractable: e.extractable,
            block_n: e.block_n,
            block_m: e.block_m,
        }
    }
}
