//! Subcommand definitions and their implementations.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use trirng_core::adc::{quantize, CodeBlock};
use trirng_core::bits::BitBlock;
use trirng_core::config::PipelineConfig;
use trirng_core::entropy::{certify, EntropyReport};
use trirng_core::gaussian::{gaussian_extract, GaussianOutput, Passes};
use trirng_core::pipeline::{bench::bench, Engine, Selection};
use trirng_core::rayleigh::{rayleigh_extract, RayleighOutput};
use trirng_core::service::Service;
use trirng_core::source::{Channel, QuadratureSource};
use trirng_core::stats::{bit_tests, gof_pair, GofReport, ReferenceKind};
use trirng_core::uniform::{seed_chain, BitStream, DodisGeometry, ToeplitzKernel, ToeplitzSeed};

use crate::io::{open_output, read_codes, read_input, read_samples, write_codes, SampleFormat};

#[derive(Debug, Parser)]
#[command(
    name = "trirng",
    version,
    about = "Simulated homodyne QRNG: uniform, Gaussian and Rayleigh outputs"
)]
pub struct Cli {
    /// Pipeline configuration (TOML). Built-in defaults when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputKind {
    Uniform,
    Gaussian,
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimFormat {
    /// Interleaved I, Q as 32-bit little-endian floats (volts).
    F32,
    /// `index,I,Q` rows.
    Csv,
    /// Interleaved I, Q ADC codes as 16-bit little-endian integers.
    Codes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Bin,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestKind {
    /// Packed bits, MSB first: frequency and runs tests.
    Bits,
    Gaussian,
    Rayleigh,
    Uniform,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate simulated quadrature samples.
    Simulate {
        #[arg(long, default_value_t = 1 << 20)]
        samples: usize,
        /// Overrides the configured source seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = SimFormat::Codes)]
        format: SimFormat,
        /// Record with the local oscillator blocked (excess noise only).
        #[arg(long)]
        dark: bool,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Estimate conditional min-entropy; prints a JSON report.
    Certify {
        /// Interleaved I/Q code file; a fresh simulated record when omitted.
        #[arg(long, requires = "dark")]
        input: Option<PathBuf>,
        /// Dark-record code file matching `--input`.
        #[arg(long)]
        dark: Option<PathBuf>,
    },
    /// Extract random output from the simulated source or a code file.
    Extract {
        #[arg(long = "type", value_enum)]
        kind: OutputKind,
        /// Frames (one block per channel) to draw from the simulated source.
        #[arg(long)]
        frames: Option<usize>,
        /// Interleaved I/Q code file instead of the simulated source.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Dark-record code file used to certify `--input`.
        #[arg(long)]
        dark: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutFormat::Bin)]
        format: OutFormat,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Writes certification and goodness-of-fit results as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Gaussian passes on I: a number or `auto`.
        #[arg(long)]
        passes_i: Option<String>,
        /// Gaussian passes on Q: a number or `auto`.
        #[arg(long)]
        passes_q: Option<String>,
        /// Savitzky-Golay window (Rayleigh).
        #[arg(long)]
        window: Option<usize>,
        /// Savitzky-Golay polynomial order (Rayleigh).
        #[arg(long)]
        order: Option<usize>,
        /// Smooth the goodness-of-fit histogram instead of the samples (Rayleigh).
        #[arg(long)]
        histogram_mode: bool,
    },
    /// Run statistical tests on a file; prints a JSON array of reports.
    Test {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = TestKind::Bits)]
        kind: TestKind,
        #[arg(long, value_enum, default_value_t = SampleFormat::F32)]
        format: SampleFormat,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, default_value_t = 100)]
        bins: usize,
    },
    /// Measure throughput; prints JSON.
    Bench {
        #[arg(long, default_value_t = 6.0)]
        seconds: f64,
    },
    /// Serve random bytes over HTTP.
    Serve {
        /// Listen address; overrides the config file.
        #[arg(long, env = "TRIRNG_LISTEN")]
        listen: Option<String>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    Ok(match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    })
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn parse_passes(raw: &str) -> Result<Passes> {
    if raw == "auto" {
        return Ok(Passes::Auto);
    }
    let n: u32 = raw
        .parse()
        .with_context(|| format!("passes must be a number or auto, got {raw:?}"))?;
    if n == 0 {
        bail!("at least one pass is required");
    }
    Ok(Passes::Fixed(n))
}

#[derive(Debug, Serialize)]
struct CertifyOutput {
    i: EntropyReport,
    q: EntropyReport,
    block_n: usize,
    block_m: usize,
    extractable: usize,
    budget_ok: bool,
}

fn certify_pair(
    cfg: &PipelineConfig,
    i: &CodeBlock,
    q: &CodeBlock,
    di: &CodeBlock,
    dq: &CodeBlock,
) -> Result<CertifyOutput> {
    let ccfg = cfg.extraction.certify();
    let mut ri = certify(i, di, cfg.source.sample_rate_hz, &ccfg)?;
    let mut rq = certify(q, dq, cfg.source.sample_rate_hz, &ccfg)?;
    ri.channel = Some(Channel::I);
    rq.channel = Some(Channel::Q);
    let n = cfg.extraction.block_n;
    Ok(CertifyOutput {
        extractable: ri.extractable_length(n).min(rq.extractable_length(n)),
        budget_ok: cfg.check_budget(&ri).is_ok() && cfg.check_budget(&rq).is_ok(),
        block_n: n,
        block_m: cfg.extraction.block_m,
        i: ri,
        q: rq,
    })
}

fn load_pair(path: &Path, cfg: &PipelineConfig) -> Result<(CodeBlock, CodeBlock)> {
    read_codes(&read_input(path)?, cfg.adc)
}

/// Toeplitz kernel for code-file input: the cached seed when configured and
/// present, otherwise Dodis-seeded from the head of the file. Returns the
/// number of samples per channel consumed by seeding.
fn kernel_for_input(
    cfg: &PipelineConfig,
    i: &CodeBlock,
    q: &CodeBlock,
    h: f64,
) -> Result<(ToeplitzKernel, usize)> {
    let x = &cfg.extraction;
    if let Some(path) = x.seed_cache_path.as_ref().filter(|p| p.exists()) {
        let seed = ToeplitzSeed::read_from(std::fs::File::open(path)?)?;
        if (seed.n(), seed.m()) != (x.block_n, x.block_m) {
            bail!(
                "cached seed {} does not match block_n/block_m",
                path.display()
            );
        }
        return Ok((ToeplitzKernel::new(seed), 0));
    }
    let bits = cfg.adc.bits;
    let mut si = BitStream::new(BitBlock::from_codes(&i.codes, bits));
    let mut sq = BitStream::new(BitBlock::from_codes(&q.codes, bits));
    let mut take_q = false;
    let mut source = |len: usize| {
        let s = if take_q { &mut sq } else { &mut si };
        take_q = !take_q;
        trirng_core::uniform::BitSource::next_block(s, len)
    };
    let geometry = DodisGeometry::for_entropy(x.dodis_chunk, h, x.epsilon)?;
    let seed = seed_chain(&mut source, geometry, x.block_n, x.block_m)
        .context("input too short to seed the extractor")?;
    if let Some(path) = &x.seed_cache_path {
        seed.write_to(std::fs::File::create(path)?)?;
    }
    let used = si.consumed().max(sq.consumed()).div_ceil(bits as usize);
    Ok((ToeplitzKernel::new(seed), used))
}

fn write_gaussian(w: &mut dyn Write, outputs: &[GaussianOutput], format: OutFormat) -> Result<()> {
    for o in outputs {
        match format {
            OutFormat::Bin => o.write_i16_le(&mut *w)?,
            OutFormat::Csv => {
                let ch = o
                    .channel
                    .map_or("-", |c| if c == Channel::I { "I" } else { "Q" });
                for v in o.values() {
                    writeln!(w, "{ch},{v}")?;
                }
            }
        }
    }
    Ok(())
}

fn write_rayleigh(w: &mut dyn Write, values: &[f64], format: OutFormat) -> Result<()> {
    match format {
        OutFormat::Bin => {
            for v in values {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        OutFormat::Csv => {
            for v in values {
                writeln!(w, "{v}")?;
            }
        }
    }
    Ok(())
}

fn write_bits(w: &mut dyn Write, bits: &BitBlock, format: OutFormat) -> Result<()> {
    match format {
        OutFormat::Bin => w.write_all(&bits.to_bytes())?,
        OutFormat::Csv => {
            for b in bits.iter() {
                writeln!(w, "{}", u8::from(b))?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ExtractReport {
    kind: String,
    label: Option<String>,
    certification: Option<CertifyOutput>,
    gof: Vec<GofReport>,
    frames: Option<usize>,
    outputs: usize,
}

#[allow(clippy::too_many_arguments)]
fn extract(
    mut cfg: PipelineConfig,
    kind: OutputKind,
    frames: Option<usize>,
    input: Option<&Path>,
    dark: Option<&Path>,
    format: OutFormat,
    out: Option<&Path>,
    report: Option<&Path>,
    passes: (Option<String>, Option<String>),
    window: Option<usize>,
    order: Option<usize>,
    histogram_mode: bool,
) -> Result<()> {
    if let Some(p) = passes.0.as_deref() {
        cfg.extraction.passes_i = parse_passes(p)?;
    }
    if let Some(p) = passes.1.as_deref() {
        cfg.extraction.passes_q = parse_passes(p)?;
    }
    if let Some(w) = window {
        cfg.extraction.sg_window = w;
    }
    if let Some(o) = order {
        cfg.extraction.sg_order = o;
    }
    cfg.extraction.histogram_mode |= histogram_mode;
    cfg.validate()?;
    let mut w = open_output(out)?;
    let mut rep = ExtractReport {
        kind: format!("{kind:?}").to_lowercase(),
        label: None,
        certification: None,
        gof: Vec::new(),
        frames: None,
        outputs: 0,
    };

    if let Some(input) = input {
        let (i, q) = load_pair(input, &cfg)?;
        if kind == OutputKind::Rayleigh {
            let r: RayleighOutput = rayleigh_extract(&i, &q, &cfg.extraction.rayleigh())?;
            write_rayleigh(&mut *w, &r.values, format)?;
            rep.label = Some(r.label);
            rep.gof = r.gof;
            rep.outputs = r.values.len();
        } else {
            let dark = dark.context("--dark is required to certify --input")?;
            let (di, dq) = load_pair(dark, &cfg)?;
            let cert = certify_pair(&cfg, &i, &q, &di, &dq)?;
            if kind == OutputKind::Uniform {
                cfg.check_budget(&cert.i)?;
                cfg.check_budget(&cert.q)?;
                let h = cert.i.h_min_per_bit.min(cert.q.h_min_per_bit);
                let (kernel, used) = kernel_for_input(&cfg, &i, &q, h)?;
                let spb = cfg.samples_per_block();
                let mut bits = BitBlock::with_capacity(0);
                let mut blocks = 0;
                for (ci, cq) in i.codes[used..]
                    .chunks_exact(spb)
                    .zip(q.codes[used..].chunks_exact(spb))
                {
                    for c in [ci, cq] {
                        bits.extend_from(&kernel.extract(&BitBlock::from_codes(c, cfg.adc.bits))?);
                    }
                    blocks += 1;
                }
                write_bits(&mut *w, &bits, format)?;
                rep.frames = Some(blocks);
                rep.outputs = bits.len();
            } else {
                let weaker = if cert.i.h_min_per_bit <= cert.q.h_min_per_bit {
                    &cert.i
                } else {
                    &cert.q
                };
                let (gi, gq) = gaussian_extract(&i, &q, weaker, &cfg.extraction.gaussian())?;
                rep.gof = gi.gof.iter().chain(&gq.gof).cloned().collect();
                rep.outputs = gi.len() + gq.len();
                write_gaussian(&mut *w, &[gi, gq], format)?;
            }
            rep.certification = Some(cert);
        }
    } else {
        let spb = cfg.samples_per_block();
        let frames = frames.unwrap_or(match kind {
            OutputKind::Gaussian => cfg.extraction.pool_size.div_ceil(spb),
            _ => 1024,
        });
        let mut engine = Engine::new(cfg.clone())?;
        let sel = match kind {
            OutputKind::Uniform => Selection::UNIFORM,
            OutputKind::Gaussian => Selection::GAUSSIAN,
            OutputKind::Rayleigh => Selection::RAYLEIGH,
        };
        let mut done = 0;
        while done < frames {
            let n = (frames - done).min(cfg.batch_frames);
            let batch = engine.run_frames(n, sel)?;
            done += n;
            match kind {
                OutputKind::Uniform => {
                    for b in &batch.uniform {
                        write_bits(&mut *w, &b.bits, format)?;
                        rep.outputs += b.bits.len();
                    }
                }
                OutputKind::Gaussian => {
                    let outs: Vec<GaussianOutput> =
                        batch.gaussian.into_iter().map(|g| g.output).collect();
                    for o in &outs {
                        rep.gof.extend(o.gof.iter().cloned());
                        rep.outputs += o.len();
                    }
                    write_gaussian(&mut *w, &outs, format)?;
                }
                OutputKind::Rayleigh => {
                    for r in &batch.rayleigh {
                        write_rayleigh(&mut *w, &r.values, format)?;
                        rep.outputs += r.values.len();
                    }
                }
            }
        }
        if kind == OutputKind::Rayleigh {
            rep.label = Some(trirng_core::rayleigh::OUTPUT_LABEL.into());
        }
        rep.frames = Some(frames);
        let entries = engine.log.snapshot();
        if let Some(first) = entries.first() {
            rep.certification = Some(CertifyOutput {
                i: first.i.clone(),
                q: first.q.clone(),
                block_n: first.block_n,
                block_m: first.block_m,
                extractable: first.extractable,
                budget_ok: true,
            });
        }
    }
    w.flush()?;
    if let Some(path) = report {
        serde_json::to_writer_pretty(std::fs::File::create(path)?, &rep)?;
    }
    tracing::info!(kind = %rep.kind, outputs = rep.outputs, "extraction done");
    Ok(())
}

fn test(
    input: &Path,
    kind: TestKind,
    format: SampleFormat,
    alpha: f64,
    bins: usize,
) -> Result<Vec<GofReport>> {
    let bytes = read_input(input)?;
    Ok(match kind {
        TestKind::Bits => bit_tests(&BitBlock::from_bytes(&bytes, bytes.len() * 8)?, alpha)?,
        TestKind::Gaussian | TestKind::Rayleigh | TestKind::Uniform => {
            let reference = match kind {
                TestKind::Gaussian => ReferenceKind::Gaussian,
                TestKind::Rayleigh => ReferenceKind::Rayleigh,
                _ => ReferenceKind::Uniform,
            };
            gof_pair(&read_samples(&bytes, format)?, reference, bins, alpha)?.to_vec()
        }
    })
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate {
            samples,
            seed,
            format,
            dark,
            out,
        } => {
            if samples == 0 {
                bail!("--samples must be positive");
            }
            let seed = seed.unwrap_or(cfg.seed);
            let mut source = if dark {
                QuadratureSource::dark(&cfg.source, seed)?
            } else {
                QuadratureSource::new(&cfg.source, seed)?
            };
            let frame = source.fill(samples);
            let mut w = open_output(out.as_deref())?;
            match format {
                SimFormat::F32 => frame.write_f32_le(&mut w)?,
                SimFormat::Csv => frame.write_csv(&mut w)?,
                SimFormat::Codes => {
                    let (i, q) = quantize(&frame, &cfg.adc)?;
                    write_codes(&mut w, &i, &q)?;
                }
            }
            w.flush()?;
        }
        Command::Certify { input, dark } => {
            let ((i, q), (di, dq)) = match (input, dark) {
                (Some(input), Some(dark)) => (load_pair(&input, &cfg)?, load_pair(&dark, &cfg)?),
                _ => {
                    let n = cfg.extraction.calibration_samples;
                    let live = QuadratureSource::new(&cfg.source, cfg.seed)?.fill(n);
                    let dark = QuadratureSource::dark(&cfg.source, cfg.seed ^ 0xda4c)?.fill(n);
                    (quantize(&live, &cfg.adc)?, quantize(&dark, &cfg.adc)?)
                }
            };
            print_json(&certify_pair(&cfg, &i, &q, &di, &dq)?)?;
        }
        Command::Extract {
            kind,
            frames,
            input,
            dark,
            format,
            out,
            report,
            passes_i,
            passes_q,
            window,
            order,
            histogram_mode,
        } => extract(
            cfg,
            kind,
            frames,
            input.as_deref(),
            dark.as_deref(),
            format,
            out.as_deref(),
            report.as_deref(),
            (passes_i, passes_q),
            window,
            order,
            histogram_mode,
        )?,
        Command::Test {
            input,
            kind,
            format,
            alpha,
            bins,
        } => print_json(&test(&input, kind, format, alpha, bins)?)?,
        Command::Bench { seconds } => print_json(&bench(&cfg, seconds)?)?,
        Command::Serve { listen } => {
            let addr = match listen {
                Some(l) => l
                    .parse()
                    .with_context(|| format!("listen address {l:?} is not host:port"))?,
                None => cfg.listen_addr()?,
            };
            let svc: Arc<Service> = Service::start(cfg)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                crate::server::serve(svc, listener, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await
            })?;
        }
        Command::Config => print!("{}", cfg.to_toml_string()?),
    }
    Ok(())
}
