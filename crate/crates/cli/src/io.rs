//! File formats used by the subcommands.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use trirng_core::adc::{AdcSpec, CodeBlock};

/// Reads a file, or standard input for `-`.
pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if path.as_os_str() == "-" {
        std::io::stdin().read_to_end(&mut buf)?;
    } else {
        File::open(path)
            .with_context(|| format!("opening {}", path.display()))?
            .read_to_end(&mut buf)?;
    }
    Ok(buf)
}

/// A buffered writer on a file, or standard output when `path` is `None` or `-`.
pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) if p.as_os_str() != "-" => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        _ => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// Interleaved `I, Q` signed 16-bit little-endian codes.
pub fn write_codes<W: Write>(mut w: W, i: &CodeBlock, q: &CodeBlock) -> Result<()> {
    for (a, b) in i.codes.iter().zip(&q.codes) {
        w.write_all(&(*a as i16).to_le_bytes())?;
        w.write_all(&(*b as i16).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_codes(bytes: &[u8], spec: AdcSpec) -> Result<(CodeBlock, CodeBlock)> {
    if bytes.len() % 4 != 0 {
        bail!(
            "code file length {} is not a whole number of I/Q pairs",
            bytes.len()
        );
    }
    let (i, q): (Vec<i32>, Vec<i32>) = bytes
        .chunks_exact(4)
        .map(|c| {
            (
                i16::from_le_bytes([c[0], c[1]]) as i32,
                i16::from_le_bytes([c[2], c[3]]) as i32,
            )
        })
        .unzip();
    Ok((CodeBlock::new(i, spec)?, CodeBlock::new(q, spec)?))
}

/// Numeric sample file layouts accepted by `test`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SampleFormat {
    F32,
    F64,
    I16,
    Csv,
}

pub fn read_samples(bytes: &[u8], format: SampleFormat) -> Result<Vec<f64>> {
    let whole = |size: usize| -> Result<()> {
        if bytes.len() % size != 0 {
            bail!(
                "file length {} is not a multiple of {size} bytes",
                bytes.len()
            );
        }
        Ok(())
    };
    Ok(match format {
        SampleFormat::F32 => {
            whole(4)?;
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect()
        }
        SampleFormat::F64 => {
            whole(8)?;
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect()
        }
        SampleFormat::I16 => {
            whole(2)?;
            bytes
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
                .collect()
        }
        SampleFormat::Csv => {
            let text = std::str::from_utf8(bytes).context("CSV input is not UTF-8")?;
            let mut out = Vec::new();
            for (n, line) in text.lines().enumerate() {
                let field = line.split(',').next().unwrap_or("").trim();
                if field.is_empty() {
                    continue;
                }
                match field.parse::<f64>() {
                    Ok(v) => out.push(v),
                    // tolerate a header row
                    Err(_) if n == 0 => {}
                    Err(e) => bail!("line {}: {e}", n + 1),
                }
            }
            out
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip() {
        let spec = AdcSpec::default();
        let i = CodeBlock::new(vec![-32768, 0, 32767], spec).unwrap();
        let q = CodeBlock::new(vec![1, -1, 5], spec).unwrap();
        let mut buf = Vec::new();
        write_codes(&mut buf, &i, &q).unwrap();
        let (a, b) = read_codes(&buf, spec).unwrap();
        assert_eq!((a.codes, b.codes), (i.codes, q.codes));
        assert!(read_codes(&buf[..5], spec).is_err());
    }

    #[test]
    fn sample_formats() {
        let bytes: Vec<u8> = [1.5f32, -2.0]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        assert_eq!(
            read_samples(&bytes, SampleFormat::F32).unwrap(),
            vec![1.5, -2.0]
        );
        assert_eq!(
            read_samples(b"value\n1\n2.5\n", SampleFormat::Csv).unwrap(),
            vec![1.0, 2.5]
        );
        assert!(read_samples(b"1\nx\n", SampleFormat::Csv).is_err());
        assert_eq!(
            read_samples(&[0xff, 0xff], SampleFormat::I16).unwrap(),
            vec![-1.0]
        );
    }
}
