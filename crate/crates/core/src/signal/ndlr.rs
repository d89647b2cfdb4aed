//! The NDLR recording container.
//!
//! Layout, all integers little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `b"NDLR"`                         |
//! | 4      | 4    | version `u32` (= 1)                     |
//! | 8      | 4    | channel count `d`, `u32`                |
//! | 12     | 8    | samples per channel `T₀`, `u64`         |
//! | 20     | 8    | sampling rate, `f64`                    |
//! | 28     | ..   | `d` names: `u16` byte length + UTF-8    |
//! | ..     | ..   | `d·T₀` `f32` samples, channel-major     |
//!
//! Samples are stored as `f32`; a recording whose samples are all
//! `f32`-representable round-trips bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::Recording;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NDLR";
pub const VERSION: u32 = 1;
/// Size of the fixed part of the header, before the channel names.
pub const FIXED_HEADER_LEN: usize = 28;

pub fn write_recording(r: &Recording, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    encode(r, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_recording(path: impl AsRef<Path>) -> Result<Recording> {
    let file = File::open(path.as_ref())?;
    let mut reader = BufReader::new(file);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn encode(r: &Recording, w: &mut impl Write) -> Result<()> {
    let d = r.n_channels();
    let t0 = r.n_samples();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(d as u32).to_le_bytes())?;
    w.write_all(&(t0 as u64).to_le_bytes())?;
    w.write_all(&r.fs().to_le_bytes())?;
    for name in r.channel_names() {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Validation(format!("channel name too long: {} bytes", name.len())))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
    }
    let mut buf = Vec::with_capacity(t0 * 4);
    for row in r.samples().rows() {
        buf.clear();
        for &v in row {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Corrupt(format!(
                "truncated while reading {what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N, what)?);
        Ok(out)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Recording> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing NDLR magic".into()));
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let version = u32::from_le_bytes(cur.array("version")?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported NDLR version {version}")));
    }
    let d = u32::from_le_bytes(cur.array("channel count")?) as usize;
    let t0 = u64::from_le_bytes(cur.array("sample count")?) as usize;
    let fs = f64::from_le_bytes(cur.array("sampling rate")?);

    let mut names = Vec::with_capacity(d.min(1 << 16));
    for i in 0..d {
        let len = u16::from_le_bytes(cur.array("name length")?) as usize;
        let raw = cur.take(len, "channel name")?;
        let name = std::str::from_utf8(raw)
            .map_err(|_| Error::Corrupt(format!("channel name {i} is not UTF-8")))?;
        names.push(name.to_owned());
    }

    let n = d
        .checked_mul(t0)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Corrupt("header dimensions overflow".into()))?;
    let payload = cur.take(n, "sample payload")?;
    if cur.pos != bytes.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after payload",
            bytes.len() - cur.pos
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let samples = Array2::from_shape_vec((d, t0), data)
        .map_err(|e| Error::Corrupt(format!("payload shape: {e}")))?;
    Recording::new(samples, fs, names)
}
