//! Labelled `(X, Z, Y)` collections and their container file.
//!
//! The NDLD container mirrors NDLR, little-endian throughout:
//!
//! ```text
//! "NDLD" | version u32 = 1 | n u64 | T u32 | p u32
//! per sample: d u32 | label u8 | X as d·T f32, row-major | Z as d·p f32, row-major
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"NDLD";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `d × T` segment.
    pub x: Array2<f64>,
    /// `d × p` context.
    pub z: Array2<f64>,
    pub y: u8,
}

impl Sample {
    pub fn pair(&self) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>) {
        (self.x.view(), self.z.view())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub t: usize,
    pub p: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(t: usize, p: usize, samples: Vec<Sample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.x.ncols() != t || s.z.ncols() != p || s.x.nrows() != s.z.nrows() || s.x.nrows() == 0 {
                return Err(Error::Dimension(format!(
                    "sample {i}: X {:?}, Z {:?} for T={t}, p={p}",
                    s.x.dim(),
                    s.z.dim()
                )));
            }
            if s.y > 1 {
                return Err(Error::Validation(format!("sample {i}: label {} is not 0/1", s.y)));
            }
        }
        Ok(Self { t, p, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn pairs(&self) -> Vec<(ArrayView2<'_, f64>, ArrayView2<'_, f64>)> {
        self.samples.iter().map(Sample::pair).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.y).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            t: self.t,
            p: self.p,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.y == 1).count()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.t as u32).to_le_bytes());
        out.extend_from_slice(&(self.p as u32).to_le_bytes());
        for s in &self.samples {
            out.extend_from_slice(&(s.x.nrows() as u32).to_le_bytes());
            out.push(s.y);
            for m in [&s.x, &s.z] {
                for v in m.iter() {
                    out.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos
                .checked_add(n)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| Error::Corrupt(format!("dataset truncated at offset {pos}")))?;
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(4).ok() != Some(MAGIC.as_slice()) {
            return Err(Error::Format("missing NDLD magic".into()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported NDLD version {version}")));
        }
        let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let t = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let p = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut samples = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let d = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let y = take(1)?[0];
            let mut read = |rows: usize, cols: usize| -> Result<Array2<f64>> {
                let raw = take(rows * cols * 4)?;
                let data = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                    .collect();
                Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
            };
            let x = read(d, t)?;
            let z = read(d, p)?;
            samples.push(Sample { x, z, y });
        }
        if pos != bytes.len() {
            return Err(Error::Corrupt(format!("{} trailing bytes in dataset", bytes.len() - pos)));
        }
        Self::new(t, p, samples)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}
