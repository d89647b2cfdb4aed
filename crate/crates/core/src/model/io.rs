//! Model files.
//!
//! A model is a pair: the tensor blob at the given path and a TOML
//! metadata sidecar next to it (`<path>.toml`). The blob is
//!
//! ```text
//! "NDLM" | version u32 | tensor count u32 | tensors...
//! tensor: name length u16 | name UTF-8 | rank u8 | dims u32 × rank | f32 data, row-major
//! ```
//!
//! with every integer and float little-endian.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Hyper, NdlParams};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"NDLM";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub version: u32,
    pub hyper: Hyper,
    /// Epochs of training behind these parameters.
    #[serde(default)]
    pub epochs_completed: usize,
    /// Size of the training split.
    #[serde(default)]
    pub n_train: usize,
    /// SHA-256 of the training configuration, hex.
    #[serde(default)]
    pub train_config_digest: String,
}

impl ModelMeta {
    pub fn new(hyper: Hyper) -> Self {
        Self {
            version: FORMAT_VERSION,
            hyper,
            epochs_completed: 0,
            n_train: 0,
            train_config_digest: String::new(),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

pub fn encode_tensors(params: &NdlParams) -> Result<Vec<u8>> {
    let tensors = params.tensors();
    let mut out = Vec::with_capacity(12 + params.n_params() * 4 + tensors.len() * 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, shape, data) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(shape.len() as u8);
        for dim in &shape {
            out.extend_from_slice(&(*dim as u32).to_le_bytes());
        }
        for v in data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Fills a zero-initialized parameter set for `hyper` from blob bytes.
pub fn decode_tensors(hyper: Hyper, bytes: &[u8]) -> Result<NdlParams> {
    let corrupt = |m: String| Error::Corrupt(format!("model blob: {m}"));
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos.checked_add(n).filter(|&e| e <= bytes.len());
        let end = end.ok_or_else(|| corrupt(format!("truncated at offset {pos}")))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(Error::Format("model blob: missing NDLM magic".into()));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;

    let mut params = NdlParams::zeros(hyper)?;
    let expected: Vec<(String, Vec<usize>)> = params
        .tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    if count != expected.len() {
        return Err(corrupt(format!("{count} tensors, architecture has {}", expected.len())));
    }
    let mut slices = params.slices_mut();
    for (i, (want_name, want_shape)) in expected.iter().enumerate() {
        let name_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(name_len)?)
            .map_err(|_| corrupt("tensor name is not UTF-8".into()))?
            .to_owned();
        let rank = take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
        }
        if &name != want_name || &shape != want_shape {
            return Err(corrupt(format!(
                "tensor {i} is {name} {shape:?}, expected {want_name} {want_shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        let raw = take(n * 4)?;
        for (dst, c) in slices[i].iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
        }
    }
    if pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - pos)));
    }
    drop(slices);
    if !params.is_finite() {
        return Err(corrupt("non-finite parameter".into()));
    }
    Ok(params)
}

pub fn save_model(params: &NdlParams, meta: &ModelMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if meta.hyper != params.hyper {
        return Err(Error::Validation("metadata architecture does not match parameters".into()));
    }
    fs::write(path, encode_tensors(params)?)?;
    let text = toml::to_string(meta).map_err(|e| Error::Config(format!("model metadata: {e}")))?;
    fs::write(sidecar_path(path), text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(NdlParams, ModelMeta)> {
    let path = path.as_ref();
    let text = fs::read_to_string(sidecar_path(path))?;
    let meta: ModelMeta =
        toml::from_str(&text).map_err(|e| Error::Corrupt(format!("model metadata: {e}")))?;
    if meta.version != FORMAT_VERSION {
        return Err(Error::Version {
            expected: FORMAT_VERSION,
            found: meta.version,
        });
    }
    meta.hyper.validate()?;
    let bytes = fs::read(path)?;
    let params = decode_tensors(meta.hyper.clone(), &bytes)?;
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> NdlParams {
        let mut h = Hyper::new(16, 8);
        h.omega = super::super::NetSpec::new(&[4], 3, 2);
        NdlParams::init(h, 3).unwrap()
    }

    #[test]
    fn blob_roundtrip_is_bitwise() {
        let p = params();
        let back = decode_tensors(p.hyper.clone(), &encode_tensors(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn blob_layout_starts_with_first_tensor() {
        let bytes = encode_tensors(&params()).unwrap();
        assert_eq!(&bytes[..4], b"NDLM");
        let name_len = u16::from_le_bytes([bytes[12], bytes[13]]) as usize;
        assert_eq!(&bytes[14..14 + name_len], b"omega.conv0.weight");
        assert_eq!(bytes[14 + name_len], 3);
    }

    #[test]
    fn wrong_blob_version() {
        let p = params();
        let mut bytes = encode_tensors(&p).unwrap();
        bytes[4] = 2;
        assert!(matches!(
            decode_tensors(p.hyper.clone(), &bytes),
            Err(Error::Version { found: 2, .. })
        ));
    }

    #[test]
    fn truncated_blob() {
        let p = params();
        let bytes = encode_tensors(&p).unwrap();
        assert!(matches!(
            decode_tensors(p.hyper.clone(), &bytes[..bytes.len() - 3]),
            Err(Error::Corrupt(_))
        ));
    }

    #[test]
    fn architecture_mismatch() {
        let p = params();
        let bytes = encode_tensors(&p).unwrap();
        assert!(decode_tensors(Hyper::new(16, 8), &bytes).is_err());
    }
}
