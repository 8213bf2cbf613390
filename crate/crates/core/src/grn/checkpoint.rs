//! Versioned binary checkpoint:
//!
//! ```text
//! magic "KGCTXGRN" | u32 version | u32 len + JSON header
//! u32 tensor count | per tensor: u32 len + name, u32 rank, u64 dims, f64 data
//! 32-byte SHA-256 of everything before it
//! ```
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{GrnModel, ModelConfig};
use super::vocab::TokenVocab;
use crate::kg::{read_u32, read_u64, HashingWriter};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"KGCTXGRN";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: TokenVocab,
    data_hash: Option<String>,
}

fn put_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub fn write_checkpoint(model: &GrnModel, w: impl Write) -> Result<()> {
    let mut w = HashingWriter::new(BufWriter::new(w));
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let header = Header {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        data_hash: model.data_hash.clone(),
    };
    put_str(&mut w, &serde_json::to_string(&header)?)?;
    let tensors = model.weights.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, data, shape) in tensors {
        put_str(&mut w, &name)?;
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for d in shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    let (mut inner, digest) = w.finish();
    inner.write_all(&digest)?;
    inner.flush()?;
    Ok(())
}

pub fn save_checkpoint(model: &GrnModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Open {
        path: path.to_path_buf(),
        source,
    })?;
    write_checkpoint(model, file)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(format!("checkpoint: {}", msg.into()))
}

fn read_str(r: &mut &[u8]) -> Result<String> {
    let len = read_u32(r).map_err(|_| bad("truncated"))? as usize;
    if len > r.len() {
        return Err(bad("truncated"));
    }
    let (s, rest) = r.split_at(len);
    *r = rest;
    String::from_utf8(s.to_vec()).map_err(|_| bad("string is not valid UTF-8"))
}

/// Reads and verifies a checkpoint. Tensor names and shapes must match the
/// architecture described by the header exactly.
pub fn read_checkpoint(mut r: impl Read) -> Result<GrnModel> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < CHECKPOINT_MAGIC.len() + 32 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing magic bytes"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch (file is corrupt or truncated)"));
    }
    let mut r = &body[8..];
    let version = read_u32(&mut r).map_err(|_| bad("truncated"))?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let header: Header = serde_json::from_str(&read_str(&mut r)?)?;
    let mut model = GrnModel::zeros(header.config, header.vocab)?;
    model.data_hash = header.data_hash;

    let count = read_u32(&mut r).map_err(|_| bad("truncated"))? as usize;
    let expected: Vec<(String, Vec<usize>)> = model
        .weights
        .tensors()
        .into_iter()
        .map(|(n, _, s)| (n, s))
        .collect();
    if count != expected.len() {
        return Err(Error::Shape(format!(
            "checkpoint holds {count} tensors, architecture has {}",
            expected.len()
        )));
    }
    for ((name, shape), (_, dst)) in expected.iter().zip(model.weights.tensors_mut()) {
        let found = read_str(&mut r)?;
        if &found != name {
            return Err(Error::Shape(format!("expected tensor {name}, found {found}")));
        }
        let rank = read_u32(&mut r).map_err(|_| bad("truncated"))? as usize;
        let dims = (0..rank)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<io::Result<Vec<_>>>()
            .map_err(|_| bad("truncated"))?;
        if &dims != shape {
            return Err(Error::Shape(format!("tensor {name}: expected shape {shape:?}, found {dims:?}")));
        }
        if r.len() < dst.len() * 8 {
            return Err(bad("truncated"));
        }
        let (data, rest) = r.split_at(dst.len() * 8);
        for (v, chunk) in dst.iter_mut().zip(data.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        r = rest;
    }
    if !r.is_empty() {
        return Err(bad("trailing bytes"));
    }
    model.check_finite()?;
    Ok(model)
}

pub fn load_checkpoint(path: &Path) -> Result<GrnModel> {
    let file = File::open(path).map_err(|source| Error::Open {
        path: path.to_path_buf(),
        source,
    })?;
    read_checkpoint(io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grn::model::tests::{record, tiny_config};
    use crate::grn::PathTokenMode;

    fn model() -> GrnModel {
        let recs = [record("a", "neutral", &[&["isa", "partof"]])];
        let mut m = GrnModel::new(tiny_config(), TokenVocab::from_bundles(&recs, PathTokenMode::Relations), 7).unwrap();
        m.data_hash = Some("abc123".into());
        m
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        assert_eq!(&buf[..8], CHECKPOINT_MAGIC);
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn corruption_is_detected() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        let mut flipped = buf.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 1;
        assert!(matches!(read_checkpoint(&flipped[..]), Err(Error::Format(_))));
        assert!(matches!(read_checkpoint(&buf[..buf.len() - 5]), Err(Error::Format(_))));
        assert!(matches!(read_checkpoint(&b"nope"[..]), Err(Error::Format(_))));
    }
}
