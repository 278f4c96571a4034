//! `AFK1` model checkpoints.
//!
//! Layout (little-endian): magic `AFK1`; u32 tag length + architecture tag;
//! u32 classes, u32 input length, u32 sample rate; u32 tensor count; per
//! tensor u32 name length + name, u32 rank, u32 dims; then every tensor's
//! values as f32 in table order.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Arch, Classifier, Model};
use crate::bytes::{put_str, put_u32, ByteReader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"AFK1";

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_str(&mut out, model.arch().tag());
    put_u32(&mut out, model.num_classes() as u32);
    put_u32(&mut out, model.input_len() as u32);
    put_u32(&mut out, model.sample_rate());
    let tensors = model.tensors();
    put_u32(&mut out, tensors.len() as u32);
    for t in &tensors {
        put_str(&mut out, &t.name);
        put_u32(&mut out, t.shape.len() as u32);
        for &d in &t.shape {
            put_u32(&mut out, d as u32);
        }
    }
    for t in &tensors {
        for &v in &t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Model> {
    let mut r = ByteReader::new(bytes, origin);
    if r.take(4)? != MAGIC {
        return Err(Error::malformed(origin, "bad magic (expected AFK1)"));
    }
    let arch: Arch = r.string(4096)?.parse()?;
    let k = r.u32()? as usize;
    let input_len = r.u32()? as usize;
    let rate = r.u32()?;
    // Initialization draws are overwritten below; the stream only fixes shapes.
    let mut model = Model::new(arch, input_len, rate, k, &mut ChaCha8Rng::seed_from_u64(0))?;
    let n = r.u32()? as usize;
    let mut tensors = model.tensors_mut();
    if n != tensors.len() {
        return Err(Error::malformed(
            origin,
            format!("{n} tensors, architecture has {}", tensors.len()),
        ));
    }
    for t in tensors.iter() {
        let name = r.string(4096)?;
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if name != t.name || shape != t.shape {
            return Err(Error::malformed(
                origin,
                format!(
                    "tensor {name} {shape:?} does not match {} {:?}",
                    t.name, t.shape
                ),
            ));
        }
    }
    for t in tensors.iter_mut() {
        for v in t.data.iter_mut() {
            *v = r.f32()? as f64;
        }
    }
    r.finish()?;
    Ok(model)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    from_bytes(&fs::read(path)?, path)
}

/// Rounds every parameter to f32, so the in-memory model equals what a
/// save/load round trip produces.
pub fn quantize(model: &mut Model) {
    for t in model.tensors_mut() {
        for v in t.data.iter_mut() {
            *v = *v as f32 as f64;
        }
    }
}
