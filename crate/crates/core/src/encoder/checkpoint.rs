//! Binary checkpoint format.
//!
//! ```text
//! "SCR1"
//! u32 vocab, u32 embed, u32 hidden, u32 classes
//! u32 vocab entries, then per entry: u32 byte length, UTF-8 token, u64 count
//! f32 embedding, w1, b1, w2, b2   (row-major)
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::{EncoderError, ModelDims, ModelParams, Result, Vocab, UNK};

pub const MAGIC: [u8; 4] = *b"SCR1";

pub fn write_checkpoint(params: &ModelParams<f32>, vocab: &Vocab) -> Result<Vec<u8>> {
    let dims = params.dims();
    if vocab.len() != dims.vocab {
        return Err(EncoderError::DimensionMismatch(format!(
            "vocabulary has {} entries, model expects {}",
            vocab.len(),
            dims.vocab
        )));
    }
    let mut out = Vec::with_capacity(24 + 4 * dims.param_count());
    out.extend_from_slice(&MAGIC);
    for n in [dims.vocab, dims.embed, dims.hidden, dims.classes, vocab.len()] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for (token, count) in vocab.entries() {
        out.extend_from_slice(&(token.len() as u32).to_le_bytes());
        out.extend_from_slice(token.as_bytes());
        out.extend_from_slice(&count.to_le_bytes());
    }
    for (_, t) in params.tensors() {
        for x in t {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn save_checkpoint(params: &ModelParams<f32>, vocab: &Vocab, path: &Path) -> Result<()> {
    let bytes = write_checkpoint(params, vocab)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams<f32>, Vocab)> {
    read_checkpoint(&fs::read(path)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(EncoderError::Truncated {
                offset: self.pos,
                needed: n - (self.buf.len() - self.pos),
            });
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| {
            EncoderError::DimensionMismatch("tensor size overflows".into())
        })?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<(ModelParams<f32>, Vocab)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = match r.take(4) {
        Ok(m) => m.try_into().expect("4 bytes"),
        Err(_) => {
            let mut m = [0u8; 4];
            m[..bytes.len()].copy_from_slice(bytes);
            if m[..bytes.len()] == MAGIC[..bytes.len()] {
                return Err(EncoderError::Truncated {
                    offset: 0,
                    needed: 4 - bytes.len(),
                });
            }
            return Err(EncoderError::BadMagic(m));
        }
    };
    if magic != MAGIC {
        return Err(EncoderError::BadMagic(magic));
    }
    let dims = ModelDims {
        vocab: r.u32()? as usize,
        embed: r.u32()? as usize,
        hidden: r.u32()? as usize,
        classes: r.u32()? as usize,
    };
    dims.validate()
        .map_err(|e| EncoderError::DimensionMismatch(e.to_string()))?;
    let n_vocab = r.u32()? as usize;
    if n_vocab != dims.vocab {
        return Err(EncoderError::DimensionMismatch(format!(
            "header declares vocab {} but table has {n_vocab} entries",
            dims.vocab
        )));
    }
    let mut entries = Vec::with_capacity(n_vocab.min(1 << 20));
    for i in 0..n_vocab {
        let len = r.u32()? as usize;
        let token = std::str::from_utf8(r.take(len)?)
            .map_err(|e| EncoderError::DimensionMismatch(format!("vocab entry {i}: {e}")))?
            .to_owned();
        let count = r.u64()?;
        if i == 0 {
            if token != UNK {
                return Err(EncoderError::DimensionMismatch(format!(
                    "vocab entry 0 is {token:?}, expected {UNK:?}"
                )));
            }
        } else {
            entries.push((token, count));
        }
    }
    let vocab = Vocab::from_entries(entries);
    let tensors = [
        r.f32s(dims.vocab * dims.embed)?,
        r.f32s(dims.embed * dims.hidden)?,
        r.f32s(dims.hidden)?,
        r.f32s(dims.hidden * dims.classes)?,
        r.f32s(dims.classes)?,
    ];
    if r.pos != bytes.len() {
        return Err(EncoderError::DimensionMismatch(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }
    let params = ModelParams::from_parts(dims, tensors)?;
    Ok((params, vocab))
}
