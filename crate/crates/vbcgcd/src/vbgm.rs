//! VBGM-1 model store files.
//!
//! Little-endian layout: magic `VBGM`, `u8` version 1, `u32 feature_dim`,
//! `u32 class_count`, `u32 session_count`, flags byte (bit 0 standardizer,
//! bit 1 PCA). With PCA present a `u32 input_dim` follows the flags, since
//! the input width is otherwise unknown. Then the optional standardizer
//! (means then scales, `input_dim` f64 each), the optional PCA block
//! (`u32 d_out`, mean `[input_dim]`, components `[d_out·input_dim]`), and per
//! class `u32 class_id`, `u32 session`, mean `[d]`, packed lower-triangular
//! factor `[d(d+1)/2]` row by row.

use std::fs;
use std::path::Path;

use vbcgcd_core::pca::PcaProjector;
use vbcgcd_core::{ClassGaussian, ModelStore, Standardizer};

use crate::error::{IoError, Result};

const MAGIC: &[u8; 4] = b"VBGM";
const VERSION: u8 = 1;
const FLAG_STANDARDIZER: u8 = 1;
const FLAG_PCA: u8 = 2;

pub fn save_store(store: &ModelStore, path: &Path) -> Result<()> {
    fs::write(path, encode_store(store)).map_err(|e| IoError::io(path, e))
}

pub fn load_store(path: &Path) -> Result<ModelStore> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode_store(&bytes)
}

pub fn encode_store(store: &ModelStore) -> Vec<u8> {
    let d = store.feature_dim();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    out.extend_from_slice(&store.session_count().to_le_bytes());
    let mut flags = 0;
    if store.standardizer().is_some() {
        flags |= FLAG_STANDARDIZER;
    }
    if store.pca().is_some() {
        flags |= FLAG_PCA;
    }
    out.push(flags);
    let put = |out: &mut Vec<u8>, vs: &[f64]| {
        for v in vs {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    if let Some(p) = store.pca() {
        out.extend_from_slice(&(p.input_dim() as u32).to_le_bytes());
    }
    if let Some(s) = store.standardizer() {
        put(&mut out, &s.mean);
        put(&mut out, &s.scale);
    }
    if let Some(p) = store.pca() {
        out.extend_from_slice(&(p.output_dim() as u32).to_le_bytes());
        put(&mut out, p.mean());
        put(&mut out, p.components());
    }
    for g in store.classes() {
        out.extend_from_slice(&g.class_id().to_le_bytes());
        out.extend_from_slice(&g.learned_in_session().to_le_bytes());
        put(&mut out, g.mean());
        let l = g.chol_lower();
        for i in 0..d {
            put(&mut out, &l[i * d..i * d + i + 1]);
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn error(&self, message: impl Into<String>) -> IoError {
        IoError::Format {
            format: "VBGM-1",
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| self.error("length overflow"))?;
        let b = self.take(len)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect())
    }
}

pub fn decode_store(bytes: &[u8]) -> Result<ModelStore> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4).ok() != Some(MAGIC.as_slice()) {
        cur.pos = 0;
        return Err(cur.error("bad magic"));
    }
    let version = cur.u8()?;
    if version != VERSION {
        cur.pos -= 1;
        return Err(cur.error(format!("unsupported version {version}")));
    }
    let d = cur.u32()? as usize;
    let class_count = cur.u32()? as usize;
    let session_count = cur.u32()?;
    let flags = cur.u8()?;
    if flags & !(FLAG_STANDARDIZER | FLAG_PCA) != 0 {
        cur.pos -= 1;
        return Err(cur.error(format!("unknown flags {flags:#04x}")));
    }
    if d == 0 {
        return Err(cur.error("zero feature dimension"));
    }
    let input_dim = if flags & FLAG_PCA != 0 { cur.u32()? as usize } else { d };
    let standardizer = if flags & FLAG_STANDARDIZER != 0 {
        let mean = cur.f64s(input_dim)?;
        let scale = cur.f64s(input_dim)?;
        Some(Standardizer { mean, scale })
    } else {
        None
    };
    let pca = if flags & FLAG_PCA != 0 {
        let at = cur.pos;
        let d_out = cur.u32()? as usize;
        let mean = cur.f64s(input_dim)?;
        let components = cur.f64s(d_out.saturating_mul(input_dim))?;
        let p = PcaProjector::from_parts(mean, components, d_out).map_err(|e| IoError::Format {
            format: "VBGM-1",
            offset: at as u64,
            message: e.to_string(),
        })?;
        Some(p)
    } else {
        None
    };
    let mut classes = Vec::with_capacity(class_count.min(1 << 16));
    for _ in 0..class_count {
        let at = cur.pos;
        let class_id = cur.u32()?;
        let session = cur.u32()?;
        let mean = cur.f64s(d)?;
        let packed = cur.f64s(d * (d + 1) / 2)?;
        let mut l = vec![0.0; d * d];
        let mut k = 0;
        for i in 0..d {
            l[i * d..i * d + i + 1].copy_from_slice(&packed[k..k + i + 1]);
            k += i + 1;
        }
        let g = ClassGaussian::from_cholesky(mean, l).map_err(|e| IoError::Format {
            format: "VBGM-1",
            offset: at as u64,
            message: e.to_string(),
        })?;
        classes.push(g.with_identity(class_id, session));
    }
    if cur.pos != bytes.len() {
        return Err(cur.error("trailing bytes"));
    }
    Ok(ModelStore::from_parts(d, session_count, standardizer, pca, classes)?)
}
