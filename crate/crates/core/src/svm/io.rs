//! `SVMK` model files. After the header (mode, gamma, C, normalization
//! statistics, class list) each pair stores its bias, convergence flag,
//! support-vector count and `(coefficient, vector)` records. Vectors shared
//! by several pairs are written once per pair and pooled again on load.

use std::collections::HashMap;
use std::path::Path;

use crate::codec::{write_atomic, FormatError, Reader, Writer};
use crate::data::ChannelMode;

use super::features::FeatureNorm;
use super::ovo::{OvoModel, OvoPair};
use super::SvmError;

pub const MAGIC: &[u8; 4] = b"SVMK";
pub const VERSION: u16 = 1;

pub fn encode_svm(m: &OvoModel) -> Vec<u8> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.u8(m.mode.code());
    w.f32(m.gamma as f32);
    w.f32(m.c as f32);
    w.u32(m.norm.dim() as u32);
    w.f32s(m.norm.mean.iter().map(|&v| v as f32));
    w.f32s(m.norm.std.iter().map(|&v| v as f32));
    w.u8(m.classes.len() as u8);
    w.bytes(&m.classes);
    w.u32(m.pairs.len() as u32);
    for p in &m.pairs {
        w.u8(p.a);
        w.u8(p.b);
        w.f32(p.bias as f32);
        w.u8(p.converged as u8);
        w.u32(p.slots.len() as u32);
        for (&s, &c) in p.slots.iter().zip(&p.coef) {
            w.f32(c as f32);
            w.f32s(m.vectors[s].iter().map(|&v| v as f32));
        }
    }
    w.finish()
}

pub fn decode_svm(bytes: &[u8]) -> Result<OvoModel, FormatError> {
    let mut r = Reader::open(bytes, MAGIC, "SVMK", VERSION)?;
    let code = r.u8()?;
    let mode = ChannelMode::from_code(code).ok_or_else(|| r.malformed(format!("channel mode code {code}")))?;
    let gamma = r.f32()? as f64;
    let c = r.f32()? as f64;
    let dim = r.u32()? as usize;
    if dim != mode.feature_len() {
        return Err(r.malformed(format!("{dim} feature dimensions for a {}-dimensional mode", mode.feature_len())));
    }
    let widen = |v: Vec<f32>| v.into_iter().map(f64::from).collect::<Vec<_>>();
    let norm = FeatureNorm { mean: widen(r.f32s(dim)?), std: widen(r.f32s(dim)?) };
    let n_classes = r.u8()? as usize;
    let classes = r.bytes(n_classes)?.to_vec();
    let n_pairs = r.u32()? as usize;
    let mut pool: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut vectors = Vec::new();
    let mut pairs = Vec::with_capacity(n_pairs.min(1 << 12));
    for _ in 0..n_pairs {
        let (a, b) = (r.u8()?, r.u8()?);
        if !classes.contains(&a) || !classes.contains(&b) || a == b {
            return Err(r.malformed(format!("pair ({a}, {b}) not drawn from the class list")));
        }
        let bias = r.f32()? as f64;
        let converged = r.u8()? != 0;
        let n_sv = r.u32()? as usize;
        let mut slots = Vec::with_capacity(n_sv.min(1 << 16));
        let mut coef = Vec::with_capacity(n_sv.min(1 << 16));
        for _ in 0..n_sv {
            coef.push(r.f32()? as f64);
            let v = r.f32s(dim)?;
            let key: Vec<u32> = v.iter().map(|x| x.to_bits()).collect();
            let slot = *pool.entry(key).or_insert_with(|| {
                vectors.push(widen(v));
                vectors.len() - 1
            });
            slots.push(slot);
        }
        pairs.push(OvoPair { a, b, slots, coef, bias, converged });
    }
    r.expect_end()?;
    Ok(OvoModel { mode, classes, norm, gamma, c, vectors, pairs })
}

pub fn save_svm(path: &Path, m: &OvoModel) -> Result<(), SvmError> {
    write_atomic(path, &encode_svm(m)).map_err(|e| SvmError::Io { path: path.display().to_string(), source: e })
}

pub fn load_svm(path: &Path) -> Result<OvoModel, SvmError> {
    let bytes = std::fs::read(path).map_err(|e| SvmError::Io { path: path.display().to_string(), source: e })?;
    decode_svm(&bytes).map_err(|e| SvmError::Format { path: path.display().to_string(), source: e })
}
