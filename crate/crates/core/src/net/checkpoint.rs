//! `SGCK` model checkpoints: magic, version, network spec, input
//! configuration, every parameter tensor in store order and the batch-norm
//! running statistics in layer order, all little-endian, with a trailing
//! FNV-1a-64 checksum.

use std::path::Path;

use crate::codec::{write_atomic, FormatError, Reader, Writer};
use crate::data::{ChannelMode, NormStats};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::model::{InputConfig, NetworkModel};
use super::spec::{Architecture, BlockSpec, NetworkSpec};
use super::NetError;

pub const MAGIC: &[u8; 4] = b"SGCK";
pub const VERSION: u16 = 1;

pub fn encode_checkpoint<T: Scalar>(model: &NetworkModel<T>) -> Vec<u8> {
    let spec = model.spec();
    let mut w = Writer::new(MAGIC, VERSION);
    w.u8(spec.architecture.code());
    w.u16(spec.in_channels as u16);
    w.u16(spec.num_classes as u16);
    w.u16(spec.blocks.len() as u16);
    for b in &spec.blocks {
        w.u16(b.convs as u16);
        w.u32(b.channels as u32);
    }
    w.u8(model.input.mode.code());
    w.f32(model.input.norm.ndsm_mean);
    w.f32(model.input.norm.ndsm_std);
    w.f32s(model.input.norm.spectral_mean);
    w.f32s(model.input.norm.spectral_std);
    w.u32(model.params().len() as u32);
    for p in model.params().iter() {
        w.str(&p.name);
        w.u8(p.tensor.shape().len() as u8);
        for &d in p.tensor.shape() {
            w.u32(d as u32);
        }
        w.f32s(p.tensor.data().iter().map(|v| v.as_f64() as f32));
    }
    for l in model.layers() {
        match &l.bn {
            None => w.u8(0),
            Some(bn) => {
                w.u8(1 + bn.stats.initialized as u8);
                w.f32s(bn.stats.mean.iter().map(|v| v.as_f64() as f32));
                w.f32s(bn.stats.var.iter().map(|v| v.as_f64() as f32));
            }
        }
    }
    w.finish()
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<NetworkModel<T>, FormatError> {
    let mut r = Reader::open(bytes, MAGIC, "SGCK", VERSION)?;
    let arch = r.u8()?;
    let architecture = Architecture::from_code(arch).ok_or_else(|| r.malformed(format!("architecture code {arch}")))?;
    let in_channels = r.u16()? as usize;
    let num_classes = r.u16()? as usize;
    let n_blocks = r.u16()? as usize;
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        blocks.push(BlockSpec { convs: r.u16()? as usize, channels: r.u32()? as usize });
    }
    let mode_code = r.u8()?;
    let mode = ChannelMode::from_code(mode_code).ok_or_else(|| r.malformed(format!("channel mode code {mode_code}")))?;
    let (ndsm_mean, ndsm_std) = (r.f32()?, r.f32()?);
    let mut triple = || -> Result<[f32; 3], FormatError> { Ok([r.f32()?, r.f32()?, r.f32()?]) };
    let (spectral_mean, spectral_std) = (triple()?, triple()?);
    let norm = NormStats { ndsm_mean, ndsm_std, spectral_mean, spectral_std };
    let spec = NetworkSpec { architecture, in_channels, num_classes, blocks };
    let mut model = NetworkModel::<T>::build(spec, InputConfig { mode, norm }, 0).map_err(|e| r.malformed(e.to_string()))?;

    let count = r.u32()? as usize;
    if count != model.params().len() {
        return Err(r.malformed(format!("{count} parameters, spec implies {}", model.params().len())));
    }
    for p in model.params_mut().iter_mut() {
        let name = r.str()?;
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if name != p.name || shape != p.tensor.shape() {
            return Err(r.malformed(format!("parameter {name} {shape:?} where {} {:?} expected", p.name, p.tensor.shape())));
        }
        let n = shape.iter().product();
        let data = r.f32s(n)?.into_iter().map(|v| T::of(v as f64)).collect();
        p.tensor = Tensor::from_vec(&shape, data).map_err(|e| r.malformed(e.to_string()))?;
    }
    let layers: Vec<_> = model.layers_mut().collect();
    for l in layers {
        let tag = r.u8()?;
        match (&mut l.bn, tag) {
            (None, 0) => {}
            (Some(bn), 1 | 2) => {
                let c = bn.stats.mean.len();
                bn.stats.mean = r.f32s(c)?.into_iter().map(|v| T::of(v as f64)).collect();
                bn.stats.var = r.f32s(c)?.into_iter().map(|v| T::of(v as f64)).collect();
                bn.stats.initialized = tag == 2;
            }
            _ => return Err(r.malformed(format!("batch-norm tag {tag} does not match the layer"))),
        }
    }
    r.expect_end()?;
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(path: &Path, model: &NetworkModel<T>) -> Result<(), NetError> {
    write_atomic(path, &encode_checkpoint(model)).map_err(|e| NetError::Io { path: path.display().to_string(), source: e })
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<NetworkModel<T>, NetError> {
    let bytes = std::fs::read(path).map_err(|e| NetError::Io { path: path.display().to_string(), source: e })?;
    decode_checkpoint(&bytes).map_err(|e| NetError::Format { path: path.display().to_string(), source: e })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> NetworkModel<f32> {
        let spec = NetworkSpec::new(Architecture::SegNetLite, 1, 3).unwrap();
        let input = InputConfig { mode: ChannelMode::Surface, norm: NormStats { ndsm_mean: 2.5, ndsm_std: 4.0, spectral_mean: [0.4, 0.5, 0.3], spectral_std: [0.1, 0.2, 0.15] } };
        let mut m = NetworkModel::build(spec, input, 7).unwrap();
        for (i, l) in m.layers_mut().enumerate() {
            if let Some(bn) = &mut l.bn {
                bn.stats.mean.iter_mut().for_each(|v| *v = i as f32 * 0.1);
                bn.stats.initialized = true;
            }
        }
        m
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = model();
        let bytes = encode_checkpoint(&m);
        let back: NetworkModel<f32> = decode_checkpoint(&bytes).unwrap();
        assert_eq!(encode_checkpoint(&back), bytes);
        assert_eq!(back.input, m.input);
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = encode_checkpoint(&model());
        bytes[100] ^= 1;
        assert!(matches!(decode_checkpoint::<f32>(&bytes), Err(FormatError::Checksum { .. })));
    }
}
