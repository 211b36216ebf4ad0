//! Versioned binary checkpoints: magic, version, architecture, layer
//! manifest, logit corrections, then little-endian `f32` tensors in manifest
//! order.

use alloc::string::String;
use alloc::vec::Vec;

use super::{Arch, InputNorm, Layout, LogitCorrection, ModelParams};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MCAMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(alloc::format!("checkpoint truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        self.u32().map(|v| v as usize)
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn encode_checkpoint(params: &ModelParams<f32>) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(256 + params.param_count() * 4));
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    let a = params.arch();
    w.u32(a.input_side as u32);
    w.u32(a.in_channels as u32);
    w.u32(a.stem_filters as u32);
    w.u32(a.stem_stride as u32);
    w.u32(a.blocks.len() as u32);
    for &(width, stride) in &a.blocks {
        w.u32(width as u32);
        w.u32(stride as u32);
    }
    w.u32(a.objects as u32);
    w.u32(a.materials as u32);
    w.u8(a.parallel_trunks as u8);
    match a.input_norm {
        InputNorm::UnitRange => w.u8(0),
        InputNorm::Standardize { mean, std } => {
            w.u8(1);
            for v in mean.iter().chain(&std) {
                w.f32(*v);
            }
        }
    }
    let tensors = params.layout().tensors();
    w.u32(tensors.len() as u32);
    for t in tensors {
        w.u16(t.name.len() as u16);
        w.0.extend_from_slice(t.name.as_bytes());
        w.u8(t.shape.len() as u8);
        for &d in &t.shape {
            w.u32(d as u32);
        }
    }
    for c in &params.corrections {
        match c {
            None => w.u8(0),
            Some(c) => {
                w.u8(1);
                w.u32(c.classes.len() as u32);
                for &k in &c.classes {
                    w.u32(k as u32);
                }
                w.f64(c.scale);
                w.f64(c.offset);
            }
        }
    }
    for &v in params.values() {
        w.f32(v);
    }
    w.0
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams<f32>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(alloc::format!("unsupported checkpoint version {version}")));
    }
    let input_side = r.usize()?;
    let in_channels = r.usize()?;
    let stem_filters = r.usize()?;
    let stem_stride = r.usize()?;
    let nb = r.usize()?;
    if nb > 64 {
        return Err(Error::Format("implausible block count".into()));
    }
    let mut blocks = Vec::with_capacity(nb);
    for _ in 0..nb {
        blocks.push((r.usize()?, r.usize()?));
    }
    let objects = r.usize()?;
    let materials = r.usize()?;
    let parallel_trunks = r.u8()? != 0;
    let input_norm = match r.u8()? {
        0 => InputNorm::UnitRange,
        1 => {
            let mut v = [0f32; 6];
            for x in &mut v {
                *x = r.f32()?;
            }
            InputNorm::Standardize { mean: [v[0], v[1], v[2]], std: [v[3], v[4], v[5]] }
        }
        k => return Err(Error::Format(alloc::format!("unknown input normalization tag {k}"))),
    };
    let arch = Arch { input_side, in_channels, stem_filters, stem_stride, blocks, objects, materials, parallel_trunks, input_norm };
    arch.validate().map_err(|e| Error::Format(alloc::format!("bad architecture: {e}")))?;
    let layout = Layout::new(&arch);

    let n = r.usize()?;
    if n != layout.tensors().len() {
        return Err(Error::Format(alloc::format!("manifest lists {n} tensors, architecture has {}", layout.tensors().len())));
    }
    for spec in layout.tensors() {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.usize()?);
        }
        if name != spec.name || shape != spec.shape {
            return Err(Error::Format(alloc::format!("manifest entry `{name}` {shape:?} does not match `{}` {:?}", spec.name, spec.shape)));
        }
    }
    let mut corrections = [None, None];
    for c in &mut corrections {
        if r.u8()? == 1 {
            let k = r.usize()?;
            let mut classes = Vec::with_capacity(k.min(4096));
            for _ in 0..k {
                classes.push(r.usize()?);
            }
            *c = Some(LogitCorrection { classes, scale: r.f64()?, offset: r.f64()? });
        }
    }
    let mut values = Vec::with_capacity(layout.len());
    for _ in 0..layout.len() {
        values.push(r.f32()?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(alloc::format!("{} trailing bytes after tensors", bytes.len() - r.pos)));
    }
    let mut p = ModelParams::from_values(arch, values)?;
    p.corrections = corrections;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Head;

    #[test]
    fn round_trip_is_exact() {
        let mut p = ModelParams::<f32>::init(Arch { parallel_trunks: true, ..Arch::desk() }, 7).unwrap();
        p.set_correction(Head::Material, Some(LogitCorrection { classes: alloc::vec![7, 8], scale: 0.9, offset: -1.5 }));
        let bytes = encode_checkpoint(&p);
        let q = decode_checkpoint(&bytes).unwrap();
        assert_eq!(p, q);
        assert_eq!(encode_checkpoint(&q), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let p = ModelParams::<f32>::init(Arch::desk().with_side(32), 7).unwrap();
        let bytes = encode_checkpoint(&p);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(decode_checkpoint(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode_checkpoint(&long).is_err());
    }
}
