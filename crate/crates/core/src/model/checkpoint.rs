//! Binary checkpoints. Everything is little-endian:
//!
//! ```text
//! magic "TGNN" | version u32
//! d u64 | L u64 | tau f64 | n_items u64 | B_TN u64 | B_TE u64
//! tn variant u8 | te variant u8 | max_len u64 | tied gates u8
//! per encoder (TN, then TE): bucket_count u64, boundaries i64 * (count - 1), range i64 i64
//! tensor count u64, then per tensor: name length u32, name, rank u32, dims u64 * rank, data f64 * n
//! ```

use std::fs;
use std::path::Path;

use super::{ModelConfig, Param, TempGnn};
use crate::error::{Error, Result};
use crate::temporal::{Bucketizer, EncoderVariant, TimeEncoder};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TGNN";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn encoder(&mut self, enc: &TimeEncoder) {
        self.u64(enc.bucketizer.bucket_count() as u64);
        for &b in enc.bucketizer.boundaries() {
            self.i64(b);
        }
        self.i64(enc.range.0);
        self.i64(enc.range.1);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("size field out of range".into()))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn encoder(&mut self, variant: EncoderVariant) -> Result<TimeEncoder> {
        let count = self.usize()?;
        if count == 0 {
            return Err(Error::Format("bucket count of zero".into()));
        }
        let boundaries = (1..count).map(|_| self.i64()).collect::<Result<Vec<_>>>()?;
        let bucketizer = Bucketizer::from_boundaries(boundaries)?;
        let range = (self.i64()?, self.i64()?);
        Ok(TimeEncoder {
            variant,
            bucketizer,
            range,
        })
    }
}

pub fn checkpoint_bytes(model: &TempGnn) -> Vec<u8> {
    let c = &model.config;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u64(c.dim as u64);
    w.u64(c.layers as u64);
    w.f64(c.tau);
    w.u64(c.n_items as u64);
    w.u64(c.tn.buckets() as u64);
    w.u64(c.te.buckets() as u64);
    w.u8(c.tn.id());
    w.u8(c.te.id());
    w.u64(c.max_len as u64);
    w.u8(c.tie_direction_gates as u8);
    w.encoder(&model.tn);
    w.encoder(&model.te);
    w.u64(model.params.len() as u64);
    for (p, t) in Param::ALL.iter().zip(&model.params) {
        let name = p.name().as_bytes();
        w.u32(name.len() as u32);
        w.0.extend_from_slice(name);
        w.u32(t.shape().len() as u32);
        for &d in t.shape() {
            w.u64(d as u64);
        }
        for &v in t.data() {
            w.f64(v);
        }
    }
    w.0
}

pub fn checkpoint_from_bytes(buf: &[u8]) -> Result<TempGnn> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let dim = r.usize()?;
    let layers = r.usize()?;
    let tau = r.f64()?;
    let n_items = r.usize()?;
    let b_tn = r.usize()?;
    let b_te = r.usize()?;
    let tn = EncoderVariant::from_id(r.u8()?, b_tn)?;
    let te = EncoderVariant::from_id(r.u8()?, b_te)?;
    let config = ModelConfig {
        dim,
        layers,
        tau,
        n_items,
        tn,
        te,
        max_len: r.usize()?,
        tie_direction_gates: r.u8()? != 0,
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("invalid checkpoint header: {e}")))?;
    let tn_enc = r.encoder(tn)?;
    let te_enc = r.encoder(te)?;

    let count = r.usize()?;
    if count != Param::ALL.len() {
        return Err(Error::Format(format!(
            "expected {} tensors, found {count}",
            Param::ALL.len()
        )));
    }
    let mut params: Vec<Option<Tensor>> = vec![None; count];
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let p = Param::from_name(name).ok_or_else(|| Error::Format(format!("unknown tensor {name:?}")))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        if shape != p.shape(&config) {
            return Err(Error::Format(format!(
                "tensor {name} has shape {shape:?}, expected {:?}",
                p.shape(&config)
            )));
        }
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if params[p.index()].replace(Tensor::new(shape, data)?).is_some() {
            return Err(Error::Format(format!("tensor {name} appears twice")));
        }
    }
    if r.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(TempGnn {
        config,
        tn: tn_enc,
        te: te_enc,
        params: params.into_iter().map(|t| t.expect("all tensors present")).collect(),
    })
}

pub fn save_checkpoint(path: &Path, model: &TempGnn) -> Result<()> {
    fs::write(path, checkpoint_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TempGnn> {
    checkpoint_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
