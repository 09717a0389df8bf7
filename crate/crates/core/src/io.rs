//! Binary tensor (`BEVT`) and label volume (`INBX`) files.
//!
//! Both formats are little-endian.
//!
//! `BEVT`: magic `b"BEVT"`, version `u32`, dtype tag `u32` (1 = f32,
//! 2 = f64, 3 = i32), rank `u32`, `rank` extents as `u64`, then the payload
//! in row-major order.
//!
//! `INBX`: magic `b"INBX"`, version `u32`, `D`, `H`, `W` as `u64`, one state
//! byte per element, the `f32` CAI weights, then the `i32` box ids (-1 when
//! absent).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::{LabelState, LabelVolume};
use crate::scalar::{DType, Real};
use crate::tensor::{Dim, FeatureTensor};

pub const TENSOR_MAGIC: &[u8; 4] = b"BEVT";
pub const LABEL_MAGIC: &[u8; 4] = b"INBX";
pub const FORMAT_VERSION: u32 = 1;

/// Decoded `BEVT` payload before dimension names are attached.
#[derive(Clone, Debug, PartialEq)]
pub enum RawTensor {
    F32(Vec<usize>, Vec<f32>),
    F64(Vec<usize>, Vec<f64>),
    I32(Vec<usize>, Vec<i32>),
}

impl RawTensor {
    pub fn shape(&self) -> &[usize] {
        match self {
            RawTensor::F32(s, _) | RawTensor::F64(s, _) | RawTensor::I32(s, _) => s,
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            RawTensor::F32(..) => DType::F32,
            RawTensor::F64(..) => DType::F64,
            RawTensor::I32(..) => DType::I32,
        }
    }

    /// Converts the payload to `T`, attaching the given dimension names.
    pub fn into_tensor<T: Real>(self, names: &[Dim]) -> Result<FeatureTensor<T>> {
        let (shape, data): (Vec<usize>, Vec<T>) = match self {
            RawTensor::F32(s, d) => (s, d.into_iter().map(|v| T::lit(v as f64)).collect()),
            RawTensor::F64(s, d) => (s, d.into_iter().map(T::lit).collect()),
            RawTensor::I32(s, d) => (s, d.into_iter().map(|v| T::lit(v as f64)).collect()),
        };
        if shape.len() != names.len() {
            return Err(Error::Validation(format!(
                "tensor has rank {}, expected {} ({:?})",
                shape.len(),
                names.len(),
                names
            )));
        }
        FeatureTensor::new(names.iter().copied().zip(shape).collect(), data)
    }

    /// Integer payload (i32 tensors only).
    pub fn into_i32(self) -> Result<(Vec<usize>, Vec<i32>)> {
        match self {
            RawTensor::I32(s, d) => Ok((s, d)),
            other => Err(Error::Validation(format!(
                "expected an i32 tensor, got {}",
                other.dtype().name()
            ))),
        }
    }
}

fn write_header(out: &mut Vec<u8>, dtype: DType, shape: &[usize]) {
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dtype.tag().to_le_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &n in shape {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
}

pub fn encode_tensor<T: Real>(t: &FeatureTensor<T>) -> Vec<u8> {
    let shape = t.shape();
    let mut out = Vec::with_capacity(16 + 8 * shape.len() + t.len() * T::DTYPE.size());
    write_header(&mut out, T::DTYPE, &shape);
    for &v in t.data() {
        v.to_le_bytes_vec(&mut out);
    }
    out
}

pub fn encode_i32_tensor(shape: &[usize], data: &[i32]) -> Result<Vec<u8>> {
    if shape.iter().product::<usize>() != data.len() {
        return Err(Error::contract(
            "i32 tensor shape does not match payload length",
        ));
    }
    let mut out = Vec::with_capacity(16 + 8 * shape.len() + data.len() * 4);
    write_header(&mut out, DType::I32, shape);
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    kind: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err(format!("truncated at byte {}", self.pos))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn err(&self, reason: String) -> Error {
        Error::Format {
            kind: self.kind,
            reason,
        }
    }

    fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let m = self.take(4)?;
        if m != magic {
            return Err(self.err(format!("bad magic {m:?}")));
        }
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(self.err(format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.err(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }

    fn extent(&mut self) -> Result<usize> {
        let n = self.u64()?;
        usize::try_from(n).map_err(|_| self.err(format!("extent {n} too large")))
    }
}

fn checked_numel(shape: &[usize], elem: usize, r: &Reader<'_>) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .filter(|n| n.checked_mul(elem).is_some_and(|b| b <= r.buf.len()))
        .ok_or_else(|| r.err("payload size exceeds file".into()))
}

pub fn decode_tensor(bytes: &[u8]) -> Result<RawTensor> {
    let mut r = Reader {
        buf: bytes,
        pos: 0,
        kind: "tensor",
    };
    r.magic(TENSOR_MAGIC)?;
    let tag = r.u32()?;
    let dtype = DType::from_tag(tag).ok_or_else(|| r.err(format!("unknown dtype tag {tag}")))?;
    let rank = r.u32()? as usize;
    if rank > 16 {
        return Err(r.err(format!("rank {rank} too large")));
    }
    let shape = (0..rank).map(|_| r.extent()).collect::<Result<Vec<_>>>()?;
    let numel = checked_numel(&shape, dtype.size(), &r)?;
    let payload = r.take(numel * dtype.size())?;
    r.finish()?;
    let raw = match dtype {
        DType::F32 => RawTensor::F32(
            shape,
            payload.chunks_exact(4).map(f32::from_le_slice).collect(),
        ),
        DType::F64 => RawTensor::F64(
            shape,
            payload.chunks_exact(8).map(f64::from_le_slice).collect(),
        ),
        DType::I32 => RawTensor::I32(
            shape,
            payload
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    Ok(raw)
}

pub fn encode_labels(labels: &LabelVolume) -> Vec<u8> {
    let (d, h, w) = labels.dims();
    let n = labels.len();
    let mut out = Vec::with_capacity(32 + n * 9);
    out.extend_from_slice(LABEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for e in [d, h, w] {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    out.extend(labels.states().iter().map(|s| *s as u8));
    for &v in labels.cai_weights() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &b in labels.box_ids() {
        out.extend_from_slice(&b.to_le_bytes());
    }
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<LabelVolume> {
    let mut r = Reader {
        buf: bytes,
        pos: 0,
        kind: "label",
    };
    r.magic(LABEL_MAGIC)?;
    let (d, h, w) = (r.extent()?, r.extent()?, r.extent()?);
    let n = checked_numel(&[d, h, w], 9, &r)?;
    let states = r
        .take(n)?
        .iter()
        .map(|&b| LabelState::from_u8(b).ok_or_else(|| r.err(format!("bad state byte {b}"))))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f32> = r
        .take(n * 4)?
        .chunks_exact(4)
        .map(f32::from_le_slice)
        .collect();
    let ids: Vec<i32> = r
        .take(n * 4)?
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    r.finish()?;
    LabelVolume::from_parts((d, h, w), states, weights, ids).map_err(|e| Error::Format {
        kind: "label",
        reason: e.to_string(),
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_tensor<T: Real>(path: &Path, t: &FeatureTensor<T>) -> Result<()> {
    write_bytes(path, &encode_tensor(t))
}

pub fn read_tensor(path: &Path) -> Result<RawTensor> {
    decode_tensor(&read_bytes(path)?)
}

pub fn write_labels(path: &Path, labels: &LabelVolume) -> Result<()> {
    write_bytes(path, &encode_labels(labels))
}

pub fn read_labels(path: &Path) -> Result<LabelVolume> {
    decode_labels(&read_bytes(path)?)
}
