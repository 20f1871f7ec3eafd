//! The `CFV1` container.
//!
//! ```text
//! "CFV1"  u32 version
//! model header (preset, flags, W, H, T, per-layer architecture)
//! u32 record count, then per parameter tensor:
//!     u32 id, u8 dtype (0 = int8 codes, 1 = raw f32), u8 ndim, u32 dims[ndim],
//!     f32 scale, u64 payload offset, u64 payload length
//! u64 length, raw section (f32 tensors)
//! u64 length, arithmetic-coded section (int8 codes of all quantized tensors)
//! u32 CRC32 of every preceding byte
//! ```
//!
//! Offsets and lengths are in bytes: into the raw section for dtype 1, into
//! the decoded code stream for dtype 0. All integers are little endian.

use serde::Serialize;

use super::entropy::{entropy_decode, entropy_encode};
use super::quant::{quantize, QuantizedTensor};
use crate::bytes::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::model::{read_model_header, write_model_header, CoordFlowModel, VideoDims};

pub const BITSTREAM_MAGIC: &[u8; 4] = b"CFV1";
pub const BITSTREAM_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorDtype {
    QuantizedI8,
    RawF32,
}

impl TensorDtype {
    fn code(self) -> u8 {
        match self {
            Self::QuantizedI8 => 0,
            Self::RawF32 => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Self::QuantizedI8),
            1 => Ok(Self::RawF32),
            other => Err(Error::Format(format!("unknown tensor dtype {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorRecord {
    pub id: u32,
    pub dtype: TensorDtype,
    pub shape: Vec<usize>,
    pub scale: f32,
    pub offset: u64,
    pub length: u64,
}

/// Everything in a bitstream except the weights.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BitstreamInfo {
    pub version: u32,
    pub preset: String,
    pub dims: VideoDims,
    pub num_layers: usize,
    pub flow_frozen: bool,
    pub records: Vec<TensorRecord>,
    pub raw_bytes: usize,
    pub coded_bytes: usize,
    /// Number of int8 codes carried by the coded section.
    pub code_count: usize,
    pub total_bytes: usize,
}

/// The model as the decoder will see it: color nets replaced by their
/// dequantized values, flow nets untouched.
pub fn quantize_model(model: &CoordFlowModel) -> Result<CoordFlowModel> {
    let mut out = model.clone();
    let is_color = model.param_is_color();
    for (p, color) in out.params_mut().into_iter().zip(is_color) {
        if color {
            let q = quantize(p)?;
            p.data_mut().copy_from_slice(q.dequantize()?.data());
        }
    }
    Ok(out)
}

/// Serializes a model. Identical models give identical bytes.
pub fn pack(model: &CoordFlowModel) -> Result<Vec<u8>> {
    let is_color = model.param_is_color();
    let mut records = Vec::new();
    let mut raw = ByteWriter::new();
    let mut codes: Vec<u8> = Vec::new();
    let mut raw_len = 0u64;
    for (id, (p, color)) in model.params().into_iter().zip(is_color).enumerate() {
        if color {
            let q: QuantizedTensor = quantize(p)?;
            records.push(TensorRecord {
                id: id as u32,
                dtype: TensorDtype::QuantizedI8,
                shape: q.shape.clone(),
                scale: q.scale,
                offset: codes.len() as u64,
                length: q.values.len() as u64,
            });
            codes.extend(q.to_bytes());
        } else {
            if !p.all_finite() {
                return Err(Error::NonFinite(format!("flow tensor {id} has non-finite values")));
            }
            let length = 4 * p.len() as u64;
            records.push(TensorRecord {
                id: id as u32,
                dtype: TensorDtype::RawF32,
                shape: p.shape().to_vec(),
                scale: 1.0,
                offset: raw_len,
                length,
            });
            raw.f32s(p.data());
            raw_len += length;
        }
    }

    let mut w = ByteWriter::new();
    w.bytes(BITSTREAM_MAGIC);
    w.u32(BITSTREAM_VERSION);
    write_model_header(&mut w, model);
    w.u32(records.len() as u32);
    for r in &records {
        w.u32(r.id);
        w.u8(r.dtype.code());
        w.u8(r.shape.len() as u8);
        for &d in &r.shape {
            w.u32(d as u32);
        }
        w.f32(r.scale);
        w.u64(r.offset);
        w.u64(r.length);
    }
    let raw = raw.into_inner();
    w.u64(raw.len() as u64);
    w.bytes(&raw);
    let coded = entropy_encode(&codes);
    w.u64(coded.len() as u64);
    w.bytes(&coded);
    let mut out = w.into_inner();
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Parsed<'a> {
    skeleton: CoordFlowModel,
    info: BitstreamInfo,
    raw: &'a [u8],
    coded: &'a [u8],
}

fn parse(buf: &[u8]) -> Result<Parsed<'_>> {
    if buf.len() < 12 {
        return Err(Error::Truncated(format!("bitstream of {} bytes", buf.len())));
    }
    if &buf[..4] != BITSTREAM_MAGIC {
        return Err(Error::Format("not a CoordFlow bitstream (bad magic)".into()));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != BITSTREAM_VERSION {
        return Err(Error::Version {
            found: version,
            expected: BITSTREAM_VERSION,
        });
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = ByteReader::new(&body[8..]);
    let skeleton = read_model_header(&mut r)?;
    let count = r.u32()? as usize;
    let expected = skeleton.params().len();
    if count != expected {
        return Err(Error::Format(format!(
            "{count} tensor records, architecture needs {expected}"
        )));
    }
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let id = r.u32()?;
        let dtype = TensorDtype::from_code(r.u8()?)?;
        let ndim = r.u8()? as usize;
        let shape = (0..ndim).map(|_| Ok(r.u32()? as usize)).collect::<Result<Vec<_>>>()?;
        records.push(TensorRecord {
            id,
            dtype,
            shape,
            scale: r.f32()?,
            offset: r.u64()?,
            length: r.u64()?,
        });
    }
    let raw_len = r.u64()? as usize;
    let raw = r.take(raw_len)?;
    let coded_len = r.u64()? as usize;
    let coded = r.take(coded_len)?;
    if r.remaining() != 0 {
        return Err(Error::Format(format!(
            "{} unexpected bytes before the checksum",
            r.remaining()
        )));
    }
    let code_count = if coded.len() >= 8 {
        u64::from_le_bytes(coded[..8].try_into().unwrap()) as usize
    } else {
        0
    };
    let info = BitstreamInfo {
        version,
        preset: skeleton.preset.clone(),
        dims: skeleton.dims,
        num_layers: skeleton.num_layers(),
        flow_frozen: skeleton.flow_frozen,
        records,
        raw_bytes: raw.len(),
        coded_bytes: coded.len(),
        code_count,
        total_bytes: buf.len(),
    };
    Ok(Parsed {
        skeleton,
        info,
        raw,
        coded,
    })
}

/// Header and record table, after checksum verification.
pub fn inspect(buf: &[u8]) -> Result<BitstreamInfo> {
    Ok(parse(buf)?.info)
}

/// Rebuilds the model stored by [`pack`].
pub fn unpack(buf: &[u8]) -> Result<CoordFlowModel> {
    let Parsed {
        mut skeleton,
        info,
        raw,
        coded,
    } = parse(buf)?;
    let codes = entropy_decode(coded)?;
    let is_color = skeleton.param_is_color();
    for (i, ((p, rec), color)) in skeleton
        .params_mut()
        .into_iter()
        .zip(&info.records)
        .zip(is_color)
        .enumerate()
    {
        if rec.id as usize != i || rec.shape != p.shape() {
            return Err(Error::Format(format!(
                "record {i} (id {}, shape {:?}) does not match parameter shape {:?}",
                rec.id,
                rec.shape,
                p.shape()
            )));
        }
        let want = if color {
            TensorDtype::QuantizedI8
        } else {
            TensorDtype::RawF32
        };
        if rec.dtype != want {
            return Err(Error::Format(format!(
                "record {i} has dtype {:?}, expected {want:?}",
                rec.dtype
            )));
        }
        let (off, len) = (rec.offset as usize, rec.length as usize);
        match rec.dtype {
            TensorDtype::QuantizedI8 => {
                let src = codes
                    .get(off..off.saturating_add(len))
                    .filter(|s| s.len() == p.len())
                    .ok_or_else(|| Error::Format(format!("record {i} codes out of range")))?;
                for (dst, &c) in p.data_mut().iter_mut().zip(src) {
                    *dst = rec.scale * f32::from(c as i8);
                }
            }
            TensorDtype::RawF32 => {
                let src = raw
                    .get(off..off.saturating_add(len))
                    .filter(|s| s.len() == 4 * p.len())
                    .ok_or_else(|| Error::Format(format!("record {i} floats out of range")))?;
                for (dst, chunk) in p.data_mut().iter_mut().zip(src.chunks_exact(4)) {
                    *dst = f32::from_le_bytes(chunk.try_into().unwrap());
                }
            }
        }
    }
    Ok(skeleton)
}

/// Bits per pixel of a file of `bytes` bytes for a `W×H×T` video.
pub fn bpp(bytes: usize, dims: VideoDims) -> Result<f64> {
    if dims.pixels() == 0 {
        return Err(Error::InvalidArgument("bpp needs non-zero dimensions".into()));
    }
    Ok(8.0 * bytes as f64 / dims.pixels() as f64)
}
