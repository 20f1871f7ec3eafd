//! Model file: raw f32 weights behind a versioned header.
//!
//! ```text
//! "CFMD"            magic
//! u32               version (1)
//! u16 + utf8        preset name
//! u8                flags (bit 0: flow frozen)
//! u32 ×3            width, height, frames
//! u32               n_layers
//! n × LayerArch     see `write_arch`
//! f32 …             weights in `CoordFlowModel::params` order
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CoordFlowLayer, CoordFlowModel, LayerArch, PeConfig, VideoDims};
use crate::bytes::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"CFMD";
pub const MODEL_VERSION: u32 = 1;

pub(crate) fn write_pe(w: &mut ByteWriter, pe: &PeConfig) {
    w.u32(pe.num_bands as u32);
    w.u8(u8::from(pe.include_input));
    w.f64(pe.base_frequency);
}

pub(crate) fn read_pe(r: &mut ByteReader) -> Result<PeConfig> {
    let num_bands = r.u32()? as usize;
    let include_input = match r.u8()? {
        0 => false,
        1 => true,
        b => return Err(Error::Format(format!("bad include_input flag {b}"))),
    };
    let base_frequency = r.f64()?;
    if num_bands > 32 || !base_frequency.is_finite() {
        return Err(Error::Format(format!(
            "implausible encoding: {num_bands} bands at {base_frequency}"
        )));
    }
    Ok(PeConfig {
        num_bands,
        include_input,
        base_frequency,
    })
}

fn write_widths(w: &mut ByteWriter, widths: &[usize]) {
    w.u32(widths.len() as u32);
    for &v in widths {
        w.u32(v as u32);
    }
}

fn read_widths(r: &mut ByteReader) -> Result<Vec<usize>> {
    let n = r.u32()? as usize;
    if n > 64 {
        return Err(Error::Format(format!("{n} hidden layers")));
    }
    (0..n)
        .map(|_| {
            let v = r.u32()? as usize;
            if v == 0 || v > 1 << 16 {
                return Err(Error::Format(format!("hidden width {v}")));
            }
            Ok(v)
        })
        .collect()
}

pub(crate) fn write_arch(w: &mut ByteWriter, arch: &LayerArch) {
    write_pe(w, &arch.flow_pe);
    write_widths(w, &arch.flow_hidden);
    write_pe(w, &arch.spatial_pe);
    write_pe(w, &arch.temporal_pe);
    write_widths(w, &arch.color_hidden);
}

pub(crate) fn read_arch(r: &mut ByteReader) -> Result<LayerArch> {
    Ok(LayerArch {
        flow_pe: read_pe(r)?,
        flow_hidden: read_widths(r)?,
        spatial_pe: read_pe(r)?,
        temporal_pe: read_pe(r)?,
        color_hidden: read_widths(r)?,
    })
}

/// Header fields shared by the model file and the bitstream.
pub(crate) fn write_model_header(w: &mut ByteWriter, model: &CoordFlowModel) {
    w.str(&model.preset);
    w.u8(u8::from(model.flow_frozen));
    w.u32(model.dims.width as u32);
    w.u32(model.dims.height as u32);
    w.u32(model.dims.frames as u32);
    w.u32(model.layers.len() as u32);
    for layer in &model.layers {
        write_arch(w, &layer.arch());
    }
}

/// Reads a header and returns a zero-initialized model skeleton with the
/// recorded architecture.
pub(crate) fn read_model_header(r: &mut ByteReader) -> Result<CoordFlowModel> {
    let preset = r.str()?;
    let flags = r.u8()?;
    if flags > 1 {
        return Err(Error::Format(format!("unknown flags {flags:#x}")));
    }
    let dims = VideoDims::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let n = r.u32()? as usize;
    if n == 0 || n > 256 {
        return Err(Error::Format(format!("{n} layers")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let arch = read_arch(r)?;
        layers.push(CoordFlowLayer::new(&arch, &mut rng));
    }
    let mut model = CoordFlowModel::new(preset, layers, dims)?;
    if flags & 1 == 1 {
        model.freeze_flow();
    }
    Ok(model)
}

pub fn write_model(model: &CoordFlowModel) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    write_model_header(&mut w, model);
    for p in model.params() {
        w.f32s(p.data());
    }
    w.into_inner()
}

pub fn read_model(buf: &[u8]) -> Result<CoordFlowModel> {
    let mut r = ByteReader::new(buf);
    if r.take(4)? != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Version {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let mut model = read_model_header(&mut r)?;
    for p in model.params_mut() {
        let vals = r.f32s(p.len())?;
        p.data_mut().copy_from_slice(&vals);
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
    }
    Ok(model)
}

pub fn save_model(model: &CoordFlowModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CoordFlowModel> {
    read_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::super::make_preset;
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = make_preset("tiny", 2, VideoDims::new(12, 10, 5), 3).unwrap();
        m.freeze_flow();
        let bytes = write_model(&m);
        let back = read_model(&bytes).unwrap();
        assert_eq!(back.preset, "tiny");
        assert_eq!(back.dims, m.dims);
        assert!(back.flow_frozen);
        for (a, b) in m.params().iter().zip(back.params()) {
            let bits = |t: &crate::tensor::Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let m = make_preset("tiny", 1, VideoDims::new(4, 4, 2), 0).unwrap();
        let bytes = write_model(&m);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_model(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(read_model(&bad), Err(Error::Version { found: 9, .. })));
        assert!(matches!(
            read_model(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated(_))
        ));
    }
}
