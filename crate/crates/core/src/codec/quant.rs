//! Symmetric per-tensor 8-bit quantization.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest integer code; codes lie in `[-QMAX, QMAX]`.
pub const QMAX: i8 = 127;

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedTensor {
    pub values: Vec<i8>,
    /// Real value of one integer step.
    pub scale: f32,
    pub shape: Vec<usize>,
}

impl QuantizedTensor {
    /// `scale · value` for every entry.
    pub fn dequantize(&self) -> Result<Tensor> {
        Tensor::new(
            &self.shape,
            self.values.iter().map(|&q| self.scale * f32::from(q)).collect(),
        )
    }

    /// Codes as raw bytes (two's complement).
    pub fn to_bytes(&self) -> Vec<u8> {
        self.values.iter().map(|&q| q as u8).collect()
    }
}

/// Quantizes with `scale = max|w| / 127` and round-half-away-from-zero.
/// An all-zero tensor gets scale 1 and all-zero codes.
pub fn quantize(t: &Tensor) -> Result<QuantizedTensor> {
    if !t.all_finite() {
        return Err(Error::NonFinite(
            "cannot quantize a tensor with non-finite values".into(),
        ));
    }
    let max = t.data().iter().fold(0.0f32, |m, v| m.max(v.abs()));
    let scale = if max == 0.0 { 1.0 } else { max / f32::from(QMAX) };
    let values = t
        .data()
        .iter()
        .map(|&v| (v / scale).round().clamp(-f32::from(QMAX), f32::from(QMAX)) as i8)
        .collect();
    Ok(QuantizedTensor {
        values,
        scale,
        shape: t.shape().to_vec(),
    })
}
