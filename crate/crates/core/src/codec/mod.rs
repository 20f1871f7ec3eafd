//! Compression of a trained model: 8-bit color-net quantization, adaptive
//! arithmetic coding and the `CFV1` container.

mod bitstream;
mod entropy;
mod quant;

pub use bitstream::{
    bpp, inspect, pack, quantize_model, unpack, BitstreamInfo, TensorDtype, TensorRecord, BITSTREAM_MAGIC,
    BITSTREAM_VERSION,
};
pub use entropy::{entropy_decode, entropy_encode};
pub use quant::{quantize, QuantizedTensor, QMAX};
