//! Frame volumes, image-sequence I/O, synthetic test videos and metrics.

mod io;
mod metrics;
mod synthetic;

pub use io::{
    load_video, read_raw_metadata, save_frames, save_gray_frames, save_indexed_frames, save_video, RawMetadata,
    FRAME_PATTERN,
};
pub use metrics::{mse, psnr, psnr_from_mse, register_translation, PSNR_CAP};
pub use synthetic::{make_synthetic, Motion, SpriteSpec, Sway, SyntheticSpec, SyntheticVideo};

use crate::error::{Error, Result};
use crate::model::VideoDims;

/// Rec.601 luma.
pub fn luma(rgb: [f32; 3]) -> f32 {
    0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
}

/// `H×W×T×3` samples in `[0, 1]`, stored frame-major then row-major
/// (`[t][y][x][c]`).
#[derive(Clone, Debug, PartialEq)]
pub struct VideoVolume {
    width: usize,
    height: usize,
    frames: usize,
    data: Vec<f32>,
    pub source: String,
}

impl VideoVolume {
    pub fn new(width: usize, height: usize, frames: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * frames * 3 {
            return Err(Error::Video(format!(
                "{width}x{height}x{frames} video needs {} samples, got {}",
                width * height * frames * 3,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Video(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            frames,
            data,
            source: String::new(),
        })
    }

    pub fn from_frames(width: usize, height: usize, frames: Vec<Vec<f32>>) -> Result<Self> {
        let t = frames.len();
        let data = frames.into_iter().flatten().collect();
        Self::new(width, height, t, data)
    }

    pub fn filled(width: usize, height: usize, frames: usize, rgb: [f32; 3]) -> Self {
        let data = std::iter::repeat_n(rgb, width * height * frames).flatten().collect();
        Self::new(width, height, frames, data).expect("constant video within range")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dims(&self) -> VideoDims {
        VideoDims::new(self.width, self.height, self.frames)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height * self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.pixel_count() == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel_index(&self, x: usize, y: usize, t: usize) -> usize {
        (t * self.height + y) * self.width + x
    }

    pub fn pixel(&self, x: usize, y: usize, t: usize) -> [f32; 3] {
        let i = 3 * self.pixel_index(x, y, t);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.width * self.height * 3;
        &self.data[t * n..(t + 1) * n]
    }

    /// Luma plane of frame `t`.
    pub fn luma_frame(&self, t: usize) -> Vec<f32> {
        self.frame(t)
            .chunks_exact(3)
            .map(|c| luma([c[0], c[1], c[2]]))
            .collect()
    }

    /// Keeps every `step`-th frame starting at `offset`.
    pub fn select_frames(&self, offset: usize, step: usize) -> Result<Self> {
        let keep: Vec<Vec<f32>> = (offset..self.frames)
            .step_by(step.max(1))
            .map(|t| self.frame(t).to_vec())
            .collect();
        Self::from_frames(self.width, self.height, keep)
    }

    /// Nearest-pixel subsampling by `stride` in x and y.
    pub fn downsample(&self, stride: usize) -> Self {
        let stride = stride.max(1);
        let (w, h) = (self.width.div_ceil(stride), self.height.div_ceil(stride));
        let mut data = Vec::with_capacity(w * h * self.frames * 3);
        for t in 0..self.frames {
            for y in (0..self.height).step_by(stride) {
                for x in (0..self.width).step_by(stride) {
                    data.extend_from_slice(&self.pixel(x, y, t));
                }
            }
        }
        Self::new(w, h, self.frames, data).expect("subsampled values stay in range")
    }
}
