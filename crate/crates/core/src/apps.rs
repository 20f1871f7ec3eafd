//! What a fitted model can do besides reconstruction: dense rendering at any
//! resolution or frame rate, layer segmentation, per-layer inpainting,
//! trajectory extraction and stabilization.
//!
//! Every renderer here evaluates frame by frame. A frame's per-layer flow
//! transforms are computed once from the flow networks and then applied to
//! the whole pixel grid, so rendering, segmentation and stabilization share
//! one code path.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{save_frames, save_indexed_frames, VideoVolume};
use crate::model::{normalize_coord, CoordFlowModel, FlowParams, Inference, SimilarityTransform};

/// Output sampling: a `width × height` pixel grid spanning the normalized
/// frame, at the listed normalized times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameGrid {
    pub width: usize,
    pub height: usize,
    pub times: Vec<f64>,
}

impl FrameGrid {
    /// The pixels and frames the model was fitted to.
    pub fn training(model: &CoordFlowModel) -> Self {
        Self::scaled(model, 1, 1).expect("unit scale is valid")
    }

    /// `scale_xy` times the training resolution and `(T − 1)·scale_t + 1`
    /// frames, so every training frame time is kept.
    pub fn scaled(model: &CoordFlowModel, scale_xy: usize, scale_t: usize) -> Result<Self> {
        if scale_xy == 0 || scale_t == 0 {
            return Err(Error::InvalidArgument("upsampling scales must be at least 1".into()));
        }
        let d = model.dims;
        let frames = (d.frames.max(1) - 1) * scale_t + 1;
        Ok(Self {
            width: d.width * scale_xy,
            height: d.height * scale_xy,
            times: (0..frames).map(|k| normalize_coord(k as f64, frames)).collect(),
        })
    }

    pub fn with_times(mut self, times: Vec<f64>) -> Self {
        self.times = times;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument(format!(
                "output resolution must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        if let Some(t) = self.times.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(format!("frame time {t} is not finite")));
        }
        Ok(())
    }

    fn coords(&self, t: f64) -> Vec<[f32; 3]> {
        let xs: Vec<f32> = (0..self.width)
            .map(|x| normalize_coord(x as f64, self.width) as f32)
            .collect();
        let mut out = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            let yn = normalize_coord(y as f64, self.height) as f32;
            out.extend(xs.iter().map(|&xn| [xn, yn, t as f32]));
        }
        out
    }
}

/// Evaluates every frame of `grid` with the given per-frame, per-layer
/// transforms.
fn evaluate(
    model: &CoordFlowModel,
    grid: &FrameGrid,
    transforms: &[Vec<SimilarityTransform>],
) -> Result<Vec<Inference>> {
    grid.validate()?;
    grid.times
        .iter()
        .zip(transforms)
        .map(|(&t, frame_tr)| model.infer(&grid.coords(t), Some(frame_tr)))
        .collect()
}

/// The flow transforms of every layer at every grid time, `[frame][layer]`.
fn frame_transforms(model: &CoordFlowModel, times: &[f64]) -> Result<Vec<Vec<SimilarityTransform>>> {
    let per_layer = (0..model.num_layers())
        .map(|l| extract_trajectory(model, l, times))
        .collect::<Result<Vec<_>>>()?;
    Ok(transpose(&per_layer, times.len()))
}

fn transpose(per_layer: &[Trajectory], frames: usize) -> Vec<Vec<SimilarityTransform>> {
    (0..frames)
        .map(|k| per_layer.iter().map(|tr| tr.transforms[k]).collect())
        .collect()
}

fn volume(grid: &FrameGrid, frames: Vec<Vec<f32>>) -> Result<VideoVolume> {
    VideoVolume::from_frames(grid.width, grid.height, frames)
}

/// Composite frames. Deterministic for a given model and grid.
pub fn render(model: &CoordFlowModel, grid: &FrameGrid) -> Result<VideoVolume> {
    let tr = frame_transforms(model, &grid.times)?;
    let frames = evaluate(model, grid, &tr)?.into_iter().map(|i| i.rgb).collect();
    volume(grid, frames)
}

/// Renders on a grid `scale_xy` times denser in space and `scale_t` times
/// denser in time. Scale 1 in both is exactly [`render`] on the training grid.
pub fn upsample(model: &CoordFlowModel, scale_xy: usize, scale_t: usize) -> Result<VideoVolume> {
    render(model, &FrameGrid::scaled(model, scale_xy, scale_t)?)
}

/// Per-pixel layer ownership: the argmax and the full softmax weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationMap {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub num_layers: usize,
    /// Winning layer per pixel, `[t][y][x]`.
    pub labels: Vec<u8>,
    /// Softmax weights, `num_layers` per pixel, pixel-major.
    pub weights: Vec<f32>,
}

impl SegmentationMap {
    pub fn label(&self, x: usize, y: usize, t: usize) -> usize {
        self.labels[(t * self.height + y) * self.width + x] as usize
    }

    pub fn weight(&self, x: usize, y: usize, t: usize, layer: usize) -> f32 {
        self.weights[((t * self.height + y) * self.width + x) * self.num_layers + layer]
    }

    /// Mean weight of `layer` over the pixels where `select` is true.
    pub fn mean_weight(&self, layer: usize, select: impl Fn(usize) -> bool) -> Option<f64> {
        let (mut sum, mut n) = (0.0, 0usize);
        for i in 0..self.labels.len() {
            if select(i) {
                sum += f64::from(self.weights[i * self.num_layers + layer]);
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    pub fn label_frame(&self, t: usize) -> &[u8] {
        let n = self.width * self.height;
        &self.labels[t * n..(t + 1) * n]
    }
}

/// Softmax layer weights on `grid`. A single-layer model yields label 0 and
/// weight 1 everywhere.
pub fn segment(model: &CoordFlowModel, grid: &FrameGrid) -> Result<SegmentationMap> {
    if model.num_layers() > usize::from(u8::MAX) + 1 {
        return Err(Error::InvalidArgument(
            "segmentation supports at most 256 layers".into(),
        ));
    }
    let tr = frame_transforms(model, &grid.times)?;
    let n = model.num_layers();
    let mut labels = Vec::with_capacity(grid.width * grid.height * grid.times.len());
    let mut weights = Vec::with_capacity(labels.capacity() * n);
    for inf in evaluate(model, grid, &tr)? {
        for px in inf.weights.chunks_exact(n) {
            let best = px
                .iter()
                .enumerate()
                .fold(
                    (0, f32::NEG_INFINITY),
                    |acc, (i, &w)| if w > acc.1 { (i, w) } else { acc },
                )
                .0;
            labels.push(best as u8);
        }
        weights.extend(inf.weights);
    }
    Ok(SegmentationMap {
        width: grid.width,
        height: grid.height,
        frames: grid.times.len(),
        num_layers: n,
        labels,
        weights,
    })
}

/// One layer's own colors with no compositing, which reveals what that layer
/// holds behind the others.
pub fn inpaint(model: &CoordFlowModel, layer: usize, grid: &FrameGrid) -> Result<VideoVolume> {
    if layer >= model.num_layers() {
        return Err(Error::InvalidArgument(format!(
            "layer {layer} out of range for a {}-layer model",
            model.num_layers()
        )));
    }
    let tr = frame_transforms(model, &grid.times)?;
    let frames = evaluate(model, grid, &tr)?
        .into_iter()
        .map(|mut i| std::mem::take(&mut i.layer_rgb[layer]))
        .collect();
    volume(grid, frames)
}

/// A layer's similarity transform at each of a list of times.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub transforms: Vec<SimilarityTransform>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn params(&self) -> impl Iterator<Item = FlowParams> + '_ {
        self.transforms.iter().map(|t| t.params)
    }

    /// CSV with columns `t,s,theta,dx,dy`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,s,theta,dx,dy\n");
        for (t, p) in self.times.iter().zip(self.params()) {
            let _ = writeln!(s, "{t},{},{},{},{}", p.log_scale.exp(), p.theta, p.dx, p.dy);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub fn extract_trajectory(model: &CoordFlowModel, layer: usize, times: &[f64]) -> Result<Trajectory> {
    let l = model.layers.get(layer).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "layer {layer} out of range for a {}-layer model",
            model.num_layers()
        ))
    })?;
    let transforms = times.iter().map(|&t| l.flow_transform(t)).collect::<Result<_>>()?;
    Ok(Trajectory {
        times: times.to_vec(),
        transforms,
    })
}

/// Low-pass filter for trajectory smoothing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SmoothingFilter {
    /// Equal weights over the window.
    #[default]
    Boxcar,
    /// Gaussian weights with the given standard deviation in frames,
    /// truncated to the window.
    Gaussian { sigma: f64 },
}

/// Moving average of the transform parameters (log scale, angle, shifts)
/// over an odd `window` of neighbouring entries. Near the ends the window is
/// cut at the sequence boundary. Matrices are rebuilt from the averaged
/// parameters, so every output is still a similarity.
pub fn smooth_trajectory(traj: &Trajectory, window: usize, filter: SmoothingFilter) -> Result<Trajectory> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "smoothing window must be odd and positive, got {window}"
        )));
    }
    if let SmoothingFilter::Gaussian { sigma } = filter {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gaussian sigma must be positive, got {sigma}"
            )));
        }
    }
    let r = (window / 2) as isize;
    let p: Vec<[f64; 4]> = traj.params().map(|p| [p.log_scale, p.theta, p.dx, p.dy]).collect();
    let n = p.len() as isize;
    let transforms = (0..n)
        .map(|i| {
            let (mut acc, mut norm) = ([0.0; 4], 0.0);
            for j in (i - r).max(0)..=(i + r).min(n - 1) {
                let w = match filter {
                    SmoothingFilter::Boxcar => 1.0,
                    SmoothingFilter::Gaussian { sigma } => (-((j - i) as f64).powi(2) / (2.0 * sigma * sigma)).exp(),
                };
                for (a, v) in acc.iter_mut().zip(&p[j as usize]) {
                    *a += w * v;
                }
                norm += w;
            }
            let [log_scale, theta, dx, dy] = acc.map(|a| a / norm);
            SimilarityTransform::from_params(FlowParams {
                log_scale,
                theta,
                dx,
                dy,
            })
        })
        .collect();
    Ok(Trajectory {
        times: traj.times.clone(),
        transforms,
    })
}

/// Renders with every layer's flow replaced by its smoothed trajectory. The
/// color nets may be queried outside the region seen in training; those
/// pixels are whatever the network extrapolates.
pub fn stabilize(
    model: &CoordFlowModel,
    window: usize,
    filter: SmoothingFilter,
    grid: &FrameGrid,
) -> Result<VideoVolume> {
    let per_layer = (0..model.num_layers())
        .map(|l| smooth_trajectory(&extract_trajectory(model, l, &grid.times)?, window, filter))
        .collect::<Result<Vec<_>>>()?;
    let tr = transpose(&per_layer, grid.times.len());
    let frames = evaluate(model, grid, &tr)?.into_iter().map(|i| i.rgb).collect();
    volume(grid, frames)
}

/// Distinct colors for label images.
pub const SEGMENT_PALETTE: [[u8; 3]; 8] = [
    [46, 160, 67],
    [214, 39, 40],
    [31, 119, 180],
    [255, 187, 34],
    [148, 103, 189],
    [23, 190, 207],
    [227, 119, 194],
    [127, 127, 127],
];

/// Writes `frame_%06d.png` label images plus `weights.f32`, the raw
/// little-endian softmax weights in [`SegmentationMap::weights`] order.
pub fn save_segmentation(map: &SegmentationMap, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let frames: Vec<Vec<u8>> = (0..map.frames).map(|t| map.label_frame(t).to_vec()).collect();
    let palette: Vec<[u8; 3]> = (0..map.num_layers.max(1))
        .map(|i| SEGMENT_PALETTE[i % SEGMENT_PALETTE.len()])
        .collect();
    save_indexed_frames(&frames, map.width, map.height, &palette, dir)?;
    let raw: Vec<u8> = map.weights.iter().flat_map(|w| w.to_le_bytes()).collect();
    fs::write(dir.join("weights.f32"), raw)?;
    Ok(())
}

/// Writes a volume as a numbered PNG sequence.
pub fn save_volume_frames(video: &VideoVolume, dir: impl AsRef<Path>) -> Result<()> {
    let frames: Vec<&[f32]> = (0..video.frames()).map(|t| video.frame(t)).collect();
    save_frames(&frames, video.width(), video.height(), dir)
}
