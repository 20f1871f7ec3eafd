//! Per-pixel loss weights from luma Laplacian magnitude, Canny edges and
//! short-window temporal variance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::VideoVolume;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightCoeffs {
    pub laplacian: f32,
    pub canny: f32,
    pub temporal: f32,
    pub bias: f32,
}

impl Default for WeightCoeffs {
    fn default() -> Self {
        Self {
            laplacian: 1.0,
            canny: 1.0,
            temporal: 1.0,
            bias: 0.5,
        }
    }
}

impl WeightCoeffs {
    /// Constant unit weight everywhere.
    pub fn uniform() -> Self {
        Self {
            laplacian: 0.0,
            canny: 0.0,
            temporal: 0.0,
            bias: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.laplacian, self.canny, self.temporal, self.bias];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) || self.bias <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "weight coefficients must be finite and non-negative with bias > 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Per-pixel weights, indexed like [`VideoVolume::pixel_index`].
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub weights: Vec<f32>,
    pub coeffs: WeightCoeffs,
}

impl WeightMap {
    pub fn uniform(video: &VideoVolume, value: f32) -> Self {
        Self {
            width: video.width(),
            height: video.height(),
            frames: video.frames(),
            weights: vec![value; video.pixel_count()],
            coeffs: WeightCoeffs {
                bias: value,
                ..WeightCoeffs::uniform()
            },
        }
    }

    pub fn get(&self, x: usize, y: usize, t: usize) -> f32 {
        self.weights[(t * self.height + y) * self.width + x]
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.weights[t * n..(t + 1) * n]
    }

    pub fn max(&self) -> f32 {
        self.weights.iter().copied().fold(0.0, f32::max)
    }
}

pub const TEMPORAL_RADIUS: usize = 2;
pub const CANNY_SIGMA: f64 = 1.4;
pub const CANNY_LOW_PERCENTILE: f64 = 0.70;
pub const CANNY_HIGH_PERCENTILE: f64 = 0.90;

/// `w = bias + a_lap·|∇²Y| + a_canny·edges + a_tv·var_t(Y)`, each component
/// scaled to `[0, 1]` over the whole video first.
pub fn build_weight_map(video: &VideoVolume, coeffs: WeightCoeffs) -> Result<WeightMap> {
    coeffs.validate()?;
    let (w, h, n) = (video.width(), video.height(), video.frames());
    let luma: Vec<Vec<f32>> = (0..n).into_par_iter().map(|t| video.luma_frame(t)).collect();

    let mut lap: Vec<Vec<f32>> = luma.par_iter().map(|y| laplacian_abs(y, w, h)).collect();
    normalize(&mut lap);
    let edges: Vec<Vec<f32>> = luma.par_iter().map(|y| canny(y, w, h)).collect();
    let mut tv: Vec<Vec<f32>> = (0..n)
        .into_par_iter()
        .map(|t| temporal_variance(&luma, t, TEMPORAL_RADIUS))
        .collect();
    normalize(&mut tv);

    let mut weights = Vec::with_capacity(w * h * n);
    for t in 0..n {
        for i in 0..w * h {
            weights.push(
                coeffs.bias + coeffs.laplacian * lap[t][i] + coeffs.canny * edges[t][i] + coeffs.temporal * tv[t][i],
            );
        }
    }
    Ok(WeightMap {
        width: w,
        height: h,
        frames: n,
        weights,
        coeffs,
    })
}

fn normalize(planes: &mut [Vec<f32>]) {
    let max = planes.iter().flatten().copied().fold(0.0f32, f32::max);
    if max > 0.0 {
        planes.iter_mut().flatten().for_each(|v| *v /= max);
    }
}

fn clamped(img: &[f32], w: usize, h: usize, x: isize, y: isize) -> f32 {
    let xc = x.clamp(0, w as isize - 1) as usize;
    let yc = y.clamp(0, h as isize - 1) as usize;
    img[yc * w + xc]
}

/// `|[0,1,0; 1,−4,1; 0,1,0] ∗ Y|` with replicated borders.
pub fn laplacian_abs(img: &[f32], w: usize, h: usize) -> Vec<f32> {
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = clamped(img, w, h, x, y);
            let s = clamped(img, w, h, x - 1, y)
                + clamped(img, w, h, x + 1, y)
                + clamped(img, w, h, x, y - 1)
                + clamped(img, w, h, x, y + 1);
            out[y as usize * w + x as usize] = (s - 4.0 * c).abs();
        }
    }
    out
}

fn gaussian_blur(img: &[f32], w: usize, h: usize, sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp() as f32)
        .collect();
    let norm: f32 = kernel.iter().sum();
    let kernel: Vec<f32> = kernel.iter().map(|k| k / norm).collect();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            tmp[y as usize * w + x as usize] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * clamped(img, w, h, x + k as isize - radius, y))
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            out[y as usize * w + x as usize] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * clamped(&tmp, w, h, x, y + k as isize - radius))
                .sum();
        }
    }
    out
}

fn percentile(values: &[f32], q: f64) -> f32 {
    let mut v = values.to_vec();
    v.sort_by(f32::total_cmp);
    let idx = ((v.len() - 1) as f64 * q).round() as usize;
    v[idx]
}

/// Binary Canny edge mask: Gaussian blur, Sobel gradients, non-maximum
/// suppression and hysteresis with percentile thresholds.
pub fn canny(img: &[f32], w: usize, h: usize) -> Vec<f32> {
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let blurred = gaussian_blur(img, w, h, CANNY_SIGMA);
    let at = |x: isize, y: isize| clamped(&blurred, w, h, x, y);
    let mut mag = vec![0.0f32; w * h];
    let mut dir = vec![0u8; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            mag[i] = (gx * gx + gy * gy).sqrt();
            let angle = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            dir[i] = match angle {
                a if !(22.5..157.5).contains(&a) => 0,
                a if a < 67.5 => 1,
                a if a < 112.5 => 2,
                _ => 3,
            };
        }
    }

    let m = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0.0f32; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let (a, b) = match dir[i] {
                0 => (m(x - 1, y), m(x + 1, y)),
                1 => (m(x - 1, y - 1), m(x + 1, y + 1)),
                2 => (m(x, y - 1), m(x, y + 1)),
                _ => (m(x + 1, y - 1), m(x - 1, y + 1)),
            };
            if mag[i] >= a && mag[i] >= b {
                thin[i] = mag[i];
            }
        }
    }

    let low = percentile(&mag, CANNY_LOW_PERCENTILE);
    let high = percentile(&mag, CANNY_HIGH_PERCENTILE);
    // a flat frame has no edges at any threshold
    const FLOOR: f32 = 1e-6;
    let mut edge = vec![0.0f32; w * h];
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| thin[i] > FLOOR && thin[i] >= high).collect();
    for &i in &stack {
        edge[i] = 1.0;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if edge[j] == 0.0 && thin[j] > FLOOR && thin[j] >= low {
                    edge[j] = 1.0;
                    stack.push(j);
                }
            }
        }
    }
    edge
}

/// Population variance of each pixel's luma over frames `t ± radius`.
pub fn temporal_variance(luma: &[Vec<f32>], t: usize, radius: usize) -> Vec<f32> {
    let n = luma.len();
    let (lo, hi) = (t.saturating_sub(radius), (t + radius).min(n - 1));
    let count = (hi - lo + 1) as f64;
    (0..luma[t].len())
        .map(|i| {
            let mean = (lo..=hi).map(|k| f64::from(luma[k][i])).sum::<f64>() / count;
            let var = (lo..=hi)
                .map(|k| {
                    let d = f64::from(luma[k][i]) - mean;
                    d * d
                })
                .sum::<f64>()
                / count;
            var as f32
        })
        .collect()
}
