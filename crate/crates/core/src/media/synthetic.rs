//! Synthetic videos with known motion, used as ground truth in tests and
//! examples: a periodic textured background under a similarity motion,
//! optionally a textured disk sprite moving on its own path, per-frame
//! jitter, and additive Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::VideoVolume;
use crate::error::{Error, Result};

/// Per-frame motion of a layer. Translation is in pixels, rotation in
/// radians and scale as a log factor, all per frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub velocity: (f64, f64),
    pub rotation: f64,
    pub log_scale: f64,
}

impl Motion {
    pub fn translation(vx: f64, vy: f64) -> Self {
        Self {
            velocity: (vx, vy),
            ..Self::default()
        }
    }
}

/// Smooth sinusoidal camera sway added to the background translation:
/// `amplitude · sin(2πk / period + phase)` per axis, with the y axis a
/// quarter period behind x.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sway {
    pub amplitude: (f64, f64),
    /// In frames.
    pub period: f64,
}

impl Sway {
    pub fn offset(&self, frame: usize) -> (f64, f64) {
        let a = std::f64::consts::TAU * frame as f64 / self.period;
        (self.amplitude.0 * a.sin(), self.amplitude.1 * a.cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpriteSpec {
    pub radius: f64,
    pub start: (f64, f64),
    pub velocity: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    pub background: Motion,
    pub sprite: Option<SpriteSpec>,
    /// Uniform per-frame, per-axis camera shake in pixels added to the
    /// background translation.
    pub jitter_amplitude: f64,
    pub sway: Option<Sway>,
    pub noise_sigma: f64,
    /// Highest spatial frequency (cycles per frame width) in the textures.
    pub max_frequency: usize,
}

impl SyntheticSpec {
    pub fn new(width: usize, height: usize, frames: usize) -> Self {
        Self {
            width,
            height,
            frames,
            seed: 0,
            background: Motion::default(),
            sprite: None,
            jitter_amplitude: 0.0,
            sway: None,
            noise_sigma: 0.0,
            max_frequency: 4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticVideo {
    /// What a codec sees: clean frames plus noise.
    pub video: VideoVolume,
    pub clean: VideoVolume,
    /// Clean background without the sprite.
    pub background: VideoVolume,
    /// Background translation of every frame, jitter and sway included.
    pub background_offsets: Vec<(f64, f64)>,
    pub jitter: Vec<(f64, f64)>,
    pub sprite_centers: Vec<(f64, f64)>,
    /// `true` where the sprite covers the pixel, per frame in `[y][x]` order.
    pub masks: Vec<Vec<bool>>,
}

/// Periodic RGB texture sampled bilinearly with wrap-around.
struct Texture {
    w: usize,
    h: usize,
    rgb: Vec<[f32; 3]>,
}

impl Texture {
    fn random(w: usize, h: usize, max_freq: usize, rng: &mut ChaCha8Rng) -> Self {
        let f = max_freq.max(1) as i64;
        let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..10)
            .map(|_| {
                let (kx, ky) = loop {
                    let k = (rng.gen_range(-f..=f), rng.gen_range(-f..=f));
                    if k != (0, 0) {
                        break k;
                    }
                };
                let amp = 1.0 / (((kx * kx + ky * ky) as f64).sqrt());
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let colors = [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ];
                (kx as f64, ky as f64, phase, colors.map(|c| c * amp))
            })
            .collect();
        let mut raw = vec![[0.0f64; 3]; w * h];
        for y in 0..h {
            for x in 0..w {
                let px = &mut raw[y * w + x];
                for (kx, ky, phase, amp) in &waves {
                    let arg = std::f64::consts::TAU * (kx * x as f64 / w as f64 + ky * y as f64 / h as f64) + phase;
                    let s = arg.sin();
                    for c in 0..3 {
                        px[c] += amp[c] * s;
                    }
                }
            }
        }
        let base: [f64; 3] = [
            rng.gen_range(0.3..0.7),
            rng.gen_range(0.3..0.7),
            rng.gen_range(0.3..0.7),
        ];
        let peak = raw.iter().flat_map(|p| p.iter().map(|v| v.abs())).fold(1e-9, f64::max);
        let rgb = raw
            .into_iter()
            .map(|p| std::array::from_fn(|c| (base[c] + 0.28 * p[c] / peak).clamp(0.0, 1.0) as f32))
            .collect();
        Self { w, h, rgb }
    }

    fn sample(&self, x: f64, y: f64) -> [f32; 3] {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = ((x - x0) as f32, (y - y0) as f32);
        let wrap = |v: f64, n: usize| (v as i64).rem_euclid(n as i64) as usize;
        let (xa, xb) = (wrap(x0, self.w), wrap(x0 + 1.0, self.w));
        let (ya, yb) = (wrap(y0, self.h), wrap(y0 + 1.0, self.h));
        let at = |xi: usize, yi: usize| self.rgb[yi * self.w + xi];
        let (p00, p10, p01, p11) = (at(xa, ya), at(xb, ya), at(xa, yb), at(xb, yb));
        std::array::from_fn(|c| {
            let top = (1.0 - fx) * p00[c] + fx * p10[c];
            let bottom = (1.0 - fx) * p01[c] + fx * p11[c];
            (1.0 - fy) * top + fy * bottom
        })
    }
}

/// Renders the video described by `spec` along with its ground truth.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<SyntheticVideo> {
    let (w, h, n) = (spec.width, spec.height, spec.frames);
    if w == 0 || h == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "synthetic video needs non-zero dimensions".into(),
        ));
    }
    if let Some(s) = &spec.sway {
        if !(s.period > 0.0 && s.period.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sway period must be positive, got {}",
                s.period
            )));
        }
    }
    if let Some(s) = &spec.sprite {
        if 2.0 * s.radius > w.min(h) as f64 {
            return Err(Error::InvalidArgument(format!(
                "sprite diameter {} exceeds frame {w}x{h}",
                2.0 * s.radius
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bg_tex = Texture::random(w, h, spec.max_frequency, &mut rng);
    let sprite_tex = Texture::random(w, h, spec.max_frequency + 2, &mut rng);

    let jitter: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            if spec.jitter_amplitude > 0.0 {
                let a = spec.jitter_amplitude;
                (rng.gen_range(-a..=a), rng.gen_range(-a..=a))
            } else {
                (0.0, 0.0)
            }
        })
        .collect();
    let background_offsets: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let (vx, vy) = spec.background.velocity;
            let (sx, sy) = spec.sway.map_or((0.0, 0.0), |s| s.offset(k));
            (k as f64 * vx + jitter[k].0 + sx, k as f64 * vy + jitter[k].1 + sy)
        })
        .collect();
    let sprite_centers: Vec<(f64, f64)> = (0..n)
        .map(|k| match &spec.sprite {
            Some(s) => (
                (s.start.0 + k as f64 * s.velocity.0).rem_euclid(w as f64),
                (s.start.1 + k as f64 * s.velocity.1).rem_euclid(h as f64),
            ),
            None => (0.0, 0.0),
        })
        .collect();

    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let toroidal = |d: f64, n: usize| {
        let d = d.rem_euclid(n as f64);
        d.min(n as f64 - d)
    };
    let mut clean = Vec::with_capacity(w * h * n * 3);
    let mut background = Vec::with_capacity(w * h * n * 3);
    let mut masks = Vec::with_capacity(n);
    for k in 0..n {
        let (ox, oy) = background_offsets[k];
        let theta = k as f64 * spec.background.rotation;
        let scale = (k as f64 * spec.background.log_scale).exp();
        let (sin, cos) = (-theta).sin_cos();
        let mut mask = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64 - cx - ox, y as f64 - cy - oy);
                let (tx, ty) = if theta == 0.0 && scale == 1.0 {
                    (x as f64 - ox, y as f64 - oy)
                } else {
                    ((cos * px - sin * py) / scale + cx, (sin * px + cos * py) / scale + cy)
                };
                let bg = bg_tex.sample(tx, ty);
                background.extend_from_slice(&bg);
                let mut px_rgb = bg;
                if let Some(s) = &spec.sprite {
                    let (sx, sy) = sprite_centers[k];
                    let (dx, dy) = (toroidal(x as f64 - sx, w), toroidal(y as f64 - sy, h));
                    if dx * dx + dy * dy < s.radius * s.radius {
                        mask[y * w + x] = true;
                        px_rgb = sprite_tex.sample(x as f64 - sx + s.start.0, y as f64 - sy + s.start.1);
                    }
                }
                clean.extend_from_slice(&px_rgb);
            }
        }
        masks.push(mask);
    }

    let noisy = if spec.noise_sigma > 0.0 {
        let normal =
            Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidArgument(format!("noise sigma: {e}")))?;
        clean
            .iter()
            .map(|&v| (f64::from(v) + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32)
            .collect()
    } else {
        clean.clone()
    };

    let mut video = VideoVolume::new(w, h, n, noisy)?;
    video.source = format!("synthetic(seed={})", spec.seed);
    Ok(SyntheticVideo {
        video,
        clean: VideoVolume::new(w, h, n, clean)?,
        background: VideoVolume::new(w, h, n, background)?,
        background_offsets,
        jitter,
        sprite_centers,
        masks,
    })
}
