//! Fitting a model to a video: coordinate sampling, the epoch loop,
//! ablation variants, metrics and resumable checkpoints.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::apps::{render, FrameGrid};
use crate::autodiff::Graph;
use crate::bytes::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::loss::{build_weight_map, total_loss, LossConfig, WeightCoeffs, WeightMap};
use crate::media::{psnr_from_mse, VideoVolume};
use crate::model::{read_model, write_model, CoordFlowModel, Preset, VideoDims};
use crate::optim::{adamw_step, AdamWConfig, LrSchedule, OptimizerState};

/// Architecture variants compared in the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// `n_layers` layers, each with a trainable flow network.
    #[default]
    Full,
    /// One layer with the parameter budget of `n_layers` layers.
    NoLayers,
    /// As `NoLayers`, with the flow held at the identity.
    NoLayersNoFlow,
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "no_layers" => Ok(Self::NoLayers),
            "no_layers_no_flow" => Ok(Self::NoLayersNoFlow),
            other => Err(Error::Config(format!(
                "unknown ablation `{other}` (expected full, no_layers, no_layers_no_flow)"
            ))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::NoLayers => "no_layers",
            Self::NoLayersNoFlow => "no_layers_no_flow",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u32,
    pub base_lr: f64,
    pub min_lr: f64,
    /// Coordinates per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    pub preset: String,
    pub n_layers: usize,
    pub ablation: Ablation,
    /// Train only on pixels whose x and y are multiples of `stride`.
    pub stride: usize,
    /// Train only on frames whose index is a multiple of `frame_stride`.
    pub frame_stride: usize,
    pub loss: LossConfig,
    pub weights: WeightCoeffs,
    pub adamw: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 53,
            base_lr: 0.0005,
            min_lr: 0.0,
            batch_size: 65_536,
            seed: 0,
            preset: "tiny".into(),
            n_layers: 2,
            ablation: Ablation::Full,
            stride: 1,
            frame_stride: 1,
            loss: LossConfig::default(),
            weights: WeightCoeffs::default(),
            adamw: AdamWConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.n_layers == 0 {
            return Err(Error::Config("n_layers must be at least 1".into()));
        }
        if self.stride == 0 || self.frame_stride == 0 {
            return Err(Error::Config("strides must be at least 1".into()));
        }
        LrSchedule::new(self.base_lr, self.min_lr, self.epochs)?;
        Ok(())
    }

    /// Builds the untrained model this config describes.
    pub fn build_model(&self, dims: VideoDims) -> Result<CoordFlowModel> {
        let (layers, scale) = match self.ablation {
            Ablation::Full => (self.n_layers, 1.0),
            Ablation::NoLayers | Ablation::NoLayersNoFlow => (1, self.n_layers as f64),
        };
        let preset = Preset::get(self.preset.parse()?).for_lattice(dims, self.stride, self.frame_stride);
        let mut model = preset.build(layers, scale, dims, self.seed)?;
        if self.ablation == Ablation::NoLayersNoFlow {
            model.freeze_flow();
        }
        Ok(model)
    }
}

/// One minibatch; rows of `coords`, `gt` and `weights` correspond.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `[B, 3]` normalized `(x, y, t)`.
    pub coords: Vec<f32>,
    /// `[B, 3]` target colors.
    pub gt: Vec<f32>,
    /// `[B, 1]` loss weights.
    pub weights: Vec<f32>,
    /// Source pixel `(x, y, t)` of every row.
    pub pixels: Vec<(usize, usize, usize)>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Uniform sampler over the training-visible pixel lattice.
#[derive(Clone, Debug)]
pub struct PixelSampler {
    dims: VideoDims,
    stride: usize,
    frame_stride: usize,
    nx: usize,
    ny: usize,
    nt: usize,
}

impl PixelSampler {
    pub fn new(dims: VideoDims, stride: usize, frame_stride: usize) -> Result<Self> {
        if dims.pixels() == 0 {
            return Err(Error::Video("cannot sample an empty video".into()));
        }
        let (stride, frame_stride) = (stride.max(1), frame_stride.max(1));
        Ok(Self {
            dims,
            stride,
            frame_stride,
            nx: dims.width.div_ceil(stride),
            ny: dims.height.div_ceil(stride),
            nt: dims.frames.div_ceil(frame_stride),
        })
    }

    /// Number of visible pixels.
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Full-resolution pixel of lattice index `i`.
    pub fn pixel(&self, i: usize) -> (usize, usize, usize) {
        let x = i % self.nx;
        let y = (i / self.nx) % self.ny;
        let t = i / (self.nx * self.ny);
        (x * self.stride, y * self.stride, t * self.frame_stride)
    }

    pub fn coord(&self, (x, y, t): (usize, usize, usize)) -> [f32; 3] {
        use crate::model::normalize_coord;
        [
            normalize_coord(x as f64, self.dims.width) as f32,
            normalize_coord(y as f64, self.dims.height) as f32,
            normalize_coord(t as f64, self.dims.frames) as f32,
        ]
    }

    /// All visible pixels in lattice order.
    pub fn all_pixels(&self) -> Vec<(usize, usize, usize)> {
        (0..self.len()).map(|i| self.pixel(i)).collect()
    }
}

/// Draws `batch_size` uniformly random visible pixels.
pub fn sample_batch(
    video: &VideoVolume,
    weights: &WeightMap,
    sampler: &PixelSampler,
    rng: &mut impl Rng,
    batch_size: usize,
) -> Result<Batch> {
    if video.is_empty() {
        return Err(Error::Video("cannot sample an empty video".into()));
    }
    let mut b = Batch {
        coords: Vec::with_capacity(batch_size * 3),
        gt: Vec::with_capacity(batch_size * 3),
        weights: Vec::with_capacity(batch_size),
        pixels: Vec::with_capacity(batch_size),
    };
    for _ in 0..batch_size {
        let p = sampler.pixel(rng.gen_range(0..sampler.len()));
        b.coords.extend_from_slice(&sampler.coord(p));
        b.gt.extend_from_slice(&video.pixel(p.0, p.1, p.2));
        b.weights.push(weights.get(p.0, p.1, p.2));
        b.pixels.push(p);
    }
    Ok(b)
}

/// PSNR of the rendered training grid against `video`, over every
/// `stride`-th pixel in x and y of all frames.
pub fn evaluate_psnr(model: &CoordFlowModel, video: &VideoVolume, stride: usize) -> Result<f64> {
    if model.dims != video.dims() {
        return Err(Error::InvalidArgument(format!(
            "model was fitted to {:?}, video is {:?}",
            model.dims,
            video.dims()
        )));
    }
    let stride = stride.max(1);
    let out = render(model, &FrameGrid::training(model))?;
    let (mut sum, mut n) = (0.0f64, 0usize);
    for t in 0..video.frames() {
        for y in (0..video.height()).step_by(stride) {
            for x in (0..video.width()).step_by(stride) {
                let (a, b) = (out.pixel(x, y, t), video.pixel(x, y, t));
                for c in 0..3 {
                    let d = f64::from(a[c]) - f64::from(b[c]);
                    sum += d * d;
                }
                n += 3;
            }
        }
    }
    Ok(psnr_from_mse(sum / n.max(1) as f64))
}

fn psnr_on(
    model: &CoordFlowModel,
    video: &VideoVolume,
    sampler: &PixelSampler,
    pixels: &[(usize, usize, usize)],
) -> Result<f64> {
    let coords: Vec<[f32; 3]> = pixels.iter().map(|&p| sampler.coord(p)).collect();
    let pred = model.predict_rgb(&coords)?;
    let mut sum = 0.0f64;
    for (i, &(x, y, t)) in pixels.iter().enumerate() {
        let gt = video.pixel(x, y, t);
        for c in 0..3 {
            let d = f64::from(pred[3 * i + c]) - f64::from(gt[c]);
            sum += d * d;
        }
    }
    Ok(psnr_from_mse(sum / (3 * pixels.len().max(1)) as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u32,
    pub lr: f64,
    /// Mean total training loss over the epoch's steps.
    pub loss: f64,
    /// PSNR on the validation grid after the epoch.
    pub psnr: f64,
}

pub fn metrics_csv(log: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,lr,loss,psnr\n");
    for m in log {
        s.push_str(&format!("{},{:e},{:e},{:.6}\n", m.epoch, m.lr, m.loss, m.psnr));
    }
    s
}

pub fn write_metrics_csv(log: &[EpochMetrics], path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(metrics_csv(log).as_bytes())?;
    Ok(())
}

/// Videos above this many visible pixels validate on a fixed 1% subsample.
pub const FULL_VALIDATION_LIMIT: usize = 1 << 18;

/// Resumable training state.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: CoordFlowModel,
    pub optimizer: OptimizerState,
    /// Completed epochs.
    pub epoch: u32,
    pub rng: ChaCha8Rng,
    pub history: Vec<EpochMetrics>,
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"CFCK";
const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        let model = write_model(&self.model);
        w.u64(model.len() as u64);
        w.bytes(&model);
        let o = &self.optimizer;
        for v in [o.config.beta1, o.config.beta2, o.config.epsilon, o.config.weight_decay] {
            w.f64(v);
        }
        w.u64(o.step);
        w.u32(o.first_moment.len() as u32);
        for (m, v) in o.first_moment.iter().zip(&o.second_moment) {
            w.u64(m.len() as u64);
            w.f32s(m);
            w.f32s(v);
        }
        w.u32(self.epoch);
        w.bytes(&self.rng.get_seed());
        w.u64(self.rng.get_stream());
        w.bytes(&self.rng.get_word_pos().to_le_bytes());
        w.u32(self.history.len() as u32);
        for m in &self.history {
            w.u32(m.epoch);
            w.f64(m.lr);
            w.f64(m.loss);
            w.f64(m.psnr);
        }
        w.into_inner()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a training checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let model_len = r.u64()? as usize;
        let model = read_model(r.take(model_len)?)?;
        let config = AdamWConfig {
            beta1: r.f64()?,
            beta2: r.f64()?,
            epsilon: r.f64()?,
            weight_decay: r.f64()?,
        };
        let step = r.u64()?;
        let n = r.u32()? as usize;
        let (mut first, mut second) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let len = r.u64()? as usize;
            first.push(r.f32s(len)?);
            second.push(r.f32s(len)?);
        }
        let epoch = r.u32()?;
        let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        let hn = r.u32()? as usize;
        let history = (0..hn)
            .map(|_| {
                Ok(EpochMetrics {
                    epoch: r.u32()?,
                    lr: r.f64()?,
                    loss: r.f64()?,
                    psnr: r.f64()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            model,
            optimizer: OptimizerState {
                config,
                step,
                first_moment: first,
                second_moment: second,
            },
            epoch,
            rng,
            history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Training loop state for one video.
pub struct Trainer<'a> {
    video: &'a VideoVolume,
    cfg: TrainConfig,
    weights: WeightMap,
    sampler: PixelSampler,
    schedule: LrSchedule,
    validation: Vec<(usize, usize, usize)>,
    state: Checkpoint,
}

impl<'a> Trainer<'a> {
    pub fn new(video: &'a VideoVolume, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.build_model(video.dims())?;
        let optimizer = OptimizerState::new(cfg.adamw, model.params());
        let state = Checkpoint {
            model,
            optimizer,
            epoch: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba7c),
            history: Vec::new(),
        };
        Self::with_state(video, cfg, state)
    }

    pub fn resume(video: &'a VideoVolume, cfg: TrainConfig, checkpoint: Checkpoint) -> Result<Self> {
        cfg.validate()?;
        if checkpoint.model.dims != video.dims() {
            return Err(Error::InvalidArgument(format!(
                "checkpoint was trained on {:?}, video is {:?}",
                checkpoint.model.dims,
                video.dims()
            )));
        }
        Self::with_state(video, cfg, checkpoint)
    }

    fn with_state(video: &'a VideoVolume, cfg: TrainConfig, state: Checkpoint) -> Result<Self> {
        let sampler = PixelSampler::new(video.dims(), cfg.stride, cfg.frame_stride)?;
        let weights = visible_weight_map(video, &cfg)?;
        let schedule = LrSchedule::new(cfg.base_lr, cfg.min_lr, cfg.epochs)?;
        let validation = if sampler.len() <= FULL_VALIDATION_LIMIT {
            sampler.all_pixels()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0a11_da7a);
            (0..sampler.len() / 100)
                .map(|_| sampler.pixel(rng.gen_range(0..sampler.len())))
                .collect()
        };
        Ok(Self {
            video,
            cfg,
            weights,
            sampler,
            schedule,
            validation,
            state,
        })
    }

    pub fn model(&self) -> &CoordFlowModel {
        &self.state.model
    }

    pub fn weight_map(&self) -> &WeightMap {
        &self.weights
    }

    pub fn epochs_done(&self) -> u32 {
        self.state.epoch
    }

    pub fn history(&self) -> &[EpochMetrics] {
        &self.state.history
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.state
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.sampler.len().div_ceil(self.cfg.batch_size)
    }

    /// One optimizer step on a fresh batch; returns the total loss.
    fn step(&mut self, lr: f64) -> Result<f64> {
        let batch = sample_batch(
            self.video,
            &self.weights,
            &self.sampler,
            &mut self.state.rng,
            self.cfg.batch_size,
        )?;
        let b = batch.len();
        let model = &mut self.state.model;
        let mut g = Graph::<f32>::new();
        let bound = model.bind(&mut g, true);
        let coords = g.constant(b, 3, batch.coords)?;
        let gt = g.constant(b, 3, batch.gt)?;
        let w = g.constant(b, 1, batch.weights)?;
        let out = model.forward(&mut g, &bound, coords, None)?;
        let loss = total_loss(&mut g, &out, gt, w, &self.cfg.loss)?;
        let value = f64::from(g.scalar_value(loss.total)?);
        if !value.is_finite() {
            let mean_w =
                self.weights.weights.iter().map(|&v| f64::from(v)).sum::<f64>() / self.weights.weights.len() as f64;
            return Err(Error::Diverged(format!(
                "loss {value} at epoch {} (lr {lr:e}, batch of {b}, mean weight {mean_w:.4})",
                self.state.epoch
            )));
        }
        let grads = g.backward(loss.total)?;
        let vars = bound.vars();
        let mut params = model.params_mut();
        for (p, v) in params.iter_mut().zip(&vars) {
            if p.requires_grad {
                p.grad = Some(match grads.get(*v) {
                    Some(gr) => gr.to_vec(),
                    None => vec![0.0; p.len()],
                });
            }
        }
        adamw_step(&mut params, &mut self.state.optimizer, lr)?;
        for p in params {
            p.grad = None;
        }
        Ok(value)
    }

    /// Runs one epoch and returns its metrics.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let epoch = self.state.epoch;
        let lr = self.schedule.lr_at(epoch.min(self.cfg.epochs))?;
        let steps = self.steps_per_epoch();
        let mut sum = 0.0;
        for _ in 0..steps {
            sum += self.step(lr)?;
        }
        let psnr = psnr_on(&self.state.model, self.video, &self.sampler, &self.validation)?;
        let m = EpochMetrics {
            epoch,
            lr,
            loss: sum / steps as f64,
            psnr,
        };
        log::info!("epoch {epoch}: lr {lr:.2e} loss {:.5} psnr {psnr:.2} dB", m.loss);
        self.state.history.push(m);
        self.state.epoch += 1;
        Ok(m)
    }

    /// Runs the remaining epochs.
    pub fn run(mut self) -> Result<TrainOutcome> {
        while self.state.epoch < self.cfg.epochs {
            self.run_epoch()?;
        }
        let Checkpoint { model, history, .. } = self.state;
        Ok(TrainOutcome { model, log: history })
    }
}

/// The weight map of the pixels training can see, expanded back onto the
/// full lattice (unseen pixels keep the bias).
fn visible_weight_map(video: &VideoVolume, cfg: &TrainConfig) -> Result<WeightMap> {
    if cfg.stride == 1 && cfg.frame_stride == 1 {
        return build_weight_map(video, cfg.weights);
    }
    let view = video.downsample(cfg.stride).select_frames(0, cfg.frame_stride)?;
    let small = build_weight_map(&view, cfg.weights)?;
    let mut full = WeightMap::uniform(video, cfg.weights.bias);
    full.coeffs = cfg.weights;
    for t in 0..view.frames() {
        for y in 0..view.height() {
            for x in 0..view.width() {
                let (fx, fy, ft) = (x * cfg.stride, y * cfg.stride, t * cfg.frame_stride);
                full.weights[(ft * video.height() + fy) * video.width() + fx] = small.get(x, y, t);
            }
        }
    }
    Ok(full)
}

pub struct TrainOutcome {
    pub model: CoordFlowModel,
    pub log: Vec<EpochMetrics>,
}

/// Fits a fresh model to `video`.
pub fn train(video: &VideoVolume, cfg: &TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(video, cfg.clone())?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_sampling_stays_on_lattice() {
        let v = VideoVolume::filled(16, 12, 3, [0.5; 3]);
        let wm = WeightMap::uniform(&v, 1.0);
        let s = PixelSampler::new(v.dims(), 4, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = sample_batch(&v, &wm, &s, &mut rng, 500).unwrap();
        assert!(b.pixels.iter().all(|&(x, y, _)| x % 4 == 0 && y % 4 == 0));
    }

    #[test]
    fn batch_rows_match_the_video() {
        let data: Vec<f32> = (0..6 * 5 * 2 * 3).map(|i| (i % 11) as f32 / 10.0).collect();
        let v = VideoVolume::new(6, 5, 2, data).unwrap();
        let wm = build_weight_map(&v, WeightCoeffs::default()).unwrap();
        let s = PixelSampler::new(v.dims(), 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = sample_batch(&v, &wm, &s, &mut rng, 64).unwrap();
        for (i, &(x, y, t)) in b.pixels.iter().enumerate() {
            assert_eq!(&b.gt[3 * i..3 * i + 3], &v.pixel(x, y, t));
            assert_eq!(b.weights[i], wm.get(x, y, t));
            let c = s.coord((x, y, t));
            assert_eq!(&b.coords[3 * i..3 * i + 3], &c);
        }
    }

    #[test]
    fn empty_video_cannot_be_sampled() {
        assert!(PixelSampler::new(VideoDims::new(0, 4, 1), 1, 1).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.epochs = 0;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!("sideways".parse::<Ablation>().is_err());
        assert_eq!(
            "no_layers_no_flow".parse::<Ablation>().unwrap(),
            Ablation::NoLayersNoFlow
        );
    }

    #[test]
    fn ablation_models_share_a_budget() {
        let dims = VideoDims::new(16, 16, 4);
        let mk = |a| {
            TrainConfig {
                ablation: a,
                ..Default::default()
            }
            .build_model(dims)
            .unwrap()
        };
        let full = mk(Ablation::Full);
        let single = mk(Ablation::NoLayers);
        let frozen = mk(Ablation::NoLayersNoFlow);
        assert_eq!((full.num_layers(), single.num_layers(), frozen.num_layers()), (2, 1, 1));
        assert!(frozen.flow_frozen);
        let ratio = single.param_count() as f64 / full.param_count() as f64;
        assert!((0.95..1.05).contains(&ratio), "{ratio}");
    }

    #[test]
    fn metrics_csv_layout() {
        let csv = metrics_csv(&[EpochMetrics {
            epoch: 0,
            lr: 0.0005,
            loss: 0.25,
            psnr: 31.5,
        }]);
        assert_eq!(csv, "epoch,lr,loss,psnr\n0,5e-4,2.5e-1,31.500000\n");
    }
}
