//! Desk-scale acceptance run. Prints one line per criterion and exits
//! non-zero if any fails.
//!
//! Numeric arguments (or `ACCEPTANCE_CRITERIA=2,5`) restrict the run to
//! those criteria; anything else on the command line is ignored.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use coordflow::apps::{extract_trajectory, render, segment, stabilize, FrameGrid, SmoothingFilter};
use coordflow::codec::{entropy_decode, entropy_encode, pack, quantize, unpack};
use coordflow::media::{
    make_synthetic, psnr, register_translation, save_video, Motion, Sway, SyntheticSpec, SyntheticVideo, VideoVolume,
};
use coordflow::model::CoordFlowModel;
use coordflow::trainer::{evaluate_psnr, train, Ablation, TrainConfig};
use coordflow::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{pearson, two_object_scene, variance, GRAD_TOL};

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Models of the two-object scene, trained on demand and shared by the
/// criteria that inspect them.
#[derive(Default)]
struct Scene {
    clip: Option<SyntheticVideo>,
    models: Vec<(Ablation, CoordFlowModel, f64)>,
}

impl Scene {
    fn clip(&mut self) -> &SyntheticVideo {
        self.clip.get_or_insert_with(|| two_object_scene(96, 96, 60))
    }

    /// Trained model and full-grid PSNR for `ablation`.
    fn model(&mut self, ablation: Ablation) -> Result<(&CoordFlowModel, f64)> {
        if !self.models.iter().any(|(a, ..)| *a == ablation) {
            let cfg = TrainConfig {
                epochs: 30,
                batch_size: 2048,
                ablation,
                ..TrainConfig::default()
            };
            let video = &self.clip().video;
            let model = train(video, &cfg)?.model;
            let p = evaluate_psnr(&model, video, 1)?;
            self.models.push((ablation, model, p));
        }
        let (_, m, p) = self.models.iter().find(|(a, ..)| *a == ablation).unwrap();
        Ok((m, *p))
    }
}

fn gradients() -> Result<Verdict> {
    let start = Instant::now();
    let mut worst = ("", 0.0f64);
    for case in common::op_gradient_cases()? {
        if case.error > worst.1 {
            worst = (case.name, case.error);
        }
    }
    let mlp = common::mlp_gradient_error()?;
    let model = common::tiny_model_gradient_error(4)?;
    let secs = start.elapsed().as_secs_f64();
    let pass = worst.1 < GRAD_TOL && mlp < GRAD_TOL && model < GRAD_TOL && secs < 60.0;
    Ok(Verdict::new(
        pass,
        format!(
            "worst op {} {:.1e}, mlp {mlp:.1e}, 2-layer model {model:.1e} (< {GRAD_TOL:.0e}) in {secs:.0}s",
            worst.0, worst.1
        ),
    ))
}

fn ablation(scene: &mut Scene) -> Result<Verdict> {
    let start = Instant::now();
    let full = scene.model(Ablation::Full)?.1;
    let single = scene.model(Ablation::NoLayers)?.1;
    let frozen = scene.model(Ablation::NoLayersNoFlow)?.1;
    let mins = start.elapsed().as_secs_f64() / 60.0;
    let pass = full >= single && single >= frozen && full - frozen >= 1.0 && mins <= 30.0;
    Ok(Verdict::new(
        pass,
        format!("full {full:.2} dB, no_layers {single:.2} dB, no_layers_no_flow {frozen:.2} dB in {mins:.1} min"),
    ))
}

fn flow_recovery() -> Result<Verdict> {
    let mut spec = SyntheticSpec::new(64, 64, 30);
    spec.background = Motion::translation(0.3, 0.1);
    spec.sway = Some(Sway {
        amplitude: (1.5, 1.5),
        period: 12.0,
    });
    let clip = make_synthetic(&spec)?;
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 2048,
        ..TrainConfig::default()
    };
    let model = train(&clip.video, &cfg)?.model;
    let grid = FrameGrid::training(&model);
    let map = segment(&model, &grid)?;
    let layer = (0..model.num_layers())
        .max_by(|&a, &b| {
            let share = |l| map.mean_weight(l, |_| true).unwrap_or(0.0);
            share(a).total_cmp(&share(b))
        })
        .unwrap();
    let params: Vec<_> = extract_trajectory(&model, layer, &grid.times)?.params().collect();
    // A content shift of +d pixels needs a canonical shift of -d in
    // normalized units, 2 / (len - 1) per pixel.
    let (sx, sy) = ((spec.width - 1) as f64 / 2.0, (spec.height - 1) as f64 / 2.0);
    let (mut lx, mut ly, mut gx, mut gy) = (vec![], vec![], vec![], vec![]);
    for k in 1..params.len() {
        lx.push(-(params[k].dx - params[k - 1].dx) * sx);
        ly.push(-(params[k].dy - params[k - 1].dy) * sy);
        gx.push(clip.background_offsets[k].0 - clip.background_offsets[k - 1].0);
        gy.push(clip.background_offsets[k].1 - clip.background_offsets[k - 1].1);
    }
    let (rx, ry) = (pearson(&lx, &gx), pearson(&ly, &gy));
    Ok(Verdict::new(
        rx.min(ry) >= 0.9,
        format!("layer {layer}: r_x {rx:.4}, r_y {ry:.4} (>= 0.9)"),
    ))
}

fn segmentation(scene: &mut Scene) -> Result<Verdict> {
    let masks = scene.clip().masks.clone();
    let (model, _) = scene.model(Ablation::Full)?;
    let map = segment(model, &FrameGrid::training(model))?;
    let n = map.width * map.height;
    let on_sprite = |i: usize| masks[i / n][i % n];
    let (mut best, mut gap) = (0, f64::MIN);
    for l in 0..map.num_layers {
        let inside = map.mean_weight(l, on_sprite).unwrap_or(0.0);
        let outside = map.mean_weight(l, |i| !on_sprite(i)).unwrap_or(0.0);
        if inside - outside > gap {
            (best, gap) = (l, inside - outside);
        }
    }
    Ok(Verdict::new(
        gap >= 0.2,
        format!("sprite layer {best}: mean weight on sprite minus background {gap:.3} (>= 0.2)"),
    ))
}

fn quantization(scene: &mut Scene) -> Result<Verdict> {
    let video = scene.clip().video.clone();
    let (model, raw) = scene.model(Ablation::Full)?;
    let bytes = pack(model)?;
    let decoded = unpack(&bytes)?;
    let coded = evaluate_psnr(&decoded, &video, 1)?;
    let repeat = unpack(&bytes)? == decoded && pack(model)? == bytes;
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 1;
    let caught = matches!(unpack(&flipped), Err(Error::Checksum { .. }));
    let drop = raw - coded;
    Ok(Verdict::new(
        drop.abs() <= 1.0 && repeat && caught,
        format!(
            "{raw:.2} dB -> {coded:.2} dB (change {drop:.3} dB, <= 1.0), {} bytes, deterministic {repeat}, corruption caught {caught}",
            bytes.len()
        ),
    ))
}

fn codec_properties(scene: &mut Scene) -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut round_trips = 0;
    for _ in 0..1000 {
        let len = rng.gen_range(0..2048);
        let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        if entropy_decode(&entropy_encode(&data))? == data {
            round_trips += 1;
        }
    }
    let (model, _) = scene.model(Ablation::Full)?;
    let (mut checked, mut violations) = (0usize, 0usize);
    for p in model.params() {
        let q = quantize(p)?;
        let back = q.dequantize()?;
        for (a, b) in p.data().iter().zip(back.data()) {
            checked += 1;
            if (a - b).abs() > q.scale / 2.0 + 1e-7 {
                violations += 1;
            }
        }
    }
    Ok(Verdict::new(
        round_trips == 1000 && violations == 0,
        format!("{round_trips}/1000 byte strings round-trip, {violations} of {checked} weights outside scale/2"),
    ))
}

/// Bilinear interpolation of a stride-subsampled video back onto the full grid.
fn bilinear(small: &VideoVolume, stride: usize, width: usize, height: usize) -> Result<VideoVolume> {
    let (sw, sh) = (small.width(), small.height());
    let mut data = Vec::with_capacity(width * height * small.frames() * 3);
    for t in 0..small.frames() {
        for y in 0..height {
            for x in 0..width {
                let fx = (x as f64 / stride as f64).min((sw - 1) as f64);
                let fy = (y as f64 / stride as f64).min((sh - 1) as f64);
                let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(sw - 1), (y0 + 1).min(sh - 1));
                let (ax, ay) = ((fx - x0 as f64) as f32, (fy - y0 as f64) as f32);
                let (a, b) = (small.pixel(x0, y0, t), small.pixel(x1, y0, t));
                let (c, d) = (small.pixel(x0, y1, t), small.pixel(x1, y1, t));
                for ch in 0..3 {
                    let top = a[ch] + (b[ch] - a[ch]) * ax;
                    let bottom = c[ch] + (d[ch] - c[ch]) * ax;
                    data.push(top + (bottom - top) * ay);
                }
            }
        }
    }
    VideoVolume::new(width, height, small.frames(), data)
}

fn upsampling() -> Result<Verdict> {
    let mut spec = SyntheticSpec::new(64, 64, 30);
    spec.background = Motion::translation(1.0, 0.5);
    let video = make_synthetic(&spec)?.video;

    let spatial = TrainConfig {
        epochs: 400,
        batch_size: 512,
        stride: 4,
        ..TrainConfig::default()
    };
    let model = train(&video, &spatial)?.model;
    let rendered = evaluate_psnr(&model, &video, 1)?;
    let base = bilinear(&video.downsample(4), 4, spec.width, spec.height)?;
    let bilinear_psnr = psnr(base.data(), video.data())?;

    let temporal = TrainConfig {
        epochs: 150,
        batch_size: 1024,
        frame_stride: 2,
        ..TrainConfig::default()
    };
    let model = train(&video, &temporal)?.model;
    let out = render(&model, &FrameGrid::training(&model))?;
    let (mut ours, mut copy, mut truth) = (vec![], vec![], vec![]);
    for k in (1..spec.frames).step_by(2) {
        ours.extend_from_slice(out.frame(k));
        copy.extend_from_slice(video.frame(k - 1));
        truth.extend_from_slice(video.frame(k));
    }
    let (odd, nearest) = (psnr(&ours, &truth)?, psnr(&copy, &truth)?);
    Ok(Verdict::new(
        rendered >= bilinear_psnr && odd >= nearest,
        format!(
            "stride 4: render {rendered:.2} dB vs bilinear {bilinear_psnr:.2} dB; odd frames: render {odd:.2} dB vs nearest frame {nearest:.2} dB"
        ),
    ))
}

/// Variance of the registered frame-to-frame shift, summed over both axes.
fn shake(video: &VideoVolume) -> Result<f64> {
    let (mut xs, mut ys) = (vec![], vec![]);
    for k in 1..video.frames() {
        let (dx, dy) = register_translation(
            &video.luma_frame(k - 1),
            &video.luma_frame(k),
            video.width(),
            video.height(),
            5,
        )?;
        xs.push(dx);
        ys.push(dy);
    }
    Ok(variance(&xs) + variance(&ys))
}

fn stabilization() -> Result<Verdict> {
    let mut spec = SyntheticSpec::new(64, 64, 30);
    spec.background = Motion::translation(0.3, 0.1);
    spec.jitter_amplitude = 1.5;
    let video = make_synthetic(&spec)?.video;
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 2048,
        ..TrainConfig::default()
    };
    let model = train(&video, &cfg)?.model;
    let grid = FrameGrid::training(&model);
    let steady = stabilize(&model, 9, SmoothingFilter::Boxcar, &grid)?;
    let (before, after) = (shake(&video)?, shake(&steady)?);
    let identical = stabilize(&model, 1, SmoothingFilter::Boxcar, &grid)? == render(&model, &grid)?;
    Ok(Verdict::new(
        after <= before / 5.0 && identical,
        format!(
            "shift variance {before:.4} -> {after:.4} px^2 (ratio {:.4}, <= 0.2), window 1 equals render {identical}",
            after / before
        ),
    ))
}

fn denoising() -> Result<Verdict> {
    let mut spec = SyntheticSpec::new(64, 64, 30);
    spec.background = Motion::translation(0.3, 0.1);
    spec.noise_sigma = 0.05;
    let clip = make_synthetic(&spec)?;
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 2048,
        ..TrainConfig::default()
    };
    let model = train(&clip.video, &cfg)?.model;
    let out = render(&model, &FrameGrid::training(&model))?;
    let (ours, noisy) = (
        psnr(out.data(), clip.clean.data())?,
        psnr(clip.video.data(), clip.clean.data())?,
    );
    Ok(Verdict::new(
        ours > noisy,
        format!("render vs clean {ours:.2} dB, noisy vs clean {noisy:.2} dB"),
    ))
}

fn encode_once(input: &Path, output: &Path) -> Result<(Vec<u8>, Vec<u8>)> {
    let out = Command::new(env!("CARGO_BIN_EXE_coordflow"))
        .args([
            "--threads",
            "1",
            "encode",
            "--epochs",
            "3",
            "--batch-size",
            "256",
            "--seed",
            "11",
        ])
        .arg("-i")
        .arg(input)
        .arg("-o")
        .arg(output)
        .output()?;
    if !out.status.success() {
        return Err(Error::InvalidArgument(format!(
            "encode exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr)
        )));
    }
    let mut csv = output.as_os_str().to_owned();
    csv.push(".metrics.csv");
    Ok((fs::read(output)?, fs::read(csv)?))
}

fn determinism() -> Result<Verdict> {
    let dir = tempfile::tempdir()?;
    let mut spec = SyntheticSpec::new(24, 24, 8);
    spec.background = Motion::translation(0.5, 0.25);
    let input = dir.path().join("input");
    save_video(&make_synthetic(&spec)?.video, &input)?;
    let (a_stream, a_csv) = encode_once(&input, &dir.path().join("a.cfv"))?;
    let (b_stream, b_csv) = encode_once(&input, &dir.path().join("b.cfv"))?;
    let (same_stream, same_csv) = (a_stream == b_stream, a_csv == b_csv);
    Ok(Verdict::new(
        same_stream && same_csv,
        format!(
            "bitstream identical {same_stream} ({} bytes), metrics identical {same_csv}",
            a_stream.len()
        ),
    ))
}

fn selected() -> Vec<u32> {
    let mut picks: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if let Ok(list) = std::env::var("ACCEPTANCE_CRITERIA") {
        picks.extend(list.split(',').filter_map(|s| s.trim().parse::<u32>().ok()));
    }
    if picks.is_empty() {
        (1..=10).collect()
    } else {
        picks
    }
}

fn main() {
    let picks = selected();
    let mut scene = Scene::default();
    let mut failed = 0;
    for n in 1..=10u32 {
        if !picks.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let verdict = match n {
            1 => gradients(),
            2 => ablation(&mut scene),
            3 => flow_recovery(),
            4 => segmentation(&mut scene),
            5 => quantization(&mut scene),
            6 => codec_properties(&mut scene),
            7 => upsampling(),
            8 => stabilization(),
            9 => denoising(),
            _ => determinism(),
        }
        .unwrap_or_else(|e| Verdict::new(false, format!("error: {e}")));
        if !verdict.pass {
            failed += 1;
        }
        println!(
            "criterion {n}: {} {} [{:.0}s]",
            if verdict.pass { "PASS" } else { "FAIL" },
            verdict.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
