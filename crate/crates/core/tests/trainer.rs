mod common;

use coordflow::apps::{render, FrameGrid};
use coordflow::loss::{build_weight_map, WeightCoeffs};
use coordflow::media::{make_synthetic, psnr, Motion, SyntheticSpec, VideoVolume, PSNR_CAP};
use coordflow::model::{make_preset, VideoDims};
use coordflow::trainer::{
    evaluate_psnr, metrics_csv, sample_batch, train, Ablation, Checkpoint, PixelSampler, TrainConfig, Trainer,
};
use coordflow::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 5,
        batch_size: 32,
        seed: 7,
        ..TrainConfig::default()
    }
}

fn textured(width: usize, height: usize, frames: usize) -> VideoVolume {
    let mut spec = SyntheticSpec::new(width, height, frames);
    spec.background = Motion::translation(0.5, 0.0);
    spec.max_frequency = 2;
    spec.seed = 3;
    make_synthetic(&spec).unwrap().video
}

#[test]
fn constant_video_fits_above_forty_db() {
    let video = VideoVolume::filled(16, 16, 8, [0.3, 0.6, 0.8]);
    let out = train(&video, &small_config()).unwrap();
    let p = evaluate_psnr(&out.model, &video, 1).unwrap();
    assert!(p > 40.0, "PSNR {p:.2} dB");
    assert_eq!(out.log.len(), 5);
    assert!((out.log.last().unwrap().psnr - p).abs() < 0.05);
}

#[test]
fn fixed_seed_reproduces_the_run() {
    let video = textured(12, 10, 4);
    let cfg = TrainConfig {
        epochs: 2,
        ..small_config()
    };
    let a = train(&video, &cfg).unwrap();
    let b = train(&video, &cfg).unwrap();
    assert_eq!(a.log[0].loss.to_bits(), b.log[0].loss.to_bits());
    assert_eq!(metrics_csv(&a.log), metrics_csv(&b.log));
    assert_eq!(a.model, b.model);
}

#[test]
fn frozen_flow_never_moves() {
    let video = textured(12, 10, 4);
    let cfg = TrainConfig {
        epochs: 2,
        ablation: Ablation::NoLayersNoFlow,
        ..small_config()
    };
    let initial = cfg.build_model(video.dims()).unwrap();
    let out = train(&video, &cfg).unwrap();
    assert_eq!(out.model.num_layers(), 1);
    assert!(out.model.flow_frozen);
    assert_eq!(out.model.layers[0].flow, initial.layers[0].flow);
    assert_ne!(out.model.layers[0].color, initial.layers[0].color);
    for k in 0..4 {
        let t = out.model.dims.frame_time(k);
        assert!(out.model.layers[0].flow_transform(t).unwrap().is_identity(0.0));
    }
}

#[test]
fn stride_one_sampling_covers_every_pixel() {
    let video = textured(8, 8, 2);
    let weights = build_weight_map(&video, WeightCoeffs::default()).unwrap();
    let sampler = PixelSampler::new(video.dims(), 1, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut counts = vec![0usize; 128];
    let b = sample_batch(&video, &weights, &sampler, &mut rng, 100_000).unwrap();
    for (i, &(x, y, t)) in b.pixels.iter().enumerate() {
        counts[(t * 8 + y) * 8 + x] += 1;
        assert_eq!(&b.gt[3 * i..3 * i + 3], &video.pixel(x, y, t));
        assert_eq!(b.weights[i], weights.get(x, y, t));
    }
    assert!(counts.iter().all(|&c| c > 0));
    // expected 781 per pixel, sd about 28
    assert!(counts.iter().all(|&c| (600..=960).contains(&c)), "{counts:?}");
}

#[test]
fn stride_four_sampling_stays_on_the_lattice() {
    let video = textured(17, 13, 3);
    let weights = build_weight_map(&video, WeightCoeffs::default()).unwrap();
    let sampler = PixelSampler::new(video.dims(), 4, 1).unwrap();
    assert_eq!(sampler.len(), 5 * 4 * 3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let b = sample_batch(&video, &weights, &sampler, &mut rng, 5_000).unwrap();
    for (i, &(x, y, t)) in b.pixels.iter().enumerate() {
        assert_eq!((x % 4, y % 4), (0, 0));
        assert_eq!(&b.gt[3 * i..3 * i + 3], &video.pixel(x, y, t));
    }
}

#[test]
fn resume_from_checkpoint_is_bit_exact() {
    let video = textured(12, 10, 4);
    let cfg = TrainConfig {
        epochs: 4,
        ..small_config()
    };
    let straight = train(&video, &cfg).unwrap();

    let mut first = Trainer::new(&video, cfg.clone()).unwrap();
    first.run_epoch().unwrap();
    first.run_epoch().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfck");
    first.checkpoint().save(&path).unwrap();
    drop(first);

    let ck = Checkpoint::load(&path).unwrap();
    assert_eq!(ck.epoch, 2);
    let resumed = Trainer::resume(&video, cfg, ck).unwrap().run().unwrap();
    assert_eq!(resumed.model, straight.model);
    assert_eq!(metrics_csv(&resumed.log), metrics_csv(&straight.log));
}

#[test]
fn loss_trends_down() {
    let video = textured(16, 12, 4);
    let cfg = TrainConfig {
        epochs: 12,
        ..small_config()
    };
    let out = train(&video, &cfg).unwrap();
    let median = |xs: &[f64]| {
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let losses: Vec<f64> = out.log.iter().map(|m| m.loss).collect();
    assert!(median(&losses[7..]) <= median(&losses[..5]), "{losses:?}");
}

#[test]
fn runaway_learning_rate_reports_divergence() {
    let video = textured(8, 8, 2);
    let cfg = TrainConfig {
        epochs: 3,
        base_lr: 1e30,
        ..small_config()
    };
    match train(&video, &cfg) {
        Err(Error::Diverged(msg)) => assert!(msg.contains("lr"), "{msg}"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("training with lr 1e30 should diverge"),
    }
}

#[test]
fn psnr_reference_points_through_the_model() {
    let model = make_preset("tiny", 2, VideoDims::new(9, 7, 3), 4).unwrap();
    let exact = render(&model, &FrameGrid::training(&model)).unwrap();
    assert_eq!(evaluate_psnr(&model, &exact, 1).unwrap(), PSNR_CAP);
    let rendered_psnr = psnr(exact.data(), textured(9, 7, 3).data()).unwrap();
    assert_eq!(evaluate_psnr(&model, &textured(9, 7, 3), 1).unwrap(), rendered_psnr);
}

#[test]
fn mismatched_resume_is_rejected() {
    let video = textured(8, 8, 2);
    let trainer = Trainer::new(&video, small_config()).unwrap();
    let ck = trainer.checkpoint().clone();
    let other = textured(10, 8, 2);
    assert!(Trainer::resume(&other, small_config(), ck).is_err());
}
