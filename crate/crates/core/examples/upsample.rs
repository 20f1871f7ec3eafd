//! Trains on every other pixel and every other frame, then renders the full
//! grid at twice the frame rate.

use coordflow::apps::upsample;
use coordflow::media::{make_synthetic, psnr, save_video, Motion, SyntheticSpec};
use coordflow::trainer::{evaluate_psnr, train, TrainConfig};
use coordflow::Result;

fn main() -> Result<()> {
    let mut spec = SyntheticSpec::new(48, 48, 16);
    spec.background = Motion::translation(1.0, 0.5);
    let video = make_synthetic(&spec)?.video;
    let cfg = TrainConfig {
        epochs: 150,
        batch_size: 256,
        stride: 2,
        frame_stride: 2,
        ..TrainConfig::default()
    };
    let model = train(&video, &cfg)?.model;
    println!(
        "full-grid PSNR from a 1/8 sample: {:.2} dB",
        evaluate_psnr(&model, &video, 1)?
    );

    // Factor 1 in space, 2 in time: 2T - 1 frames, every even one a training time.
    let smooth = upsample(&model, 1, 2)?;
    let even: Vec<f32> = (0..video.frames()).flat_map(|k| smooth.frame(2 * k).to_vec()).collect();
    println!(
        "{} frames rendered, even frames at {:.2} dB",
        smooth.frames(),
        psnr(&even, video.data())?
    );

    let big = upsample(&model, 3, 1)?;
    save_video(&big, "upsampled")?;
    println!("wrote {}x{} frames to upsampled/", big.width(), big.height());
    Ok(())
}
