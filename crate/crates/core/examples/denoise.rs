//! A network too small to memorize noise acts as a denoiser.

use coordflow::apps::{render, FrameGrid};
use coordflow::media::{make_synthetic, psnr, Motion, SyntheticSpec};
use coordflow::trainer::{train, TrainConfig};
use coordflow::Result;

fn main() -> Result<()> {
    let mut spec = SyntheticSpec::new(48, 48, 16);
    spec.background = Motion::translation(0.3, 0.1);
    spec.noise_sigma = 0.05;
    let clip = make_synthetic(&spec)?;
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 1024,
        ..TrainConfig::default()
    };
    let model = train(&clip.video, &cfg)?.model;
    let out = render(&model, &FrameGrid::training(&model))?;
    println!("noisy input: {:.2} dB", psnr(clip.video.data(), clip.clean.data())?);
    println!("rendered:    {:.2} dB", psnr(out.data(), clip.clean.data())?);
    Ok(())
}
