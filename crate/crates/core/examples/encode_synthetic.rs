//! Fits a small synthetic clip, writes the compressed bitstream and reports
//! its size and quality.
//!
//! cargo run --release --example encode_synthetic -- out.cfv

use coordflow::codec::{bpp, pack, unpack};
use coordflow::media::{make_synthetic, Motion, SyntheticSpec};
use coordflow::trainer::{evaluate_psnr, train, TrainConfig};
use coordflow::Result;

fn main() -> Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "clip.cfv".into());
    let mut spec = SyntheticSpec::new(48, 48, 16);
    spec.background = Motion::translation(0.5, 0.25);
    let video = make_synthetic(&spec)?.video;

    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 1024,
        ..TrainConfig::default()
    };
    let fit = train(&video, &cfg)?;
    for m in fit.log.iter().step_by(5) {
        println!(
            "epoch {:>2}  lr {:.2e}  loss {:.5}  psnr {:.2} dB",
            m.epoch, m.lr, m.loss, m.psnr
        );
    }

    let bytes = pack(&fit.model)?;
    std::fs::write(&out, &bytes)?;
    let decoded = unpack(&bytes)?;
    println!(
        "{out}: {} bytes, {:.3} bpp, PSNR {:.2} dB before and {:.2} dB after quantization",
        bytes.len(),
        bpp(bytes.len(), fit.model.dims)?,
        evaluate_psnr(&fit.model, &video, 1)?,
        evaluate_psnr(&decoded, &video, 1)?
    );
    Ok(())
}
