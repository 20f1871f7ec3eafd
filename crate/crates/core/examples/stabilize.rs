//! Removes injected camera shake by smoothing the learned per-frame
//! transforms.

use coordflow::apps::{extract_trajectory, render, stabilize, FrameGrid, SmoothingFilter};
use coordflow::media::{make_synthetic, register_translation, save_video, Motion, SyntheticSpec, VideoVolume};
use coordflow::trainer::{train, TrainConfig};
use coordflow::Result;

fn shifts(v: &VideoVolume) -> Result<Vec<(f64, f64)>> {
    (1..v.frames())
        .map(|k| register_translation(&v.luma_frame(k - 1), &v.luma_frame(k), v.width(), v.height(), 5))
        .collect()
}

fn spread(s: &[(f64, f64)]) -> f64 {
    let n = s.len() as f64;
    let (mx, my) = (
        s.iter().map(|p| p.0).sum::<f64>() / n,
        s.iter().map(|p| p.1).sum::<f64>() / n,
    );
    s.iter().map(|p| (p.0 - mx).powi(2) + (p.1 - my).powi(2)).sum::<f64>() / n
}

fn main() -> Result<()> {
    let mut spec = SyntheticSpec::new(48, 48, 24);
    spec.background = Motion::translation(0.3, 0.1);
    spec.jitter_amplitude = 1.5;
    let video = make_synthetic(&spec)?.video;
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 1024,
        ..TrainConfig::default()
    };
    let model = train(&video, &cfg)?.model;
    let grid = FrameGrid::training(&model);

    let layer = 0;
    for p in extract_trajectory(&model, layer, &grid.times)?.params().take(6) {
        println!(
            "dx {:+.4}  dy {:+.4}  theta {:+.4}  log s {:+.4}",
            p.dx, p.dy, p.theta, p.log_scale
        );
    }
    let steady = stabilize(&model, 9, SmoothingFilter::Gaussian { sigma: 2.0 }, &grid)?;
    println!(
        "shift variance: input {:.3}, render {:.3}, stabilized {:.3} px^2",
        spread(&shifts(&video)?),
        spread(&shifts(&render(&model, &grid)?)?),
        spread(&shifts(&steady)?)
    );
    save_video(&steady, "stabilized")?;
    Ok(())
}
