//! Splits a clip with an independently moving sprite into layers, then
//! writes the label maps and each layer rendered on its own.
//!
//! cargo run --release --example layers -- [seed]
//!
//! Whether the layers split cleanly depends on the initialization; some
//! seeds leave the background shared between both layers.

use coordflow::apps::{inpaint, segment, FrameGrid};
use coordflow::media::{make_synthetic, save_video, Motion, SpriteSpec, SyntheticSpec};
use coordflow::trainer::{train, TrainConfig};
use coordflow::Result;

fn main() -> Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    let mut spec = SyntheticSpec::new(48, 48, 20);
    spec.background = Motion::translation(1.0, 0.5);
    spec.sprite = Some(SpriteSpec {
        radius: 10.0,
        start: (10.0, 15.0),
        velocity: (0.2, -0.1),
    });
    let clip = make_synthetic(&spec)?;
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 1024,
        seed,
        ..TrainConfig::default()
    };
    let model = train(&clip.video, &cfg)?.model;
    let grid = FrameGrid::training(&model);
    let map = segment(&model, &grid)?;

    let n = map.width * map.height;
    let on_sprite = |i: usize| clip.masks[i / n][i % n];
    for l in 0..map.num_layers {
        println!(
            "layer {l}: mean weight {:.3} on the sprite, {:.3} elsewhere",
            map.mean_weight(l, on_sprite).unwrap_or(0.0),
            map.mean_weight(l, |i| !on_sprite(i)).unwrap_or(0.0)
        );
        save_video(&inpaint(&model, l, &grid)?, format!("layer_{l}"))?;
    }
    let frame0 = map.label_frame(0);
    for row in frame0.chunks(map.width).step_by(4) {
        println!(
            "{}",
            row.iter()
                .step_by(2)
                .map(|&l| if l == 0 { '.' } else { '#' })
                .collect::<String>()
        );
    }
    Ok(())
}
