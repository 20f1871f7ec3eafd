use std::fs;

use coordflow::media::{load_video, make_synthetic, psnr, save_video, Motion, SyntheticSpec, VideoVolume, PSNR_CAP};
use proptest::prelude::*;

fn quantized(width: usize, height: usize, frames: usize, seed: u64) -> VideoVolume {
    let data = (0..width * height * frames * 3)
        .map(|i| ((i as u64 * 2_654_435_761 + seed) % 256) as f32 / 255.0)
        .collect();
    VideoVolume::new(width, height, frames, data).unwrap()
}

#[test]
fn two_png_frames_load_with_their_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let v = quantized(4, 4, 2, 1);
    save_video(&v, dir.path()).unwrap();
    let names: Vec<String> = {
        let mut n: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        n.sort();
        n
    };
    assert_eq!(names, ["frame_000000.png", "frame_000001.png"]);
    let back = load_video(dir.path()).unwrap();
    assert_eq!((back.width(), back.height(), back.frames()), (4, 4, 2));
    assert_eq!(back.data(), v.data());
}

#[test]
fn extreme_bytes_map_to_unit_range() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clip.rgb");
    let mut v = vec![0.0f32; 2 * 3];
    v[3..].fill(1.0);
    save_video(&VideoVolume::new(2, 1, 1, v).unwrap(), &path).unwrap();
    assert_eq!(fs::read(&path).unwrap(), [0, 0, 0, 255, 255, 255]);
    let back = load_video(&path).unwrap();
    assert_eq!(back.pixel(0, 0, 0), [0.0; 3]);
    assert_eq!(back.pixel(1, 0, 0), [1.0; 3]);
}

#[test]
fn half_rounds_up() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("half.rgb");
    save_video(&VideoVolume::filled(1, 1, 1, [0.5, 1.0, 0.0]), &path).unwrap();
    assert_eq!(fs::read(&path).unwrap(), [128, 255, 0]);
}

#[test]
fn raw_files_need_a_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bare.rgb");
    fs::write(&path, [0u8; 12]).unwrap();
    assert!(load_video(&path).is_err());
    fs::write(dir.path().join("bare.rgb.meta"), "width = 2\nheight = 2\nframes = 1\n").unwrap();
    assert_eq!(load_video(&path).unwrap().frames(), 1);
    fs::write(dir.path().join("bare.rgb.meta"), "width = 2\nheight = 2\nframes = 2\n").unwrap();
    assert!(load_video(&path).is_err());
}

#[test]
fn save_load_save_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SyntheticSpec::new(13, 9, 3);
    spec.background = Motion::translation(0.3, 0.7);
    spec.noise_sigma = 0.05;
    let v = make_synthetic(&spec).unwrap().video;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    save_video(&v, &a).unwrap();
    save_video(&load_video(&a).unwrap(), &b).unwrap();
    for k in 0..3 {
        let name = format!("frame_{k:06}.png");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
}

#[test]
fn psnr_reference_points() {
    let a = vec![0.5f32; 30];
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
    let off: Vec<f32> = a.iter().map(|v| v + 0.1).collect();
    assert!((psnr(&a, &off).unwrap() - 20.0).abs() < 1e-5);
    let zeros = vec![0.0f32; 30];
    let ones = vec![1.0f32; 30];
    assert_eq!(psnr(&zeros, &ones).unwrap(), 0.0);
    assert!(psnr(&zeros, &ones[..29]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn png_round_trip_is_lossless_at_eight_bits(w in 1usize..7, h in 1usize..7, t in 1usize..4, seed in 0u64..1000) {
        let dir = tempfile::tempdir().unwrap();
        let v = quantized(w, h, t, seed);
        save_video(&v, dir.path()).unwrap();
        let back = load_video(dir.path()).unwrap();
        prop_assert_eq!(back.data(), v.data());
    }

    #[test]
    fn psnr_is_symmetric(a in prop::collection::vec(0.0f32..1.0, 12), b in prop::collection::vec(0.0f32..1.0, 12)) {
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn synthetic_generation_is_deterministic(seed in 0u64..50) {
        let mut spec = SyntheticSpec::new(10, 8, 3);
        spec.seed = seed;
        spec.noise_sigma = 0.02;
        spec.jitter_amplitude = 1.0;
        prop_assert_eq!(make_synthetic(&spec).unwrap().video, make_synthetic(&spec).unwrap().video);
    }
}
