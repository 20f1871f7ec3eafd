use coordflow::apps::{render, FrameGrid};
use coordflow::codec::{
    bpp, entropy_decode, entropy_encode, inspect, pack, quantize, quantize_model, unpack, TensorDtype,
};
use coordflow::media::{make_synthetic, Motion, SyntheticSpec};
use coordflow::model::{make_preset, VideoDims};
use coordflow::tensor::Tensor;
use coordflow::trainer::{train, Ablation, TrainConfig};
use coordflow::Error;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn entropy_coder_is_lossless(data in prop::collection::vec(any::<u8>(), 0..2048)) {
        let coded = entropy_encode(&data);
        prop_assert_eq!(entropy_decode(&coded).unwrap(), data);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn entropy_coder_is_lossless_on_skewed_input(
        data in prop::collection::vec(prop_oneof![8 => Just(0u8), 1 => Just(1u8), 1 => any::<u8>()], 0..20_000)
    ) {
        let coded = entropy_encode(&data);
        prop_assert_eq!(entropy_decode(&coded).unwrap(), data);
    }

    #[test]
    fn quantization_error_is_within_half_a_step(values in prop::collection::vec(-50.0f32..50.0, 1..300)) {
        let t = Tensor::matrix(1, values.len(), values.clone()).unwrap();
        let q = quantize(&t).unwrap();
        let back = q.dequantize().unwrap();
        for (a, b) in values.iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= q.scale / 2.0 + 1e-7 * a.abs().max(1.0));
        }
        prop_assert!(q.values.iter().all(|&v| v != i8::MIN));
    }
}

#[test]
fn quantizer_reference_values() {
    let q = quantize(&Tensor::matrix(1, 3, vec![-1.0, 0.0, 1.0]).unwrap()).unwrap();
    assert_eq!(q.scale, 1.0 / 127.0);
    assert_eq!(q.values, vec![-127, 0, 127]);
}

#[test]
fn repeated_bytes_shrink_below_five_percent() {
    let coded = entropy_encode(&[42u8; 10_000]);
    assert!(coded.len() < 500, "{} bytes", coded.len());
}

fn trained_model() -> coordflow::model::CoordFlowModel {
    let mut spec = SyntheticSpec::new(16, 12, 4);
    spec.background = Motion::translation(0.5, 0.0);
    let video = make_synthetic(&spec).unwrap().video;
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 64,
        ..TrainConfig::default()
    };
    train(&video, &cfg).unwrap().model
}

#[test]
fn every_trained_color_weight_is_within_half_a_step() {
    let model = trained_model();
    for (p, color) in model.params().into_iter().zip(model.param_is_color()) {
        if !color {
            continue;
        }
        let q = quantize(p).unwrap();
        let back = q.dequantize().unwrap();
        for (a, b) in p.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= q.scale / 2.0 + 1e-7);
        }
    }
}

#[test]
fn decoding_adds_no_error_beyond_quantization() {
    let model = trained_model();
    let bytes = pack(&model).unwrap();
    let decoded = unpack(&bytes).unwrap();
    let expected = quantize_model(&model).unwrap();
    assert_eq!(decoded, expected);
    let grid = FrameGrid::training(&model);
    assert_eq!(render(&decoded, &grid).unwrap(), render(&expected, &grid).unwrap());
    for (a, b) in decoded.layers.iter().zip(&model.layers) {
        assert_eq!(a.flow, b.flow);
    }
}

#[test]
fn header_round_trips_and_records_describe_the_model() {
    let mut model = make_preset("tiny", 1, VideoDims::new(33, 17, 9), 2).unwrap();
    model.freeze_flow();
    let bytes = pack(&model).unwrap();
    let info = inspect(&bytes).unwrap();
    assert_eq!(info.preset, "tiny");
    assert_eq!(info.dims, VideoDims::new(33, 17, 9));
    assert_eq!(info.num_layers, 1);
    assert!(info.flow_frozen);
    assert_eq!(info.total_bytes, bytes.len());
    assert_eq!(info.records.len(), model.params().len());
    for (rec, color) in info.records.iter().zip(model.param_is_color()) {
        let want = if color {
            TensorDtype::QuantizedI8
        } else {
            TensorDtype::RawF32
        };
        assert_eq!(rec.dtype, want);
    }
    assert_eq!(info.code_count, model.color_param_count());
    let back = unpack(&bytes).unwrap();
    assert!(back.flow_frozen);
    assert_eq!(back.dims, model.dims);
}

#[test]
fn pack_is_deterministic_across_equal_models() {
    let cfg = TrainConfig {
        ablation: Ablation::NoLayers,
        ..TrainConfig::default()
    };
    let a = cfg.build_model(VideoDims::new(20, 20, 5)).unwrap();
    let b = cfg.build_model(VideoDims::new(20, 20, 5)).unwrap();
    assert_eq!(pack(&a).unwrap(), pack(&b).unwrap());
}

#[test]
fn every_truncation_and_bit_flip_is_rejected() {
    let model = make_preset("tiny", 1, VideoDims::new(8, 8, 2), 0).unwrap();
    let bytes = pack(&model).unwrap();
    for cut in (0..bytes.len()).step_by(97) {
        assert!(unpack(&bytes[..cut]).is_err(), "prefix of {cut} bytes decoded");
    }
    for pos in (0..bytes.len()).step_by(131) {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x10;
        match unpack(&bad) {
            Err(Error::Checksum { .. } | Error::Format(_) | Error::Version { .. }) => {}
            other => panic!("flip at {pos}: {other:?}"),
        }
    }
}

#[test]
fn bpp_follows_the_file_size() {
    let dims = VideoDims::new(96, 96, 60);
    assert_eq!(bpp(1, VideoDims::new(2, 2, 2)).unwrap(), 1.0);
    let b60 = bpp(50_000, dims).unwrap();
    let b120 = bpp(50_000, VideoDims::new(96, 96, 120)).unwrap();
    assert_eq!(b60, 8.0 * 50_000.0 / (96.0 * 96.0 * 60.0));
    assert!((b60 / b120 - 2.0).abs() < 1e-12);
    assert!(bpp(10, VideoDims::new(0, 4, 4)).is_err());
}
