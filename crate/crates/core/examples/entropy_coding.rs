//! Quantizes a weight matrix to int8 and entropy codes the result.

use coordflow::codec::{entropy_decode, entropy_encode, quantize};
use coordflow::tensor::Tensor;
use coordflow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let normal = Normal::new(0.0f32, 0.05).unwrap();
    let weights = Tensor::matrix(128, 128, (0..128 * 128).map(|_| normal.sample(&mut rng)).collect())?;

    let q = quantize(&weights)?;
    let back = q.dequantize()?;
    let worst = weights
        .data()
        .iter()
        .zip(back.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    println!(
        "scale {:.6}, worst error {worst:.6} (bound {:.6})",
        q.scale,
        q.scale / 2.0
    );

    let codes: Vec<u8> = q.values.iter().map(|&v| v as u8).collect();
    let coded = entropy_encode(&codes);
    assert_eq!(entropy_decode(&coded)?, codes);
    println!(
        "{} weights: {} bytes as f32, {} as int8, {} entropy coded ({:.2} bits each)",
        weights.len(),
        4 * weights.len(),
        codes.len(),
        coded.len(),
        8.0 * coded.len() as f64 / codes.len() as f64
    );
    Ok(())
}
