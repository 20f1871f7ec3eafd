//! Helpers shared by the integration suites: a central finite-difference
//! oracle for the autodiff engine and the synthetic scenes used by the
//! desk-scale experiments.

#![allow(dead_code)]

use coordflow::autodiff::{Graph, Var};
use coordflow::loss::{total_loss, LossConfig};
use coordflow::media::{make_synthetic, Motion, SpriteSpec, SyntheticSpec, SyntheticVideo};
use coordflow::model::{make_preset, CoordFlowModel, VideoDims};
use coordflow::tensor::Tensor;
use coordflow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-4;

/// Worst relative error between the analytic gradient of `build` and a
/// central difference with step `h`, over every entry of every input.
pub fn max_grad_error<F>(inputs: &[Tensor<f64>], h: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::<f64>::new();
        let vars: Vec<Var> = values.iter().map(|t| g.leaf(t.clone().with_grad())).collect();
        let out = build(&mut g, &vars)?;
        g.scalar_value(out)
    };
    let mut g = Graph::<f64>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone().with_grad())).collect();
    let out = build(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (k, &v) in vars.iter().enumerate() {
        let analytic = grads
            .get(v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data()[i];
            probe[k].data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe[k].data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(analytic[i], numeric));
        }
    }
    Ok(worst)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

/// Random matrix with entries in `±[margin, 1]`, keeping clear of the kinks
/// of ReLU and absolute value.
pub fn random_matrix(rows: usize, cols: usize, margin: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.gen_range(margin..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Reduces any node to a scalar through a fixed random projection so that
/// every output entry gets a distinct upstream gradient.
pub fn project(g: &mut Graph<f64>, v: Var, seed: u64) -> Result<Var> {
    let (r, c) = g.dims(v);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w = g.constant(r, c, w)?;
    let p = g.mul(v, w)?;
    Ok(g.sum(p))
}

/// One named finite-difference check of the op suite.
pub struct GradCase {
    pub name: &'static str,
    pub error: f64,
}

/// Every differentiable op of the engine against central differences.
pub fn op_gradient_cases() -> Result<Vec<GradCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random_matrix(4, 3, 0.05, &mut rng);
    let b = random_matrix(4, 3, 0.05, &mut rng);
    let m = random_matrix(3, 5, 0.05, &mut rng);
    let row = random_matrix(1, 3, 0.05, &mut rng);
    let col = random_matrix(4, 1, 0.05, &mut rng);
    let h = 1e-3;
    let mut out = Vec::new();
    let mut push = |name, error| out.push(GradCase { name, error });

    push(
        "matmul",
        max_grad_error(&[a.clone(), m.clone()], h, |g, v| {
            let y = g.matmul(v[0], v[1])?;
            project(g, y, 1)
        })?,
    );
    push(
        "add",
        max_grad_error(&[a.clone(), b.clone()], h, |g, v| {
            let y = g.add(v[0], v[1])?;
            project(g, y, 2)
        })?,
    );
    push(
        "sub",
        max_grad_error(&[a.clone(), b.clone()], h, |g, v| {
            let y = g.sub(v[0], v[1])?;
            project(g, y, 3)
        })?,
    );
    push(
        "mul",
        max_grad_error(&[a.clone(), b.clone()], h, |g, v| {
            let y = g.mul(v[0], v[1])?;
            project(g, y, 4)
        })?,
    );
    push(
        "add_row",
        max_grad_error(&[a.clone(), row.clone()], h, |g, v| {
            let y = g.add_row(v[0], v[1])?;
            project(g, y, 5)
        })?,
    );
    push(
        "mul_col",
        max_grad_error(&[a.clone(), col.clone()], h, |g, v| {
            let y = g.mul_col(v[0], v[1])?;
            project(g, y, 6)
        })?,
    );
    push(
        "scale",
        max_grad_error(std::slice::from_ref(&a), h, |g, v| {
            let y = g.scale(v[0], -1.7);
            project(g, y, 7)
        })?,
    );
    push(
        "add_scalar",
        max_grad_error(std::slice::from_ref(&a), h, |g, v| {
            let y = g.add_scalar(v[0], 0.3);
            let y = g.square(y);
            project(g, y, 8)
        })?,
    );
    push(
        "relu",
        max_grad_error(std::slice::from_ref(&a), h, |g, v| {
            let y = g.relu(v[0]);
            project(g, y, 9)
        })?,
    );
    push(
        "sigmoid",
        max_grad_error(std::slice::from_ref(&a), h, |g, v| {
            let y = g.sigmoid(v[0]);
            project(g, y, 10)
        })?,
    );
    push(
        "sin",
        max_grad_error(std::slice::from_ref(&a), h, |g, v| {
            let y = g.sin(v[0]);
            project(g, y, 11)
        })?,
    );
    push(
        "cos",
        max_grad_error(std::slice::from_ref(&a), h, |g, v| {
            let y = g.cos(v[0]);
            project(g, y, 12)
        })?,
    );
    push(
        "exp",
        max_grad_error(std::slice::from_ref(&a), h, |g, v| {
            let y = g.exp(v[0]);
            project(g, y, 13)
        })?,
    );
    push(
        "abs",
        max_grad_error(std::slice::from_ref(&a), h, |g, v| {
            let y = g.abs(v[0]);
            project(g, y, 14)
        })?,
    );
    push(
        "square",
        max_grad_error(std::slice::from_ref(&a), h, |g, v| {
            let y = g.square(v[0]);
            project(g, y, 15)
        })?,
    );
    push(
        "softmax",
        max_grad_error(std::slice::from_ref(&a), h, |g, v| {
            let y = g.softmax(v[0]);
            project(g, y, 16)
        })?,
    );
    push(
        "sum",
        max_grad_error(std::slice::from_ref(&a), h, |g, v| {
            let y = g.square(v[0]);
            Ok(g.sum(y))
        })?,
    );
    push(
        "mean",
        max_grad_error(std::slice::from_ref(&a), h, |g, v| {
            let y = g.square(v[0]);
            Ok(g.mean(y))
        })?,
    );
    push(
        "mean_cols",
        max_grad_error(std::slice::from_ref(&a), h, |g, v| {
            let y = g.mean_cols(v[0]);
            project(g, y, 17)
        })?,
    );
    push(
        "slice_cols",
        max_grad_error(std::slice::from_ref(&a), h, |g, v| {
            let y = g.slice_cols(v[0], 1, 2)?;
            project(g, y, 18)
        })?,
    );
    push(
        "concat_cols",
        max_grad_error(&[a.clone(), col.clone()], h, |g, v| {
            let y = g.concat_cols(&[v[1], v[0], v[1]])?;
            project(g, y, 19)
        })?,
    );
    // The 4π band needs a finer step to keep truncation error down.
    push(
        "fourier",
        max_grad_error(std::slice::from_ref(&col), 1e-5, |g, v| {
            let y = g.fourier(v[0], &[1.0, 2.0, 4.0], true)?;
            project(g, y, 20)
        })?,
    );
    Ok(out)
}

/// A random two-layer ReLU/sigmoid MLP with an L2 loss; the error covers
/// every weight and bias.
pub fn mlp_gradient_error() -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x = random_matrix(6, 4, 0.0, &mut rng);
    let target = random_matrix(6, 2, 0.0, &mut rng);
    let params = vec![
        random_matrix(4, 8, 0.0, &mut rng),
        random_matrix(1, 8, 0.0, &mut rng),
        random_matrix(8, 2, 0.0, &mut rng),
        random_matrix(1, 2, 0.0, &mut rng),
    ];
    max_grad_error(&params, 1e-3, |g, v| {
        let xi = g.constant(6, 4, x.data().to_vec())?;
        let h = g.matmul(xi, v[0])?;
        let h = g.add_row(h, v[1])?;
        let h = g.relu(h);
        let o = g.matmul(h, v[2])?;
        let o = g.add_row(o, v[3])?;
        let o = g.sigmoid(o);
        let t = g.constant(6, 2, target.data().to_vec())?;
        let d = g.sub(o, t)?;
        let d = g.square(d);
        Ok(g.mean(d))
    })
}

/// Fresh tiny model with every weight nudged off its initial value so that
/// the flow nets are active and every parameter carries gradient.
pub fn perturbed_tiny_model(n_layers: usize, seed: u64) -> CoordFlowModel {
    let mut model = make_preset("tiny", n_layers, VideoDims::new(12, 10, 6), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for p in model.params_mut() {
        for v in p.data_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
    model
}

/// Worst gradient error of the full training objective over every
/// parameter of a two-layer tiny model. The step is smaller than in the
/// op suite because the highest positional-encoding bands oscillate fast
/// enough for an h = 1e-3 central difference to carry truncation error
/// above the tolerance; f64 keeps round-off far below it.
pub fn tiny_model_gradient_error(batch: usize) -> Result<f64> {
    let model = perturbed_tiny_model(2, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let coords: Vec<f64> = (0..batch * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let gt: Vec<f64> = (0..batch * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
    let w: Vec<f64> = (0..batch).map(|_| rng.gen_range(0.5..2.0)).collect();
    let params: Vec<Tensor<f64>> = model.params().iter().map(|t| t.cast::<f64>()).collect();
    let cfg = LossConfig::default();
    max_grad_error(&params, 1e-6, |g, v| {
        let bound = model.bind_vars(g, v)?;
        let c = g.constant(batch, 3, coords.clone())?;
        let out = model.forward(g, &bound, c, None)?;
        let gtv = g.constant(batch, 3, gt.clone())?;
        let wv = g.constant(batch, 1, w.clone())?;
        Ok(total_loss(g, &out, gtv, wv, &cfg)?.total)
    })
}

/// The two-object scene used by the layering experiments: a background
/// drifting a pixel per frame and a slower disk sprite.
pub fn two_object_spec(width: usize, height: usize, frames: usize) -> SyntheticSpec {
    let mut spec = SyntheticSpec::new(width, height, frames);
    spec.background = Motion::translation(1.0, 0.5);
    spec.sprite = Some(SpriteSpec {
        radius: 20.0 * width.min(height) as f64 / 96.0,
        start: (20.0 * width as f64 / 96.0, 30.0 * height as f64 / 96.0),
        velocity: (0.2, -0.1),
    });
    spec.max_frequency = 4;
    spec
}

pub fn two_object_scene(width: usize, height: usize, frames: usize) -> SyntheticVideo {
    make_synthetic(&two_object_spec(width, height, frames)).unwrap()
}

/// Pearson correlation of two equal-length samples.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

pub fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}
