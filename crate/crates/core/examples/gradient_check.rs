//! Checks reverse-mode gradients of a small two-layer network against
//! central finite differences.

use coordflow::autodiff::{Graph, Var};
use coordflow::tensor::Tensor;
use coordflow::Result;

fn loss(g: &mut Graph<f64>, x: Var, w1: Var, w2: Var) -> Result<Var> {
    let h = g.matmul(x, w1)?;
    let h = g.sin(h);
    let y = g.matmul(h, w2)?;
    let y = g.sigmoid(y);
    Ok(g.mean(y))
}

fn main() -> Result<()> {
    let x = Tensor::matrix(4, 3, (0..12).map(|i| (i as f64 * 0.37).sin()).collect())?;
    let w1 = Tensor::matrix(3, 5, (0..15).map(|i| (i as f64 * 0.71).cos() * 0.8).collect())?.with_grad();
    let w2 = Tensor::matrix(5, 2, (0..10).map(|i| 0.3 - i as f64 * 0.05).collect())?.with_grad();

    let mut g = Graph::new();
    let (xv, a, b) = (
        g.constant(4, 3, x.data().to_vec())?,
        g.leaf(w1.clone()),
        g.leaf(w2.clone()),
    );
    let out = loss(&mut g, xv, a, b)?;
    let grads = g.backward(out)?;
    let analytic = grads.get(a).unwrap().to_vec();

    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..w1.len() {
        let eval = |delta: f64| -> Result<f64> {
            let mut w = w1.clone();
            w.data_mut()[i] += delta;
            let mut g = Graph::new();
            let xv = g.constant(4, 3, x.data().to_vec())?;
            let (a, b) = (g.leaf(w), g.leaf(w2.clone()));
            let out = loss(&mut g, xv, a, b)?;
            g.scalar_value(out)
        };
        let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
        let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6);
        worst = worst.max(rel);
    }
    println!("worst relative gradient error over {} weights: {worst:.2e}", w1.len());
    Ok(())
}
