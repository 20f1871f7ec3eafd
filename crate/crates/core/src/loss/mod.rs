//! Training objective: weighted L1 + λ·L2 on the composite, plus an
//! alpha-weighted reconstruction term per layer.

mod weight_map;

pub use weight_map::{
    build_weight_map, canny, laplacian_abs, temporal_variance, WeightCoeffs, WeightMap, CANNY_HIGH_PERCENTILE,
    CANNY_LOW_PERCENTILE, CANNY_SIGMA, TEMPORAL_RADIUS,
};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::CompositeOutput;
use crate::tensor::Scalar;

pub const DEFAULT_LAMBDA: f64 = 0.25;
pub const DEFAULT_GAMMA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the squared term against the absolute term.
    pub lambda: f64,
    /// Weight of the summed per-layer losses in the total.
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            gamma: DEFAULT_GAMMA,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub combined: f64,
    pub per_layer: Vec<f64>,
    pub total: f64,
    pub lambda: f64,
    pub gamma: f64,
}

/// `[B, 1]` column of `w · mean_c(|δ| + λδ²)`.
fn weighted_pixel_loss<T: Scalar>(g: &mut Graph<T>, pred: Var, gt: Var, weights: Var, lambda: f64) -> Result<Var> {
    let (rows, _) = g.dims(pred);
    if g.dims(weights) != (rows, 1) {
        let (wr, wc) = g.dims(weights);
        return Err(Error::Shape(format!("loss weights are {wr}x{wc}, expected {rows}x1")));
    }
    let delta = g.sub(pred, gt)?;
    let abs = g.abs(delta);
    let sq = g.square(delta);
    let sq = g.scale(sq, lambda);
    let per = g.add(abs, sq)?;
    let per = g.mean_cols(per);
    g.mul(per, weights)
}

/// Batch mean of `w · (|δ| + λδ²)`, channels averaged.
pub fn combined_loss<T: Scalar>(g: &mut Graph<T>, pred: Var, gt: Var, weights: Var, lambda: f64) -> Result<Var> {
    let per = weighted_pixel_loss(g, pred, gt, weights, lambda)?;
    Ok(g.mean(per))
}

/// Batch mean of `softmax_alpha · w · (|δ| + λδ²)` for one layer.
pub fn layer_loss<T: Scalar>(
    g: &mut Graph<T>,
    layer_rgb: Var,
    gt: Var,
    weights: Var,
    softmax_alpha: Var,
    lambda: f64,
) -> Result<Var> {
    let per = weighted_pixel_loss(g, layer_rgb, gt, weights, lambda)?;
    let scaled = g.mul(per, softmax_alpha)?;
    Ok(g.mean(scaled))
}

/// Graph handles of the loss terms of one forward pass.
pub struct TotalLoss {
    pub total: Var,
    pub combined: Var,
    pub per_layer: Vec<Var>,
}

impl TotalLoss {
    pub fn report<T: Scalar>(&self, g: &Graph<T>, cfg: &LossConfig) -> LossReport {
        let v = |x: Var| g.value(x)[0].to_f64_lossy();
        LossReport {
            combined: v(self.combined),
            per_layer: self.per_layer.iter().map(|&x| v(x)).collect(),
            total: v(self.total),
            lambda: cfg.lambda,
            gamma: cfg.gamma,
        }
    }
}

/// `combined(composite) + γ · Σᵢ layer_loss(layer i)`.
pub fn total_loss<T: Scalar>(
    g: &mut Graph<T>,
    out: &CompositeOutput,
    gt: Var,
    weights: Var,
    cfg: &LossConfig,
) -> Result<TotalLoss> {
    let combined = combined_loss(g, out.rgb, gt, weights, cfg.lambda)?;
    let mut per_layer = Vec::with_capacity(out.layer_rgb.len());
    let mut sum: Option<Var> = None;
    for (i, &rgb) in out.layer_rgb.iter().enumerate() {
        let alpha = g.slice_cols(out.weights, i, 1)?;
        let l = layer_loss(g, rgb, gt, weights, alpha, cfg.lambda)?;
        per_layer.push(l);
        sum = Some(match sum {
            None => l,
            Some(acc) => g.add(acc, l)?,
        });
    }
    let total = match sum {
        Some(s) if cfg.gamma != 0.0 => {
            let scaled = g.scale(s, cfg.gamma);
            g.add(combined, scaled)?
        }
        _ => combined,
    };
    Ok(TotalLoss {
        total,
        combined,
        per_layer,
    })
}
