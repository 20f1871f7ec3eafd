//! Batched, gradient-free evaluation.

use rayon::prelude::*;

use super::{CoordFlowModel, SimilarityTransform};
use crate::autodiff::Graph;
use crate::error::Result;

/// Rows per inference graph.
pub const INFER_CHUNK: usize = 4096;

/// Outputs for a list of coordinates, flattened row-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Inference {
    /// `3·N` composite colors.
    pub rgb: Vec<f32>,
    /// Per layer, `3·N` colors.
    pub layer_rgb: Vec<Vec<f32>>,
    /// `n·N` softmax weights.
    pub weights: Vec<f32>,
}

impl CoordFlowModel {
    /// Evaluates the model at normalized `(x, y, t)` coordinates. Chunks are
    /// independent, so the result does not depend on the thread count.
    pub fn infer(&self, coords: &[[f32; 3]], transforms: Option<&[SimilarityTransform]>) -> Result<Inference> {
        let n = self.layers.len();
        let parts: Vec<Inference> = coords
            .par_chunks(INFER_CHUNK)
            .map(|chunk| {
                let mut g = Graph::<f32>::new();
                let bound = self.bind(&mut g, false);
                let flat: Vec<f32> = chunk.iter().flatten().copied().collect();
                let c = g.constant(chunk.len(), 3, flat)?;
                let out = self.forward(&mut g, &bound, c, transforms)?;
                Ok(Inference {
                    rgb: g.value(out.rgb).to_vec(),
                    layer_rgb: out.layer_rgb.iter().map(|v| g.value(*v).to_vec()).collect(),
                    weights: g.value(out.weights).to_vec(),
                })
            })
            .collect::<Result<_>>()?;
        let mut all = Inference {
            rgb: Vec::with_capacity(coords.len() * 3),
            layer_rgb: vec![Vec::with_capacity(coords.len() * 3); n],
            weights: Vec::with_capacity(coords.len() * n),
        };
        for p in parts {
            all.rgb.extend(p.rgb);
            for (dst, src) in all.layer_rgb.iter_mut().zip(p.layer_rgb) {
                dst.extend(src);
            }
            all.weights.extend(p.weights);
        }
        Ok(all)
    }

    /// Composite colors only.
    pub fn predict_rgb(&self, coords: &[[f32; 3]]) -> Result<Vec<f32>> {
        Ok(self.infer(coords, None)?.rgb)
    }
}
