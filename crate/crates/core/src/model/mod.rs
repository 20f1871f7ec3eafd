//! The layered coordinate network.
//!
//! Each [`CoordFlowLayer`] pairs a flow network, which maps time to a
//! similarity transform of the image plane, with a color network that is
//! queried at the transformed coordinates. A [`CoordFlowModel`] runs `n`
//! layers in parallel and blends their colors with softmax-normalized alpha
//! logits.
//!
//! Coordinates are normalized to `[-1, 1]` on every axis, pixel centers
//! included: pixel `p` of an axis with `d` samples maps to `2p/(d-1) - 1`.

mod checkpoint;
mod infer;
mod preset;

pub use checkpoint::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub(crate) use checkpoint::{read_model_header, write_model_header};
pub use infer::{Inference, INFER_CHUNK};
pub use preset::{make_preset, make_preset_scaled, Preset, PresetName};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Fourier positional encoding of one scalar input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeConfig {
    pub num_bands: usize,
    pub include_input: bool,
    pub base_frequency: f64,
}

impl PeConfig {
    pub fn new(num_bands: usize, include_input: bool) -> Self {
        Self {
            num_bands,
            include_input,
            base_frequency: 1.0,
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.num_bands + usize::from(self.include_input)
    }

    /// `base_frequency · 2^k` for each band.
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.num_bands)
            .map(|k| self.base_frequency * 2f64.powi(k as i32))
            .collect()
    }
}

/// `[v?, sin(f₀πv), cos(f₀πv), …]`, the same layout the graph op emits.
pub fn positional_encode(v: f64, cfg: &PeConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.out_dim());
    if cfg.include_input {
        out.push(v);
    }
    for f in cfg.frequencies() {
        let (s, c) = (f * std::f64::consts::PI * v).sin_cos();
        out.push(s);
        out.push(c);
    }
    out
}

/// Maps pixel index `p` on an axis of `len` samples into `[-1, 1]`.
pub fn normalize_coord(p: f64, len: usize) -> f64 {
    if len > 1 {
        2.0 * p / (len - 1) as f64 - 1.0
    } else {
        0.0
    }
}

/// Video geometry the model was fitted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoDims {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
}

impl VideoDims {
    pub fn new(width: usize, height: usize, frames: usize) -> Self {
        Self { width, height, frames }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height * self.frames
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        normalize_coord(frame as f64, self.frames)
    }
}

/// Fully connected layer stored as `weight: [in, out]`, `bias: [1, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
        let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
        let b = (0..fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
        Self {
            weight: Tensor::matrix(fan_in, fan_out, w).unwrap().with_grad(),
            bias: Tensor::matrix(1, fan_out, b).unwrap().with_grad(),
        }
    }

    pub fn zeroed(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_in, fan_out]).with_grad(),
            bias: Tensor::zeros(&[1, fan_out]).with_grad(),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// ReLU MLP; the last layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(dims: &[usize], rng: &mut impl Rng) -> Self {
        let layers = dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect();
        Self { layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn forward<T: Scalar>(g: &mut Graph<T>, bound: &[(Var, Var)], mut x: Var) -> Result<Var> {
        for (i, (w, b)) in bound.iter().enumerate() {
            let h = g.matmul(x, *w)?;
            x = g.add_row(h, *b)?;
            if i + 1 < bound.len() {
                x = g.relu(x);
            }
        }
        Ok(x)
    }
}

/// Architecture of one layer; everything needed to rebuild it from weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerArch {
    pub flow_pe: PeConfig,
    pub flow_hidden: Vec<usize>,
    pub spatial_pe: PeConfig,
    pub temporal_pe: PeConfig,
    pub color_hidden: Vec<usize>,
}

impl LayerArch {
    pub fn flow_dims(&self) -> Vec<usize> {
        let mut d = vec![self.flow_pe.out_dim()];
        d.extend(&self.flow_hidden);
        d.push(4);
        d
    }

    pub fn color_dims(&self) -> Vec<usize> {
        let mut d = vec![2 * self.spatial_pe.out_dim() + self.temporal_pe.out_dim()];
        d.extend(&self.color_hidden);
        d.push(4);
        d
    }

    pub fn flow_param_count(&self) -> usize {
        mlp_param_count(&self.flow_dims())
    }

    pub fn color_param_count(&self) -> usize {
        mlp_param_count(&self.color_dims())
    }

    pub fn param_count(&self) -> usize {
        self.flow_param_count() + self.color_param_count()
    }
}

pub(crate) fn mlp_param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Maps time to `(s_raw, θ, Δx, Δy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowNet {
    pub pe: PeConfig,
    pub mlp: Mlp,
}

/// Maps transformed `(x', y', t)` to `(R, G, B, α_logit)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorNet {
    pub spatial_pe: PeConfig,
    pub temporal_pe: PeConfig,
    pub mlp: Mlp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordFlowLayer {
    pub flow: FlowNet,
    pub color: ColorNet,
}

impl CoordFlowLayer {
    /// Random color net; flow net whose last layer is zero so the initial
    /// transform is the identity.
    pub fn new(arch: &LayerArch, rng: &mut impl Rng) -> Self {
        let fd = arch.flow_dims();
        let mut flow = Mlp::new(&fd, rng);
        let last = flow.layers.last_mut().expect("flow net has an output layer");
        *last = Linear::zeroed(last.fan_in(), last.fan_out());
        Self {
            flow: FlowNet {
                pe: arch.flow_pe,
                mlp: flow,
            },
            color: ColorNet {
                spatial_pe: arch.spatial_pe,
                temporal_pe: arch.temporal_pe,
                mlp: Mlp::new(&arch.color_dims(), rng),
            },
        }
    }

    pub fn arch(&self) -> LayerArch {
        let hidden = |m: &Mlp| m.layers[..m.layers.len() - 1].iter().map(Linear::fan_out).collect();
        LayerArch {
            flow_pe: self.flow.pe,
            flow_hidden: hidden(&self.flow.mlp),
            spatial_pe: self.color.spatial_pe,
            temporal_pe: self.color.temporal_pe,
            color_hidden: hidden(&self.color.mlp),
        }
    }

    /// Similarity transform emitted at normalized time `t`.
    pub fn flow_transform(&self, t: f64) -> Result<SimilarityTransform> {
        let mut g = Graph::<f64>::new();
        let bound = bind_mlp(&mut g, &self.flow.mlp, false);
        let tv = g.constant(1, 1, vec![t])?;
        let out = flow_params(&mut g, &self.flow.pe, &bound, tv)?;
        let p = g.value(out);
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("flow network output {p:?} at t={t}")));
        }
        Ok(SimilarityTransform::from_params(FlowParams {
            log_scale: p[0],
            theta: p[1],
            dx: p[2],
            dy: p[3],
        }))
    }

    /// `(RGB, α_logit)` of this layer alone at normalized `(x, y, t)`.
    pub fn forward_point(&self, x: f64, y: f64, t: f64) -> Result<([f64; 3], f64)> {
        let mut g = Graph::<f64>::new();
        let bound = BoundLayer {
            flow: bind_mlp(&mut g, &self.flow.mlp, false),
            color: bind_mlp(&mut g, &self.color.mlp, false),
        };
        let (xv, yv, tv) = (
            g.constant(1, 1, vec![x])?,
            g.constant(1, 1, vec![y])?,
            g.constant(1, 1, vec![t])?,
        );
        let out = layer_forward(&mut g, self, &bound, xv, yv, tv, None)?;
        let rgb = g.value(out.rgb);
        Ok(([rgb[0], rgb[1], rgb[2]], g.value(out.alpha_logit)[0]))
    }
}

/// Raw flow network outputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    /// `s = exp(log_scale)`.
    pub log_scale: f64,
    pub theta: f64,
    pub dx: f64,
    pub dy: f64,
}

impl FlowParams {
    pub const IDENTITY: Self = Self {
        log_scale: 0.0,
        theta: 0.0,
        dx: 0.0,
        dy: 0.0,
    };
}

/// `[[s·cosθ, −s·sinθ, Δx], [s·sinθ, s·cosθ, Δy]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub matrix: [[f64; 3]; 2],
    pub params: FlowParams,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self::from_params(FlowParams::IDENTITY)
    }

    pub fn from_params(p: FlowParams) -> Self {
        let s = p.log_scale.exp();
        let (sin, cos) = p.theta.sin_cos();
        Self {
            matrix: [[s * cos, -s * sin, p.dx], [s * sin, s * cos, p.dy]],
            params: p,
        }
    }

    pub fn scale(&self) -> f64 {
        self.params.log_scale.exp()
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.matrix;
        (m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2])
    }

    /// Equal diagonal, opposite off-diagonal, positive determinant.
    pub fn is_similarity(&self, tol: f64) -> bool {
        let m = &self.matrix;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        (m[0][0] - m[1][1]).abs() <= tol && (m[0][1] + m[1][0]).abs() <= tol && det > 0.0
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        let id = Self::identity().matrix;
        self.matrix
            .iter()
            .flatten()
            .zip(id.iter().flatten())
            .all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// The n-layer ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordFlowModel {
    pub preset: String,
    pub layers: Vec<CoordFlowLayer>,
    pub dims: VideoDims,
    /// Flow networks held at their initial identity output.
    pub flow_frozen: bool,
}

impl CoordFlowModel {
    pub fn new(preset: impl Into<String>, layers: Vec<CoordFlowLayer>, dims: VideoDims) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("a model needs at least one layer".into()));
        }
        Ok(Self {
            preset: preset.into(),
            layers,
            dims,
            flow_frozen: false,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Stops gradient flow into every flow network.
    pub fn freeze_flow(&mut self) {
        self.flow_frozen = true;
        for layer in &mut self.layers {
            for l in &mut layer.flow.mlp.layers {
                l.weight.requires_grad = false;
                l.bias.requires_grad = false;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.flow_param_count() + self.color_param_count()
    }

    pub fn flow_param_count(&self) -> usize {
        self.layers.iter().map(|l| l.flow.mlp.param_count()).sum()
    }

    pub fn color_param_count(&self) -> usize {
        self.layers.iter().map(|l| l.color.mlp.param_count()).sum()
    }

    /// Parameters in canonical order: per layer, flow linears then color
    /// linears, each as weight then bias.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for l in layer.flow.mlp.layers.iter().chain(&layer.color.mlp.layers) {
                out.push(&l.weight);
                out.push(&l.bias);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            for l in layer
                .flow
                .mlp
                .layers
                .iter_mut()
                .chain(layer.color.mlp.layers.iter_mut())
            {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
        }
        out
    }

    /// Whether parameter `i` in [`Self::params`] order belongs to a color net.
    pub fn param_is_color(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(std::iter::repeat_n(false, 2 * layer.flow.mlp.layers.len()));
            out.extend(std::iter::repeat_n(true, 2 * layer.color.mlp.layers.len()));
        }
        out
    }

    /// Records every parameter on `g`. With `track_grad` false all
    /// parameters are constants (inference).
    pub fn bind<T: Scalar>(&self, g: &mut Graph<T>, track_grad: bool) -> BoundModel {
        let layers = self
            .layers
            .iter()
            .map(|l| BoundLayer {
                flow: bind_mlp(g, &l.flow.mlp, track_grad),
                color: bind_mlp(g, &l.color.mlp, track_grad),
            })
            .collect();
        BoundModel { layers }
    }

    /// Uses caller-recorded nodes (in [`Self::params`] order) in place of
    /// the stored weights. Used by gradient checks.
    pub fn bind_vars<T: Scalar>(&self, g: &Graph<T>, vars: &[Var]) -> Result<BoundModel> {
        let expected = self.params().len();
        if vars.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "expected {expected} parameter nodes, got {}",
                vars.len()
            )));
        }
        let mut it = vars.iter().copied();
        let mut take = |mlp: &Mlp| -> Result<Vec<(Var, Var)>> {
            mlp.layers
                .iter()
                .map(|l| {
                    let (w, b) = (it.next().unwrap(), it.next().unwrap());
                    let want = (l.weight.dims2(), l.bias.dims2());
                    if (g.dims(w), g.dims(b)) != want {
                        return Err(Error::Shape(format!(
                            "override {:?}/{:?} does not match {:?}/{:?}",
                            g.dims(w),
                            g.dims(b),
                            want.0,
                            want.1
                        )));
                    }
                    Ok((w, b))
                })
                .collect()
        };
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let flow = take(&l.flow.mlp)?;
            let color = take(&l.color.mlp)?;
            layers.push(BoundLayer { flow, color });
        }
        Ok(BoundModel { layers })
    }

    /// Composite forward over a batch of normalized coordinates `[B, 3]`.
    ///
    /// `transforms`, when given, replaces every layer's flow output by a
    /// fixed transform (one per layer) for the whole batch.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bound: &BoundModel,
        coords: Var,
        transforms: Option<&[SimilarityTransform]>,
    ) -> Result<CompositeOutput> {
        let (_, cols) = g.dims(coords);
        if cols != 3 {
            return Err(Error::Shape(format!("coordinates must be [B, 3], got {cols} columns")));
        }
        if let Some(ts) = transforms {
            if ts.len() != self.layers.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} transforms for {} layers",
                    ts.len(),
                    self.layers.len()
                )));
            }
        }
        let x = g.slice_cols(coords, 0, 1)?;
        let y = g.slice_cols(coords, 1, 1)?;
        let t = g.slice_cols(coords, 2, 1)?;
        let mut layer_rgb = Vec::with_capacity(self.layers.len());
        let mut alphas = Vec::with_capacity(self.layers.len());
        for (i, (layer, bl)) in self.layers.iter().zip(&bound.layers).enumerate() {
            let fixed = transforms.map(|ts| &ts[i]);
            let out = layer_forward(g, layer, bl, x, y, t, fixed)?;
            layer_rgb.push(out.rgb);
            alphas.push(out.alpha_logit);
        }
        let logits = g.concat_cols(&alphas)?;
        let weights = g.softmax(logits);
        let mut rgb = None;
        for (i, lr) in layer_rgb.iter().enumerate() {
            let w = g.slice_cols(weights, i, 1)?;
            let term = g.mul_col(*lr, w)?;
            rgb = Some(match rgb {
                None => term,
                Some(acc) => g.add(acc, term)?,
            });
        }
        Ok(CompositeOutput {
            rgb: rgb.expect("at least one layer"),
            layer_rgb,
            weights,
        })
    }

    /// Per-point composite evaluation in f64.
    pub fn composite_point(&self, x: f64, y: f64, t: f64) -> Result<CompositeSample> {
        let mut g = Graph::<f64>::new();
        let bound = self.bind(&mut g, false);
        let c = g.constant(1, 3, vec![x, y, t])?;
        let out = self.forward(&mut g, &bound, c, None)?;
        let rgb3 = |v: &[f64]| [v[0], v[1], v[2]];
        Ok(CompositeSample {
            rgb: rgb3(g.value(out.rgb)),
            layer_rgb: out.layer_rgb.iter().map(|v| rgb3(g.value(*v))).collect(),
            weights: g.value(out.weights).to_vec(),
        })
    }
}

/// Graph handles for one layer's parameters.
pub struct BoundLayer {
    pub flow: Vec<(Var, Var)>,
    pub color: Vec<(Var, Var)>,
}

/// Graph handles for a whole model, in [`CoordFlowModel::params`] order.
pub struct BoundModel {
    pub layers: Vec<BoundLayer>,
}

impl BoundModel {
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.layers {
            for (w, b) in l.flow.iter().chain(&l.color) {
                out.push(*w);
                out.push(*b);
            }
        }
        out
    }
}

/// Outputs of one composite forward pass.
pub struct CompositeOutput {
    /// `[B, 3]` blended color.
    pub rgb: Var,
    /// Per-layer `[B, 3]` colors.
    pub layer_rgb: Vec<Var>,
    /// `[B, n]` softmax weights.
    pub weights: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeSample {
    pub rgb: [f64; 3],
    pub layer_rgb: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

pub struct LayerOutput {
    pub rgb: Var,
    pub alpha_logit: Var,
}

fn bind_mlp<T: Scalar>(g: &mut Graph<T>, mlp: &Mlp, track_grad: bool) -> Vec<(Var, Var)> {
    mlp.layers
        .iter()
        .map(|l| {
            let w = g.leaf(bind_tensor(&l.weight, track_grad));
            let b = g.leaf(bind_tensor(&l.bias, track_grad));
            (w, b)
        })
        .collect()
}

fn bind_tensor<T: Scalar>(t: &Tensor, track_grad: bool) -> Tensor<T> {
    let mut c: Tensor<T> = t.cast();
    c.requires_grad = track_grad && t.requires_grad;
    c
}

/// `[B, 4]` raw flow outputs for a `[B, 1]` time column.
fn flow_params<T: Scalar>(g: &mut Graph<T>, pe: &PeConfig, bound: &[(Var, Var)], t: Var) -> Result<Var> {
    let enc = g.fourier(t, &pe.frequencies(), pe.include_input)?;
    Mlp::forward(g, bound, enc)
}

pub(crate) fn layer_forward<T: Scalar>(
    g: &mut Graph<T>,
    layer: &CoordFlowLayer,
    bound: &BoundLayer,
    x: Var,
    y: Var,
    t: Var,
    fixed: Option<&SimilarityTransform>,
) -> Result<LayerOutput> {
    let (xw, yw) = match fixed {
        Some(tr) => {
            let m = tr.matrix;
            let affine = |g: &mut Graph<T>, a: f64, b: f64, c: f64| -> Result<Var> {
                let ax = g.scale(x, a);
                let by = g.scale(y, b);
                let s = g.add(ax, by)?;
                Ok(g.add_scalar(s, c))
            };
            (
                affine(g, m[0][0], m[0][1], m[0][2])?,
                affine(g, m[1][0], m[1][1], m[1][2])?,
            )
        }
        None => {
            let p = flow_params(g, &layer.flow.pe, &bound.flow, t)?;
            let log_s = g.slice_cols(p, 0, 1)?;
            let theta = g.slice_cols(p, 1, 1)?;
            let dx = g.slice_cols(p, 2, 1)?;
            let dy = g.slice_cols(p, 3, 1)?;
            let s = g.exp(log_s);
            let cos = g.cos(theta);
            let sin = g.sin(theta);
            let a = g.mul(s, cos)?;
            let b = g.mul(s, sin)?;
            // x' = a·x − b·y + Δx,  y' = b·x + a·y + Δy
            let ax = g.mul(a, x)?;
            let by = g.mul(b, y)?;
            let bx = g.mul(b, x)?;
            let ay = g.mul(a, y)?;
            let xr = g.sub(ax, by)?;
            let yr = g.add(bx, ay)?;
            (g.add(xr, dx)?, g.add(yr, dy)?)
        }
    };
    let c = &layer.color;
    let fx = g.fourier(xw, &c.spatial_pe.frequencies(), c.spatial_pe.include_input)?;
    let fy = g.fourier(yw, &c.spatial_pe.frequencies(), c.spatial_pe.include_input)?;
    let ft = g.fourier(t, &c.temporal_pe.frequencies(), c.temporal_pe.include_input)?;
    let input = g.concat_cols(&[fx, fy, ft])?;
    let out = Mlp::forward(g, &bound.color, input)?;
    let raw_rgb = g.slice_cols(out, 0, 3)?;
    let rgb = g.sigmoid(raw_rgb);
    let alpha_logit = g.slice_cols(out, 3, 1)?;
    Ok(LayerOutput { rgb, alpha_logit })
}
