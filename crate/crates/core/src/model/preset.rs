//! Named architecture presets.
//!
//! A preset fixes the positional encodings, the flow network, the color-net
//! depth and a per-layer parameter budget. The color-net width is solved so
//! one layer lands as close to the budget as possible.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{mlp_param_count, CoordFlowLayer, CoordFlowModel, LayerArch, PeConfig, VideoDims};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PresetName {
    Tiny,
    S,
    M,
    L,
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Self::Tiny),
            "S" | "s" => Ok(Self::S),
            "M" | "m" => Ok(Self::M),
            "L" | "l" => Ok(Self::L),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tiny => "tiny",
            Self::S => "S",
            Self::M => "M",
            Self::L => "L",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: PresetName,
    /// Target parameters for one layer (flow + color).
    pub layer_budget: usize,
    pub color_depth: usize,
    pub flow_hidden: Vec<usize>,
    pub flow_pe: PeConfig,
    pub spatial_pe: PeConfig,
    pub temporal_pe: PeConfig,
}

impl Preset {
    pub fn get(name: PresetName) -> Self {
        match name {
            // Desk scale: ~24K per layer, encodings sized for ~100 px frames.
            PresetName::Tiny => Self {
                name,
                layer_budget: 24_000,
                color_depth: 3,
                flow_hidden: vec![16, 12],
                flow_pe: PeConfig::new(4, true),
                spatial_pe: PeConfig::new(6, true),
                temporal_pe: PeConfig::new(5, true),
            },
            // Two S layers give 3.13M; one M layer is about two S layers.
            PresetName::S => Self {
                name,
                layer_budget: 1_565_000,
                color_depth: 5,
                flow_hidden: vec![128, 128],
                flow_pe: PeConfig::new(4, true),
                spatial_pe: PeConfig::new(10, true),
                temporal_pe: PeConfig::new(6, true),
            },
            PresetName::M => Self {
                name,
                layer_budget: 3_055_000,
                color_depth: 6,
                flow_hidden: vec![160, 160],
                flow_pe: PeConfig::new(4, true),
                spatial_pe: PeConfig::new(10, true),
                temporal_pe: PeConfig::new(6, true),
            },
            PresetName::L => Self {
                name,
                layer_budget: 6_340_000,
                color_depth: 7,
                flow_hidden: vec![224, 224],
                flow_pe: PeConfig::new(4, true),
                spatial_pe: PeConfig::new(10, true),
                temporal_pe: PeConfig::new(6, true),
            },
        }
    }

    /// Caps every encoding at the Nyquist rate of the training lattice:
    /// the top band of `L` has `2^(L-1)` cycles across the axis, so `n`
    /// samples support at most `floor(log2 n)` bands. Every encoding keeps
    /// at least one band.
    pub fn for_lattice(mut self, dims: VideoDims, stride: usize, frame_stride: usize) -> Self {
        let cap = |pe: &mut PeConfig, n: usize| {
            pe.num_bands = pe.num_bands.min(n.max(1).ilog2() as usize).max(1);
        };
        let (stride, frame_stride) = (stride.max(1), frame_stride.max(1));
        let side = dims.width.min(dims.height).div_ceil(stride);
        let frames = dims.frames.div_ceil(frame_stride);
        cap(&mut self.spatial_pe, side);
        cap(&mut self.temporal_pe, frames);
        cap(&mut self.flow_pe, frames);
        self
    }

    pub fn build(&self, n_layers: usize, budget_scale: f64, dims: VideoDims, seed: u64) -> Result<CoordFlowModel> {
        if n_layers == 0 {
            return Err(Error::InvalidArgument("n_layers must be at least 1".into()));
        }
        let arch = self.layer_arch(budget_scale);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..n_layers).map(|_| CoordFlowLayer::new(&arch, &mut rng)).collect();
        CoordFlowModel::new(self.name.to_string(), layers, dims)
    }

    /// Layer architecture whose size is closest to `budget_scale × layer_budget`.
    pub fn layer_arch(&self, budget_scale: f64) -> LayerArch {
        let target = (self.layer_budget as f64 * budget_scale).round() as usize;
        let mut arch = LayerArch {
            flow_pe: self.flow_pe,
            flow_hidden: self.flow_hidden.clone(),
            spatial_pe: self.spatial_pe,
            temporal_pe: self.temporal_pe,
            color_hidden: vec![1; self.color_depth],
        };
        let flow = arch.flow_param_count();
        let input = arch.color_dims()[0];
        let color_params = |w: usize| {
            let mut dims = vec![input];
            dims.extend(std::iter::repeat_n(w, self.color_depth));
            dims.push(4);
            mlp_param_count(&dims)
        };
        let mut width = 1;
        while flow + color_params(width + 1) <= target {
            width += 1;
        }
        let below = flow + color_params(width);
        let above = flow + color_params(width + 1);
        if above.abs_diff(target) < below.abs_diff(target) {
            width += 1;
        }
        arch.color_hidden = vec![width; self.color_depth];
        arch
    }
}

/// Builds an `n_layers` model from the named preset with the given budget
/// scale per layer (1.0 for the stock preset).
pub fn make_preset_scaled(
    name: &str,
    n_layers: usize,
    budget_scale: f64,
    dims: VideoDims,
    seed: u64,
) -> Result<CoordFlowModel> {
    Preset::get(name.parse()?).build(n_layers, budget_scale, dims, seed)
}

pub fn make_preset(name: &str, n_layers: usize, dims: VideoDims, seed: u64) -> Result<CoordFlowModel> {
    make_preset_scaled(name, n_layers, 1.0, dims, seed)
}
