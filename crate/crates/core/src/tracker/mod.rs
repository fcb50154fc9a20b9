//! Desk-scale Siamese tracker: a shared three-layer conv backbone, depthwise
//! cross-correlation, and 1x1 classification/regression heads.

pub mod checkpoint;
mod decode;
mod track;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use decode::{cell_center, decode_box, foreground_margin};
pub use track::{track_sequence, TrackResult};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Domain};
use crate::tensor::Tensor;

pub const TEMPLATE_SIZE: usize = 32;
pub const SEARCH_SIZE: usize = 64;
/// Side of the correlation, score and regression grids.
pub const GRID: usize = 9;
/// Backbone stride in input pixels.
pub const STRIDE: usize = 4;
pub const FEATURES: usize = 32;

/// Parameter slots, in checkpoint order.
pub const PARAM_NAMES: [&str; 10] = [
    "backbone.conv1.weight",
    "backbone.conv1.bias",
    "backbone.conv2.weight",
    "backbone.conv2.bias",
    "backbone.conv3.weight",
    "backbone.conv3.bias",
    "head.cls.weight",
    "head.cls.bias",
    "head.reg.weight",
    "head.reg.bias",
];
const PARAM_SHAPES: [&[usize]; 10] = [
    &[16, 3, 3, 3],
    &[16],
    &[32, 16, 3, 3],
    &[32],
    &[32, 32, 3, 3],
    &[32],
    &[2, 32, 1, 1],
    &[2],
    &[4, 32, 1, 1],
    &[4],
];
/// Number of leading slots that belong to the backbone.
pub const BACKBONE_PARAMS: usize = 6;

/// (stride, padding) of each backbone conv.
const CONV_GEOMETRY: [(usize, usize); 3] = [(2, 1), (2, 1), (1, 0)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub frozen: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerModel {
    pub params: Vec<Param>,
}

/// Graph handles of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct TrackerVars {
    pub template_features: Var,
    pub search_features: Var,
    pub corr: Var,
    pub cls: Var,
    pub reg: Var,
}

/// Values of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackerOutputs {
    pub template_features: Tensor,
    pub search_features: Tensor,
    /// Correlation map, `[32, 9, 9]`.
    pub corr: Tensor,
    /// Background/foreground logits, `[2, 9, 9]`.
    pub cls: Tensor,
    /// Edge distances (left, top, right, bottom) over the search size, `[4, 9, 9]`.
    pub reg: Tensor,
}

fn check_shape(op: &'static str, t: &Tensor, expected: &[usize]) -> Result<()> {
    if t.shape() != expected {
        return Err(Error::shape(op, t.shape(), expected));
    }
    Ok(())
}

impl TrackerModel {
    /// Kaiming-uniform (fan-in) weights, zero biases, nothing frozen.
    pub fn new(seed: u64) -> Self {
        let mut rng = stream_rng(seed, Domain::Init, 0);
        let params = PARAM_NAMES
            .iter()
            .zip(PARAM_SHAPES)
            .map(|(name, shape)| {
                let value = if shape.len() == 4 {
                    let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
                    let bound = (6.0 / fan_in).sqrt();
                    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
                } else {
                    Tensor::zeros(shape)
                };
                Param {
                    name: name.to_string(),
                    value,
                    frozen: false,
                }
            })
            .collect();
        Self { params }
    }

    pub fn from_params(params: Vec<Param>) -> Result<Self> {
        if params.len() != PARAM_NAMES.len() {
            return Err(Error::domain(
                "tracker",
                format!("expected {} parameters, got {}", PARAM_NAMES.len(), params.len()),
            ));
        }
        for ((p, name), shape) in params.iter().zip(PARAM_NAMES).zip(PARAM_SHAPES) {
            if p.name != name {
                return Err(Error::domain("tracker", format!("expected parameter `{name}`, got `{}`", p.name)));
            }
            check_shape("tracker parameter", &p.value, shape)?;
        }
        Ok(Self { params })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Students train only the backbone.
    pub fn freeze_heads(&mut self) {
        for (i, p) in self.params.iter_mut().enumerate() {
            p.frozen = i >= BACKBONE_PARAMS;
        }
    }

    pub fn freeze_all(&mut self) {
        self.params.iter_mut().for_each(|p| p.frozen = true);
    }

    pub fn unfreeze_all(&mut self) {
        self.params.iter_mut().for_each(|p| p.frozen = false);
    }

    pub fn is_fully_frozen(&self) -> bool {
        self.params.iter().all(|p| p.frozen)
    }

    pub fn zero_heads(&mut self) {
        for p in &mut self.params[BACKBONE_PARAMS..] {
            p.value = Tensor::zeros(p.value.shape());
        }
    }

    /// Adds every parameter to `g`; frozen ones as constants.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|p| g.leaf(p.value.clone(), !p.frozen)).collect()
    }

    /// Backbone features of a `[3, H, W]` image.
    pub fn embed(&self, g: &mut Graph, bound: &[Var], image: Var) -> Result<Var> {
        let mut x = image;
        for (layer, &(stride, padding)) in CONV_GEOMETRY.iter().enumerate() {
            x = g.conv2d(x, bound[2 * layer], Some(bound[2 * layer + 1]), stride, padding)?;
            if layer + 1 < CONV_GEOMETRY.len() {
                x = g.relu(x);
            }
        }
        Ok(x)
    }

    /// Correlation and heads given template and search features.
    pub fn head(&self, g: &mut Graph, bound: &[Var], zf: Var, xf: Var) -> Result<(Var, Var, Var)> {
        let raw = g.xcorr_depthwise(xf, zf)?;
        let kernel_area = (g.value(zf).shape()[1] * g.value(zf).shape()[2]) as f64;
        let corr = g.scale(raw, 1.0 / kernel_area);
        let cls = g.conv2d(corr, bound[6], Some(bound[7]), 1, 0)?;
        let reg = g.conv2d(corr, bound[8], Some(bound[9]), 1, 0)?;
        Ok((corr, cls, reg))
    }

    /// Full forward pass recorded on `g`.
    pub fn forward_graph(&self, g: &mut Graph, bound: &[Var], template: Var, search: Var) -> Result<TrackerVars> {
        check_shape("tracker template", g.value(template), &[3, TEMPLATE_SIZE, TEMPLATE_SIZE])?;
        check_shape("tracker search", g.value(search), &[3, SEARCH_SIZE, SEARCH_SIZE])?;
        let zf = self.embed(g, bound, template)?;
        let xf = self.embed(g, bound, search)?;
        let (corr, cls, reg) = self.head(g, bound, zf, xf)?;
        Ok(TrackerVars {
            template_features: zf,
            search_features: xf,
            corr,
            cls,
            reg,
        })
    }

    /// Inference-only forward pass.
    pub fn forward(&self, template: &Tensor, search: &Tensor) -> Result<TrackerOutputs> {
        let mut g = Graph::new();
        let bound: Vec<Var> = self.params.iter().map(|p| g.constant(p.value.clone())).collect();
        let t = g.constant(template.clone());
        let s = g.constant(search.clone());
        let v = self.forward_graph(&mut g, &bound, t, s)?;
        Ok(TrackerOutputs {
            template_features: g.value(v.template_features).clone(),
            search_features: g.value(v.search_features).clone(),
            corr: g.value(v.corr).clone(),
            cls: g.value(v.cls).clone(),
            reg: g.value(v.reg).clone(),
        })
    }

    /// Template features only, for reuse across frames.
    pub fn template_features(&self, template: &Tensor) -> Result<Tensor> {
        check_shape("tracker template", template, &[3, TEMPLATE_SIZE, TEMPLATE_SIZE])?;
        let mut g = Graph::new();
        let bound: Vec<Var> = self.params.iter().map(|p| g.constant(p.value.clone())).collect();
        let t = g.constant(template.clone());
        let zf = self.embed(&mut g, &bound, t)?;
        Ok(g.value(zf).clone())
    }

    /// Score and regression maps for a search image against cached template features.
    pub fn search(&self, template_features: &Tensor, search: &Tensor) -> Result<(Tensor, Tensor)> {
        check_shape("tracker search", search, &[3, SEARCH_SIZE, SEARCH_SIZE])?;
        let mut g = Graph::new();
        let bound: Vec<Var> = self.params.iter().map(|p| g.constant(p.value.clone())).collect();
        let zf = g.constant(template_features.clone());
        let s = g.constant(search.clone());
        let xf = self.embed(&mut g, &bound, s)?;
        let (_, cls, reg) = self.head(&mut g, &bound, zf, xf)?;
        Ok((g.value(cls).clone(), g.value(reg).clone()))
    }
}
