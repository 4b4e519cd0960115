//! The two-stream detector: backbone with cross-modal fusion, the proposal
//! head and the RoI head.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::anchors::AnchorConfig;
use super::graph::{Graph, Var};
use super::lca::{init_lca, lca_forward, rgb_only_fuse, LcaConfig, LcaOutput};
use super::ops::roi_align::{Roi, RoiAlignConfig};
use super::params::{add_conv, Bound, Init, ParamStore};
use super::tensor::{Scalar, Tensor};
use crate::geometry::{GpnTarget, GroiTarget};
use crate::{Error, Result};

/// How the depth stream reaches the detection features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Two streams fused by local cross-modal attention.
    Lca,
    /// No depth stream; each fusion block sees zero depth features.
    RgbOnly,
}

/// `(kernel, stride, padding)` of the three backbone stages.
const STAGES: [(usize, usize, usize); 3] = [(4, 4, 0), (3, 2, 1), (3, 2, 1)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Output channels of the three backbone stages and the RoI block.
    pub channels: [usize; 4],
    pub gpn_hidden: usize,
    pub lca: LcaConfig,
    pub anchors: AnchorConfig,
    pub roi: RoiAlignConfig,
    pub fusion: Fusion,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: [16, 32, 64, 128],
            gpn_hidden: 32,
            lca: LcaConfig::default(),
            anchors: AnchorConfig::default(),
            roi: RoiAlignConfig::default(),
            fusion: Fusion::Lca,
        }
    }
}

impl ModelConfig {
    /// Total stride of the detection features.
    pub const STRIDE: usize = 16;

    pub fn validate(&self) -> Result<()> {
        self.lca.validate()?;
        self.anchors.validate()?;
        if self.anchors.stride != Self::STRIDE {
            return Err(Error::Config(format!("anchor stride must be {}", Self::STRIDE)));
        }
        if self.channels.contains(&0) || self.gpn_hidden == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.roi.output < 3 || self.roi.sampling == 0 {
            return Err(Error::Config("RoI output must be at least 3x3".into()));
        }
        Ok(())
    }

    pub fn init_params<T: Scalar>(&self, seed: u64) -> Result<ParamStore<T>> {
        self.validate()?;
        let mut p = ParamStore::new();
        let mut init = Init::new(seed);
        let mut input = 3;
        for (s, &(k, _, _)) in STAGES.iter().enumerate() {
            let c = self.channels[s];
            add_conv(&mut p, &mut init, &format!("rgb.stage{}", s + 1), c, input, k);
            match self.fusion {
                Fusion::Lca => {
                    add_conv(&mut p, &mut init, &format!("depth.stage{}", s + 1), c, input, k);
                    init_lca(&mut p, &mut init, &format!("lca{}", s + 1), c, self.lca.embed_dims[s]);
                }
                Fusion::RgbOnly => add_conv(&mut p, &mut init, &format!("lca{}.fuse", s + 1), c, 2 * c, 1),
            }
            input = c;
        }
        let a = self.anchors.per_cell();
        add_conv(&mut p, &mut init, "gpn.conv", self.gpn_hidden, input, 3);
        p.insert("gpn.cls.weight", init.normal(&[2 * a, self.gpn_hidden, 1, 1], 0.01));
        p.insert("gpn.cls.bias", Tensor::zeros(&[2 * a]));
        p.insert("gpn.reg.weight", init.normal(&[4 * a, self.gpn_hidden, 1, 1], 0.01));
        p.insert("gpn.reg.bias", Tensor::zeros(&[4 * a]));
        let roi_c = self.channels[3];
        add_conv(&mut p, &mut init, "groi.conv", roi_c, input, 3);
        for (name, outputs) in [("groi.reg", 7), ("groi.cls", 2), ("groi.score", 1)] {
            p.insert(&format!("{name}.weight"), init.normal(&[outputs, roi_c], 0.01));
            p.insert(&format!("{name}.bias"), Tensor::zeros(&[outputs]));
        }
        Ok(p)
    }
}

fn conv<T: Scalar>(g: &mut Graph<T>, p: &Bound, name: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
    let weight = p.var(&format!("{name}.weight"))?;
    let bias = p.var(&format!("{name}.bias"))?;
    g.conv2d(x, weight, Some(bias), stride, pad)
}

/// Intermediate and final backbone features.
#[derive(Debug, Clone)]
pub struct BackboneOutput {
    /// RGB-stream stage outputs before fusion.
    pub rgb: Vec<Var>,
    /// Depth-stream stage outputs (empty without a depth stream).
    pub depth: Vec<Var>,
    /// Fused maps; each feeds the next RGB stage.
    pub fused: Vec<Var>,
    pub attention: Vec<LcaOutput>,
    /// Stride-16 detection features.
    pub feature: Var,
}

/// `rgb` and `depth`: `[N, 3, H, W]`; `depth` is unused for
/// [`Fusion::RgbOnly`].
pub fn backbone_forward<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    rgb: Var,
    depth: Option<Var>,
    cfg: &ModelConfig,
) -> Result<BackboneOutput> {
    let (_, c, h, w) = g.value(rgb).dims4();
    if c != 3 {
        return Err(Error::Shape(format!("expected 3 input channels, got {c}")));
    }
    if h % ModelConfig::STRIDE != 0 || w % ModelConfig::STRIDE != 0 {
        return Err(Error::Shape(format!("input {h}x{w} is not a multiple of {}", ModelConfig::STRIDE)));
    }
    let mut depth = match (cfg.fusion, depth) {
        (Fusion::Lca, Some(d)) if g.shape(d) == g.shape(rgb) => Some(d),
        (Fusion::Lca, Some(d)) => {
            return Err(Error::Shape(format!("RGB input {:?} vs depth input {:?}", g.shape(rgb), g.shape(d))))
        }
        (Fusion::Lca, None) => return Err(Error::Config("the fused model needs a depth input".into())),
        (Fusion::RgbOnly, _) => None,
    };
    let mut out = BackboneOutput { rgb: Vec::new(), depth: Vec::new(), fused: Vec::new(), attention: Vec::new(), feature: rgb };
    let mut x = rgb;
    for (s, &(_, stride, pad)) in STAGES.iter().enumerate() {
        let r = conv(g, p, &format!("rgb.stage{}", s + 1), x, stride, pad)?;
        let r = g.relu(r);
        out.rgb.push(r);
        let fused = match depth {
            Some(d) => {
                let d = conv(g, p, &format!("depth.stage{}", s + 1), d, stride, pad)?;
                let d = g.relu(d);
                out.depth.push(d);
                depth = Some(d);
                let lca = lca_forward(g, p, &format!("lca{}", s + 1), r, d, cfg.lca.kernels[s], &cfg.lca)?;
                out.attention.push(lca);
                lca.fused
            }
            None => rgb_only_fuse(g, p, &format!("lca{}", s + 1), r)?,
        };
        out.fused.push(fused);
        x = fused;
    }
    out.feature = x;
    Ok(out)
}

/// First-stage outputs as rows over all anchors of all images.
#[derive(Debug, Clone, Copy)]
pub struct GpnHeads {
    /// `[R, 2]` class logits (column 1 is graspable).
    pub cls: Var,
    /// `[R, 4]` box offsets.
    pub reg: Var,
}

pub fn gpn_forward<T: Scalar>(g: &mut Graph<T>, p: &Bound, feature: Var, cfg: &ModelConfig) -> Result<GpnHeads> {
    let hidden = conv(g, p, "gpn.conv", feature, 1, 1)?;
    let hidden = g.relu(hidden);
    let cls = conv(g, p, "gpn.cls", hidden, 1, 0)?;
    let reg = conv(g, p, "gpn.reg", hidden, 1, 0)?;
    if g.shape(cls)[1] != 2 * cfg.anchors.per_cell() {
        return Err(Error::Shape("GPN head width does not match the anchor configuration".into()));
    }
    Ok(GpnHeads { cls: g.to_rows(cls, 2)?, reg: g.to_rows(reg, 4)? })
}

/// Second-stage outputs for `M` RoIs.
#[derive(Debug, Clone, Copy)]
pub struct GroiHeads {
    /// `[M, 7]`.
    pub reg: Var,
    /// `[M, 2]` class logits.
    pub cls: Var,
    /// `[M, 1]` sigmoid scores.
    pub score: Var,
}

pub fn groi_forward<T: Scalar>(g: &mut Graph<T>, p: &Bound, feature: Var, rois: &[Roi], cfg: &ModelConfig) -> Result<GroiHeads> {
    let pooled = g.roi_align(feature, rois, &cfg.roi)?;
    groi_head(g, p, pooled)
}

/// The RoI block on pooled `[M, C, 7, 7]` features.
pub fn groi_head<T: Scalar>(g: &mut Graph<T>, p: &Bound, pooled: Var) -> Result<GroiHeads> {
    let x = conv(g, p, "groi.conv", pooled, 2, 0)?;
    let x = g.relu(x);
    let x = g.global_avg_pool(x);
    let linear = |g: &mut Graph<T>, name: &str| -> Result<Var> {
        g.linear(x, p.var(&format!("{name}.weight"))?, p.var(&format!("{name}.bias"))?)
    };
    let reg = linear(g, "groi.reg")?;
    let cls = linear(g, "groi.cls")?;
    let score = linear(g, "groi.score")?;
    Ok(GroiHeads { reg, cls, score: g.sigmoid(score) })
}

fn softmax_positive(row: &[f64]) -> f64 {
    1.0 / (1.0 + (row[0] - row[1]).exp())
}

/// Plain first-stage predictions, one entry per anchor row.
#[derive(Debug, Clone, PartialEq)]
pub struct GpnOutput {
    pub probs: Vec<f64>,
    pub deltas: Vec<GpnTarget>,
}

impl GpnOutput {
    pub fn read<T: Scalar>(g: &Graph<T>, heads: &GpnHeads) -> Self {
        let cls: Vec<f64> = g.value(heads.cls).data.iter().map(|v| v.as_f64()).collect();
        let reg: Vec<f64> = g.value(heads.reg).data.iter().map(|v| v.as_f64()).collect();
        Self {
            probs: cls.chunks(2).map(softmax_positive).collect(),
            deltas: reg.chunks(4).map(GpnTarget::from_slice).collect(),
        }
    }
}

/// Plain second-stage predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct GroiOutput {
    pub reg: Vec<GroiTarget>,
    /// Graspable probability.
    pub probs: Vec<f64>,
    pub scores: Vec<f64>,
}

impl GroiOutput {
    pub fn read<T: Scalar>(g: &Graph<T>, heads: &GroiHeads) -> Self {
        let values = |v: Var| -> Vec<f64> { g.value(v).data.iter().map(|x| x.as_f64()).collect() };
        Self {
            reg: values(heads.reg).chunks(7).map(GroiTarget::from_slice).collect(),
            probs: values(heads.cls).chunks(2).map(softmax_positive).collect(),
            scores: values(heads.score),
        }
    }
}
