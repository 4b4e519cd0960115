//! The detector network, built on a small reverse-mode tensor graph.
//!
//! Values are generic over [`Scalar`] so training runs in `f32` while the
//! gradient checks use `f64`.

pub mod anchors;
pub mod gradcheck;
pub mod graph;
pub mod lca;
pub mod loss;
pub mod model;
pub(crate) mod ops;
pub mod params;
pub mod proposals;
pub mod tensor;

pub use anchors::{
    assign_gpn_targets, assign_groi_targets, generate_anchors, match_box, AnchorConfig, GpnAssignment, GroiAssignment,
    IouThresholds, Match,
};
pub use gradcheck::{check_gradients, check_gradients_sampled, relative_error};
pub use graph::{Graph, Var};
pub use lca::{lca_forward, sine_positional_encoding, LcaConfig, LcaOutput};
pub use loss::{gpn_loss, groi_loss, total_loss, GpnBatch, GpnLoss, GroiBatch, GroiLoss, LossWeights};
pub use model::{
    backbone_forward, gpn_forward, groi_forward, groi_head, BackboneOutput, Fusion, GpnHeads, GpnOutput, GroiHeads,
    GroiOutput, ModelConfig,
};
pub use ops::roi_align::{Roi, RoiAlignConfig};
pub use params::{Bound, ParamStore};
pub use proposals::{axis_nms, proposal_selection, Proposal, ProposalConfig};
pub use tensor::{FeatureMap, Scalar, Tensor};
