//! Everything around the network: depth preprocessing, augmentation,
//! minibatch sampling, the training step and inference.

pub mod augment;
pub mod infer;
pub mod preprocess;
pub mod sampling;
pub mod train;

pub use augment::{apply_plan, augment, AugmentPlan, TrainSample, ROTATIONS};
pub use infer::{infer, infer_preprocessed, InferenceConfig};
pub use preprocess::{bilateral, fill_holes, preprocess_depth, preprocess_depth_with, BilateralConfig};
pub use sampling::{sample_minibatch, Minibatch};
pub use train::{
    compute_gradients, mix_seed, network_inputs, sgd_step, DepthMode, StepLosses, StepOutcome, TrainConfig, Trainer,
};
