use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(&'static str),
    #[error("invalid depth {0} (must be positive)")]
    InvalidDepth(f64),
    #[error("grasp approach is not aligned with the camera view axis")]
    NotPlanar,
    #[error("angle is undefined for a zero (sin, cos) pair")]
    UndefinedAngle,
    #[error("grasp at index {0} carries no score")]
    MissingScore(usize),
    #[error("contact points coincide")]
    InvalidContact,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("scene generation failed: {0}")]
    Generation(String),
    #[error("predictions are not sorted by descending score")]
    Unsorted,
    #[error("evaluation needs at least one scene")]
    EmptySceneSet,
    #[error("depth image has no valid pixel")]
    EmptyDepth,
    #[error("training diverged at iteration {0}")]
    Diverged(usize),
}
