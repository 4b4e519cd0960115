//! Grasp quality ground truth and the AP evaluation protocol.
//!
//! A planar prediction counts as a true positive at friction `mu` when its
//! lifted pose has contacts on a single object, the gripper clears the scene,
//! and the contact line lies in both friction cones.

mod ap;
mod contact;
mod gripper;

pub use ap::{
    aggregate_reports, assess_planar, evaluate_ap, evaluate_scene, mu_key, precision_at_k,
    precision_from_flags, EvalConfig, EvalReport, SceneEval, SceneReport,
};
pub use contact::{force_closure, friction_grid, min_friction, Contact};
pub use gripper::{
    assess_grasp, collision_check, collision_check_excluding, compute_contacts, gripper_solids,
    ContactPair, GripperModel,
};
