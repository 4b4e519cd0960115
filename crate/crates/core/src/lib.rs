//! Planar RGB-D grasp detection with six-dimensional grasp rectangles.
//!
//! The crate is `no_std` + `alloc` so the geometry, metrics and network code
//! can run without an operating system. Enable the `std` feature for runtime
//! SIMD detection in the matrix kernels and std float intrinsics.
//!
//! Module map:
//!
//! - [`geometry`]: grasp rectangles, anchor/target encodings, planar <-> 3D
//!   projection, rotated IoU, grasp-NMS, label transforms.
//! - [`shapes`]: analytic box/cylinder primitives, ray casting, GJK.
//! - [`scene`]: procedural scenes, depth/color rendering, sensor corruption,
//!   antipodal grasp sampling and the label construction pipeline.
//! - [`metrics`]: contacts, friction-cone force closure, gripper collision,
//!   and the AP / AP_mu protocol.
//! - [`net`]: reverse-mode tensor graph, the two-stream backbone with local
//!   cross-modal attention, proposal and RoI stages, losses.
//! - [`harness`]: depth preprocessing, augmentation, minibatch sampling, SGD,
//!   the per-batch training step and inference.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is how NaN inputs are rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod geometry;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod net;
pub mod scene;
pub mod shapes;

pub use error::{Error, Result};
