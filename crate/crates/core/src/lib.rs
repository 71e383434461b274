//! Semi-supervised grasp detection toolkit.
//!
//! A vector-quantized autoencoder learns discrete image representations from
//! every available image; its frozen encoder and codebook then feed a freshly
//! initialized decoder and a GGCNN2 head that regresses pixel-wise grasp maps
//! from the labelled fraction only. Predicted grasps are scored by rectangle
//! IOU, lifted to camera-frame poses, mapped to end-effector poses through a
//! least-squares 7×7 transform, and executed on a simulated 7-DOF arm.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod head;
pub mod nn;
pub mod scalar;
pub mod train;
pub mod vq;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Grasp geometry in double precision.
pub type Grasp = geometry::GraspPose2D<f64>;
pub type Rect = geometry::GraspRect<f64>;
/// Network outputs are single precision.
pub type Maps = geometry::GraspMaps<f32>;
pub type Tensor = ndarray::Array4<f32>;
