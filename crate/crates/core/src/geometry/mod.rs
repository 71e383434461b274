//! Grasp representations, oriented-rectangle geometry and the IOU metric.

mod angle;
mod grasp;
mod iou;
mod maps;

pub use angle::{angle_diff, normalize_angle};
pub use grasp::{rect_from_grasp, GraspPose2D, GraspRect};
pub use iou::{convex_intersection, iou};
pub use maps::{argmax_row_major, gaussian_blur, grasp_from_maps, GraspMaps, MapGrasp};
