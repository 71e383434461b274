//! From an image grasp to an arm motion: camera-frame poses, the 7×7
//! camera-to-robot mapping, 7-DOF kinematics, and the table-top trajectory
//! with its simulator.

mod kinematics;
mod mapping;
mod pose;
mod rig;
mod trajectory;

pub use kinematics::{FixedTransform, IkOptions, Joint, Joints, KinematicChain, ARM7_CFG};
pub use mapping::{apply_mapping, fit_mapping, MappingMatrix, Matrix7, ObservationSet, PINV_RCOND};
pub use pose::{canonical, pose_from_grasp, quaternion_to_rpy, rpy_to_quaternion, Intrinsics, Pose7};
pub use rig::{protocol_observations, CameraRig, PROTOCOL_ANGLES};
pub use trajectory::{
    plan_trajectory, simulate_execution, ExecutionLog, GripperEvent, ObjectGeom, StepRecord, TableGeom, Waypoint,
    FLAG_BELOW_TABLE, FLAG_TRANSIT_LOW, NEUTRAL_JOINTS, STEPS_PER_SEGMENT,
};
