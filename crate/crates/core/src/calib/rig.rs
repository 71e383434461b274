use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mapping::ObservationSet;
use super::pose::{rpy_to_quaternion, Pose7};
use crate::nn::seeded;

/// Object placing angles of the observation protocol, degrees.
pub const PROTOCOL_ANGLES: [f64; 4] = [0.0, 45.0, 90.0, 135.0];

/// Camera-frame poses for 10 positions × 4 placing angles.
///
/// Orientations are rpy(π + δr, δp, θ) with small random tilts δ: with
/// δ = 0 the qz and qw rows vanish and the camera matrix has rank 5.
pub fn protocol_observations(seed: u64) -> Vec<Pose7> {
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(40);
    for _ in 0..10 {
        let pos = [
            rng.random_range(-0.25..0.25),
            rng.random_range(-0.2..0.2),
            rng.random_range(0.89..0.91),
        ];
        for deg in PROTOCOL_ANGLES {
            let q = rpy_to_quaternion(
                std::f64::consts::PI + rng.random_range(-0.15..0.15),
                rng.random_range(-0.15..0.15),
                deg.to_radians(),
            );
            out.push(Pose7::new(pos, q).expect("finite pose"));
        }
    }
    out
}

/// A camera looking straight down at the table from `height` meters above
/// robot point (`x`, `y`, 0). Image v runs along robot −y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub x: f64,
    pub y: f64,
    pub height: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        CameraRig { x: 0.55, y: 0.0, height: 1.0 }
    }
}

fn qmul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    let [ax, ay, az, aw] = a;
    let [bx, by, bz, bw] = b;
    [
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ]
}

impl CameraRig {
    /// Ground-truth robot pose of a camera-frame pose.
    pub fn robot_pose(&self, c: &Pose7) -> Pose7 {
        let flip = [1.0, 0.0, 0.0, 0.0];
        let q = qmul(qmul(flip, c.quaternion()), flip);
        Pose7::new([self.x + c.x, self.y - c.y, self.height - c.z], q).expect("finite pose")
    }

    /// The 40-pair calibration set observed through this rig.
    pub fn observations(&self, seed: u64) -> ObservationSet {
        ObservationSet::new(
            protocol_observations(seed)
                .into_iter()
                .map(|c| (c, self.robot_pose(&c)))
                .collect(),
        )
    }
}
