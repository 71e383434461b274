use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GraspPose2D;
use crate::scalar::Scalar;

/// Position (m) and unit quaternion (x, y, z, w) with canonical sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose7 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub qw: f64,
}

/// Flip the sign so that qw > 0, or the first nonzero of (qx, qy, qz) is
/// positive when qw is zero.
pub fn canonical<T: Scalar>(q: [T; 4]) -> [T; 4] {
    let lead = if q[3] != T::zero() {
        q[3]
    } else {
        q[..3].iter().copied().find(|v| *v != T::zero()).unwrap_or(T::one())
    };
    if lead < T::zero() {
        q.map(|v| -v)
    } else {
        q
    }
}

impl Pose7 {
    /// Normalizes and canonicalizes the quaternion.
    pub fn new(position: [f64; 3], quat: [f64; 4]) -> Result<Self> {
        let n = quat.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 1e-12) || !n.is_finite() || position.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("invalid pose: position {position:?}, quaternion {quat:?}")));
        }
        // already-unit input is kept bit-exact so stored poses round-trip
        let q = if (n - 1.0).abs() <= 4.0 * f64::EPSILON { canonical(quat) } else { canonical(quat.map(|v| v / n)) };
        Ok(Pose7 {
            x: position[0],
            y: position[1],
            z: position[2],
            qx: q[0],
            qy: q[1],
            qz: q[2],
            qw: q[3],
        })
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn quaternion(&self) -> [f64; 4] {
        [self.qx, self.qy, self.qz, self.qw]
    }

    /// (x, y, z, qx, qy, qz, qw)
    pub fn to_vec7(&self) -> [f64; 7] {
        [self.x, self.y, self.z, self.qx, self.qy, self.qz, self.qw]
    }

    pub fn with_position(&self, p: [f64; 3]) -> Pose7 {
        Pose7 { x: p[0], y: p[1], z: p[2], ..*self }
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_quaternion(Quaternion::new(self.qw, self.qx, self.qy, self.qz))
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::new(self.x, self.y, self.z), self.rotation())
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Pose7 {
        let t = iso.translation.vector;
        let q = iso.rotation.quaternion().coords;
        Pose7::new([t.x, t.y, t.z], [q.x, q.y, q.z, q.w]).expect("isometry is finite")
    }

    /// Position distance and rotation angle to `other`.
    pub fn distance(&self, other: &Pose7) -> (f64, f64) {
        let d = Vector3::from(self.position()) - Vector3::from(other.position());
        (d.norm(), self.rotation().angle_to(&other.rotation()))
    }
}

fn qmul<T: Scalar>(a: [T; 4], b: [T; 4]) -> [T; 4] {
    let [ax, ay, az, aw] = a;
    let [bx, by, bz, bw] = b;
    [
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ]
}

/// Extrinsic X-Y-Z Euler angles to a Hamilton quaternion (x, y, z, w):
/// q = q_z(yaw) · q_y(pitch) · q_x(roll), canonical sign.
pub fn rpy_to_quaternion<T: Scalar>(roll: T, pitch: T, yaw: T) -> [T; 4] {
    let half = T::of(0.5);
    let z = T::zero();
    let (sr, cr) = (roll * half).sin_cos();
    let (sp, cp) = (pitch * half).sin_cos();
    let (sy, cy) = (yaw * half).sin_cos();
    let q = qmul(qmul([z, z, sy, cy], [z, sp, z, cp]), [sr, z, z, cr]);
    canonical(q)
}

/// Inverse of [`rpy_to_quaternion`] away from pitch = ±π/2.
pub fn quaternion_to_rpy<T: Scalar>(q: [T; 4]) -> [T; 3] {
    let [x, y, z, w] = q;
    let one = T::one();
    let two = T::of(2.0);
    let roll = (two * (w * x + y * z)).atan2(one - two * (x * x + y * y));
    let sp = (two * (w * y - z * x)).max(-one).min(one);
    let pitch = sp.asin();
    let yaw = (two * (w * z + x * y)).atan2(one - two * (y * y + z * z));
    [roll, pitch, yaw]
}

/// Pinhole camera intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Back-project the grasp center at `depth` and orient the gripper with
/// roll-pitch-yaw (π, 0, grasp angle).
pub fn pose_from_grasp<T: Scalar>(g: &GraspPose2D<T>, depth: f64, k: &Intrinsics) -> Result<Pose7> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::Domain(format!("depth must be positive, got {depth}")));
    }
    if !(k.fx > 0.0 && k.fy > 0.0) {
        return Err(Error::Domain("focal lengths must be positive".into()));
    }
    let (u, v) = (g.u().as_f64(), g.v().as_f64());
    let q = rpy_to_quaternion(std::f64::consts::PI, 0.0, g.angle().as_f64());
    Pose7::new([(u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth], q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn identity_and_half_turn() {
        assert_eq!(rpy_to_quaternion(0.0, 0.0, 0.0), [0.0, 0.0, 0.0, 1.0]);
        let q = rpy_to_quaternion(PI, 0.0, 0.0);
        assert!((q[0] - 1.0).abs() < 1e-15 && q[1..].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn matches_hamilton_oracle_and_nalgebra() {
        for i in 0..100 {
            let theta = -PI + 2.0 * PI * (i as f64 + 0.5) / 100.0;
            let q = rpy_to_quaternion(PI, 0.0, theta);
            let expect = [(theta / 2.0).cos(), (theta / 2.0).sin(), 0.0, 0.0];
            for k in 0..4 {
                assert!((q[k] - expect[k]).abs() < 1e-12, "{theta}: {q:?}");
            }
        }
        let r = UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1);
        let c = r.quaternion().coords;
        let q = rpy_to_quaternion(0.3f64, -0.2, 1.1);
        let want = canonical([c.x, c.y, c.z, c.w]);
        for k in 0..4 {
            assert!((q[k] - want[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn grasp_back_projection() {
        let k = Intrinsics { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0 };
        let g = GraspPose2D::new(320.0, 240.0, 0.0, 20.0, 1.0).unwrap();
        let p = pose_from_grasp(&g, 0.5, &k).unwrap();
        assert_eq!(p.position(), [0.0, 0.0, 0.5]);
        assert!((p.qx - 1.0).abs() < 1e-15);
        let g = GraspPose2D::new(820.0, 240.0, 0.0, 20.0, 1.0).unwrap();
        assert_eq!(pose_from_grasp(&g, 1.0, &k).unwrap().x, 1.0);
        assert!(matches!(pose_from_grasp(&g, 0.0, &k), Err(Error::Domain(_))));
    }

    #[test]
    fn canonical_sign() {
        let p = Pose7::new([0.0; 3], [0.0, 0.0, 0.0, -2.0]).unwrap();
        assert_eq!(p.quaternion(), [0.0, 0.0, 0.0, 1.0]);
        let p = Pose7::new([0.0; 3], [-1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.quaternion(), [1.0, 0.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn unit_norm_and_round_trip(r in -3.1f64..3.1, p in -1.5f64..1.5, y in -3.1f64..3.1) {
            let q = rpy_to_quaternion(r, p, y);
            let n: f64 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-12);
            prop_assert!(q[3] >= 0.0);
            let [r2, p2, y2] = quaternion_to_rpy(q);
            prop_assert!((r2 - r).abs() < 1e-9 && (p2 - p).abs() < 1e-9 && (y2 - y).abs() < 1e-9);
        }
    }
}
