use std::path::Path;

use nalgebra::{Isometry3, Matrix6, SMatrix, Translation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::pose::Pose7;
use crate::error::{Error, Result};
use crate::nn::seeded;

pub const ARM7_CFG: &str = include_str!("../../../../configs/arm7.cfg");

pub type Joints = [f64; 7];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedTransform {
    pub translation: [f64; 3],
    /// Extrinsic X-Y-Z Euler angles.
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl FixedTransform {
    fn isometry(&self) -> Isometry3<f64> {
        let [x, y, z] = self.translation;
        let [r, p, yaw] = self.rpy;
        Isometry3::from_parts(Translation3::new(x, y, z), UnitQuaternion::from_euler_angles(r, p, yaw))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Joint {
    pub axis: [f64; 3],
    pub offset: [f64; 3],
    pub limits: [f64; 2],
}

/// Serial chain of seven revolute joints between a base and a tool frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicChain {
    pub name: String,
    pub base: FixedTransform,
    pub tool: FixedTransform,
    pub joints: Vec<Joint>,
}

/// Damped-least-squares settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IkOptions {
    pub damping: f64,
    pub max_iterations: usize,
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
    /// Extra attempts from deterministic seeds when the first one stalls.
    pub restarts: usize,
}

impl Default for IkOptions {
    fn default() -> Self {
        IkOptions {
            damping: 1e-2,
            max_iterations: 500,
            position_tolerance: 1e-4,
            orientation_tolerance: 1e-3,
            restarts: 8,
        }
    }
}

impl KinematicChain {
    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(format!("chain config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Self = toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// The shipped `arm7` chain.
    pub fn arm7() -> Self {
        Self::parse(ARM7_CFG).expect("shipped chain parses")
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.len() != 7 {
            return Err(Error::Config(format!("chain needs 7 joints, got {}", self.joints.len())));
        }
        for (i, j) in self.joints.iter().enumerate() {
            let n = Vector3::from(j.axis).norm();
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("joint {i}: axis is not unit length ({n})")));
            }
            if !(j.limits[0] < j.limits[1]) {
                return Err(Error::Config(format!("joint {i}: low limit must be below high limit")));
            }
        }
        Ok(())
    }

    pub fn check_limits(&self, q: &Joints) -> Result<()> {
        for (i, (j, &v)) in self.joints.iter().zip(q).enumerate() {
            if !(v >= j.limits[0] && v <= j.limits[1]) {
                return Err(Error::JointLimit {
                    index: i,
                    value: v,
                    low: j.limits[0],
                    high: j.limits[1],
                });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, q: &mut Joints) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.limits[0], j.limits[1]);
        }
    }

    /// Tool frame plus world-frame joint axes and origins.
    fn frames(&self, q: &Joints) -> (Isometry3<f64>, [(Vector3<f64>, Vector3<f64>); 7]) {
        let mut t = self.base.isometry();
        let mut axes = [(Vector3::zeros(), Vector3::zeros()); 7];
        for (i, (j, &theta)) in self.joints.iter().zip(q).enumerate() {
            t *= Translation3::from(Vector3::from(j.offset));
            let axis = nalgebra::Unit::new_normalize(Vector3::from(j.axis));
            axes[i] = (t.rotation * axis.into_inner(), t.translation.vector);
            t *= UnitQuaternion::from_axis_angle(&axis, theta);
        }
        (t * self.tool.isometry(), axes)
    }

    pub fn fk(&self, q: &Joints) -> Result<Pose7> {
        self.check_limits(q)?;
        Ok(Pose7::from_isometry(&self.frames(q).0))
    }

    /// Geometric Jacobian in the world frame (linear rows first).
    pub fn jacobian(&self, q: &Joints) -> SMatrix<f64, 6, 7> {
        let (tool, axes) = self.frames(q);
        let p = tool.translation.vector;
        let mut j = SMatrix::<f64, 6, 7>::zeros();
        for (i, (z, o)) in axes.iter().enumerate() {
            let lin = z.cross(&(p - o));
            j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            j.fixed_view_mut::<3, 1>(3, i).copy_from(z);
        }
        j
    }

    fn error(&self, q: &Joints, target: &Isometry3<f64>) -> Vector6<f64> {
        let cur = self.frames(q).0;
        let dp = target.translation.vector - cur.translation.vector;
        let dr = (target.rotation * cur.rotation.inverse()).scaled_axis();
        Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
    }

    fn converged(e: &Vector6<f64>, opts: &IkOptions) -> bool {
        e.fixed_rows::<3>(0).norm() < opts.position_tolerance && e.fixed_rows::<3>(3).norm() < opts.orientation_tolerance
    }

    fn solve_from(&self, target: &Isometry3<f64>, mut q: Joints, opts: &IkOptions) -> (Joints, Vector6<f64>, bool) {
        let mut lambda = opts.damping;
        let mut e = self.error(&q, target);
        for _ in 0..opts.max_iterations {
            if Self::converged(&e, opts) {
                return (q, e, true);
            }
            let j = self.jacobian(&q);
            let jjt: Matrix6<f64> = j * j.transpose() + Matrix6::identity() * (lambda * lambda);
            let Some(y) = jjt.cholesky().map(|c| c.solve(&e)) else {
                break;
            };
            let dq = j.transpose() * y;
            // keep steps inside the linear regime
            let scale = (0.5 / dq.amax()).min(1.0);
            let mut next = q;
            for (v, d) in next.iter_mut().zip(dq.iter()) {
                *v += d * scale;
            }
            self.clamp(&mut next);
            let e_next = self.error(&next, target);
            if e_next.norm() < e.norm() {
                q = next;
                e = e_next;
                lambda = (lambda * 0.3).max(1e-9);
            } else {
                lambda = (lambda * 4.0).min(1.0);
            }
        }
        let ok = Self::converged(&e, opts);
        (q, e, ok)
    }

    /// Damped least squares from `seed`, then from deterministic restarts.
    pub fn ik(&self, target: &Pose7, seed: &Joints, opts: &IkOptions) -> Result<Joints> {
        if target.to_vec7().iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite target pose".into()));
        }
        self.check_limits(seed)?;
        let goal = target.isometry();
        let (mut best_q, mut best_e, ok) = self.solve_from(&goal, *seed, opts);
        if ok {
            return Ok(best_q);
        }
        let mut rng = seeded(0x1c);
        for _ in 0..opts.restarts {
            let start: Joints = std::array::from_fn(|i| {
                let [lo, hi] = self.joints[i].limits;
                rand::Rng::random_range(&mut rng, lo * 0.8..hi * 0.8)
            });
            let (q, e, ok) = self.solve_from(&goal, start, opts);
            if ok {
                return Ok(q);
            }
            if e.norm() < best_e.norm() {
                best_q = q;
                best_e = e;
            }
        }
        let _ = best_q;
        Err(Error::Unreachable {
            position: best_e.fixed_rows::<3>(0).norm(),
            orientation: best_e.fixed_rows::<3>(3).norm(),
            iterations: opts.max_iterations * (opts.restarts + 1),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_q(chain: &KinematicChain, rng: &mut impl Rng) -> Joints {
        std::array::from_fn(|i| {
            let [lo, hi] = chain.joints[i].limits;
            rng.random_range(lo..hi)
        })
    }

    #[test]
    fn zero_pose_stacks_offsets() {
        let c = KinematicChain::arm7();
        let p = c.fk(&[0.0; 7]).unwrap();
        assert!((p.x).abs() < 1e-12 && (p.y).abs() < 1e-12);
        assert!((p.z - (0.36 + 0.42 + 0.4 + 0.126 + 0.1)).abs() < 1e-12);
        assert_eq!(p.quaternion(), [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn first_joint_half_turn() {
        let c = KinematicChain::arm7();
        let bent = [0.0, 0.6, 0.0, -0.9, 0.0, 0.4, 0.0];
        let a = c.fk(&bent).unwrap();
        let mut turned = bent;
        turned[0] = std::f64::consts::PI * 0.94;
        let b = c.fk(&turned).unwrap();
        let r = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), turned[0]);
        let expect = r * Vector3::new(a.x, a.y, a.z);
        assert!((b.x - expect.x).abs() < 1e-12 && (b.y - expect.y).abs() < 1e-12);
        assert!((b.z - a.z).abs() < 1e-12);
    }

    #[test]
    fn limits_are_enforced() {
        let c = KinematicChain::arm7();
        let e = c.fk(&[0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(e, Error::JointLimit { index: 1, .. }));
    }

    #[test]
    fn bad_chain_rejected() {
        let mut c = KinematicChain::arm7();
        c.joints.pop();
        assert!(c.validate().is_err());
        let mut c = KinematicChain::arm7();
        c.joints[2].axis = [0.0, 0.0, 2.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let c = KinematicChain::arm7();
        let q = [0.1, 0.5, -0.3, -1.0, 0.2, 0.7, 0.4];
        let j = c.jacobian(&q);
        let h = 1e-7;
        for i in 0..7 {
            let (mut a, mut b) = (q, q);
            a[i] += h;
            b[i] -= h;
            let pa = c.frames(&a).0.translation.vector;
            let pb = c.frames(&b).0.translation.vector;
            let fd = (pa - pb) / (2.0 * h);
            for k in 0..3 {
                assert!((fd[k] - j[(k, i)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn seed_at_target_returns_seed() {
        let c = KinematicChain::arm7();
        let q = [0.1, 0.5, -0.3, -1.0, 0.2, 0.7, 0.4];
        let target = c.fk(&q).unwrap();
        assert_eq!(c.ik(&target, &q, &IkOptions::default()).unwrap(), q);
    }

    #[test]
    fn far_target_unreachable() {
        let c = KinematicChain::arm7();
        let t = Pose7::new([10.0, 0.0, 0.5], [0.0, 0.0, 0.0, 1.0]).unwrap();
        let opts = IkOptions { restarts: 1, ..Default::default() };
        assert!(matches!(c.ik(&t, &[0.0; 7], &opts), Err(Error::Unreachable { .. })));
    }

    #[test]
    fn round_trip_random_targets() {
        let c = KinematicChain::arm7();
        let mut rng = seeded(42);
        let opts = IkOptions::default();
        let seed = [0.0, 0.4, 0.0, -1.2, 0.0, 0.6, 0.0];
        for _ in 0..25 {
            let target = c.fk(&random_q(&c, &mut rng)).unwrap();
            let q = c.ik(&target, &seed, &opts).unwrap();
            let (dp, da) = c.fk(&q).unwrap().distance(&target);
            assert!(dp < 1e-4 && da < 1e-3, "{dp} {da}");
        }
    }
}
