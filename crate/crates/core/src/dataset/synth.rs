use ndarray::Array3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use crate::geometry::{normalize_angle, GraspPose2D};
use crate::nn::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Bar,
    Ellipse,
}

/// One solid object on a flat background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthObject {
    pub shape: Shape,
    pub center: (f64, f64),
    /// Extent along the long axis.
    pub length: f64,
    pub thickness: f64,
    /// Direction of the long axis in image coordinates.
    pub angle: f64,
    pub foreground: [f32; 3],
    pub background: [f32; 3],
}

/// Clearance added to the object thickness to get the gripper opening.
const GRIP_MARGIN: f64 = 10.0;

/// Render `obj` and attach grasps across its long axis at the center and at
/// a quarter length either side.
pub fn synth_bar(h: usize, w: usize, obj: &SynthObject, id: impl Into<String>) -> Scene {
    let (s, c) = obj.angle.sin_cos();
    let (half_l, half_t) = (obj.length / 2.0, obj.thickness / 2.0);
    let inside = |u: f64, v: f64| {
        let (du, dv) = (u - obj.center.0, v - obj.center.1);
        let a = du * c + dv * s;
        let b = -du * s + dv * c;
        match obj.shape {
            Shape::Bar => a.abs() <= half_l && b.abs() <= half_t,
            Shape::Ellipse => (a / half_l).powi(2) + (b / half_t).powi(2) <= 1.0,
        }
    };
    let image = Array3::from_shape_fn((h, w, 3), |(r, col, k)| {
        if inside(col as f64, r as f64) {
            obj.foreground[k]
        } else {
            obj.background[k]
        }
    });
    let grasp_angle = normalize_angle(obj.angle + std::f64::consts::FRAC_PI_2).expect("finite angle");
    let positive = [0.0, -0.25, 0.25]
        .iter()
        .map(|&k| {
            let off = k * obj.length;
            let local = match obj.shape {
                Shape::Bar => obj.thickness,
                Shape::Ellipse => obj.thickness * (1.0 - (off / half_l).powi(2)).max(0.0).sqrt(),
            };
            let width = local + GRIP_MARGIN;
            GraspPose2D::new(obj.center.0 + off * c, obj.center.1 + off * s, grasp_angle, width, 1.0)
                .expect("positive width")
                .to_rect()
        })
        .collect();
    Scene::new(id, image, positive)
}

fn color<R: Rng>(rng: &mut R) -> [f32; 3] {
    [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]
}

fn luminance(c: &[f32; 3]) -> f32 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

/// `n` single-object scenes of size `h × w`, a pure function of `seed`.
pub fn synth_dataset(n: usize, seed: u64, h: usize, w: usize) -> Vec<Scene> {
    let mut rng = seeded(seed);
    let side = h.min(w) as f64;
    (0..n)
        .map(|i| {
            let shape = if rng.random_bool(0.5) { Shape::Bar } else { Shape::Ellipse };
            let length = rng.random_range(0.35..0.6) * side;
            let thickness = rng.random_range(0.1..0.18) * side;
            let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let reach = (length + thickness) / 2.0 + 2.0;
            let pick = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
                let (lo, hi) = (reach, n as f64 - 1.0 - reach);
                if lo < hi {
                    rng.random_range(lo..hi)
                } else {
                    (n as f64 - 1.0) / 2.0
                }
            };
            let center = (pick(&mut rng, w), pick(&mut rng, h));
            let background = color(&mut rng);
            let mut foreground = color(&mut rng);
            while (luminance(&foreground) - luminance(&background)).abs() < 0.3 {
                foreground = color(&mut rng);
            }
            let obj = SynthObject {
                shape,
                center,
                length,
                thickness,
                angle,
                foreground,
                background,
            };
            synth_bar(h, w, &obj, format!("synth{i:05}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::angle_diff;

    #[test]
    fn single_scene_has_grasps() {
        let s = synth_dataset(1, 7, 64, 64);
        assert_eq!(s.len(), 1);
        assert!(!s[0].positive.is_empty());
        assert_eq!(s[0].image.dim(), (64, 64, 3));
    }

    #[test]
    fn perpendicular_grasp() {
        let obj = SynthObject {
            shape: Shape::Bar,
            center: (64.0, 64.0),
            length: 60.0,
            thickness: 12.0,
            angle: 0.4,
            foreground: [1.0; 3],
            background: [0.0; 3],
        };
        let s = synth_bar(128, 128, &obj, "bar");
        let expect = normalize_angle(0.4 + std::f64::consts::FRAC_PI_2).unwrap();
        for r in &s.positive {
            assert!(angle_diff(r.angle(), expect) < 1e-12);
            assert!((r.width() - 22.0).abs() < 1e-9);
        }
        assert_eq!(s.image[[64, 64, 0]], 1.0);
        assert_eq!(s.image[[0, 0, 0]], 0.0);
    }

    #[test]
    fn deterministic() {
        assert_eq!(synth_dataset(5, 3, 64, 64), synth_dataset(5, 3, 64, 64));
        assert_ne!(synth_dataset(1, 3, 64, 64), synth_dataset(1, 4, 64, 64));
    }

    #[test]
    fn object_stays_in_frame() {
        for s in synth_dataset(50, 11, 64, 64) {
            for r in &s.positive {
                let [u, v] = r.center();
                assert!((0.0..64.0).contains(&u) && (0.0..64.0).contains(&v));
            }
        }
    }
}
