use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use crate::error::{Error, Result};
use crate::geometry::{convex_intersection, GraspRect};

/// Rotation about the image center, zoom about the center, then a shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub rotation: f64,
    /// Fraction of the image kept; 1 keeps everything.
    pub zoom: f64,
    /// (dx, dy) in pixels.
    pub crop_offset: (f64, f64),
}

impl AugmentParams {
    pub fn identity() -> Self {
        AugmentParams {
            rotation: 0.0,
            zoom: 1.0,
            crop_offset: (0.0, 0.0),
        }
    }
}

/// Parameters undoing `p` when `p.zoom == 1`.
pub fn inverse_params(p: &AugmentParams) -> AugmentParams {
    let (s, c) = p.rotation.sin_cos();
    let (dx, dy) = p.crop_offset;
    // offset' = -R(-r)·offset
    AugmentParams {
        rotation: -p.rotation,
        zoom: 1.0,
        crop_offset: (-(c * dx - s * dy), -(s * dx + c * dy)),
    }
}

struct Affine {
    cos: f64,
    sin: f64,
    zoom: f64,
    off: (f64, f64),
    center: (f64, f64),
}

impl Affine {
    fn forward(&self, p: [f64; 2]) -> [f64; 2] {
        let (x, y) = (p[0] - self.center.0, p[1] - self.center.1);
        let rx = self.cos * x + self.sin * y;
        let ry = -self.sin * x + self.cos * y;
        [
            (rx - self.off.0) / self.zoom + self.center.0,
            (ry - self.off.1) / self.zoom + self.center.1,
        ]
    }

    fn backward(&self, q: [f64; 2]) -> [f64; 2] {
        let rx = (q[0] - self.center.0) * self.zoom + self.off.0;
        let ry = (q[1] - self.center.1) * self.zoom + self.off.1;
        [
            self.cos * rx - self.sin * ry + self.center.0,
            self.sin * rx + self.cos * ry + self.center.1,
        ]
    }
}

fn sample(img: &Array3<f32>, x: f64, y: f64, k: usize) -> f32 {
    let (h, w, _) = img.dim();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
    let top = img[[y0, x0, k]] * (1.0 - fx) + img[[y0, x1, k]] * fx;
    let bot = img[[y1, x0, k]] * (1.0 - fx) + img[[y1, x1, k]] * fx;
    top * (1.0 - fy) + bot * fy
}

/// Apply one affine transform to the image (bilinear, edge-clamped) and to
/// every rectangle. Rectangles left entirely outside the frame are dropped.
pub fn augment(scene: &Scene, rotation: f64, zoom: f64, crop_offset: (f64, f64)) -> Result<Scene> {
    if !(0.5..=1.0).contains(&zoom) {
        return Err(Error::Domain(format!("zoom must be in [0.5, 1], got {zoom}")));
    }
    if !rotation.is_finite() || !crop_offset.0.is_finite() || !crop_offset.1.is_finite() {
        return Err(Error::Domain("augmentation parameters must be finite".into()));
    }
    let (h, w, c) = scene.image.dim();
    let (sin, cos) = rotation.sin_cos();
    let t = Affine {
        cos,
        sin,
        zoom,
        off: crop_offset,
        center: ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0),
    };
    let image = Array3::from_shape_fn((h, w, c), |(r, col, k)| {
        let [x, y] = t.backward([col as f64, r as f64]);
        sample(&scene.image, x, y, k)
    });
    let frame = [
        [-0.5, -0.5],
        [w as f64 - 0.5, -0.5],
        [w as f64 - 0.5, h as f64 - 0.5],
        [-0.5, h as f64 - 0.5],
    ];
    let carry = |rects: &[GraspRect<f64>]| -> Result<Vec<GraspRect<f64>>> {
        let mut out = Vec::with_capacity(rects.len());
        for r in rects {
            let m = r.map_points(|p| t.forward(p))?;
            if !convex_intersection(m.vertices(), &frame).is_empty() {
                out.push(m);
            }
        }
        Ok(out)
    };
    Ok(Scene {
        id: scene.id.clone(),
        image,
        positive: carry(&scene.positive)?,
        negative: carry(&scene.negative)?,
        skipped: scene.skipped,
    })
}
