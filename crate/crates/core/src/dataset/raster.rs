use super::scene::Scene;
use crate::geometry::{GraspMaps, GraspRect};

/// Widths are clipped to this many pixels in training targets.
pub const W_MAX: f64 = 150.0;

/// Training targets share the layout of predicted maps.
pub type TargetMaps = GraspMaps<f32>;

/// Whether `p` lies in the central third of `rect` along its gripper axis
/// (boundary inclusive).
pub fn central_third_contains(rect: &GraspRect<f64>, p: [f64; 2]) -> bool {
    let [cu, cv] = rect.center();
    let (s, c) = rect.angle().sin_cos();
    let (du, dv) = (p[0] - cu, p[1] - cv);
    let along = du * c + dv * s;
    let across = -du * s + dv * c;
    along.abs() <= rect.width() / 6.0 && across.abs() <= rect.height() / 2.0
}

/// Paint the central third of every positive rectangle; later rectangles
/// overwrite earlier ones.
///
/// Pixel (r, c) has its center at (u, v) = (c, r) in output coordinates; when
/// the output is smaller than the image, coordinates and widths are scaled.
pub fn rasterize_targets(scene: &Scene, out_h: usize, out_w: usize) -> TargetMaps {
    let mut maps = GraspMaps::zeros(out_h, out_w);
    if out_h == 0 || out_w == 0 {
        return maps;
    }
    let (sy, sx) = (
        out_h as f64 / scene.height().max(1) as f64,
        out_w as f64 / scene.width().max(1) as f64,
    );
    let to_img = |u: f64, v: f64| [(u + 0.5) / sx - 0.5, (v + 0.5) / sy - 0.5];
    let to_out = |p: [f64; 2]| [(p[0] + 0.5) * sx - 0.5, (p[1] + 0.5) * sy - 0.5];
    let wscale = 0.5 * (sx + sy);
    for rect in &scene.positive {
        let theta = rect.angle();
        let (c2, s2) = ((2.0 * theta).cos() as f32, (2.0 * theta).sin() as f32);
        let w = (rect.width() * wscale).clamp(0.0, W_MAX) as f32;
        let pts = rect.vertices().map(to_out);
        let lo = |k: usize| pts.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let hi = |k: usize, n: usize| {
            let m = pts.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max).ceil();
            if m < 0.0 {
                0
            } else {
                (m as usize + 1).min(n)
            }
        };
        for r in lo(1)..hi(1, out_h) {
            for c in lo(0)..hi(0, out_w) {
                if central_third_contains(rect, to_img(c as f64, r as f64)) {
                    maps.quality[[r, c]] = 1.0;
                    maps.cos2[[r, c]] = c2;
                    maps.sin2[[r, c]] = s2;
                    maps.width[[r, c]] = w;
                }
            }
        }
    }
    maps
}
