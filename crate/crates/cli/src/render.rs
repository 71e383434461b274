//! Heat-map panels and the sweep chart, drawn straight into RGB buffers.

use graspkit::dataset::to_rgb8;
use graspkit::geometry::{GraspMaps, GraspRect};
use image::{imageops, Rgb, RgbImage};
use ndarray::{Array2, Array3};

const STOPS: [[f32; 3]; 5] = [
    [0.0, 0.0, 0.02],
    [0.34, 0.06, 0.43],
    [0.73, 0.21, 0.33],
    [0.98, 0.55, 0.04],
    [0.99, 1.0, 0.64],
];

/// Dark-to-bright sequential color scale on [0, 1].
pub fn heat(t: f32) -> Rgb<u8> {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (STOPS.len() - 1) as f32;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f32;
    let c = |k: usize| ((STOPS[i][k] * (1.0 - f) + STOPS[i + 1][k] * f) * 255.0).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// Cyclic hue for a π-periodic angle in (−π/2, π/2].
pub fn hue(angle: f32) -> Rgb<u8> {
    let h = ((angle / std::f32::consts::PI + 0.5).rem_euclid(1.0)) * 6.0;
    let x = 1.0 - ((h % 2.0) - 1.0).abs();
    let (r, g, b) = match h as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    Rgb([(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8])
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

/// Bresenham segment; pixels outside the image are skipped.
pub fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
    let (mut x0, mut y0) = (a.0.round() as i64, a.1.round() as i64);
    let (x1, y1) = (b.0.round() as i64, b.1.round() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, c);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn square(img: &mut RgbImage, x: f64, y: f64, r: i64, c: Rgb<u8>) {
    for dy in -r..=r {
        for dx in -r..=r {
            put(img, x.round() as i64 + dx, y.round() as i64 + dy, c);
        }
    }
}

fn map_image(a: &Array2<f32>, f: impl Fn(f32) -> Rgb<u8>) -> RgbImage {
    let (h, w) = a.dim();
    RgbImage::from_fn(w as u32, h as u32, |x, y| f(a[[y as usize, x as usize]]))
}

/// Input with the grasp rectangle, then Q, angle and width maps side by side.
pub fn grasp_panel(image: &Array3<f32>, maps: &GraspMaps<f32>, rect: Option<&GraspRect<f64>>) -> RgbImage {
    let (h, w) = maps.dim();
    let scale = (256 / h.max(w)).max(1) as u32;
    let up = |img: &RgbImage| {
        imageops::resize(img, w as u32 * scale, h as u32 * scale, imageops::FilterType::Nearest)
    };
    let mut input = up(&to_rgb8(image));
    if let Some(r) = rect {
        let s = scale as f64;
        let at = |p: [f64; 2]| ((p[0] + 0.5) * s - 0.5, (p[1] + 0.5) * s - 0.5);
        let v = r.vertices();
        for k in 0..4 {
            // jaw edges in red, opening edges in green
            let c = if k % 2 == 0 { Rgb([230, 30, 30]) } else { Rgb([30, 200, 60]) };
            line(&mut input, at(v[k]), at(v[(k + 1) % 4]), c);
        }
    }
    let q = up(&map_image(&maps.quality, heat));
    let angle = maps.angle();
    let phi = up(&RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (r, c) = (y as usize, x as usize);
        let Rgb(p) = hue(angle[[r, c]]);
        let k = maps.quality[[r, c]].clamp(0.0, 1.0);
        Rgb(p.map(|v| (v as f32 * k) as u8))
    }));
    let wmax = maps.width.iter().cloned().fold(0.0f32, f32::max).max(1e-6);
    let wmap = up(&map_image(&maps.width, |v| heat(v / wmax)));

    let gap = 4;
    let (pw, ph) = (w as u32 * scale, h as u32 * scale);
    let mut out = RgbImage::from_pixel(4 * pw + 3 * gap, ph, Rgb([255, 255, 255]));
    for (i, p) in [input, q, phi, wmap].iter().enumerate() {
        imageops::replace(&mut out, p, (i as u32 * (pw + gap)) as i64, 0);
    }
    out
}

/// Accuracy (%) against labelled ratio, with an optional dashed control line.
pub fn sweep_chart(points: &[(f64, f64)], control: Option<f64>) -> RgbImage {
    let (w, h) = (480u32, 320u32);
    let (left, right, top, bottom) = (40.0, 20.0, 20.0, 30.0);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let px = |r: f64| left + r * (w as f64 - left - right);
    let py = |a: f64| h as f64 - bottom - a / 100.0 * (h as f64 - top - bottom);
    let grid = Rgb([225, 225, 225]);
    for k in 0..=4 {
        let y = py(k as f64 * 25.0);
        line(&mut img, (px(0.0), y), (px(1.0), y), grid);
    }
    for k in 0..=10 {
        let x = px(k as f64 / 10.0);
        line(&mut img, (x, py(0.0)), (x, py(100.0)), grid);
        line(&mut img, (x, py(0.0)), (x, py(0.0) + 4.0), Rgb([0, 0, 0]));
    }
    line(&mut img, (px(0.0), py(0.0)), (px(1.0), py(0.0)), Rgb([0, 0, 0]));
    line(&mut img, (px(0.0), py(0.0)), (px(0.0), py(100.0)), Rgb([0, 0, 0]));
    if let Some(c) = control {
        let y = py(c.clamp(0.0, 100.0));
        let mut x = px(0.0);
        while x < px(1.0) {
            line(&mut img, (x, y), ((x + 6.0).min(px(1.0)), y), Rgb([120, 120, 120]));
            x += 12.0;
        }
    }
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let blue = Rgb([31, 90, 180]);
    for p in pts.windows(2) {
        line(&mut img, (px(p[0].0), py(p[0].1)), (px(p[1].0), py(p[1].1)), blue);
    }
    for &(r, a) in &pts {
        square(&mut img, px(r), py(a.clamp(0.0, 100.0)), 3, blue);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_endpoints() {
        assert_eq!(heat(0.0), Rgb([0, 0, 5]));
        assert_eq!(heat(1.0), Rgb([252, 255, 163]));
        assert_eq!(heat(f32::NAN), heat(0.0));
    }

    #[test]
    fn hue_is_pi_periodic() {
        let a = std::f32::consts::FRAC_PI_2;
        assert_eq!(hue(a), hue(-a + 1e-7));
    }

    #[test]
    fn line_hits_both_ends() {
        let mut img = RgbImage::new(10, 10);
        let c = Rgb([1, 2, 3]);
        line(&mut img, (1.0, 8.0), (7.0, 2.0), c);
        assert_eq!(*img.get_pixel(1, 8), c);
        assert_eq!(*img.get_pixel(7, 2), c);
        line(&mut img, (-5.0, -5.0), (20.0, 20.0), c);
        assert_eq!(*img.get_pixel(9, 9), c);
    }

    #[test]
    fn panel_layout() {
        let maps = GraspMaps::<f32>::zeros(16, 16);
        let img = Array3::zeros((16, 16, 3));
        let p = grasp_panel(&img, &maps, None);
        assert_eq!(p.height(), 256);
        assert_eq!(p.width(), 4 * 256 + 12);
    }
}
