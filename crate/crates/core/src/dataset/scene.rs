use std::path::{Path, PathBuf};

use image::{imageops, ImageBuffer, Rgb, RgbImage};
use log::warn;
use ndarray::{Array3, Array4, Axis};

use crate::error::{Error, Result};
use crate::geometry::GraspRect;

/// One image with its annotated grasp rectangles.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    /// H×W×C, values in [0, 1].
    pub image: Array3<f32>,
    pub positive: Vec<GraspRect<f64>>,
    pub negative: Vec<GraspRect<f64>>,
    /// Annotations dropped while loading (NaN vertices, degenerate quads).
    pub skipped: usize,
}

impl Scene {
    pub fn new(id: impl Into<String>, image: Array3<f32>, positive: Vec<GraspRect<f64>>) -> Self {
        Scene {
            id: id.into(),
            image,
            positive,
            negative: Vec::new(),
            skipped: 0,
        }
    }

    pub fn height(&self) -> usize {
        self.image.dim().0
    }

    pub fn width(&self) -> usize {
        self.image.dim().1
    }

    pub fn channels(&self) -> usize {
        self.image.dim().2
    }

    /// The image as a C×H×W array.
    pub fn chw(&self) -> Array3<f32> {
        self.image.view().permuted_axes([2, 0, 1]).as_standard_layout().to_owned()
    }

    /// A copy without any annotations.
    pub fn unlabelled(&self) -> Scene {
        Scene {
            positive: Vec::new(),
            negative: Vec::new(),
            ..self.clone()
        }
    }
}

/// Stack scene images into an N×C×H×W batch.
pub fn batch_of(scenes: &[&Scene]) -> Array4<f32> {
    let chw: Vec<Array3<f32>> = scenes.iter().map(|s| s.chw()).collect();
    let views: Vec<_> = chw.iter().map(|a| a.view()).collect();
    ndarray::stack(Axis(0), &views).expect("scenes share a shape")
}

/// RGB image as H×W×3 values in [0, 1].
pub fn read_rgb(path: &Path) -> Result<Array3<f32>> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(Array3::from_shape_fn((h as usize, w as usize, 3), |(r, c, k)| {
        img.get_pixel(c as u32, r as u32)[k] as f32 / 255.0
    }))
}

/// Clamp to [0, 1] and quantize to 8-bit RGB.
pub fn to_rgb8(image: &Array3<f32>) -> RgbImage {
    let (h, w, c) = image.dim();
    ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let px = |k: usize| {
            let v = image[[y as usize, x as usize, k.min(c - 1)]];
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        };
        Rgb([px(0), px(1), px(2)])
    })
}

/// Crop the central square and resize it to `size × size`, carrying the
/// rectangles along.
pub fn center_crop_resize(scene: &Scene, size: usize) -> Result<Scene> {
    if size == 0 {
        return Err(Error::Domain("resize target must be positive".into()));
    }
    let (h, w, c) = scene.image.dim();
    let side = h.min(w);
    let (top, left) = ((h - side) / 2, (w - side) / 2);
    let buf: ImageBuffer<Rgb<f32>, Vec<f32>> = ImageBuffer::from_fn(side as u32, side as u32, |x, y| {
        let p = |k: usize| scene.image[[top + y as usize, left + x as usize, k.min(c - 1)]];
        Rgb([p(0), p(1), p(2)])
    });
    let resized = imageops::resize(&buf, size as u32, size as u32, imageops::FilterType::Triangle);
    let image = Array3::from_shape_fn((size, size, 3), |(r, col, k)| resized.get_pixel(col as u32, r as u32)[k]);
    // pixel centers: p' = (p - offset + 0.5) * s - 0.5
    let s = size as f64 / side as f64;
    let map = |p: [f64; 2]| [(p[0] - left as f64 + 0.5) * s - 0.5, (p[1] - top as f64 + 0.5) * s - 0.5];
    let carry = |rects: &[GraspRect<f64>]| -> Result<Vec<GraspRect<f64>>> { rects.iter().map(|r| r.map_points(map)).collect() };
    Ok(Scene {
        id: scene.id.clone(),
        image,
        positive: carry(&scene.positive)?,
        negative: carry(&scene.negative)?,
        skipped: scene.skipped,
    })
}

/// Write one directory per scene holding `image.png` and `grasps.json`.
pub fn export_scenes(scenes: &[Scene], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::with_capacity(scenes.len());
    for s in scenes {
        let sub = dir.join(&s.id);
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let png = sub.join("image.png");
        to_rgb8(&s.image).save(&png)?;
        let json = serde_json::to_vec_pretty(&s.positive)?;
        crate::nn::write_atomic(&sub.join("grasps.json"), &json)?;
        out.push(sub);
    }
    Ok(out)
}

/// Read scenes written by [`export_scenes`], sorted by id.
pub fn import_scenes(dir: &Path) -> Result<Vec<Scene>> {
    let mut subs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("image.png").is_file())
        .collect();
    subs.sort();
    let mut scenes = Vec::with_capacity(subs.len());
    for sub in subs {
        let image = read_rgb(&sub.join("image.png"))?;
        let gj = sub.join("grasps.json");
        let text = std::fs::read_to_string(&gj).map_err(|e| Error::io(&gj, e))?;
        let positive: Vec<GraspRect<f64>> =
            serde_json::from_str(&text).map_err(|e| Error::format(&gj, e.to_string()))?;
        let id = sub.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        scenes.push(Scene::new(id, image, positive));
    }
    Ok(scenes)
}

/// Load either an exported scene directory or a Cornell-layout tree.
/// Cornell images are center-cropped and resized to `cornell_size`.
pub fn load_dataset(dir: &Path, cornell_size: usize) -> Result<Vec<Scene>> {
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found")));
    }
    let scenes = import_scenes(dir)?;
    if !scenes.is_empty() {
        return Ok(scenes);
    }
    let raw = super::cornell::load_cornell_dir(dir)?;
    if raw.is_empty() {
        return Err(Error::format(dir, "no scenes found (expected <id>/image.png or pcdXXXXr.png files)"));
    }
    let skipped: usize = raw.iter().map(|s| s.skipped).sum();
    if skipped > 0 {
        warn!("skipped {skipped} malformed Cornell rectangles");
    }
    raw.iter().map(|s| center_crop_resize(s, cornell_size)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GraspPose2D;

    fn scene() -> Scene {
        let img = Array3::from_shape_fn((64, 80, 3), |(r, c, k)| ((r * 3 + c * 5 + k * 7) % 255) as f32 / 255.0);
        let rect = GraspPose2D::new(40.0, 30.0, 0.3, 20.0, 1.0).unwrap().to_rect();
        Scene::new("s0", img, vec![rect])
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = scene();
        export_scenes(std::slice::from_ref(&s), dir.path()).unwrap();
        let back = import_scenes(dir.path()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].id, "s0");
        assert_eq!(back[0].positive, s.positive);
        let err = back[0].image.iter().zip(s.image.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(err <= 0.5 / 255.0 + 1e-6);
    }

    #[test]
    fn crop_resize_moves_rectangles() {
        let s = center_crop_resize(&scene(), 32).unwrap();
        assert_eq!(s.image.dim(), (32, 32, 3));
        let [u, v] = s.positive[0].center();
        // crop offset 8 in x, scale 0.5
        assert!((u - ((40.0 - 8.0 + 0.5) * 0.5 - 0.5)).abs() < 1e-9);
        assert!((v - ((30.0 + 0.5) * 0.5 - 0.5)).abs() < 1e-9);
        assert!((s.positive[0].width() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn chw_layout() {
        let s = scene();
        let c = s.chw();
        assert_eq!(c.dim(), (3, 64, 80));
        assert_eq!(c[[2, 5, 7]], s.image[[5, 7, 2]]);
    }
}
