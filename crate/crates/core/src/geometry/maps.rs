use ndarray::{Array2, Zip};
use serde::Serialize;

use super::grasp::GraspPose2D;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pixel-wise grasp maps of shape H×W.
///
/// The angle map is carried as the pair (cos 2φ, sin 2φ) so that the
/// regression target is continuous across the θ ≡ θ + π wrap.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspMaps<T> {
    pub quality: Array2<T>,
    pub cos2: Array2<T>,
    pub sin2: Array2<T>,
    /// Gripper opening width in pixels.
    pub width: Array2<T>,
}

impl<T: Scalar> GraspMaps<T> {
    pub fn new(quality: Array2<T>, cos2: Array2<T>, sin2: Array2<T>, width: Array2<T>) -> Result<Self> {
        let dim = quality.dim();
        if cos2.dim() != dim || sin2.dim() != dim || width.dim() != dim {
            return Err(Error::Domain(format!(
                "grasp maps disagree in shape: Q {:?}, cos {:?}, sin {:?}, W {:?}",
                dim,
                cos2.dim(),
                sin2.dim(),
                width.dim()
            )));
        }
        Ok(GraspMaps {
            quality,
            cos2,
            sin2,
            width,
        })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        GraspMaps {
            quality: Array2::zeros((h, w)),
            cos2: Array2::zeros((h, w)),
            sin2: Array2::zeros((h, w)),
            width: Array2::zeros((h, w)),
        }
    }

    /// (rows, cols)
    pub fn dim(&self) -> (usize, usize) {
        self.quality.dim()
    }

    /// Φ = ½·atan2(sin 2φ, cos 2φ), in (−π/2, π/2].
    pub fn angle(&self) -> Array2<T> {
        let half = T::of(0.5);
        Zip::from(&self.sin2)
            .and(&self.cos2)
            .map_collect(|&s, &c| super::angle::normalize_unchecked(half * s.atan2(c)))
    }

    pub fn cast<U: Scalar>(&self) -> GraspMaps<U> {
        let c = |a: &Array2<T>| a.mapv(|x| U::of(x.as_f64()));
        GraspMaps {
            quality: c(&self.quality),
            cos2: c(&self.cos2),
            sin2: c(&self.sin2),
            width: c(&self.width),
        }
    }
}

/// Result of picking a grasp from maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar + Serialize")]
pub struct MapGrasp<T> {
    pub grasp: GraspPose2D<T>,
    /// Set when the quality map carries no positive value at all.
    pub no_grasp: bool,
    /// Pixel (row, col) the grasp was read from.
    pub pixel: (usize, usize),
}

/// Separable Gaussian blur with edge-replicating borders.
pub fn gaussian_blur<T: Scalar>(img: &Array2<T>, sigma: T) -> Array2<T> {
    if sigma <= T::zero() {
        return img.clone();
    }
    let radius = (sigma * T::of(3.0)).ceil().to_usize().unwrap_or(0).max(1);
    let two_s2 = T::of(2.0) * sigma * sigma;
    let mut kernel: Vec<T> = (0..=2 * radius)
        .map(|i| {
            let d = T::of(i as f64 - radius as f64);
            (-(d * d) / two_s2).exp()
        })
        .collect();
    let total = kernel.iter().copied().fold(T::zero(), |a, b| a + b);
    kernel.iter_mut().for_each(|k| *k /= total);

    let (h, w) = img.dim();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let mut acc = T::zero();
            for (k, &kv) in kernel.iter().enumerate() {
                let cc = clamp(c as isize + k as isize - radius as isize, w);
                acc += kv * img[[r, cc]];
            }
            tmp[[r, c]] = acc;
        }
    }
    let mut out = Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let mut acc = T::zero();
            for (k, &kv) in kernel.iter().enumerate() {
                let rr = clamp(r as isize + k as isize - radius as isize, h);
                acc += kv * tmp[[rr, c]];
            }
            out[[r, c]] = acc;
        }
    }
    out
}

/// Row-major first maximum: ties go to the smallest row, then column.
pub fn argmax_row_major<T: Scalar>(a: &Array2<T>) -> (usize, usize) {
    let mut best = (0, 0);
    let mut best_val = T::neg_infinity();
    for ((r, c), &x) in a.indexed_iter() {
        if x > best_val {
            best_val = x;
            best = (r, c);
        }
    }
    best
}

/// Pick the best grasp: the pixel with the highest (optionally smoothed)
/// quality. Width is floored at one pixel so the grasp stays valid.
pub fn grasp_from_maps<T: Scalar>(maps: &GraspMaps<T>, smooth_sigma: T) -> Result<MapGrasp<T>> {
    if !(smooth_sigma >= T::zero()) {
        return Err(Error::Domain(format!("smoothing sigma must be >= 0, got {smooth_sigma}")));
    }
    let (h, w) = maps.dim();
    if h == 0 || w == 0 {
        return Err(Error::Domain("empty grasp maps".into()));
    }
    let no_grasp = !maps.quality.iter().any(|&q| q > T::zero());
    let (r, c) = if no_grasp {
        (h / 2, w / 2)
    } else if smooth_sigma > T::zero() {
        argmax_row_major(&gaussian_blur(&maps.quality, smooth_sigma))
    } else {
        argmax_row_major(&maps.quality)
    };
    let half = T::of(0.5);
    let angle = half * maps.sin2[[r, c]].atan2(maps.cos2[[r, c]]);
    let width = maps.width[[r, c]].max(T::one());
    let quality = if no_grasp {
        T::zero()
    } else {
        maps.quality[[r, c]].max(T::zero()).min(T::one())
    };
    let grasp = GraspPose2D::new(T::of(c as f64), T::of(r as f64), angle, width, quality)?;
    Ok(MapGrasp {
        grasp,
        no_grasp,
        pixel: (r, c),
    })
}
