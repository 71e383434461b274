use ndarray::{Array2, Array4};

use crate::dataset::TargetMaps;
use crate::error::{Error, Result};
use crate::geometry::GraspMaps;
use crate::nn::sigmoid;
use crate::scalar::Scalar;

fn mse2<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> T {
    let n = T::of(a.len().max(1) as f64);
    a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>() / n
}

/// mse(Q) + mse(cos 2φ) + mse(sin 2φ) + mse(W / width_scale).
pub fn grasp_loss<T: Scalar>(pred: &GraspMaps<T>, target: &GraspMaps<T>, width_scale: f64) -> Result<T> {
    if pred.dim() != target.dim() {
        return Err(Error::Domain(format!(
            "prediction {:?} and target {:?} differ in shape",
            pred.dim(),
            target.dim()
        )));
    }
    let scale = T::of(1.0 / width_scale);
    Ok(mse2(&pred.quality, &target.quality)
        + mse2(&pred.cos2, &target.cos2)
        + mse2(&pred.sin2, &target.sin2)
        + mse2(&pred.width.mapv(|w| w * scale), &target.width.mapv(|w| w * scale)))
}

/// Batch-mean [`grasp_loss`] evaluated on raw network output, with its
/// gradient with respect to that output.
pub fn grasp_loss_raw<T: Scalar>(
    raw: &Array4<T>,
    targets: &[&TargetMaps],
    width_scale: f64,
) -> Result<(T, Array4<T>)> {
    let (n, c, h, w) = raw.dim();
    if c != 4 || n != targets.len() {
        return Err(Error::Domain(format!("raw output {:?} does not match {} targets", raw.dim(), targets.len())));
    }
    let mut grad = Array4::zeros(raw.raw_dim());
    let mut total = T::zero();
    let k = T::of(2.0 / (n * h * w) as f64);
    let inv_n = T::of(1.0 / n as f64);
    let pix = T::of((h * w) as f64);
    let wscale = T::of(1.0 / width_scale);
    for (i, t) in targets.iter().enumerate() {
        if t.dim() != (h, w) {
            return Err(Error::Domain(format!("target {:?} does not match output {h}x{w}", t.dim())));
        }
        let mut sq = T::zero();
        for r in 0..h {
            for col in 0..w {
                let q = sigmoid(raw[[i, 0, r, col]]);
                let dq = q - T::of(t.quality[[r, col]] as f64);
                let dc = raw[[i, 1, r, col]] - T::of(t.cos2[[r, col]] as f64);
                let ds = raw[[i, 2, r, col]] - T::of(t.sin2[[r, col]] as f64);
                let dw = raw[[i, 3, r, col]] - T::of(t.width[[r, col]] as f64) * wscale;
                sq += dq * dq + dc * dc + ds * ds + dw * dw;
                grad[[i, 0, r, col]] = k * dq * q * (T::one() - q);
                grad[[i, 1, r, col]] = k * dc;
                grad[[i, 2, r, col]] = k * ds;
                grad[[i, 3, r, col]] = k * dw;
            }
        }
        total += sq / pix;
    }
    Ok((total * inv_n, grad))
}
