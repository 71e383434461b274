//! The VQ-VAE objective and its stop-gradient-aware gradients.
//!
//! ```text
//! L = mse(x, x̂) + ‖sg[z_e] − e‖² + β‖z_e − sg[e]‖²
//! ```
//!
//! The reconstruction term stands in for −log p(x | z_q) under a
//! fixed-variance Gaussian. Both codebook terms are averaged over latent
//! cells (squared norms summed over the D channels of a cell).

use ndarray::{Array2, Array3, Array4, Zip};
use serde::{Deserialize, Serialize};

use super::quantizer::Codebook;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VqLossBreakdown {
    pub recon_term: f64,
    pub dict_term: f64,
    pub commit_term: f64,
    pub beta: f64,
    pub total: f64,
}

impl VqLossBreakdown {
    pub fn new(recon_term: f64, dict_term: f64, commit_term: f64, beta: f64) -> Self {
        VqLossBreakdown {
            recon_term,
            dict_term,
            commit_term,
            beta,
            total: recon_term + dict_term + beta * commit_term,
        }
    }
}

/// Gradients of the objective, split by where each may flow.
#[derive(Debug, Clone)]
pub struct VqGrads<T> {
    /// ∂L/∂x̂, fed to the decoder.
    pub recon: Array4<T>,
    /// β·∂commit/∂z_e, added to the straight-through decoder gradient.
    pub commit_ze: Array4<T>,
    /// ∂dict/∂e, nonzero only on selected rows.
    pub codebook: Array2<T>,
}

pub fn mse<T: Scalar>(a: &Array4<T>, b: &Array4<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::Config(format!("mse shape mismatch {:?} vs {:?}", a.dim(), b.dim())));
    }
    let n = T::of(a.len().max(1) as f64);
    let mut acc = T::zero();
    Zip::from(a).and(b).for_each(|&x, &y| acc += (x - y) * (x - y));
    Ok(acc / n)
}

/// Mean over latent cells of ‖z_e − z_q‖².
pub fn cell_sq_dist<T: Scalar>(z_e: &Array4<T>, z_q: &Array4<T>) -> Result<T> {
    let d = z_e.dim().1;
    Ok(mse(z_e, z_q)? * T::of(d as f64))
}

/// Evaluate the three terms. `z_q` must be the quantization of `z_e`.
pub fn vq_loss<T: Scalar>(
    image: &Array4<T>,
    recon: &Array4<T>,
    z_e: &Array4<T>,
    z_q: &Array4<T>,
    beta: f64,
) -> Result<VqLossBreakdown> {
    if !(beta > 0.0) {
        return Err(Error::Config(format!("commitment weight beta must be > 0, got {beta}")));
    }
    if z_e.dim() != z_q.dim() {
        return Err(Error::Config("z_e and z_q differ in shape".into()));
    }
    let recon_term = mse(image, recon)?.as_f64();
    // value-wise the dictionary and commitment terms coincide; they differ
    // only in which side the gradient reaches
    let d = cell_sq_dist(z_e, z_q)?.as_f64();
    Ok(VqLossBreakdown::new(recon_term, d, d, beta))
}

/// Gradients of [`vq_loss`] with the stop-gradient contract applied.
pub fn vq_grads<T: Scalar>(
    image: &Array4<T>,
    recon: &Array4<T>,
    z_e: &Array4<T>,
    z_q: &Array4<T>,
    indices: &Array3<usize>,
    codebook: &Codebook<T>,
    beta: f64,
) -> Result<VqGrads<T>> {
    if image.dim() != recon.dim() || z_e.dim() != z_q.dim() {
        return Err(Error::Config("vq_grads shape mismatch".into()));
    }
    let (n, d, h, w) = z_e.dim();
    let two = T::of(2.0);
    let inv_px = two / T::of(image.len() as f64);
    let recon_g = Zip::from(recon).and(image).map_collect(|&r, &x| (r - x) * inv_px);
    let cells = T::of((n * h * w) as f64);
    let scale = two * T::of(beta) / cells;
    let commit_ze = Zip::from(z_e).and(z_q).map_collect(|&e, &q| (e - q) * scale);
    let mut cb = Array2::zeros((codebook.size(), d));
    for s in 0..n {
        for i in 0..h {
            for j in 0..w {
                let k = indices[[s, i, j]];
                for c in 0..d {
                    cb[[k, c]] += two * (codebook.embeddings()[[k, c]] - z_e[[s, c, i, j]]) / cells;
                }
            }
        }
    }
    Ok(VqGrads {
        recon: recon_g,
        commit_ze,
        codebook: cb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded;
    use crate::vq::quantize;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn single_cell_hand_arithmetic() {
        let z_e = Array4::from_elem((1, 1, 1, 1), 0.3_f64);
        let z_q = Array4::from_elem((1, 1, 1, 1), 0.1_f64);
        let img = Array4::zeros((1, 1, 2, 2));
        let l = vq_loss(&img, &img, &z_e, &z_q, 0.25).unwrap();
        assert!((l.dict_term - 0.04).abs() < 1e-15);
        assert!((l.commit_term - 0.04).abs() < 1e-15);
        assert!((l.total - 0.05).abs() < 1e-15);
        assert_eq!(l.recon_term, 0.0);
    }

    #[test]
    fn terms_vanish_on_codebook_points() {
        let cb = Codebook::new(array![[0.1_f64, 0.2], [-0.3, 0.4]]).unwrap();
        let idx = Array3::from_shape_fn((2, 3, 3), |(s, i, j)| (s + i + j) % 2);
        let z_e = crate::vq::lookup(&idx, &cb);
        let (z_q, _) = quantize(&z_e, &cb).unwrap();
        let img = Array4::from_elem((2, 3, 4, 4), 0.5);
        let l = vq_loss(&img, &img, &z_e, &z_q, 0.25).unwrap();
        assert_eq!((l.dict_term, l.commit_term, l.recon_term), (0.0, 0.0, 0.0));
    }

    #[test]
    fn beta_must_be_positive() {
        let a = Array4::<f64>::zeros((1, 1, 1, 1));
        assert!(matches!(vq_loss(&a, &a, &a, &a, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seeded(3);
        let cb = Codebook::new(Array2::from_shape_simple_fn((5, 3), || rng.random_range(-1.0..1.0_f64))).unwrap();
        let z_e = Array4::from_shape_simple_fn((2, 3, 2, 3), || rng.random_range(-1.0..1.0_f64));
        let (z_q, idx) = quantize(&z_e, &cb).unwrap();
        let img = Array4::zeros((1, 1, 1, 1));
        let beta = 0.25;
        let g = vq_grads(&img, &img, &z_e, &z_q, &idx, &cb, beta).unwrap();
        let h = 1e-6;
        // dictionary term w.r.t. codebook rows, indices held fixed (sg on z_e)
        let dict = |cb: &Codebook<f64>| cell_sq_dist(&z_e, &crate::vq::lookup(&idx, cb)).unwrap();
        for k in 0..5 {
            for c in 0..3 {
                let mut p = cb.clone();
                let mut m = cb.clone();
                p.embeddings_mut()[[k, c]] += h;
                m.embeddings_mut()[[k, c]] -= h;
                let fd = (dict(&p) - dict(&m)) / (2.0 * h);
                let an = g.codebook[[k, c]];
                assert!((fd - an).abs() <= 1e-5 * fd.abs().max(1e-3), "e[{k},{c}] {fd} vs {an}");
            }
        }
        // commitment term w.r.t. z_e (sg on e)
        let commit = |z: &Array4<f64>| beta * cell_sq_dist(z, &z_q).unwrap();
        for flat in 0..z_e.len() {
            let mut p = z_e.clone();
            let mut m = z_e.clone();
            p.as_slice_mut().unwrap()[flat] += h;
            m.as_slice_mut().unwrap()[flat] -= h;
            let fd = (commit(&p) - commit(&m)) / (2.0 * h);
            let an = g.commit_ze.as_slice().unwrap()[flat];
            assert!((fd - an).abs() <= 1e-5 * fd.abs().max(1e-3), "z_e[{flat}] {fd} vs {an}");
        }
    }
}
