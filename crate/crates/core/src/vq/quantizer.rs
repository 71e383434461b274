use ndarray::{Array2, Array3, Array4};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// K×D dictionary of latent embeddings; row `k` is embedding `e_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    embeddings: Array2<T>,
}

impl<T: Scalar> Codebook<T> {
    pub fn new(embeddings: Array2<T>) -> Result<Self> {
        let (k, d) = embeddings.dim();
        if k < 2 || d < 1 {
            return Err(Error::Config(format!("codebook needs K >= 2 and D >= 1, got {k}x{d}")));
        }
        if embeddings.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("codebook contains NaN or Inf".into()));
        }
        Ok(Codebook { embeddings })
    }

    /// Uniform in [−1/K, 1/K].
    pub fn init<R: Rng>(k: usize, d: usize, rng: &mut R) -> Result<Self> {
        let b = 1.0 / k as f64;
        Self::new(Array2::from_shape_simple_fn((k, d), || T::of(rng.random_range(-b..=b))))
    }

    pub fn size(&self) -> usize {
        self.embeddings.dim().0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim().1
    }

    pub fn embeddings(&self) -> &Array2<T> {
        &self.embeddings
    }

    pub(crate) fn embeddings_mut(&mut self) -> &mut Array2<T> {
        &mut self.embeddings
    }

    /// Index of the nearest embedding (squared L2); ties go to the smallest index.
    pub fn nearest(&self, v: &[T]) -> usize {
        let mut best = 0;
        let mut best_d = T::infinity();
        for (k, row) in self.embeddings.outer_iter().enumerate() {
            let mut d = T::zero();
            for (a, b) in v.iter().zip(row.iter()) {
                let t = *a - *b;
                d += t * t;
            }
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }
}

/// Quantize an `N × D × h × w` encoder output. Returns `z_q` (same shape)
/// and the `N × h × w` code indices.
pub fn quantize<T: Scalar>(z_e: &Array4<T>, codebook: &Codebook<T>) -> Result<(Array4<T>, Array3<usize>)> {
    let (n, d, h, w) = z_e.dim();
    if d != codebook.dim() {
        return Err(Error::Config(format!(
            "encoder output has {d} channels but codebook dimension is {}",
            codebook.dim()
        )));
    }
    if z_e.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN in encoder output".into()));
    }
    let mut z_q = Array4::zeros(z_e.dim());
    let mut idx = Array3::zeros((n, h, w));
    let mut cell = vec![T::zero(); d];
    for s in 0..n {
        for i in 0..h {
            for j in 0..w {
                for (c, v) in cell.iter_mut().enumerate() {
                    *v = z_e[[s, c, i, j]];
                }
                let k = codebook.nearest(&cell);
                idx[[s, i, j]] = k;
                for c in 0..d {
                    z_q[[s, c, i, j]] = codebook.embeddings[[k, c]];
                }
            }
        }
    }
    Ok((z_q, idx))
}

/// Rebuild `z_q` from indices.
pub fn lookup<T: Scalar>(indices: &Array3<usize>, codebook: &Codebook<T>) -> Array4<T> {
    let (n, h, w) = indices.dim();
    let d = codebook.dim();
    Array4::from_shape_fn((n, d, h, w), |(s, c, i, j)| codebook.embeddings[[indices[[s, i, j]], c]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded;
    use ndarray::array;

    #[test]
    fn nearest_of_two() {
        let cb = Codebook::new(array![[0.0_f64], [1.0]]).unwrap();
        let z = Array4::from_elem((1, 1, 1, 1), 0.2);
        let (zq, idx) = quantize(&z, &cb).unwrap();
        assert_eq!(idx[[0, 0, 0]], 0);
        assert_eq!(zq[[0, 0, 0, 0]], 0.0);
    }

    #[test]
    fn exact_match_and_ties() {
        let cb = Codebook::new(array![[0.5_f64, 0.5], [0.0, 1.0], [0.5, 0.5]]).unwrap();
        assert_eq!(cb.nearest(&[0.0, 1.0]), 1);
        assert_eq!(cb.nearest(&[0.5, 0.5]), 0);
        // equidistant between rows 0 and 1 -> smallest index
        assert_eq!(cb.nearest(&[0.25, 0.75]), 0);
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = seeded(11);
        let cb = Codebook::<f64>::new(Array2::from_shape_simple_fn((4, 2), || rng.random_range(-1.0..1.0))).unwrap();
        let z = Array4::from_shape_simple_fn((2, 2, 5, 5), || rng.random_range(-1.5..1.5));
        let (zq, idx) = quantize(&z, &cb).unwrap();
        for ((s, i, j), &k) in idx.indexed_iter() {
            let dist = |r: usize| (0..2).map(|c| (z[[s, c, i, j]] - cb.embeddings()[[r, c]]).powi(2)).sum::<f64>();
            let brute = (0..4).min_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap()).unwrap();
            assert_eq!(k, brute);
            for c in 0..2 {
                assert_eq!(zq[[s, c, i, j]], cb.embeddings()[[k, c]]);
            }
        }
        assert_eq!(lookup(&idx, &cb), zq);
    }

    #[test]
    fn errors() {
        let cb = Codebook::new(array![[0.0_f64], [1.0]]).unwrap();
        assert!(matches!(quantize(&Array4::from_elem((1, 1, 1, 1), f64::NAN), &cb), Err(Error::Numeric(_))));
        assert!(quantize(&Array4::zeros((1, 2, 1, 1)), &cb).is_err());
        assert!(Codebook::new(array![[0.0_f64]]).is_err());
        assert!(Codebook::new(array![[0.0_f64], [f64::INFINITY]]).is_err());
    }

    #[test]
    fn init_range() {
        let cb = Codebook::<f32>::init(128, 64, &mut seeded(0)).unwrap();
        assert!(cb.embeddings().iter().all(|v| v.abs() <= 1.0 / 128.0));
    }
}
