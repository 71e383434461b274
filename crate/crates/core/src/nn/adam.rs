use ndarray::{ArrayD, ArrayViewMutD, Zip};

use crate::scalar::Scalar;

/// Adaptive-moment gradient descent with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: i32,
    m: Vec<ArrayD<T>>,
    v: Vec<ArrayD<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T) -> Self {
        Adam {
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// Update `params` in place. The parameter list must keep the same
    /// order and shapes between calls.
    pub fn update(&mut self, params: Vec<ArrayViewMutD<'_, T>>, grads: &[ArrayD<T>]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| ArrayD::zeros(g.raw_dim())).collect();
            self.v = grads.iter().map(|g| ArrayD::zeros(g.raw_dim())).collect();
        }
        self.step += 1;
        let c1 = T::one() - self.beta1.powi(self.step);
        let c2 = T::one() - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((mut p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    #[test]
    fn minimizes_quadratic() {
        let mut x = arr1(&[3.0_f64, -2.0]).into_dyn();
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let g = x.mapv(|v| 2.0 * v);
            opt.update(vec![x.view_mut()], &[g]);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2), "{x:?}");
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut x = arr1(&[1.0_f64]).into_dyn();
        let mut opt = Adam::new(0.01);
        opt.update(vec![x.view_mut()], &[arr1(&[5.0]).into_dyn()]);
        assert!((x[0] - 0.99).abs() < 1e-9);
    }
}
