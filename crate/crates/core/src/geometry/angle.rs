//! π-periodic gripper angles.
//!
//! A parallel-jaw grasp at angle θ is the same grasp as one at θ + π, so all
//! angles are reduced to the half-open interval (−π/2, π/2].

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Reduce `theta` modulo π into (−π/2, π/2].
pub fn normalize_angle<T: Scalar>(theta: T) -> Result<T> {
    if !theta.is_finite() {
        return Err(Error::Domain(format!("angle must be finite, got {theta}")));
    }
    Ok(normalize_unchecked(theta))
}

pub(crate) fn normalize_unchecked<T: Scalar>(theta: T) -> T {
    let pi = T::PI();
    let mut r = theta - pi * (theta / pi).floor();
    // floor can leave r == π after rounding for tiny negative theta
    if r >= pi {
        r -= pi;
    }
    if r > T::FRAC_PI_2() {
        r - pi
    } else {
        r
    }
}

/// Smallest difference between two grasp angles under θ ≡ θ + π, in [0, π/2].
pub fn angle_diff<T: Scalar>(a: T, b: T) -> T {
    let d = (normalize_unchecked(a) - normalize_unchecked(b)).abs();
    d.min(T::PI() - d).max(T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// Brute-force reduction: step by π until inside the interval.
    fn stepwise(mut t: f64) -> f64 {
        while t > FRAC_PI_2 {
            t -= PI;
        }
        while t <= -FRAC_PI_2 {
            t += PI;
        }
        t
    }

    #[test]
    fn examples() {
        assert_eq!(normalize_angle(0.0_f64).unwrap(), 0.0);
        assert!(normalize_angle(PI).unwrap().abs() < 1e-15);
        let r = normalize_angle(2.0_f64).unwrap();
        assert!((r - (2.0 - PI)).abs() < 1e-15);
        assert!((r - stepwise(2.0)).abs() < 1e-15);
        assert!((r + 1.141_592_65).abs() < 1e-8);
    }

    #[test]
    fn boundaries() {
        assert!((normalize_angle(FRAC_PI_2).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((normalize_angle(-FRAC_PI_2).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!(normalize_angle(-1e-20_f64).unwrap() <= FRAC_PI_2);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(normalize_angle(f64::NAN), Err(Error::Domain(_))));
        assert!(normalize_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn diff_examples() {
        assert_eq!(angle_diff(0.3_f64, 0.3), 0.0);
        assert!(angle_diff(FRAC_PI_2, -FRAC_PI_2) < 1e-15);
        let d = angle_diff(0.2_f64, -0.3);
        let brute = (-1..=1)
            .map(|k| (stepwise(0.2) - stepwise(-0.3) + k as f64 * PI).abs())
            .fold(f64::INFINITY, f64::min);
        assert!((d - 0.5).abs() < 1e-15);
        assert!((d - brute).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn periodic(t in -10.0_f64..10.0) {
            let a = normalize_angle(t).unwrap();
            let b = normalize_angle(t + PI).unwrap();
            proptest::prop_assert!(a > -FRAC_PI_2 && a <= FRAC_PI_2);
            proptest::prop_assert!(angle_diff(a, b) < 1e-12);
            proptest::prop_assert!((a - stepwise(t)).abs() < 1e-12 || angle_diff(a, stepwise(t)) < 1e-12);
        }

        #[test]
        fn diff_bounded(a in -10.0_f64..10.0, b in -10.0_f64..10.0) {
            let d = angle_diff(a, b);
            proptest::prop_assert!((0.0..=FRAC_PI_2 + 1e-15).contains(&d));
            proptest::prop_assert!((d - angle_diff(b, a)).abs() < 1e-15);
        }
    }
}
