use super::grasp::{signed_area, GraspRect};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Clip a convex counterclockwise polygon by one half-plane: the left side of
/// the directed edge `a → b`.
fn clip_half_plane<T: Scalar>(poly: &[[T; 2]], a: [T; 2], b: [T; 2]) -> Vec<[T; 2]> {
    let side = |p: [T; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let cur = poly[i];
        let next = poly[(i + 1) % poly.len()];
        let (sc, sn) = (side(cur), side(next));
        if sc >= T::zero() {
            out.push(cur);
        }
        if (sc >= T::zero()) != (sn >= T::zero()) {
            let t = sc / (sc - sn);
            out.push([cur[0] + t * (next[0] - cur[0]), cur[1] + t * (next[1] - cur[1])]);
        }
    }
    out
}

/// Intersection of two convex counterclockwise polygons (Sutherland–Hodgman).
pub fn convex_intersection<T: Scalar>(subject: &[[T; 2]], clip: &[[T; 2]]) -> Vec<[T; 2]> {
    let mut poly = subject.to_vec();
    for i in 0..clip.len() {
        if poly.len() < 3 {
            return Vec::new();
        }
        poly = clip_half_plane(&poly, clip[i], clip[(i + 1) % clip.len()]);
    }
    if poly.len() < 3 {
        Vec::new()
    } else {
        poly
    }
}

/// Intersection over union of two grasp rectangles.
pub fn iou<T: Scalar>(a: &GraspRect<T>, b: &GraspRect<T>) -> Result<T> {
    let (area_a, area_b) = (a.area(), b.area());
    if !(area_a > T::zero() && area_b > T::zero()) {
        return Err(Error::Domain("iou of a degenerate rectangle".into()));
    }
    let inter = convex_intersection(a.vertices(), b.vertices());
    let inter_area = if inter.is_empty() {
        T::zero()
    } else {
        signed_area(&inter).max(T::zero())
    };
    let union = area_a + area_b - inter_area;
    Ok((inter_area / union).max(T::zero()).min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GraspPose2D;

    fn square(x0: f64, y0: f64, s: f64) -> GraspRect<f64> {
        GraspRect::new([[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]]).unwrap()
    }

    #[test]
    fn self_iou_is_one() {
        let r = GraspPose2D::with_height(3.0_f64, 4.0, 0.7, 10.0, 3.0, 1.0).unwrap().to_rect();
        assert!((iou(&r, &r).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(iou(&square(0.0, 0.0, 1.0), &square(5.0, 5.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn half_offset_squares() {
        // intersection 0.5, union 1.5
        let v = iou(&square(0.0, 0.0, 1.0), &square(0.5, 0.0, 1.0)).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        // pixel oracle at 1000x1000 over [0, 1.5] x [0, 1]
        let n = 1000;
        let (mut inter, mut uni) = (0usize, 0usize);
        for i in 0..n {
            for j in 0..n {
                let x = (j as f64 + 0.5) * 1.5 / n as f64;
                let _ = i;
                let ina = x < 1.0;
                let inb = x >= 0.5;
                inter += (ina && inb) as usize;
                uni += (ina || inb) as usize;
            }
        }
        assert!((v - inter as f64 / uni as f64).abs() < 5e-3);
    }

    #[test]
    fn touching_edges_have_zero_iou() {
        assert_eq!(iou(&square(0.0, 0.0, 1.0), &square(1.0, 0.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn contained_rect() {
        let v = iou(&square(0.0, 0.0, 4.0), &square(1.0, 1.0, 2.0)).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
    }
}
