use serde::{Deserialize, Serialize};

use super::angle::normalize_angle;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A planar grasp: center pixel `(u, v)` (column, row), gripper angle,
/// opening width, jaw size and predicted quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraspRecord<T>", into = "GraspRecord<T>")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct GraspPose2D<T> {
    u: T,
    v: T,
    angle: T,
    width: T,
    height: T,
    quality: T,
}

#[derive(Serialize, Deserialize)]
struct GraspRecord<T> {
    u: T,
    v: T,
    angle: T,
    width: T,
    height: T,
    quality: T,
}

impl<T: Scalar> TryFrom<GraspRecord<T>> for GraspPose2D<T> {
    type Error = Error;

    fn try_from(r: GraspRecord<T>) -> Result<Self> {
        GraspPose2D::with_height(r.u, r.v, r.angle, r.width, r.height, r.quality)
    }
}

impl<T: Scalar> From<GraspPose2D<T>> for GraspRecord<T> {
    fn from(g: GraspPose2D<T>) -> Self {
        GraspRecord {
            u: g.u,
            v: g.v,
            angle: g.angle,
            width: g.width,
            height: g.height,
            quality: g.quality,
        }
    }
}

impl<T: Scalar> GraspPose2D<T> {
    /// Grasp with the default jaw size of half the opening width.
    pub fn new(u: T, v: T, angle: T, width: T, quality: T) -> Result<Self> {
        Self::with_height(u, v, angle, width, width / T::of(2.0), quality)
    }

    pub fn with_height(u: T, v: T, angle: T, width: T, height: T, quality: T) -> Result<Self> {
        if !(u.is_finite() && v.is_finite()) {
            return Err(Error::Domain(format!("grasp center ({u}, {v}) is not finite")));
        }
        if !(width > T::zero() && width.is_finite()) {
            return Err(Error::Domain(format!("grasp width must be > 0, got {width}")));
        }
        if !(height > T::zero() && height.is_finite()) {
            return Err(Error::Domain(format!("grasp height must be > 0, got {height}")));
        }
        if !(quality >= T::zero() && quality <= T::one()) {
            return Err(Error::Domain(format!("grasp quality must lie in [0, 1], got {quality}")));
        }
        Ok(GraspPose2D {
            u,
            v,
            angle: normalize_angle(angle)?,
            width,
            height,
            quality,
        })
    }

    pub fn u(&self) -> T {
        self.u
    }
    pub fn v(&self) -> T {
        self.v
    }
    pub fn angle(&self) -> T {
        self.angle
    }
    pub fn width(&self) -> T {
        self.width
    }
    pub fn height(&self) -> T {
        self.height
    }
    pub fn quality(&self) -> T {
        self.quality
    }

    pub fn center(&self) -> [T; 2] {
        [self.u, self.v]
    }

    /// Oriented rectangle: long side (`width`) along the gripper axis.
    pub fn to_rect(&self) -> GraspRect<T> {
        rect_from_grasp(self)
    }

    pub fn cast<U: Scalar>(&self) -> GraspPose2D<U> {
        let c = |x: T| U::of(x.as_f64());
        GraspPose2D {
            u: c(self.u),
            v: c(self.v),
            angle: c(self.angle),
            width: c(self.width),
            height: c(self.height),
            quality: c(self.quality),
        }
    }
}

/// Four counterclockwise vertices of an oriented grasp rectangle.
///
/// Edge `v0 → v1` runs along the gripper opening (length = grasp width);
/// edge `v1 → v2` spans the jaws (length = grasp height).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[T; 2]; 4]", into = "[[T; 2]; 4]")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct GraspRect<T> {
    vertices: [[T; 2]; 4],
}

impl<T: Scalar> TryFrom<[[T; 2]; 4]> for GraspRect<T> {
    type Error = Error;

    fn try_from(v: [[T; 2]; 4]) -> Result<Self> {
        GraspRect::new(v)
    }
}

impl<T: Scalar> From<GraspRect<T>> for [[T; 2]; 4] {
    fn from(r: GraspRect<T>) -> Self {
        r.vertices
    }
}

fn sub<T: Scalar>(a: [T; 2], b: [T; 2]) -> [T; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross<T: Scalar>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[1] - a[1] * b[0]
}

fn norm<T: Scalar>(a: [T; 2]) -> T {
    a[0].hypot(a[1])
}

/// Signed shoelace area; positive for counterclockwise order.
pub(crate) fn signed_area<T: Scalar>(poly: &[[T; 2]]) -> T {
    let n = poly.len();
    let mut acc = T::zero();
    for i in 0..n {
        acc += cross(poly[i], poly[(i + 1) % n]);
    }
    acc / T::of(2.0)
}

impl<T: Scalar> GraspRect<T> {
    /// Validate four counterclockwise vertices forming a rectangle.
    pub fn new(vertices: [[T; 2]; 4]) -> Result<Self> {
        if vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Domain("rectangle has non-finite vertex".into()));
        }
        let area = signed_area(&vertices);
        if !(area > T::zero()) {
            return Err(Error::Domain(format!(
                "rectangle must be counterclockwise with positive area, got {area}"
            )));
        }
        let tol = T::of(1e-6);
        let edges: Vec<[T; 2]> = (0..4).map(|i| sub(vertices[(i + 1) % 4], vertices[i])).collect();
        for i in 0..2 {
            let (a, b) = (edges[i], edges[i + 2]);
            let (na, nb) = (norm(a), norm(b));
            if na <= T::zero() || nb <= T::zero() {
                return Err(Error::Domain("rectangle has a zero-length edge".into()));
            }
            // opposite edges point in opposite directions
            let sin = cross(a, b) / (na * nb);
            let dot = a[0] * b[0] + a[1] * b[1];
            if sin.abs() > tol || dot >= T::zero() {
                return Err(Error::Domain(format!("edges {i} and {} are not parallel", i + 2)));
            }
        }
        Ok(GraspRect { vertices })
    }

    /// Regularize an annotated quadrilateral into an exact rectangle.
    ///
    /// Hand-labelled rectangles are only approximately rectangular. The
    /// center is the vertex mean, the angle follows the first edge, and the
    /// extents are the mean lengths of the opposite edge pairs. Clockwise
    /// input is reordered so the first edge keeps its role.
    pub fn from_quad(quad: [[T; 2]; 4]) -> Result<Self> {
        if quad.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Domain("quadrilateral has non-finite vertex".into()));
        }
        let q = if signed_area(&quad) < T::zero() {
            [quad[1], quad[0], quad[3], quad[2]]
        } else {
            quad
        };
        let four = T::of(4.0);
        let two = T::of(2.0);
        let cu = q.iter().map(|p| p[0]).fold(T::zero(), |a, b| a + b) / four;
        let cv = q.iter().map(|p| p[1]).fold(T::zero(), |a, b| a + b) / four;
        let e0 = sub(q[1], q[0]);
        let e2 = sub(q[2], q[3]);
        let width = (norm(e0) + norm(e2)) / two;
        let height = (norm(sub(q[2], q[1])) + norm(sub(q[3], q[0]))) / two;
        let angle = (e0[1] + e2[1]).atan2(e0[0] + e2[0]);
        let g = GraspPose2D::with_height(cu, cv, angle, width, height, T::one())?;
        Ok(g.to_rect())
    }

    pub fn vertices(&self) -> &[[T; 2]; 4] {
        &self.vertices
    }

    pub fn area(&self) -> T {
        signed_area(&self.vertices)
    }

    pub fn center(&self) -> [T; 2] {
        let four = T::of(4.0);
        let s = self
            .vertices
            .iter()
            .fold([T::zero(), T::zero()], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [s[0] / four, s[1] / four]
    }

    /// Normalized angle of the gripper axis (first edge).
    pub fn angle(&self) -> T {
        let e = sub(self.vertices[1], self.vertices[0]);
        super::angle::normalize_unchecked(e[1].atan2(e[0]))
    }

    pub fn width(&self) -> T {
        norm(sub(self.vertices[1], self.vertices[0]))
    }

    pub fn height(&self) -> T {
        norm(sub(self.vertices[2], self.vertices[1]))
    }

    /// Recover the grasp this rectangle depicts, with the given quality.
    pub fn to_grasp(&self, quality: T) -> Result<GraspPose2D<T>> {
        let [u, v] = self.center();
        GraspPose2D::with_height(u, v, self.angle(), self.width(), self.height(), quality)
    }

    /// Apply a point map to every vertex, re-validating the result.
    pub fn map_points(&self, f: impl Fn([T; 2]) -> [T; 2]) -> Result<Self> {
        let v = self.vertices.map(f);
        GraspRect::from_quad(v)
    }

    pub fn cast<U: Scalar>(&self) -> GraspRect<U> {
        GraspRect {
            vertices: self.vertices.map(|p| [U::of(p[0].as_f64()), U::of(p[1].as_f64())]),
        }
    }
}

/// Build the oriented rectangle of a grasp.
pub fn rect_from_grasp<T: Scalar>(g: &GraspPose2D<T>) -> GraspRect<T> {
    let two = T::of(2.0);
    let (s, c) = g.angle.sin_cos();
    let (hw, hh) = (g.width / two, g.height / two);
    // gripper axis a = (c, s); jaw axis b = (-s, c)
    let ax = [c * hw, s * hw];
    let bx = [-s * hh, c * hh];
    let p = |ka: T, kb: T| [g.u + ka * ax[0] + kb * bx[0], g.v + ka * ax[1] + kb * bx[1]];
    let one = T::one();
    GraspRect {
        vertices: [p(-one, -one), p(one, -one), p(one, one), p(-one, one)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    fn same_set(a: &[[f64; 2]; 4], b: &[[f64; 2]; 4], tol: f64) -> bool {
        (0..4).any(|shift| (0..4).all(|i| {
            let p = a[(i + shift) % 4];
            let q = b[i];
            (p[0] - q[0]).abs() < tol && (p[1] - q[1]).abs() < tol
        }))
    }

    #[test]
    fn axis_aligned_rect() {
        let g = GraspPose2D::with_height(0.0, 0.0, 0.0, 4.0, 2.0, 1.0).unwrap();
        let r = rect_from_grasp(&g);
        assert!(same_set(
            r.vertices(),
            &[[-2.0, -1.0], [2.0, -1.0], [2.0, 1.0], [-2.0, 1.0]],
            1e-12
        ));
        assert!(r.area() > 0.0);
    }

    #[test]
    fn quarter_turn_swaps_extents() {
        let g = GraspPose2D::with_height(0.0, 0.0, FRAC_PI_2, 4.0, 2.0, 1.0).unwrap();
        let r = rect_from_grasp(&g);
        assert!(same_set(
            r.vertices(),
            &[[-1.0, -2.0], [1.0, -2.0], [1.0, 2.0], [-1.0, 2.0]],
            1e-12
        ));
    }

    #[test]
    fn diagonal_rect_matches_rotation_oracle() {
        let g = GraspPose2D::with_height(5.0, 5.0, FRAC_PI_4, 2.0 * SQRT_2, SQRT_2, 1.0).unwrap();
        let r = rect_from_grasp(&g);
        let (s, c) = FRAC_PI_4.sin_cos();
        let corners = [[-SQRT_2, -SQRT_2 / 2.0], [SQRT_2, -SQRT_2 / 2.0], [SQRT_2, SQRT_2 / 2.0], [-SQRT_2, SQRT_2 / 2.0]];
        let expect = corners.map(|[x, y]| [5.0 + c * x - s * y, 5.0 + s * x + c * y]);
        assert!(same_set(r.vertices(), &expect, 1e-12));
        // hand-checked: (5,5) + R(45°)(−√2, −√2/2) = (4.5, 3.5)
        assert!(same_set(r.vertices(), &[[4.5, 3.5], [6.5, 5.5], [5.5, 6.5], [3.5, 4.5]], 1e-12));
    }

    #[test]
    fn invalid_grasps_rejected() {
        assert!(GraspPose2D::new(0.0, 0.0, 0.0, 0.0, 0.5).is_err());
        assert!(GraspPose2D::new(0.0, 0.0, 0.0, 3.0, 1.5).is_err());
        assert!(GraspPose2D::with_height(0.0, 0.0, 0.0, 3.0, -1.0, 0.5).is_err());
        assert!(GraspPose2D::new(f64::NAN, 0.0, 0.0, 3.0, 0.5).is_err());
        let g = GraspPose2D::new(1.0, 2.0, 3.0, 10.0, 0.5).unwrap();
        assert_eq!(g.height(), 5.0);
        assert!(g.angle() <= FRAC_PI_2 && g.angle() > -FRAC_PI_2);
    }

    #[test]
    fn invalid_rects_rejected() {
        // clockwise
        assert!(GraspRect::new([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).is_err());
        // kite, not a rectangle
        assert!(GraspRect::new([[0.0, 0.0], [2.0, 0.0], [3.0, 1.0], [0.0, 1.0]]).is_err());
        assert!(GraspRect::new([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]).is_err());
    }

    #[test]
    fn from_quad_handles_clockwise_annotations() {
        let cw = [[0.0_f64, 0.0], [0.0, 1.0], [4.0, 1.0], [4.0, 0.0]];
        let r = GraspRect::from_quad(cw).unwrap();
        assert!(r.area() > 0.0);
        assert!((r.width() - 1.0).abs() < 1e-12);
        assert!((r.height() - 4.0).abs() < 1e-12);
        assert!((r.angle() - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn json_shapes() {
        let g = GraspPose2D::with_height(1.0, 2.0, 0.5, 10.0, 4.0, 0.75).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"u":1.0,"v":2.0,"angle":0.5,"width":10.0,"height":4.0,"quality":0.75}"#);
        let back: GraspPose2D<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<GraspPose2D<f64>>(r#"{"u":1,"v":2,"angle":0,"width":-1,"height":1,"quality":0}"#).is_err());
        let r = g.to_rect();
        let rs = serde_json::to_string(&r).unwrap();
        let v: Vec<Vec<f64>> = serde_json::from_str(&rs).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(serde_json::from_str::<GraspRect<f64>>(&rs).unwrap(), r);
    }

    proptest::proptest! {
        #[test]
        fn rect_round_trip(u in -100.0..100.0_f64, v in -100.0..100.0_f64, a in -3.0..3.0_f64,
                           w in 0.5..80.0_f64, h in 0.5..80.0_f64, q in 0.0..=1.0_f64) {
            let g = GraspPose2D::with_height(u, v, a, w, h, q).unwrap();
            let r = rect_from_grasp(&g);
            let validated = GraspRect::new(*r.vertices()).unwrap();
            let back = validated.to_grasp(q).unwrap();
            proptest::prop_assert!((back.u() - u).abs() < 1e-9);
            proptest::prop_assert!((back.v() - v).abs() < 1e-9);
            proptest::prop_assert!(super::super::angle_diff(back.angle(), g.angle()) < 1e-9);
            proptest::prop_assert!((back.width() - w).abs() < 1e-9);
            proptest::prop_assert!((back.height() - h).abs() < 1e-9);
            proptest::prop_assert!((validated.area() - w * h).abs() < 1e-9 * (1.0 + w * h));
        }
    }
}
