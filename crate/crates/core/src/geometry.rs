//! Rigid-motion algebra: quaternions, relative poses and the pinhole camera.

use std::ops::{Mul, Neg};

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3};

use crate::{Error, Result};

/// Tolerance on `|‖q‖ − 1|` accepted wherever a rotation is required.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Pixel coordinates emitted by this crate live on a fixed sub-pixel grid of
/// `2⁻³²` px. On that grid `a − u` is exact for any integer `a < 2²⁰`, so the
/// left-right mirror is an exact involution on every emitted match.
pub const PIXEL_QUANTUM: f64 = 1.0 / 4_294_967_296.0;

/// Rounds a pixel coordinate to the [`PIXEL_QUANTUM`] grid (exact arithmetic).
pub fn snap_to_pixel_grid(v: f64) -> f64 {
    (v * 4_294_967_296.0).round() / 4_294_967_296.0
}

/// Hamilton quaternion stored as `(w, x, y, z)`; `w` is the real part.
///
/// `q` and `-q` encode the same rotation, so comparisons between rotations
/// should go through [`Quaternion::angle_to`] rather than component equality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation by `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n > 1e-12) || !n.is_finite() || !angle.is_finite() {
            return Err(Error::InvalidInput(format!(
                "rotation axis {axis:?} / angle {angle} is not usable"
            )));
        }
        let half = 0.5 * angle;
        // cos(π/2) rounds to 6e-17; half-turns are common enough (the u-turn
        // fallback) that they get an exact zero real part.
        let w = if angle.abs() == std::f64::consts::PI {
            0.0
        } else {
            half.cos()
        };
        let s = half.sin() / n;
        Ok(Self::new(w, axis.x * s, axis.y * s, axis.z * s))
    }

    /// Rotation vector (axis times angle) to quaternion; zero maps to identity.
    pub fn from_rotation_vector(v: &Vector3<f64>) -> Self {
        let angle = v.norm();
        if angle < 1e-300 {
            return Self::IDENTITY;
        }
        Self::from_axis_angle(v, angle).unwrap_or(Self::IDENTITY)
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Imaginary part.
    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 1e-300) || !n.is_finite() {
            return Err(Error::InvalidRotation(format!(
                "cannot normalize quaternion of norm {n}"
            )));
        }
        Ok(Self::new(self.w / n, self.x / n, self.y / n, self.z / n))
    }

    /// Representative with a non-negative real part.
    pub fn canonical(&self) -> Self {
        if self.w < 0.0 {
            -*self
        } else {
            *self
        }
    }

    fn ensure_unit(&self) -> Result<()> {
        if !self.is_finite() || !self.is_unit(UNIT_TOLERANCE) {
            return Err(Error::InvalidRotation(format!(
                "quaternion {:?} has norm {}",
                self.to_array(),
                self.norm()
            )));
        }
        Ok(())
    }

    /// Rotation matrix of a unit quaternion.
    pub fn to_matrix(&self) -> Result<Matrix3<f64>> {
        self.ensure_unit()?;
        Ok(self.matrix_unchecked())
    }

    /// Rotation matrix without the unit-norm check. For non-unit input the
    /// result is not orthonormal.
    pub fn matrix_unchecked(&self) -> Matrix3<f64> {
        let Quaternion { w, x, y, z } = *self;
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let (xy, xz, yz) = (x * y, x * z, y * z);
        let (wx, wy, wz) = (w * x, w * y, w * z);
        Matrix3::new(
            1.0 - 2.0 * (yy + zz),
            2.0 * (xy - wz),
            2.0 * (xz + wy),
            2.0 * (xy + wz),
            1.0 - 2.0 * (xx + zz),
            2.0 * (yz - wx),
            2.0 * (xz - wy),
            2.0 * (yz + wx),
            1.0 - 2.0 * (xx + yy),
        )
    }

    /// Quaternion of a rotation matrix, canonicalized to `w >= 0`.
    pub fn from_matrix(r: &Matrix3<f64>) -> Result<Self> {
        let orthogonality = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if !(orthogonality <= UNIT_TOLERANCE) || !((det - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(Error::InvalidRotation(format!(
                "matrix is not a rotation (‖RᵀR − I‖ = {orthogonality:e}, det = {det})"
            )));
        }
        Ok(Self::from_matrix_unchecked(r))
    }

    // Shepperd: pivot on the largest of the four diagonal combinations.
    pub(crate) fn from_matrix_unchecked(r: &Matrix3<f64>) -> Self {
        let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
        let q = if trace >= r[(0, 0)] && trace >= r[(1, 1)] && trace >= r[(2, 2)] {
            let s = 2.0 * (1.0 + trace).sqrt();
            Self::new(
                0.25 * s,
                (r[(2, 1)] - r[(1, 2)]) / s,
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(1, 0)] - r[(0, 1)]) / s,
            )
        } else if r[(0, 0)] >= r[(1, 1)] && r[(0, 0)] >= r[(2, 2)] {
            let s = 2.0 * (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt();
            Self::new(
                (r[(2, 1)] - r[(1, 2)]) / s,
                0.25 * s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
            )
        } else if r[(1, 1)] >= r[(2, 2)] {
            let s = 2.0 * (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt();
            Self::new(
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                0.25 * s,
                (r[(1, 2)] + r[(2, 1)]) / s,
            )
        } else {
            let s = 2.0 * (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt();
            Self::new(
                (r[(1, 0)] - r[(0, 1)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
                (r[(1, 2)] + r[(2, 1)]) / s,
                0.25 * s,
            )
        };
        let n = q.norm();
        Self::new(q.w / n, q.x / n, q.y / n, q.z / n).canonical()
    }

    /// Rotates `v`, assuming `self` is unit.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let u = self.vector();
        let uv = u.cross(v);
        v + (uv * self.w + u.cross(&uv)) * 2.0
    }

    /// Rotation magnitude in `[0, π]`.
    pub fn angle(&self) -> f64 {
        2.0 * (self.w.abs() / self.norm()).clamp(-1.0, 1.0).acos()
    }

    /// Geodesic distance `2·acos(|q·p|)` between two unit quaternions,
    /// insensitive to the sign of either.
    ///
    /// Evaluated as `4·atan2(|q − p|, |q + p|)` with `p` sign-aligned to `q`,
    /// which is the same angle for unit inputs but keeps full precision near
    /// zero and is exactly zero for equal inputs.
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        let s = if self.dot(other) < 0.0 { -1.0 } else { 1.0 };
        let (a, b) = (self.to_array(), other.to_array());
        let diff = (0..4).map(|i| (a[i] - s * b[i]).powi(2)).sum::<f64>().sqrt();
        let sum = (0..4).map(|i| (a[i] + s * b[i]).powi(2)).sum::<f64>().sqrt();
        4.0 * diff.atan2(sum)
    }
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Self::Output {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Hamilton product; `a * b` applies `b` first when acting on vectors.
impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, b: Quaternion) -> Quaternion {
        let a = self;
        Quaternion::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

/// Rigid transform from frame A to frame B: `x_B = R·x_A + t`.
///
/// The center of camera B expressed in frame A is `−Rᵀ·t`
/// ([`RelativePose::camera_center`]).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativePose {
    pub rotation: Quaternion,
    pub translation: Vector3<f64>,
}

impl Default for RelativePose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RelativePose {
    pub fn new(rotation: Quaternion, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Quaternion::IDENTITY, Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Quaternion::IDENTITY, t)
    }

    pub fn from_rotation_matrix(r: &Matrix3<f64>, t: Vector3<f64>) -> Result<Self> {
        Ok(Self::new(Quaternion::from_matrix(r)?, t))
    }

    /// Maps a point from frame A to frame B.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    /// Composition: if `self` maps A→B and `next` maps B→C, the result maps A→C
    /// with `R = R_bc·R_ab` and `t = R_bc·t_ab + t_bc`.
    pub fn then(&self, next: &RelativePose) -> RelativePose {
        RelativePose::new(
            next.rotation * self.rotation,
            next.rotation.rotate(&self.translation) + next.translation,
        )
    }

    pub fn inverse(&self) -> RelativePose {
        let r_inv = self.rotation.conjugate();
        RelativePose::new(r_inv, -r_inv.rotate(&self.translation))
    }

    /// Center of camera B in frame-A coordinates.
    pub fn camera_center(&self) -> Vector3<f64> {
        -self.rotation.conjugate().rotate(&self.translation)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation.matrix_unchecked());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// Pinhole intrinsics. Pixel `(u, v)` and normalized ray `(x, y, 1)` are
/// related by `u = cx + fx·x`, `v = cy + fy·y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        if !(fx > 0.0 && fx.is_finite() && fy > 0.0 && fy.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !(cx > 0.0 && cx < f64::from(width) && cy > 0.0 && cy < f64::from(height)) {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside the {width}x{height} image"
            )));
        }
        Ok(k)
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Geometric mean focal length, used to express normalized distances in pixels.
    pub fn pixel_scale(&self) -> f64 {
        (self.fx * self.fy).sqrt()
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Whether `p` lies in `[0, width) × [0, height)`.
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= 0.0 && p.x < f64::from(self.width) && p.y >= 0.0 && p.y < f64::from(self.height)
    }

    pub fn project(&self, x: &Vector3<f64>) -> Result<Vector2<f64>> {
        if !(x.z > 0.0) {
            return Err(Error::BehindCamera { z: x.z });
        }
        Ok(Vector2::new(
            self.cx + self.fx * x.x / x.z,
            self.cy + self.fy * x.y / x.z,
        ))
    }

    /// Pixel to normalized image coordinates (the ray at depth 1).
    pub fn unproject(&self, p: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    pub(crate) fn unit_quaternion() -> impl Strategy<Value = Quaternion> {
        prop::array::uniform4(-1.0f64..1.0)
            .prop_filter("norm bounded away from zero", |a| {
                a.iter().map(|c| c * c).sum::<f64>() > 0.05
            })
            .prop_map(|a| Quaternion::from_array(a).normalize().unwrap())
    }

    pub(crate) fn pose() -> impl Strategy<Value = RelativePose> {
        (unit_quaternion(), prop::array::uniform3(-20.0f64..20.0))
            .prop_map(|(q, t)| RelativePose::new(q, Vector3::from(t)))
    }

    fn z90() -> Quaternion {
        Quaternion::new(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2)
    }

    #[test]
    fn identity_is_neutral() {
        let q = Quaternion::new(0.3, -0.5, 0.1, 0.8).normalize().unwrap();
        assert_eq!(Quaternion::IDENTITY * q, q);
        assert_eq!(q * Quaternion::IDENTITY, q);
    }

    #[test]
    fn half_angle_doubling() {
        let q = z90() * z90();
        assert_abs_diff_eq!(q.w, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.z, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn matrix_of_known_rotations() {
        assert_eq!(Quaternion::IDENTITY.to_matrix().unwrap(), Matrix3::identity());
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(z90().to_matrix().unwrap(), expected, epsilon = 1e-15);

        assert_eq!(Quaternion::from_matrix(&Matrix3::identity()).unwrap(), Quaternion::IDENTITY);
        let q = Quaternion::from_matrix(&expected).unwrap();
        assert!(q.angle_to(&z90()) < 1e-12);
    }

    #[test]
    fn non_unit_and_non_rotation_inputs_are_rejected() {
        assert!(matches!(
            Quaternion::new(1.0, 1.0, 0.0, 0.0).to_matrix(),
            Err(Error::InvalidRotation(_))
        ));
        let reflection = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        assert!(matches!(
            Quaternion::from_matrix(&reflection),
            Err(Error::InvalidRotation(_))
        ));
        assert!(Quaternion::from_matrix(&(Matrix3::identity() * 1.1)).is_err());
    }

    #[test]
    fn half_turn_about_x_is_exact() {
        let q = Quaternion::from_axis_angle(&Vector3::x(), PI).unwrap();
        assert_eq!(q, Quaternion::new(0.0, 1.0, 0.0, 0.0));
        let r = q.to_matrix().unwrap();
        assert_eq!(r, Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)));
    }

    #[test]
    fn double_cover_distance_is_zero() {
        let q = Quaternion::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0), 1.234).unwrap();
        assert_eq!(q.angle_to(&-q), 0.0);
        assert_abs_diff_eq!(q.angle_to(&Quaternion::IDENTITY), 1.234, epsilon = 1e-12);
    }

    #[test]
    fn pose_composition_examples() {
        let p = RelativePose::new(z90(), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(RelativePose::identity().then(&p), p);

        let a = RelativePose::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let b = RelativePose::from_translation(Vector3::new(0.0, 0.0, 2.0));
        assert_eq!(a.then(&b).translation, Vector3::new(0.0, 0.0, 3.0));
        assert_eq!(a.then(&b).rotation, Quaternion::IDENTITY);
    }

    #[test]
    fn pose_inverse_examples() {
        assert_eq!(RelativePose::identity().inverse(), RelativePose::identity());
        let t = Vector3::new(1.0, -2.0, 0.5);
        assert_eq!(RelativePose::from_translation(t).inverse().translation, -t);
    }

    #[test]
    fn camera_center_maps_to_origin_of_b() {
        let p = RelativePose::new(z90(), Vector3::new(1.0, 2.0, 3.0));
        assert_abs_diff_eq!(
            p.transform_point(&p.camera_center()),
            Vector3::zeros(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn projection_examples() {
        let k = CameraIntrinsics::new(100.0, 120.0, 320.0, 240.0, 640, 480).unwrap();
        assert_eq!(k.project(&Vector3::new(0.0, 0.0, 5.0)).unwrap(), Vector2::new(320.0, 240.0));
        assert_eq!(k.project(&Vector3::new(1.0, 0.0, 5.0)).unwrap().x, 340.0);
        assert!(matches!(
            k.project(&Vector3::new(0.0, 0.0, -1.0)),
            Err(Error::BehindCamera { .. })
        ));
        assert!(k.project(&Vector3::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, -1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.0, 1.0, 4, 4).is_ok());
    }

    #[test]
    fn snapping_is_idempotent_and_fine() {
        let v = 123.456_789_012_345;
        let s = snap_to_pixel_grid(v);
        assert!((s - v).abs() <= PIXEL_QUANTUM / 2.0);
        assert_eq!(snap_to_pixel_grid(s), s);
        assert_eq!(639.0 - (639.0 - s), s);
    }

    #[test]
    fn from_rotation_vector_matches_axis_angle() {
        let v = Vector3::new(0.0, 0.0, FRAC_PI_2);
        assert!(Quaternion::from_rotation_vector(&v).angle_to(&z90()) < 1e-15);
        assert_eq!(Quaternion::from_rotation_vector(&Vector3::zeros()), Quaternion::IDENTITY);
    }

    proptest! {
        #[test]
        fn product_matches_matrix_product(a in unit_quaternion(), b in unit_quaternion()) {
            let lhs = (a * b).to_matrix().unwrap();
            let rhs = a.to_matrix().unwrap() * b.to_matrix().unwrap();
            prop_assert!((lhs - rhs).abs().max() <= 1e-10);
            prop_assert!(((a * b).norm() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn matrix_is_proper_rotation(q in unit_quaternion()) {
            let r = q.to_matrix().unwrap();
            prop_assert!((r.transpose() * r - Matrix3::identity()).abs().max() <= 1e-9);
            prop_assert!((r.determinant() - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn matrix_round_trip_up_to_sign(q in unit_quaternion()) {
            let back = Quaternion::from_matrix(&q.to_matrix().unwrap()).unwrap();
            prop_assert!(back.w >= 0.0);
            let err = (back.to_array().iter().zip(q.canonical().to_array()))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            // canonical() is ambiguous only when w == 0, which has measure zero here
            prop_assert!(err <= 1e-9, "{:?} vs {:?}", back, q);
            let r = q.to_matrix().unwrap();
            prop_assert!((back.to_matrix().unwrap() - r).abs().max() <= 1e-9);
        }

        #[test]
        fn rotate_matches_matrix(q in unit_quaternion(), v in prop::array::uniform3(-10.0f64..10.0)) {
            let v = Vector3::from(v);
            prop_assert!((q.rotate(&v) - q.to_matrix().unwrap() * v).abs().max() <= 1e-12);
        }

        #[test]
        fn compose_matches_homogeneous_product(a in pose(), b in pose()) {
            let c = a.then(&b);
            let oracle = b.to_homogeneous() * a.to_homogeneous();
            prop_assert!((c.to_homogeneous() - oracle).abs().max() <= 1e-10);
        }

        #[test]
        fn compose_is_associative(p in pose(), q in pose(), s in pose()) {
            let lhs = p.then(&q).then(&s);
            let rhs = p.then(&q.then(&s));
            prop_assert!(lhs.rotation.angle_to(&rhs.rotation) <= 1e-7);
            prop_assert!((lhs.to_homogeneous() - rhs.to_homogeneous()).abs().max() <= 1e-9);
        }

        #[test]
        fn inverse_round_trip(p in pose()) {
            let id = p.then(&p.inverse());
            prop_assert!(id.translation.norm() <= 1e-9);
            prop_assert!((id.rotation.matrix_unchecked() - Matrix3::identity()).abs().max() <= 1e-9);
        }

        #[test]
        fn unproject_project_round_trip(u in 0.0f64..640.0, v in 0.0f64..480.0) {
            let k = CameraIntrinsics::new(500.0, 480.0, 319.5, 239.5, 640, 480).unwrap();
            let ray = k.unproject(&Vector2::new(u, v));
            let back = k.project(&Vector3::new(ray.x, ray.y, 1.0)).unwrap();
            prop_assert!((back - Vector2::new(u, v)).abs().max() <= 1e-12);
        }
    }
}
