//! Geometric augmentations that keep matches and the target pose consistent.
//!
//! [`mirror_pair`] flips both frames left to right, so that traffic on one
//! side of the road looks like traffic on the other. [`warp_second_frame`]
//! simulates a small extra rotation of the second camera with the homography
//! `K·R_a·K⁻¹` and drops matches that leave the cropped image.
//!
//! Mirroring about the pixel grid equals the reflection `x → −x` in camera
//! coordinates only when the principal point sits at the grid center,
//! `cx = (width − 1) / 2`; intrinsics are kept fixed either way.

use nalgebra::{Vector2, Vector3};

use crate::epipolar::MatchSet;
use crate::geometry::{snap_to_pixel_grid, CameraIntrinsics, Quaternion, RelativePose};
use crate::{Error, Result};

/// Left-right mirror of an image of the given width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MirrorTransform {
    pub image_width: u32,
}

impl MirrorTransform {
    pub fn new(image_width: u32) -> Result<Self> {
        if image_width == 0 {
            return Err(Error::InvalidInput("mirror width must be positive".into()));
        }
        Ok(Self { image_width })
    }

    pub fn mirror_point(&self, p: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((self.image_width - 1) as f64 - p.x, p.y)
    }
}

/// Conjugates a pose by `D = diag(−1, 1, 1)`: `R′ = D·R·D`, `t′ = D·t`.
pub fn mirror_pose(pose: &RelativePose) -> RelativePose {
    let q = pose.rotation;
    let t = pose.translation;
    RelativePose::new(Quaternion::new(q.w, q.x, -q.y, -q.z), Vector3::new(-t.x, t.y, t.z))
}

/// Mirrors the pixels `u → (width − 1) − u` in both frames and the pose to
/// match. For points on the [`PIXEL_QUANTUM`](crate::geometry::PIXEL_QUANTUM)
/// grid (every generated or snapped point) applying it twice is the identity
/// bit for bit.
pub fn mirror_pair(
    matches: &MatchSet,
    pose_gt: &RelativePose,
    m: &MirrorTransform,
) -> Result<(MatchSet, RelativePose)> {
    let w = m.image_width as f64;
    let outside = |p: &Vector2<f64>| !(p.x >= 0.0 && p.x <= w - 1.0);
    if let Some(i) = (0..matches.len()).find(|&i| outside(&matches.points_a[i]) || outside(&matches.points_b[i])) {
        return Err(Error::InvalidInput(format!(
            "match {i} of '{}' is outside [0, {}] horizontally",
            matches.pair_id,
            w - 1.0
        )));
    }
    let mirrored = MatchSet {
        pair_id: matches.pair_id.clone(),
        points_a: matches.points_a.iter().map(|p| m.mirror_point(p)).collect(),
        points_b: matches.points_b.iter().map(|p| m.mirror_point(p)).collect(),
        confidence: matches.confidence.clone(),
    };
    Ok((mirrored, mirror_pose(pose_gt)))
}

/// Extra rotation of the second camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationWarp {
    rotation: Quaternion,
    intrinsics: CameraIntrinsics,
    crop_margin_px: u32,
}

/// Default bound on the warp rotation angle.
pub const DEFAULT_MAX_WARP_RAD: f64 = 3.0 * std::f64::consts::PI / 180.0;

impl RotationWarp {
    /// A warp whose crop margin is the smallest integer covering the border
    /// displacement.
    pub fn new(rotation: Quaternion, intrinsics: CameraIntrinsics, max_angle_rad: f64) -> Result<Self> {
        Self::check_rotation(&rotation, max_angle_rad)?;
        // rounding noise of an identity warp must not cost a pixel
        let margin = (border_displacement(&rotation, &intrinsics) - 1e-9).max(0.0).ceil();
        Self::with_margin(rotation, intrinsics, max_angle_rad, margin as u32)
    }

    pub fn with_margin(
        rotation: Quaternion,
        intrinsics: CameraIntrinsics,
        max_angle_rad: f64,
        crop_margin_px: u32,
    ) -> Result<Self> {
        Self::check_rotation(&rotation, max_angle_rad)?;
        let needed = border_displacement(&rotation, &intrinsics);
        if (crop_margin_px as f64) < needed - 1e-9 {
            return Err(Error::InvalidInput(format!(
                "crop margin {crop_margin_px} px is smaller than the border displacement {needed:.3} px"
            )));
        }
        if 2 * crop_margin_px >= intrinsics.width().min(intrinsics.height()) {
            return Err(Error::InvalidInput(format!(
                "crop margin {crop_margin_px} px leaves no image"
            )));
        }
        Ok(Self {
            rotation,
            intrinsics,
            crop_margin_px,
        })
    }

    fn check_rotation(rotation: &Quaternion, max_angle_rad: f64) -> Result<()> {
        if !rotation.is_unit(1e-9) {
            return Err(Error::InvalidRotation("warp rotation is not unit".into()));
        }
        if rotation.angle() > max_angle_rad {
            return Err(Error::InvalidInput(format!(
                "warp rotation of {:.4} rad exceeds the bound {max_angle_rad:.4} rad",
                rotation.angle()
            )));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Quaternion {
        self.rotation
    }

    pub fn crop_margin_px(&self) -> u32 {
        self.crop_margin_px
    }

    /// Applies `H = K·R_a·K⁻¹` to a pixel; `None` if the ray turns behind the
    /// camera.
    pub fn warp_point(&self, p: &Vector2<f64>) -> Option<Vector2<f64>> {
        warp_pixel(&self.rotation, &self.intrinsics, p).map(|q| {
            Vector2::new(snap_to_pixel_grid(q.x), snap_to_pixel_grid(q.y))
        })
    }

    /// Whether a pixel survives the crop `[m, W − m) × [m, H − m)`.
    pub fn in_crop(&self, p: &Vector2<f64>) -> bool {
        let m = self.crop_margin_px as f64;
        let (w, h) = (self.intrinsics.width() as f64, self.intrinsics.height() as f64);
        p.x >= m && p.x < w - m && p.y >= m && p.y < h - m
    }
}

fn warp_pixel(rotation: &Quaternion, k: &CameraIntrinsics, p: &Vector2<f64>) -> Option<Vector2<f64>> {
    let ray = k.unproject(p);
    k.project(&rotation.rotate(&Vector3::new(ray.x, ray.y, 1.0))).ok()
}

/// Largest displacement of an image-border pixel under the warp, sampled
/// densely along all four edges.
fn border_displacement(rotation: &Quaternion, k: &CameraIntrinsics) -> f64 {
    const STEPS: usize = 512;
    let (w, h) = (k.width() as f64, k.height() as f64);
    let mut worst: f64 = 0.0;
    for i in 0..=STEPS {
        let s = i as f64 / STEPS as f64;
        for p in [
            Vector2::new(s * w, 0.0),
            Vector2::new(s * w, h),
            Vector2::new(0.0, s * h),
            Vector2::new(w, s * h),
        ] {
            let d = warp_pixel(rotation, k, &p).map_or(f64::INFINITY, |q| (q - p).norm());
            worst = worst.max(d);
        }
    }
    worst
}

/// Warps the frame-B pixels and adjusts the pose to `R′ = R_a·R`, `t′ = R_a·t`.
pub fn warp_second_frame(
    matches: &MatchSet,
    pose_gt: &RelativePose,
    w: &RotationWarp,
) -> Result<(MatchSet, RelativePose)> {
    let mut kept = MatchSet {
        pair_id: matches.pair_id.clone(),
        ..MatchSet::default()
    };
    for i in 0..matches.len() {
        if let Some(p) = w.warp_point(&matches.points_b[i]).filter(|p| w.in_crop(p)) {
            kept.points_a.push(matches.points_a[i]);
            kept.points_b.push(p);
            kept.confidence.push(matches.confidence[i]);
        }
    }
    let total = matches.len();
    if 10 * kept.len() < total {
        return Err(Error::AugmentationDegenerate {
            kept: kept.len(),
            total,
        });
    }
    let pose = RelativePose::new(
        w.rotation * pose_gt.rotation,
        w.rotation.rotate(&pose_gt.translation),
    );
    Ok((kept, pose))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epipolar::{self, EssentialMatrix};
    use crate::geometry::tests::pose;
    use crate::odometry::{estimate_pair, HeuristicConfig};
    use crate::ransac::RansacConfig;
    use crate::synth::{self, SceneConfig};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn yaw(deg: f64) -> Quaternion {
        Quaternion::from_axis_angle(&Vector3::y(), deg.to_radians()).unwrap()
    }

    fn scene(seed: u64) -> synth::SyntheticPair {
        let rot = Quaternion::from_axis_angle(&Vector3::new(0.2, 1.0, 0.1), 8f64.to_radians()).unwrap();
        let cfg = SceneConfig {
            num_points: 120,
            depth_range_m: (8.0, 40.0),
            pose_gt: RelativePose::new(rot, Vector3::new(0.4, -0.1, -2.5)),
            rng_seed: seed,
            ..SceneConfig::default()
        };
        synth::generate_pair(&cfg).unwrap()
    }

    #[test]
    fn mirror_pose_examples() {
        assert_eq!(mirror_pose(&RelativePose::identity()).rotation.angle_to(&Quaternion::IDENTITY), 0.0);
        let p = mirror_pose(&RelativePose::from_translation(Vector3::new(1.0, 0.0, 2.0)));
        assert_eq!(p.translation, Vector3::new(-1.0, 0.0, 2.0));
    }

    #[test]
    fn mirror_pose_is_reflection_conjugation() {
        let d = nalgebra::Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        let q = Quaternion::from_axis_angle(&Vector3::new(0.3, -0.5, 0.8), 0.7).unwrap();
        let m = mirror_pose(&RelativePose::new(q, Vector3::zeros()));
        let expected = d * q.to_matrix().unwrap() * d;
        assert_abs_diff_eq!(m.rotation.to_matrix().unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(m.rotation.to_matrix().unwrap().determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mirror_is_an_exact_involution() {
        let pair = scene(1);
        let m = MirrorTransform::new(640).unwrap();
        let (once, p1) = mirror_pair(&pair.frames.matches, &pair.pose_gt, &m).unwrap();
        let (twice, p2) = mirror_pair(&once, &p1, &m).unwrap();
        assert_eq!(twice, pair.frames.matches);
        assert_eq!(p2, pair.pose_gt);
        assert_eq!(p1.translation.norm(), pair.pose_gt.translation.norm());
    }

    #[test]
    fn mirror_commutes_with_estimation() {
        let pair = scene(2);
        let (h, r) = (HeuristicConfig::default(), RansacConfig::default());
        let m = MirrorTransform::new(640).unwrap();
        let (mirrored, _) = mirror_pair(&pair.frames.matches, &pair.pose_gt, &m).unwrap();
        let mut frames = pair.frames.clone();
        frames.matches = mirrored;
        let direct = estimate_pair(&pair.frames, &h, &r).unwrap();
        let on_mirrored = estimate_pair(&frames, &h, &r).unwrap();
        let expected = mirror_pose(&direct.pose);
        assert!(on_mirrored.pose.rotation.angle_to(&expected.rotation) < 1e-6);
        assert!((on_mirrored.pose.translation - expected.translation).norm() < 1e-6 * 10.0);
    }

    #[test]
    fn identity_warp_changes_nothing() {
        let pair = scene(3);
        let w = RotationWarp::new(Quaternion::IDENTITY, pair.frames.intrinsics, DEFAULT_MAX_WARP_RAD).unwrap();
        assert_eq!(w.crop_margin_px(), 0);
        let (m, p) = warp_second_frame(&pair.frames.matches, &pair.pose_gt, &w).unwrap();
        assert_eq!(m, pair.frames.matches);
        assert_eq!(p, pair.pose_gt);
    }

    #[test]
    fn two_degree_yaw_shifts_the_center() {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let center = Vector2::new(320.0, 240.0);
        let shift = 500.0 * 2f64.to_radians().tan();
        let plus = RotationWarp::new(yaw(2.0), k, DEFAULT_MAX_WARP_RAD).unwrap();
        let minus = RotationWarp::new(yaw(-2.0), k, DEFAULT_MAX_WARP_RAD).unwrap();
        // rotating the camera about +y moves the scene toward +u
        assert_abs_diff_eq!(plus.warp_point(&center).unwrap(), Vector2::new(320.0 + shift, 240.0), epsilon = 1e-9);
        assert_abs_diff_eq!(minus.warp_point(&center).unwrap(), Vector2::new(320.0 - shift, 240.0), epsilon = 1e-9);
        assert_abs_diff_eq!(320.0 - shift, 302.54, epsilon = 0.01);
    }

    #[test]
    fn warp_respects_bounds() {
        let k = synth::default_camera();
        assert!(RotationWarp::new(yaw(5.0), k, DEFAULT_MAX_WARP_RAD).is_err());
        let w = RotationWarp::new(yaw(3.0), k, DEFAULT_MAX_WARP_RAD).unwrap();
        assert!(w.crop_margin_px() >= 26);
        assert!(RotationWarp::with_margin(yaw(3.0), k, DEFAULT_MAX_WARP_RAD, 5).is_err());
    }

    #[test]
    fn warped_matches_satisfy_the_adjusted_pose() {
        let pair = scene(4);
        let k = pair.frames.intrinsics;
        let rot = Quaternion::from_axis_angle(&Vector3::new(1.0, 0.5, -0.3), 2.5f64.to_radians()).unwrap();
        let w = RotationWarp::new(rot, k, DEFAULT_MAX_WARP_RAD).unwrap();
        let (m, p) = warp_second_frame(&pair.frames.matches, &pair.pose_gt, &w).unwrap();
        assert!(m.len() < pair.frames.matches.len());
        let e = EssentialMatrix::from_pose(&p);
        let rays = epipolar::normalize_matches(&m, &k, &k);
        for (a, b) in rays.rays_a.iter().zip(&rays.rays_b) {
            assert!(e.residual(a, b).abs() <= 1e-8);
        }
    }

    #[test]
    fn warp_commutes_with_estimation() {
        let pair = scene(5);
        let w = RotationWarp::new(yaw(-2.0), pair.frames.intrinsics, DEFAULT_MAX_WARP_RAD).unwrap();
        let (m, p) = warp_second_frame(&pair.frames.matches, &pair.pose_gt, &w).unwrap();
        let mut frames = pair.frames.clone();
        frames.matches = m;
        let est = estimate_pair(&frames, &HeuristicConfig::default(), &RansacConfig::default()).unwrap();
        assert!(est.pose.rotation.angle_to(&p.rotation) < 1e-4);
    }

    #[test]
    fn crop_dropping_everything_is_degenerate() {
        let k = synth::default_camera();
        let pts = vec![Vector2::new(1.0, 1.0); 10];
        let m = MatchSet::new("edge", pts.clone(), pts, vec![1.0; 10]).unwrap();
        let w = RotationWarp::new(yaw(1.0), k, DEFAULT_MAX_WARP_RAD).unwrap();
        assert!(matches!(
            warp_second_frame(&m, &RelativePose::identity(), &w),
            Err(Error::AugmentationDegenerate { kept: 0, total: 10 })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mirror_preserves_rotation_and_norm(p in pose()) {
            let m = mirror_pose(&p);
            prop_assert!((m.rotation.to_matrix().unwrap().determinant() - 1.0).abs() < 1e-12);
            prop_assert_eq!(m.translation.norm(), p.translation.norm());
            let back = mirror_pose(&m);
            prop_assert_eq!(back, p);
        }

        #[test]
        fn warps_compose(
            a1 in prop::array::uniform3(-1.0f64..1.0),
            a2 in prop::array::uniform3(-1.0f64..1.0),
            u in 150.0f64..490.0,
            v in 120.0f64..360.0,
        ) {
            let k = synth::default_camera();
            let small = |a: [f64; 3]| Quaternion::from_rotation_vector(&(Vector3::from(a) * 1f64.to_radians()));
            let (r1, r2) = (small(a1), small(a2));
            let w1 = RotationWarp::new(r1, k, DEFAULT_MAX_WARP_RAD).unwrap();
            let w2 = RotationWarp::new(r2, k, DEFAULT_MAX_WARP_RAD).unwrap();
            let w12 = RotationWarp::new(r2 * r1, k, DEFAULT_MAX_WARP_RAD).unwrap();
            let p = Vector2::new(snap_to_pixel_grid(u), snap_to_pixel_grid(v));
            let twice = w2.warp_point(&w1.warp_point(&p).unwrap()).unwrap();
            let once = w12.warp_point(&p).unwrap();
            prop_assert!((twice - once).norm() <= 1e-9);
        }
    }
}
