//! Trajectory evaluation against ground truth.
//!
//! Both trajectories are first re-expressed in their own frame 0, so only the
//! relative motion since the first frame is scored. Per frame the rotation
//! error is the geodesic angle between orientations and the translation error
//! the distance between camera positions; the aggregates are arithmetic means
//! over frames `1..N`, frame 0 being zero by construction.

use crate::geometry::RelativePose;
use crate::odometry::TrajectoryEstimate;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameError {
    pub timestamp: f64,
    pub rotation_error_rad: f64,
    pub translation_error_m: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub per_frame: Vec<FrameError>,
    /// Mean rotation error, radians.
    pub r_rot: f64,
    /// Mean translation error, meters.
    pub r_trans_m: f64,
}

impl EvalReport {
    pub fn r_rot_deg(&self) -> f64 {
        self.r_rot.to_degrees()
    }
}

/// Lists up to this many offending timestamps in an alignment error.
const MAX_LISTED: usize = 10;

fn check_alignment(est: &TrajectoryEstimate, gt: &TrajectoryEstimate) -> Result<()> {
    let (e, g) = (est.timestamps(), gt.timestamps());
    if e == g && !e.is_empty() {
        return Ok(());
    }
    if e.is_empty() || g.is_empty() {
        return Err(Error::Alignment("cannot evaluate an empty trajectory".into()));
    }
    let only_est: Vec<String> = e.iter().filter(|t| !g.contains(t)).map(|t| t.to_string()).collect();
    let only_gt: Vec<String> = g.iter().filter(|t| !e.contains(t)).map(|t| t.to_string()).collect();
    let list = |v: &[String]| {
        let mut s = v.iter().take(MAX_LISTED).cloned().collect::<Vec<_>>().join(", ");
        if v.len() > MAX_LISTED {
            s.push_str(&format!(" and {} more", v.len() - MAX_LISTED));
        }
        s
    };
    Err(Error::Alignment(format!(
        "timestamps differ: only in estimate [{}]; only in ground truth [{}]",
        list(&only_est),
        list(&only_gt)
    )))
}

fn rebase(t: &TrajectoryEstimate) -> Vec<RelativePose> {
    let origin = t.poses[0].pose.inverse();
    t.poses.iter().map(|p| p.pose.then(&origin)).collect()
}

/// Scores `est` against `gt`; both must carry exactly the same timestamps.
pub fn evaluate(est: &TrajectoryEstimate, gt: &TrajectoryEstimate) -> Result<EvalReport> {
    check_alignment(est, gt)?;
    let per_frame: Vec<FrameError> = rebase(est)
        .iter()
        .zip(rebase(gt))
        .zip(&est.poses)
        .map(|((e, g), tp)| FrameError {
            timestamp: tp.timestamp,
            rotation_error_rad: e.rotation.angle_to(&g.rotation),
            translation_error_m: (e.translation - g.translation).norm(),
        })
        .collect();
    let scored = &per_frame[1..];
    let mean = |f: fn(&FrameError) -> f64| {
        if scored.is_empty() {
            0.0
        } else {
            scored.iter().map(f).sum::<f64>() / scored.len() as f64
        }
    };
    Ok(EvalReport {
        r_rot: mean(|f| f.rotation_error_rad),
        r_trans_m: mean(|f| f.translation_error_m),
        per_frame,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::tests::pose;
    use crate::geometry::Quaternion;
    use crate::odometry::TimedPose;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn traj(poses: &[RelativePose]) -> TrajectoryEstimate {
        TrajectoryEstimate::new(
            poses
                .iter()
                .enumerate()
                .map(|(k, p)| TimedPose {
                    timestamp: k as f64,
                    pose: *p,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_offset_frame() {
        let gt = traj(&[RelativePose::identity(), RelativePose::identity()]);
        let yaw = Quaternion::from_axis_angle(&Vector3::y(), std::f64::consts::FRAC_PI_2).unwrap();
        let est = traj(&[RelativePose::identity(), RelativePose::new(yaw, Vector3::new(3.0, 0.0, 4.0))]);
        let r = evaluate(&est, &gt).unwrap();
        assert_abs_diff_eq!(r.r_rot, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        assert_eq!(r.r_trans_m, 5.0);
        assert_abs_diff_eq!(r.r_rot_deg(), 90.0, epsilon = 1e-9);
        assert_eq!(r.per_frame[0].rotation_error_rad, 0.0);
    }

    #[test]
    fn misaligned_timestamps_are_listed() {
        let a = traj(&[RelativePose::identity(); 3]);
        let mut b = a.clone();
        b.poses[2].timestamp = 2.5;
        let err = evaluate(&a, &b).unwrap_err().to_string();
        assert!(err.contains("[2]") && err.contains("[2.5]"), "{err}");
        assert!(evaluate(&TrajectoryEstimate::default(), &TrajectoryEstimate::default()).is_err());
    }

    #[test]
    fn single_frame_scores_zero() {
        let a = traj(&[RelativePose::identity()]);
        let r = evaluate(&a, &a).unwrap();
        assert_eq!((r.r_rot, r.r_trans_m), (0.0, 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn self_evaluation_is_exactly_zero(poses in prop::collection::vec(pose(), 1..8)) {
            let t = traj(&poses);
            let r = evaluate(&t, &t).unwrap();
            prop_assert_eq!((r.r_rot, r.r_trans_m), (0.0, 0.0));
        }

        #[test]
        fn quaternion_signs_do_not_matter(poses in prop::collection::vec(pose(), 2..6), other in prop::collection::vec(pose(), 6)) {
            let est = traj(&poses);
            let gt = traj(&other[..poses.len()]);
            let mut flipped = est.clone();
            for p in &mut flipped.poses {
                p.pose.rotation = -p.pose.rotation;
            }
            let a = evaluate(&est, &gt).unwrap();
            let b = evaluate(&flipped, &gt).unwrap();
            for (x, y) in a.per_frame.iter().zip(&b.per_frame) {
                prop_assert!((x.rotation_error_rad - y.rotation_error_rad).abs() < 1e-12);
            }
        }

        #[test]
        fn common_rigid_transform_is_invisible(
            poses in prop::collection::vec(pose(), 2..6),
            other in prop::collection::vec(pose(), 6),
            g in pose(),
        ) {
            let est = traj(&poses);
            let gt = traj(&other[..poses.len()]);
            let moved = |t: &TrajectoryEstimate| {
                let mut t = t.clone();
                for p in &mut t.poses {
                    p.pose = p.pose.then(&g);
                }
                t
            };
            let a = evaluate(&est, &gt).unwrap();
            let b = evaluate(&moved(&est), &moved(&gt)).unwrap();
            prop_assert!((a.r_trans_m - b.r_trans_m).abs() < 1e-9 * (1.0 + a.r_trans_m));
            prop_assert!((a.r_rot - b.r_rot).abs() < 1e-9);
        }
    }
}
