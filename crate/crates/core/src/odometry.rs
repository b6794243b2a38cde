//! Stage-one relative pose estimation and trajectory composition.
//!
//! Each consecutive frame pair gets a relative pose from the matches when
//! enough of them are confident, and a constant u-turn rotation otherwise.
//! The translation magnitude is never observed, so every pair is assigned the
//! same constant magnitude. Relative poses are then chained into global poses
//! expressed in the first frame.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};

use crate::epipolar::{self, MatchSet, MIN_MATCHES};
use crate::geometry::{CameraIntrinsics, Quaternion, RelativePose};
use crate::ransac::{self, RansacConfig};
use crate::{Error, Result};

/// Axis-aligned pixel rectangle `[u_min, u_max) × [v_min, v_max)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelRect {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl PixelRect {
    pub fn new(u_min: f64, v_min: f64, u_max: f64, v_max: f64) -> Result<Self> {
        let finite = [u_min, v_min, u_max, v_max].iter().all(|c| c.is_finite());
        if !finite || u_min >= u_max || v_min >= v_max {
            return Err(Error::InvalidInput(format!(
                "static region ({u_min}, {v_min})-({u_max}, {v_max}) is empty or not finite"
            )));
        }
        Ok(Self {
            u_min,
            v_min,
            u_max,
            v_max,
        })
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.u_min && p.x < self.u_max && p.y >= self.v_min && p.y < self.v_max
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeuristicConfig {
    /// Norm given to every stage-one translation, in meters.
    pub translation_magnitude_m: f64,
    /// Fallback rotation angle used when a pair has too few confident matches.
    pub fallback_rotation_rad: f64,
    /// Fallback rotation axis in camera coordinates. The default is the image
    /// x axis, which is vertical for a camera mounted sideways.
    pub fallback_axis: Vector3<f64>,
    pub min_confident_matches: usize,
    pub min_confidence: f64,
    /// Pairs further apart than this are flagged as signal gaps.
    pub gap_threshold_s: f64,
    /// Image regions showing the static vehicle body; matches with either end
    /// inside any of them are discarded.
    pub static_mask: Vec<PixelRect>,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            translation_magnitude_m: 10.0,
            fallback_rotation_rad: PI,
            fallback_axis: Vector3::x(),
            min_confident_matches: 30,
            min_confidence: 0.5,
            gap_threshold_s: 5.0,
            static_mask: Vec::new(),
        }
    }
}

impl HeuristicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.translation_magnitude_m > 0.0) || !self.translation_magnitude_m.is_finite() {
            return Err(Error::InvalidInput(format!(
                "translation magnitude must be positive, got {}",
                self.translation_magnitude_m
            )));
        }
        if self.min_confident_matches < MIN_MATCHES {
            return Err(Error::InvalidInput(format!(
                "min_confident_matches must be at least {MIN_MATCHES}, got {}",
                self.min_confident_matches
            )));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::InvalidInput(format!(
                "min confidence must be in [0, 1], got {}",
                self.min_confidence
            )));
        }
        if !self.fallback_rotation_rad.is_finite() || !(self.fallback_axis.norm() > 0.0) {
            return Err(Error::InvalidInput("fallback rotation is not usable".into()));
        }
        if !(self.gap_threshold_s > 0.0) {
            return Err(Error::InvalidInput(format!(
                "gap threshold must be positive, got {}",
                self.gap_threshold_s
            )));
        }
        Ok(())
    }

    /// Translation that puts camera B `translation_magnitude_m` ahead of
    /// camera A along A's optical axis, for a given rotation.
    fn forward_translation(&self, rotation: &Quaternion) -> Vector3<f64> {
        -rotation.rotate(&Vector3::new(0.0, 0.0, self.translation_magnitude_m))
    }

    /// The constant pose assigned to pairs without enough confident matches.
    pub fn fallback_pose(&self) -> Result<RelativePose> {
        let rotation = Quaternion::from_axis_angle(&self.fallback_axis, self.fallback_rotation_rad)?;
        Ok(RelativePose::new(rotation, self.forward_translation(&rotation)))
    }
}

/// Two consecutive frames of one camera and their matches.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePair {
    pub frame_a: String,
    pub frame_b: String,
    pub ts_a: f64,
    pub ts_b: f64,
    pub matches: MatchSet,
    pub intrinsics: CameraIntrinsics,
}

impl FramePair {
    pub fn validate(&self) -> Result<()> {
        if !(self.ts_b > self.ts_a) || !self.ts_a.is_finite() || !self.ts_b.is_finite() {
            return Err(Error::InvalidInput(format!(
                "pair '{}': timestamps {} -> {} are not increasing",
                self.matches.pair_id, self.ts_a, self.ts_b
            )));
        }
        self.matches.validate(&self.intrinsics, &self.intrinsics)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PoseSource {
    Matched,
    FallbackRotation,
}

impl PoseSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            PoseSource::Matched => "matched",
            PoseSource::FallbackRotation => "fallback_rotation",
        }
    }
}

impl std::str::FromStr for PoseSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matched" => Ok(PoseSource::Matched),
            "fallback_rotation" => Ok(PoseSource::FallbackRotation),
            other => Err(Error::InvalidInput(format!("unknown pose source '{other}'"))),
        }
    }
}

/// Stage-one estimate for one frame pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairEstimate {
    pub ts_a: f64,
    pub ts_b: f64,
    /// Frame A → frame B, translation in meters.
    pub pose: RelativePose,
    pub source: PoseSource,
    pub gap_flag: bool,
    pub inlier_count: usize,
}

/// Estimates the relative pose of one frame pair.
///
/// Never fails on well-formed input: pairs whose matches cannot support a
/// robust fit get the fallback pose. Malformed input (mismatched lists,
/// out-of-image points, non-increasing timestamps) is an error.
pub fn estimate_pair(p: &FramePair, h: &HeuristicConfig, r: &RansacConfig) -> Result<PairEstimate> {
    h.validate()?;
    r.validate()?;
    p.validate()?;
    let gap_flag = p.ts_b - p.ts_a > h.gap_threshold_s;
    let estimate = |pose, source, inlier_count| PairEstimate {
        ts_a: p.ts_a,
        ts_b: p.ts_b,
        pose,
        source,
        gap_flag,
        inlier_count,
    };
    let fallback = || -> Result<PairEstimate> {
        Ok(estimate(h.fallback_pose()?, PoseSource::FallbackRotation, 0))
    };

    let matches = if h.static_mask.is_empty() {
        p.matches.clone()
    } else {
        let m = &p.matches;
        m.filter(|i| {
            !h.static_mask
                .iter()
                .any(|rect| rect.contains(&m.points_a[i]) || rect.contains(&m.points_b[i]))
        })
    };
    if matches.confident_count(h.min_confidence) < h.min_confident_matches {
        return fallback();
    }

    let k = &p.intrinsics;
    let Ok(fit) = ransac::ransac_essential(&matches, k, k, r) else {
        return fallback();
    };
    let inliers = fit.inlier_indices();
    let rays = epipolar::normalize_matches(&matches, k, k).select(&inliers);
    match epipolar::recover_pose(&fit.essential, &rays) {
        Ok(rec) => {
            let pose = RelativePose::new(
                rec.pose.rotation,
                rec.pose.translation.normalize() * h.translation_magnitude_m,
            );
            Ok(estimate(pose, PoseSource::Matched, inliers.len()))
        }
        Err(Error::PureRotation { .. }) => match epipolar::rotation_only(&rays) {
            Ok(rotation) => {
                let pose = RelativePose::new(rotation, h.forward_translation(&rotation));
                Ok(estimate(pose, PoseSource::Matched, inliers.len()))
            }
            Err(_) => fallback(),
        },
        Err(_) => fallback(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedPose {
    pub timestamp: f64,
    /// Maps frame-k coordinates to frame-0 coordinates; its translation is the
    /// camera position and its rotation the camera orientation.
    pub pose: RelativePose,
}

/// Timestamped global poses, in strictly increasing time order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrajectoryEstimate {
    pub poses: Vec<TimedPose>,
}

impl TrajectoryEstimate {
    pub fn new(poses: Vec<TimedPose>) -> Result<Self> {
        for w in poses.windows(2) {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(Error::InvalidInput(format!(
                    "trajectory timestamps not strictly increasing: {} then {}",
                    w[0].timestamp, w[1].timestamp
                )));
            }
        }
        Ok(Self { poses })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.poses.iter().map(|p| p.timestamp).collect()
    }

    /// Relative poses between consecutive entries (frame k−1 → frame k).
    pub fn relative_poses(&self) -> Vec<RelativePose> {
        self.poses
            .windows(2)
            .map(|w| w[0].pose.then(&w[1].pose.inverse()))
            .collect()
    }
}

/// Chains pair estimates into global poses: `W₀ = I`, `W_k = W_{k−1} ∘ P_k⁻¹`.
pub fn compose_trajectory(estimates: &[PairEstimate]) -> Result<TrajectoryEstimate> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::InvalidInput("no pair estimates to compose".into()))?;
    for (k, w) in estimates.windows(2).enumerate() {
        if w[0].ts_b != w[1].ts_a {
            return Err(Error::InvalidInput(format!(
                "pairs {k} and {} are not contiguous: {} ends at {} but the next starts at {}",
                k + 1,
                k,
                w[0].ts_b,
                w[1].ts_a
            )));
        }
    }
    let mut poses = Vec::with_capacity(estimates.len() + 1);
    poses.push(TimedPose {
        timestamp: first.ts_a,
        pose: RelativePose::identity(),
    });
    let mut global = RelativePose::identity();
    for e in estimates {
        global = e.pose.inverse().then(&global);
        poses.push(TimedPose {
            timestamp: e.ts_b,
            pose: global,
        });
    }
    TrajectoryEstimate::new(poses)
}
