//! Seeded synthetic scenes with known ground truth.
//!
//! Scene points are drawn in frame A's view frustum (uniform pixel, uniform
//! depth), projected into frame B through the ground-truth pose, perturbed by
//! Gaussian pixel noise and partly replaced by outliers. Every pixel is snapped
//! to [`PIXEL_QUANTUM`](crate::geometry::PIXEL_QUANTUM) so that pixel-space augmentations act exactly.
//! Everything is a pure function of the configured seed.

use nalgebra::{Vector2, Vector3};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::epipolar::MatchSet;
use crate::geometry::{snap_to_pixel_grid, CameraIntrinsics, Quaternion, RelativePose};
use crate::odometry::{FramePair, TimedPose, TrajectoryEstimate};
use crate::{derive_seed, Error, Result};

/// 640×480 camera with a 500 px focal length, principal point at the pixel
/// grid center.
pub fn default_camera() -> CameraIntrinsics {
    CameraIntrinsics::new(500.0, 500.0, 319.5, 239.5, 640, 480).expect("valid default camera")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub num_points: usize,
    /// Depth range in frame A, meters.
    pub depth_range_m: (f64, f64),
    pub rng_seed: u64,
    pub pixel_noise_sigma: f64,
    pub outlier_fraction: f64,
    pub pose_gt: RelativePose,
    pub intrinsics: CameraIntrinsics,
    pub timestamps: (f64, f64),
    /// Resampling budget for each point before the scene is declared infeasible.
    pub max_attempts_per_point: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            num_points: 200,
            depth_range_m: (4.0, 40.0),
            rng_seed: 0,
            pixel_noise_sigma: 0.0,
            outlier_fraction: 0.0,
            pose_gt: RelativePose::identity(),
            intrinsics: default_camera(),
            timestamps: (0.0, 1.0),
            max_attempts_per_point: 1000,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.depth_range_m;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidInput(format!("bad depth range ({lo}, {hi})")));
        }
        if !(self.pixel_noise_sigma >= 0.0 && self.pixel_noise_sigma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "bad pixel noise sigma {}",
                self.pixel_noise_sigma
            )));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidInput(format!(
                "outlier fraction {} is outside [0, 1)",
                self.outlier_fraction
            )));
        }
        if !self.pose_gt.rotation.is_unit(1e-9) {
            return Err(Error::InvalidRotation("ground-truth pose rotation is not unit".into()));
        }
        if !(self.timestamps.1 > self.timestamps.0) {
            return Err(Error::InvalidInput("timestamps must increase".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPair {
    pub frames: FramePair,
    pub pose_gt: RelativePose,
    /// `true` for planted outliers.
    pub outlier_labels: Vec<bool>,
    /// Scene points in frame A, one per match (outliers keep the point their
    /// frame-A pixel came from).
    pub points: Vec<Vector3<f64>>,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    // written out so that scaling both bounds by a power of two scales the
    // sample exactly
    let u: f64 = rng.random();
    lo + u * (hi - lo)
}

/// Whether `p` lies in the span of pixel centers, `[0, W−1] × [0, H−1]`.
/// Generated points stay inside it so that mirroring keeps them in the image.
fn in_center_span(k: &CameraIntrinsics, p: &Vector2<f64>) -> bool {
    let (w, h) = ((k.width() - 1) as f64, (k.height() - 1) as f64);
    p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h
}

fn random_pixel(rng: &mut ChaCha8Rng, k: &CameraIntrinsics) -> Vector2<f64> {
    Vector2::new(
        snap_to_pixel_grid(uniform(rng, 0.0, (k.width() - 1) as f64)),
        snap_to_pixel_grid(uniform(rng, 0.0, (k.height() - 1) as f64)),
    )
}

/// Generates a two-view scene.
pub fn generate_pair(cfg: &SceneConfig) -> Result<SyntheticPair> {
    cfg.validate()?;
    let k = &cfg.intrinsics;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let noise = Normal::new(0.0, cfg.pixel_noise_sigma)
        .map_err(|e| Error::InvalidInput(format!("pixel noise: {e}")))?;
    let perturb = |rng: &mut ChaCha8Rng, p: Vector2<f64>| {
        if cfg.pixel_noise_sigma == 0.0 {
            return p;
        }
        Vector2::new(
            snap_to_pixel_grid(p.x + noise.sample(rng)),
            snap_to_pixel_grid(p.y + noise.sample(rng)),
        )
    };

    let n = cfg.num_points;
    let mut points_a = Vec::with_capacity(n);
    let mut points_b = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let mut attempts = 0;
        loop {
            if attempts == cfg.max_attempts_per_point {
                return Err(Error::InfeasibleScene(format!(
                    "point {i}: no visible sample after {attempts} attempts; \
                     the two views barely overlap"
                )));
            }
            attempts += 1;
            let pa = random_pixel(&mut rng, k);
            let depth = uniform(&mut rng, cfg.depth_range_m.0, cfg.depth_range_m.1);
            let ray = k.unproject(&pa);
            let x_a = Vector3::new(ray.x * depth, ray.y * depth, depth);
            let Ok(pb) = k.project(&cfg.pose_gt.transform_point(&x_a)) else {
                continue;
            };
            let pb = Vector2::new(snap_to_pixel_grid(pb.x), snap_to_pixel_grid(pb.y));
            let (na, nb) = (perturb(&mut rng, pa), perturb(&mut rng, pb));
            if in_center_span(k, &na) && in_center_span(k, &nb) {
                points_a.push(na);
                points_b.push(nb);
                points.push(x_a);
                break;
            }
        }
    }

    let mut confidence = vec![1.0; n];
    let mut outlier_labels = vec![false; n];
    let n_out = (cfg.outlier_fraction * n as f64).round() as usize;
    for i in index::sample(&mut rng, n, n_out).into_vec() {
        points_b[i] = random_pixel(&mut rng, k);
        confidence[i] = rng.random::<f64>();
        outlier_labels[i] = true;
    }

    let matches = MatchSet::new("pair", points_a, points_b, confidence)?;
    Ok(SyntheticPair {
        frames: FramePair {
            frame_a: "frame_a".into(),
            frame_b: "frame_b".into(),
            ts_a: cfg.timestamps.0,
            ts_b: cfg.timestamps.1,
            matches,
            intrinsics: *k,
        },
        pose_gt: cfg.pose_gt,
        outlier_labels,
        points,
    })
}

fn random_unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// A random noiseless scene whose cameras converge on a common point: the
/// rotation has a uniformly random axis and an angle up to `max_rotation_rad`,
/// the baseline is uniform in `baseline_m`, and camera B's optical axis is
/// aimed at a point on camera A's optical axis so the views overlap.
pub fn random_two_view_scene(
    seed: u64,
    max_rotation_rad: f64,
    baseline_m: (f64, f64),
    num_points: usize,
    intrinsics: CameraIntrinsics,
) -> Result<SceneConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = random_unit_vector(&mut rng);
    let angle = uniform(&mut rng, 0.0, max_rotation_rad);
    let rotation = Quaternion::from_axis_angle(&axis, angle)?;
    let b = uniform(&mut rng, baseline_m.0, baseline_m.1);

    // optical axis of B in frame A coordinates: third row of R
    let axis_b = rotation.matrix_unchecked().row(2).transpose();
    let cos_phi = axis_b.z.clamp(-1.0, 1.0);
    let sin_phi = (1.0 - cos_phi * cos_phi).sqrt();
    let d = if sin_phi > 0.0 { (0.9 * b / sin_phi).min(40.0) } else { 40.0 };
    let d_b = d * cos_phi + (b * b - d * d * sin_phi * sin_phi).max(0.0).sqrt();
    let center_b = Vector3::new(0.0, 0.0, d) - axis_b * d_b;
    let translation = -rotation.rotate(&center_b);

    Ok(SceneConfig {
        num_points,
        depth_range_m: (0.6 * d, 1.4 * d),
        rng_seed: derive_seed(seed, 1),
        pose_gt: RelativePose::new(rotation, translation),
        intrinsics,
        ..SceneConfig::default()
    })
}

/// Piecewise constant-velocity planar motion of a forward-looking camera.
///
/// The vehicle yaws about the camera's y axis (pointing down) and drives along
/// its optical axis. Yaw rate is redrawn every `segment_frames` frames.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryConfig {
    pub num_frames: usize,
    pub speed_mps: f64,
    pub frame_interval_s: f64,
    /// Yaw rates are drawn uniformly from `[-max, max]`.
    pub max_yaw_rate_rad_s: f64,
    pub segment_frames: usize,
    /// Pairs (by index) spanning a signal gap: they last `gap_duration_s` and
    /// carry only `gap_match_count` low-confidence random matches.
    pub gap_pairs: Vec<usize>,
    pub gap_duration_s: f64,
    pub gap_match_count: usize,
    pub start_time_s: f64,
    /// Template for every pair's scene; pose, seed and timestamps are
    /// overridden per pair.
    pub scene: SceneConfig,
    pub rng_seed: u64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            num_frames: 20,
            speed_mps: 10.0,
            frame_interval_s: 1.0,
            max_yaw_rate_rad_s: 0.1,
            segment_frames: 5,
            gap_pairs: Vec::new(),
            gap_duration_s: 30.0,
            gap_match_count: 5,
            start_time_s: 0.0,
            scene: SceneConfig {
                depth_range_m: (20.0, 80.0),
                ..SceneConfig::default()
            },
            rng_seed: 0,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames < 2 {
            return Err(Error::InvalidInput(format!(
                "a trajectory needs at least 2 frames, got {}",
                self.num_frames
            )));
        }
        if self.segment_frames == 0 {
            return Err(Error::InvalidInput("segment_frames must be positive".into()));
        }
        if !(self.frame_interval_s > 0.0) || !(self.gap_duration_s > 0.0) {
            return Err(Error::InvalidInput("frame intervals must be positive".into()));
        }
        if !(self.speed_mps >= 0.0) || !(self.max_yaw_rate_rad_s >= 0.0) {
            return Err(Error::InvalidInput("speed and yaw rate must be non-negative".into()));
        }
        if let Some(&g) = self.gap_pairs.iter().find(|&&g| g + 1 >= self.num_frames) {
            return Err(Error::InvalidInput(format!("gap pair {g} is past the last pair")));
        }
        Ok(())
    }
}

/// RNG stream reserved for the motion model; pair scenes use streams `0..N−1`.
const MOTION_STREAM: u64 = u64::MAX;

/// Ground-truth global poses (frame k → frame 0) of the configured motion.
pub fn generate_motion(cfg: &TrajectoryConfig) -> Result<TrajectoryEstimate> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, MOTION_STREAM));
    let mut poses = Vec::with_capacity(cfg.num_frames);
    let (mut time, mut heading) = (cfg.start_time_s, 0.0f64);
    let mut position = Vector3::zeros();
    let mut yaw_rate = 0.0;
    poses.push(TimedPose {
        timestamp: time,
        pose: RelativePose::identity(),
    });
    for k in 1..cfg.num_frames {
        if (k - 1) % cfg.segment_frames == 0 {
            let m = cfg.max_yaw_rate_rad_s;
            yaw_rate = uniform(&mut rng, -m, m);
        }
        let dt = if cfg.gap_pairs.contains(&(k - 1)) {
            cfg.gap_duration_s
        } else {
            cfg.frame_interval_s
        };
        time += dt;
        heading += yaw_rate * dt;
        let rotation = Quaternion::from_axis_angle(&Vector3::y(), heading)?;
        if cfg.speed_mps > 0.0 {
            position += rotation.rotate(&Vector3::z()) * (cfg.speed_mps * dt);
        }
        poses.push(TimedPose {
            timestamp: time,
            pose: RelativePose::new(rotation, position),
        });
    }
    TrajectoryEstimate::new(poses)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTrajectory {
    pub pairs: Vec<FramePair>,
    /// Frame k → frame k+1 for every pair.
    pub relative_gt: Vec<RelativePose>,
    pub ground_truth: TrajectoryEstimate,
    pub outlier_labels: Vec<Vec<bool>>,
}

/// Generates a trajectory and one freshly sampled scene per consecutive pair.
pub fn generate_trajectory(cfg: &TrajectoryConfig) -> Result<SyntheticTrajectory> {
    let ground_truth = generate_motion(cfg)?;
    let relative_gt = ground_truth.relative_poses();
    let mut pairs = Vec::with_capacity(relative_gt.len());
    let mut outlier_labels = Vec::with_capacity(relative_gt.len());
    for (k, pose) in relative_gt.iter().enumerate() {
        let (ts_a, ts_b) = (ground_truth.poses[k].timestamp, ground_truth.poses[k + 1].timestamp);
        let seed = derive_seed(cfg.rng_seed, k as u64);
        let (mut frames, labels) = if cfg.gap_pairs.contains(&k) {
            gap_pair(cfg, seed, (ts_a, ts_b))
        } else {
            let scene = SceneConfig {
                rng_seed: seed,
                pose_gt: *pose,
                timestamps: (ts_a, ts_b),
                ..cfg.scene.clone()
            };
            let pair = generate_pair(&scene)?;
            (pair.frames, pair.outlier_labels)
        };
        frames.frame_a = format!("frame_{k:06}");
        frames.frame_b = format!("frame_{:06}", k + 1);
        frames.matches.pair_id = format!("pair_{k:06}");
        pairs.push(frames);
        outlier_labels.push(labels);
    }
    Ok(SyntheticTrajectory {
        pairs,
        relative_gt,
        ground_truth,
        outlier_labels,
    })
}

/// A pair across a signal gap: the few matches left are unrelated and weak.
fn gap_pair(cfg: &TrajectoryConfig, seed: u64, (ts_a, ts_b): (f64, f64)) -> (FramePair, Vec<bool>) {
    let k = &cfg.scene.intrinsics;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.gap_match_count;
    let mut m = MatchSet::default();
    for _ in 0..n {
        m.points_a.push(random_pixel(&mut rng, k));
        m.points_b.push(random_pixel(&mut rng, k));
        m.confidence.push(uniform(&mut rng, 0.0, 0.3));
    }
    let frames = FramePair {
        frame_a: String::new(),
        frame_b: String::new(),
        ts_a,
        ts_b,
        matches: m,
        intrinsics: *k,
    };
    (frames, vec![true; n])
}
