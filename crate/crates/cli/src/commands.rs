use std::fmt;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use log::info;
use rayon::prelude::*;

use odom_core::augment::{self, MirrorTransform, RotationWarp};
use odom_core::io::{self, Config, PairPose};
use odom_core::odometry::{self, FramePair, PairEstimate, TrajectoryEstimate};
use odom_core::refine::{self, LossConfig};
use odom_core::synth::{self, TrajectoryConfig};
use odom_core::{Quaternion, RelativePose};

use crate::{
    AugmentArgs, ComposeArgs, EstimateArgs, EstimationOptions, EvalArgs, GradcheckArgs,
    ResidualOptions, RunArgs, SynthArgs,
};

/// Bad user input detected by the front end itself.
#[derive(Debug)]
struct InputError(String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

/// An estimation that ran but did not meet its bar.
#[derive(Debug)]
struct EstimationFailure(String);

impl fmt::Display for EstimationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for EstimationFailure {}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(core) = cause.downcast_ref::<odom_core::Error>() {
            return if core.is_input_error() { 1 } else { 2 };
        }
        if cause.is::<EstimationFailure>() {
            return 2;
        }
    }
    1
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Ok(io::read_config(p)?),
        None => Ok(Config::default()),
    }
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut config = load_config(a.config.as_deref())?;
    config.ransac.rng_seed = a.seed;
    let cfg = TrajectoryConfig {
        num_frames: a.frames,
        speed_mps: a.speed,
        frame_interval_s: a.interval,
        max_yaw_rate_rad_s: a.max_yaw_rate,
        gap_pairs: a.gap_pairs,
        scene: synth::SceneConfig {
            num_points: a.points,
            pixel_noise_sigma: a.noise,
            outlier_fraction: a.outliers,
            intrinsics: config.intrinsics,
            ..TrajectoryConfig::default().scene
        },
        rng_seed: a.seed,
        ..TrajectoryConfig::default()
    };
    let traj = synth::generate_trajectory(&cfg)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    io::write_matches(&traj.pairs, &a.out.join("matches.csv"))?;
    io::write_trajectory(&traj.ground_truth, &a.out.join("groundtruth.txt"))?;
    io::write_config(&config, &a.out.join("config.txt"))?;
    info!(
        "wrote {} pairs with {} frames of ground truth to {}",
        traj.pairs.len(),
        traj.ground_truth.len(),
        a.out.display()
    );
    Ok(())
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("ODOM_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| input_error(format!("ODOM_THREADS must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n);
    }
    builder.build().context("starting worker threads")
}

/// Relative ground-truth pose between two timestamps of a trajectory.
fn relative_between(gt: &TrajectoryEstimate, ts_a: f64, ts_b: f64) -> Result<RelativePose> {
    let find = |ts: f64| {
        gt.poses
            .iter()
            .find(|p| p.timestamp == ts)
            .ok_or_else(|| input_error(format!("ground truth has no pose at timestamp {ts}")))
    };
    Ok(find(ts_a)?.pose.then(&find(ts_b)?.pose.inverse()))
}

fn estimate_pairs(pairs: &[FramePair], opts: &EstimationOptions) -> Result<Vec<PairEstimate>> {
    let mut config = load_config(opts.config.as_deref())?;
    if let Some(seed) = opts.seed {
        config.ransac.rng_seed = seed;
    }
    if let Some(mask) = &opts.static_mask {
        let rects = io::parse_static_mask(mask).map_err(|e| input_error(format!("--static-mask: {e}")))?;
        config.heuristic.static_mask.extend(rects);
    }
    let magnitudes: Option<Vec<f64>> = match &opts.scale_from {
        Some(path) => {
            let gt = io::read_trajectory(path)?;
            let m = pairs
                .iter()
                .map(|p| Ok(relative_between(&gt, p.ts_a, p.ts_b)?.translation.norm()))
                .collect::<Result<_>>()?;
            Some(m)
        }
        None => None,
    };

    let pool = thread_pool()?;
    let started = Instant::now();
    let estimates = pool.install(|| {
        pairs
            .par_iter()
            .enumerate()
            .map(|(i, pair)| {
                let mut heuristic = config.heuristic.clone();
                if let Some(m) = &magnitudes {
                    heuristic.translation_magnitude_m = m[i];
                }
                let t0 = Instant::now();
                let est = odometry::estimate_pair(pair, &heuristic, &config.ransac.for_pair(i))
                    .with_context(|| format!("pair '{}'", pair.matches.pair_id))?;
                info!(
                    "pair {}: {} matches, {}, {} inliers{}, {:.1} ms",
                    pair.matches.pair_id,
                    pair.matches.len(),
                    est.source.as_str(),
                    est.inlier_count,
                    if est.gap_flag { ", gap" } else { "" },
                    t0.elapsed().as_secs_f64() * 1e3
                );
                Ok(est)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    info!(
        "estimated {} pairs in {:.2} s on {} threads",
        estimates.len(),
        started.elapsed().as_secs_f64(),
        pool.current_num_threads()
    );
    Ok(estimates)
}

pub fn estimate(a: EstimateArgs) -> Result<()> {
    let config = load_config(a.options.config.as_deref())?;
    let pairs = io::read_matches(&a.matches, &config.intrinsics)?;
    let estimates = estimate_pairs(&pairs, &a.options)?;
    io::write_estimates(&estimates, &a.out)?;
    Ok(())
}

fn apply_residuals(estimates: &mut [PairEstimate], opts: &ResidualOptions) -> Result<()> {
    let Some(path) = &opts.residuals else {
        return Ok(());
    };
    for rec in io::read_residuals(path)? {
        let est = estimates
            .iter_mut()
            .find(|e| e.ts_a == rec.ts_a && e.ts_b == rec.ts_b)
            .ok_or_else(|| {
                input_error(format!(
                    "{}: residual for {} -> {} matches no pair",
                    path.display(),
                    rec.ts_a,
                    rec.ts_b
                ))
            })?;
        est.pose = refine::apply_residual(&est.pose, &rec.update, opts.positive_w)
            .with_context(|| format!("residual for pair {} -> {}", rec.ts_a, rec.ts_b))?;
    }
    Ok(())
}

fn compose_and_write(mut estimates: Vec<PairEstimate>, residual: &ResidualOptions, out: &Path) -> Result<()> {
    apply_residuals(&mut estimates, residual)?;
    let traj = odometry::compose_trajectory(&estimates)?;
    io::write_trajectory(&traj, out)?;
    info!("wrote {} poses to {}", traj.len(), out.display());
    Ok(())
}

pub fn compose(a: ComposeArgs) -> Result<()> {
    let estimates = io::read_estimates(&a.estimates)?;
    compose_and_write(estimates, &a.residual, &a.out)
}

pub fn run(a: RunArgs) -> Result<()> {
    let config = load_config(a.options.config.as_deref())?;
    let pairs = io::read_matches(&a.matches, &config.intrinsics)?;
    let estimates = estimate_pairs(&pairs, &a.options)?;
    if let Some(p) = &a.estimates_out {
        io::write_estimates(&estimates, p)?;
    }
    compose_and_write(estimates, &a.residual, &a.out)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let est = io::read_trajectory(&a.estimate)?;
    let gt = io::read_trajectory(&a.groundtruth)?;
    let report = odom_core::metrics::evaluate(&est, &gt)?;
    print!("{}", io::format_report(&report));
    if let Some(p) = &a.out {
        std::fs::write(p, io::format_report(&report)).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.csv {
        std::fs::write(p, io::format_report_csv(&report)).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn parse_floats<const N: usize>(s: &str, what: &str) -> Result<[f64; N]> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| input_error(format!("{what}: '{s}' is not a list of numbers")))?;
    v.try_into()
        .map_err(|_| input_error(format!("{what}: expected {N} numbers in '{s}'")))
}

pub fn augment(a: AugmentArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let k = config.intrinsics;
    let pairs = io::read_matches(&a.matches, &k)?;
    let poses: Vec<RelativePose> = match (&a.pose, &a.groundtruth) {
        (Some(p), _) => {
            let [tx, ty, tz, qx, qy, qz, qw] = parse_floats::<7>(p, "--pose")?;
            let q = Quaternion::new(qw, qx, qy, qz);
            if !q.is_unit(odom_core::geometry::UNIT_TOLERANCE) {
                return Err(input_error(format!("--pose: quaternion norm {} is not 1", q.norm())));
            }
            vec![RelativePose::new(q, [tx, ty, tz].into()); pairs.len()]
        }
        (None, Some(path)) => {
            let gt = io::read_trajectory(path)?;
            pairs
                .iter()
                .map(|p| relative_between(&gt, p.ts_a, p.ts_b))
                .collect::<Result<_>>()?
        }
        (None, None) => return Err(input_error("one of --pose or --groundtruth is required")),
    };

    let transform: Box<dyn Fn(&FramePair, &RelativePose) -> odom_core::Result<_>> = if a.mirror {
        let m = MirrorTransform::new(k.width())?;
        Box::new(move |p: &FramePair, pose: &RelativePose| augment::mirror_pair(&p.matches, pose, &m))
    } else if let (Some(axis), Some(deg)) = (&a.warp_axis, a.warp_deg) {
        let axis = parse_floats::<3>(axis, "--warp-axis")?;
        let q = Quaternion::from_axis_angle(&axis.into(), deg.to_radians())
            .map_err(|e| input_error(format!("--warp-axis: {e}")))?;
        let w = RotationWarp::new(q, k, a.max_warp_deg.to_radians())
            .map_err(|e| input_error(format!("warp: {e}")))?;
        info!("warp crop margin {} px", w.crop_margin_px());
        Box::new(move |p: &FramePair, pose: &RelativePose| augment::warp_second_frame(&p.matches, pose, &w))
    } else {
        return Err(input_error("choose --mirror or --warp-axis with --warp-deg"));
    };

    let mut out_pairs = Vec::with_capacity(pairs.len());
    let mut out_poses = Vec::with_capacity(pairs.len());
    for (pair, pose) in pairs.iter().zip(&poses) {
        let (matches, adjusted) =
            transform(pair, pose).with_context(|| format!("pair '{}'", pair.matches.pair_id))?;
        out_pairs.push(FramePair {
            matches,
            ..pair.clone()
        });
        out_poses.push(PairPose {
            ts_a: pair.ts_a,
            ts_b: pair.ts_b,
            pose: adjusted,
        });
    }
    io::write_matches(&out_pairs, &a.out)?;
    io::write_pair_poses(&out_poses, &a.pose_out)?;
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let cfg = LossConfig { epsilon: a.epsilon };
    cfg.validate()?;
    let r = refine::gradient_check(a.samples, a.step, a.seed, &cfg)?;
    println!("samples {} ({} acos branch, {} extrapolated)", r.samples, r.arccos_samples, r.extrapolated_samples);
    println!("rotation_max_rel_error {:e}", r.max_rel_error_rotation);
    println!("translation_max_rel_error {:e}", r.max_rel_error_translation);
    if !(r.max_rel_error() <= a.tolerance) {
        return Err(EstimationFailure(format!(
            "max relative error {:e} exceeds {:e}",
            r.max_rel_error(),
            a.tolerance
        ))
        .into());
    }
    Ok(())
}
