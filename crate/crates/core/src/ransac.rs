//! Plain RANSAC over the eight-point essential-matrix solver.
//!
//! Matches below `min_confidence` never take part. Hypotheses are scored by
//! their inlier count under the Sampson distance in pixels; the number of
//! iterations adapts to the best inlier ratio seen so far and the final model
//! is refit on the whole consensus set.

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::epipolar::{self, homogeneous, EssentialMatrix, MatchSet, MIN_MATCHES};
use crate::geometry::CameraIntrinsics;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacConfig {
    /// Probability of drawing at least one all-inlier sample.
    pub success_prob: f64,
    /// Sampson distance, in pixels, below which a match is an inlier.
    pub inlier_threshold_px: f64,
    pub max_iterations: usize,
    pub min_confidence: f64,
    pub rng_seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            success_prob: 0.99999,
            inlier_threshold_px: 0.9,
            max_iterations: 100_000,
            min_confidence: 0.5,
            rng_seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.success_prob > 0.0 && self.success_prob < 1.0) {
            return Err(Error::InvalidInput(format!(
                "success probability must be in (0, 1), got {}",
                self.success_prob
            )));
        }
        if !(self.inlier_threshold_px > 0.0) || !self.inlier_threshold_px.is_finite() {
            return Err(Error::InvalidInput(format!(
                "inlier threshold must be positive, got {}",
                self.inlier_threshold_px
            )));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::InvalidInput(format!(
                "min confidence must be in [0, 1], got {}",
                self.min_confidence
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be positive".into()));
        }
        Ok(())
    }

    /// Copy with a seed derived from `rng_seed` and a pair index, so that every
    /// pair of a trajectory draws an independent, schedule-free stream.
    pub fn for_pair(&self, index: usize) -> Self {
        Self {
            rng_seed: crate::derive_seed(self.rng_seed, index as u64),
            ..*self
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacResult {
    pub essential: EssentialMatrix,
    /// One flag per input match; low-confidence matches are never inliers.
    pub inlier_mask: Vec<bool>,
    pub iterations_run: usize,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }

    pub fn inlier_indices(&self) -> Vec<usize> {
        (0..self.inlier_mask.len())
            .filter(|&i| self.inlier_mask[i])
            .collect()
    }
}

fn sampson_normalized(e: &EssentialMatrix, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let m = e.matrix();
    let ex = m * a;
    let ety = m.tr_mul(b);
    let r = b.dot(&ex);
    let den = ex.x * ex.x + ex.y * ex.y + ety.x * ety.x + ety.y * ety.y;
    if !(den > 0.0) {
        return f64::INFINITY;
    }
    r.abs() / den.sqrt()
}

/// First-order geometric distance of a correspondence to the epipolar
/// manifold of `e`, in pixels (normalized distance times `√(fx·fy)`).
///
/// Returns `+∞` when both epipolar-line gradients vanish.
pub fn sampson_distance(
    e: &EssentialMatrix,
    ray_a: &Vector2<f64>,
    ray_b: &Vector2<f64>,
    k: &CameraIntrinsics,
) -> f64 {
    sampson_normalized(e, &homogeneous(ray_a), &homogeneous(ray_b)) * k.pixel_scale()
}

/// `⌈log(1 − p) / log(1 − w^s)⌉`, at least 1 and saturating at `usize::MAX`.
pub fn required_iterations(success_prob: f64, inlier_ratio: f64, sample_size: usize) -> usize {
    let all_inliers = inlier_ratio.clamp(0.0, 1.0).powi(sample_size as i32);
    if all_inliers >= 1.0 {
        return 1;
    }
    if all_inliers <= 0.0 {
        return usize::MAX;
    }
    let n = ((1.0 - success_prob).ln() / (-all_inliers).ln_1p()).ceil();
    if n.is_nan() || n >= usize::MAX as f64 {
        usize::MAX
    } else {
        (n as usize).max(1)
    }
}

/// Robust essential-matrix fit over a contaminated match set.
///
/// Deterministic for a given `cfg.rng_seed`.
pub fn ransac_essential(
    m: &MatchSet,
    k_a: &CameraIntrinsics,
    k_b: &CameraIntrinsics,
    cfg: &RansacConfig,
) -> Result<RansacResult> {
    cfg.validate()?;
    let rays = epipolar::normalize_matches(m, k_a, k_b);
    let confident: Vec<usize> = (0..m.len())
        .filter(|&i| m.confidence[i] >= cfg.min_confidence)
        .collect();
    let n = confident.len();
    if n < MIN_MATCHES {
        return Err(Error::InsufficientMatches {
            required: MIN_MATCHES,
            got: n,
        });
    }
    let hom_a: Vec<Vector3<f64>> = confident.iter().map(|&i| homogeneous(&rays.rays_a[i])).collect();
    let hom_b: Vec<Vector3<f64>> = confident.iter().map(|&i| homogeneous(&rays.rays_b[i])).collect();
    // Same expression as `sampson_distance`, so the returned mask can be
    // re-derived exactly from the returned model.
    let pixel_scale = k_a.pixel_scale();
    let is_inlier = |e: &EssentialMatrix, a: &Vector3<f64>, b: &Vector3<f64>| {
        sampson_normalized(e, a, b) * pixel_scale < cfg.inlier_threshold_px
    };
    let inliers_of = |e: &EssentialMatrix| -> Vec<bool> {
        hom_a.iter().zip(&hom_b).map(|(a, b)| is_inlier(e, a, b)).collect()
    };
    let count_inliers = |e: &EssentialMatrix| -> usize {
        hom_a.iter().zip(&hom_b).filter(|(a, b)| is_inlier(e, a, b)).count()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut best: Option<(EssentialMatrix, usize)> = None;
    let mut bound = cfg.max_iterations;
    let mut iterations = 0;
    let mut sample_a = [Vector2::zeros(); MIN_MATCHES];
    let mut sample_b = [Vector2::zeros(); MIN_MATCHES];
    while iterations < bound {
        iterations += 1;
        let sample = rand::seq::index::sample(&mut rng, n, MIN_MATCHES);
        for (slot, idx) in sample.iter().enumerate() {
            sample_a[slot] = rays.rays_a[confident[idx]];
            sample_b[slot] = rays.rays_b[confident[idx]];
        }
        let Ok(e) = epipolar::eight_point_essential(&sample_a, &sample_b) else {
            continue;
        };
        let count = count_inliers(&e);
        if count > best.map_or(0, |(_, c)| c) {
            best = Some((e, count));
            if count >= MIN_MATCHES {
                let w = count as f64 / n as f64;
                bound = cfg
                    .max_iterations
                    .min(required_iterations(cfg.success_prob, w, MIN_MATCHES));
            }
        }
    }

    let (best_e, best_count) = match best {
        Some((e, c)) if c >= MIN_MATCHES => (e, c),
        other => {
            return Err(Error::RobustFitFailure(format!(
                "best hypothesis has {} inliers after {iterations} iterations",
                other.map_or(0, |(_, c)| c)
            )))
        }
    };

    let mut model = best_e;
    let mut local_mask = inliers_of(&best_e);
    debug_assert_eq!(local_mask.iter().filter(|&&b| b).count(), best_count);
    let (cons_a, cons_b): (Vec<_>, Vec<_>) = local_mask
        .iter()
        .enumerate()
        .filter(|(_, &inl)| inl)
        .map(|(j, _)| (rays.rays_a[confident[j]], rays.rays_b[confident[j]]))
        .unzip();
    if let Ok(refit) = epipolar::eight_point_essential(&cons_a, &cons_b) {
        let refit_mask = inliers_of(&refit);
        if refit_mask.iter().filter(|&&b| b).count() >= MIN_MATCHES {
            model = refit;
            local_mask = refit_mask;
        }
    }

    let mut inlier_mask = vec![false; m.len()];
    for (j, &i) in confident.iter().enumerate() {
        inlier_mask[i] = local_mask[j];
    }
    Ok(RansacResult {
        essential: model,
        inlier_mask,
        iterations_run: iterations,
    })
}
