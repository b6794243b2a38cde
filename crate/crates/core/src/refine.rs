//! Residual pose parametrization and losses for a learned second stage.
//!
//! A refinement model predicts corrections on top of a stage-one pose:
//! `t = t_base + t_cnn` and `q = (q_base + q_cnn) / |q_base + q_cnn|`. In
//! positive-w mode the real part of the sum is replaced by `exp(w_prelim)`,
//! which forces `w > 0` at the price of a discontinuity for rotations near π.
//!
//! The rotation loss `2·acos(|q·q_gt|)` has an unbounded slope at `d = 1`, so
//! above `1 − ε` it is replaced by its tangent line at `1 − ε`. As a
//! consequence the loss of a perfect prediction is not zero but
//! `2·acos(1−ε) − 2ε/√(1−(1−ε)²) ≈ √(2ε)`.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Quaternion, RelativePose, UNIT_TOLERANCE};
use crate::{Error, Result};

/// Learned correction to a stage-one pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualUpdate {
    pub t_cnn: Vector3<f64>,
    /// Unnormalized quaternion increment.
    pub q_cnn: Quaternion,
    /// Preliminary real part, used only in positive-w mode.
    pub w_prelim: Option<f64>,
}

impl ResidualUpdate {
    pub fn zero() -> Self {
        Self {
            t_cnn: Vector3::zeros(),
            q_cnn: Quaternion::new(0.0, 0.0, 0.0, 0.0),
            w_prelim: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.t_cnn.iter().all(|c| c.is_finite())
            && self.q_cnn.is_finite()
            && self.w_prelim.is_none_or(f64::is_finite);
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidInput("residual update has non-finite components".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Width of the interval `[1 − ε, 1]` where `acos` is linearly extrapolated.
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { epsilon: 1e-4 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon > 0.0 && self.epsilon < 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "loss epsilon must be in (0, 1), got {}",
                self.epsilon
            )))
        }
    }

    /// Slope of the rotation loss with respect to `d` on the extrapolated
    /// branch; the largest slope magnitude anywhere.
    pub fn junction_slope(&self) -> f64 {
        let d0 = 1.0 - self.epsilon;
        -2.0 / (1.0 - d0 * d0).sqrt()
    }
}

pub fn apply_translation_residual(base: &Vector3<f64>, upd: &ResidualUpdate) -> Vector3<f64> {
    base + upd.t_cnn
}

pub fn apply_rotation_residual(
    base: &Quaternion,
    upd: &ResidualUpdate,
    positive_w: bool,
) -> Result<Quaternion> {
    upd.validate()?;
    let mut sum = Quaternion::new(
        base.w + upd.q_cnn.w,
        base.x + upd.q_cnn.x,
        base.y + upd.q_cnn.y,
        base.z + upd.q_cnn.z,
    );
    if positive_w {
        let w_prelim = upd.w_prelim.ok_or_else(|| {
            Error::InvalidInput("positive-w mode needs a w_prelim value".into())
        })?;
        sum.w = w_prelim.exp();
    }
    let norm = sum.norm();
    if !(norm > 1e-12) || !norm.is_finite() {
        return Err(Error::DegenerateResidual { norm });
    }
    let q = Quaternion::new(sum.w / norm, sum.x / norm, sum.y / norm, sum.z / norm);
    if positive_w && !(q.w > 0.0) {
        return Err(Error::DegenerateResidual { norm });
    }
    Ok(q)
}

/// Applies both residuals to a stage-one pose.
pub fn apply_residual(
    base: &RelativePose,
    upd: &ResidualUpdate,
    positive_w: bool,
) -> Result<RelativePose> {
    Ok(RelativePose::new(
        apply_rotation_residual(&base.rotation, upd, positive_w)?,
        apply_translation_residual(&base.translation, upd),
    ))
}

/// Rotation loss in radians and its gradient with respect to `q`.
pub fn rotation_loss(q: &Quaternion, q_gt: &Quaternion, cfg: &LossConfig) -> Result<(f64, [f64; 4])> {
    cfg.validate()?;
    for (name, v) in [("q", q), ("q_gt", q_gt)] {
        if !v.is_unit(UNIT_TOLERANCE) {
            return Err(Error::InvalidRotation(format!(
                "{name} has norm {}, expected 1",
                v.norm()
            )));
        }
    }
    Ok(rotation_loss_unchecked(q, q_gt, cfg))
}

/// [`rotation_loss`] for arbitrary 4-vectors, treating `q` as a point in R⁴.
pub fn rotation_loss_unchecked(q: &Quaternion, q_gt: &Quaternion, cfg: &LossConfig) -> (f64, [f64; 4]) {
    let dot = q.dot(q_gt);
    let sign = if dot < 0.0 { -1.0 } else { 1.0 };
    let d = dot.abs();
    let d0 = 1.0 - cfg.epsilon;
    let (loss, slope) = if d <= d0 {
        (2.0 * d.acos(), -2.0 / (1.0 - d * d).sqrt())
    } else {
        let slope = cfg.junction_slope();
        (2.0 * d0.acos() + slope * (d - d0), slope)
    };
    let g = slope * sign;
    (loss, [g * q_gt.w, g * q_gt.x, g * q_gt.y, g * q_gt.z])
}

/// Translation loss `‖t − t_gt‖` and its gradient (zero at `t = t_gt`).
pub fn translation_loss(t: &Vector3<f64>, t_gt: &Vector3<f64>) -> (f64, Vector3<f64>) {
    let diff = t - t_gt;
    let norm = diff.norm();
    if norm == 0.0 {
        (0.0, Vector3::zeros())
    } else {
        (norm, diff / norm)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheckReport {
    pub samples: usize,
    pub arccos_samples: usize,
    pub extrapolated_samples: usize,
    pub max_rel_error_rotation: f64,
    pub max_rel_error_translation: f64,
}

impl GradientCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.max_rel_error_rotation.max(self.max_rel_error_translation)
    }
}

fn random_unit4(rng: &mut ChaCha8Rng) -> [f64; 4] {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.map(|c| c / n);
        }
    }
}

fn central_difference<const N: usize>(x: [f64; N], h: f64, f: impl Fn(&[f64; N]) -> f64) -> [f64; N] {
    std::array::from_fn(|i| {
        let (mut up, mut down) = (x, x);
        up[i] += h;
        down[i] -= h;
        (f(&up) - f(&down)) / (2.0 * h)
    })
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Compares analytic loss gradients with central finite differences (step
/// `h`) on `samples` random cases of each loss. Rotation pairs alternate
/// between the `acos` branch (`d ∈ [0, 1−2ε]`) and the extrapolated branch.
/// Points within `10·h` of the kinks (`q·q_gt = 0`, `d = 1−ε`) are resampled,
/// since a difference quotient straddling a kink measures neither side.
pub fn gradient_check(samples: usize, h: f64, seed: u64, cfg: &LossConfig) -> Result<GradientCheckReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = cfg.epsilon;
    let mut report = GradientCheckReport {
        samples,
        arccos_samples: 0,
        extrapolated_samples: 0,
        max_rel_error_rotation: 0.0,
        max_rel_error_translation: 0.0,
    };
    for i in 0..samples {
        let extrapolated = i % 2 == 1;
        let (q, q_gt) = loop {
            let gt = random_unit4(&mut rng);
            let d = if extrapolated {
                rng.random_range(1.0 - eps..=1.0)
            } else {
                rng.random_range(0.0..=1.0 - 2.0 * eps)
            };
            if d < 10.0 * h || (d - (1.0 - eps)).abs() < 10.0 * h {
                continue;
            }
            // component of a random direction orthogonal to q_gt
            let r = random_unit4(&mut rng);
            let along: f64 = r.iter().zip(&gt).map(|(a, b)| a * b).sum();
            let perp: [f64; 4] = std::array::from_fn(|k| r[k] - along * gt[k]);
            let pn = perp.iter().map(|c| c * c).sum::<f64>().sqrt();
            if pn < 1e-3 {
                continue;
            }
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let c = (1.0 - d * d).max(0.0).sqrt();
            let q: [f64; 4] = std::array::from_fn(|k| s * (d * gt[k] + c * perp[k] / pn));
            break (Quaternion::from_array(q), Quaternion::from_array(gt));
        };
        if extrapolated {
            report.extrapolated_samples += 1;
        } else {
            report.arccos_samples += 1;
        }
        let (_, analytic) = rotation_loss_unchecked(&q, &q_gt, cfg);
        let numeric = central_difference(q.to_array(), h, |x| {
            rotation_loss_unchecked(&Quaternion::from_array(*x), &q_gt, cfg).0
        });
        report.max_rel_error_rotation = report.max_rel_error_rotation.max(relative_error(&analytic, &numeric));

        let t: [f64; 3] = std::array::from_fn(|_| rng.random_range(-20.0..20.0));
        let t_gt = Vector3::from_fn(|_, _| rng.random_range(-20.0..20.0));
        let (_, analytic) = translation_loss(&Vector3::from(t), &t_gt);
        let numeric = central_difference(t, h, |x| translation_loss(&Vector3::from(*x), &t_gt).0);
        report.max_rel_error_translation =
            report.max_rel_error_translation.max(relative_error(analytic.as_slice(), &numeric));
    }
    Ok(report)
}
