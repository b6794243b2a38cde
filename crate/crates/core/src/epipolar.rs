//! Two-view geometry for calibrated cameras.
//!
//! Correspondences are converted to normalized image coordinates, an
//! essential matrix is fit with the Hartley-conditioned eight-point method
//! and projected onto the essential manifold, and the four-fold
//! `(R, ±t)` decomposition is disambiguated by triangulating points and
//! keeping the candidate that puts the most of them in front of both cameras.
//!
//! The epipolar constraint is written `yᵀ·E·x = 0` with `x` the ray in the
//! first image and `y` the ray in the second, which for the pose convention
//! `x_B = R·x_A + t` gives `E ∝ [t]ₓ·R`.

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3, SVD};

use crate::geometry::{CameraIntrinsics, Quaternion, RelativePose};
use crate::{Error, Result};

/// Smallest number of correspondences the linear solver accepts.
pub const MIN_MATCHES: usize = 8;

/// `sin²` of the angle between two rays below which they count as parallel.
const PARALLEL_RAYS_SIN2: f64 = 1e-10;

/// Matched pixel coordinates between two frames, `x_i ∈ I₁`, `y_i ∈ I₂`,
/// with a per-match confidence in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MatchSet {
    pub pair_id: String,
    pub points_a: Vec<Vector2<f64>>,
    pub points_b: Vec<Vector2<f64>>,
    pub confidence: Vec<f64>,
}

impl MatchSet {
    pub fn new(
        pair_id: impl Into<String>,
        points_a: Vec<Vector2<f64>>,
        points_b: Vec<Vector2<f64>>,
        confidence: Vec<f64>,
    ) -> Result<Self> {
        let m = Self {
            pair_id: pair_id.into(),
            points_a,
            points_b,
            confidence,
        };
        m.check_consistency()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.points_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points_a.is_empty()
    }

    fn check_consistency(&self) -> Result<()> {
        if self.points_b.len() != self.points_a.len() || self.confidence.len() != self.points_a.len()
        {
            return Err(Error::InvalidInput(format!(
                "match set '{}' has {} / {} / {} points / points / confidences",
                self.pair_id,
                self.points_a.len(),
                self.points_b.len(),
                self.confidence.len()
            )));
        }
        if let Some(i) = self.confidence.iter().position(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidInput(format!(
                "match set '{}': confidence {} of match {i} is outside [0, 1]",
                self.pair_id, self.confidence[i]
            )));
        }
        Ok(())
    }

    /// Checks list lengths, confidence range and that every point lies inside
    /// its frame.
    pub fn validate(&self, k_a: &CameraIntrinsics, k_b: &CameraIntrinsics) -> Result<()> {
        self.check_consistency()?;
        for (i, (a, b)) in self.points_a.iter().zip(&self.points_b).enumerate() {
            if !k_a.contains(a) || !k_b.contains(b) {
                return Err(Error::InvalidInput(format!(
                    "match set '{}': match {i} ({}, {}) -> ({}, {}) lies outside the image",
                    self.pair_id, a.x, a.y, b.x, b.y
                )));
            }
        }
        Ok(())
    }

    /// Keeps the matches for which `keep(index)` holds.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> MatchSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        MatchSet {
            pair_id: self.pair_id.clone(),
            points_a: idx.iter().map(|&i| self.points_a[i]).collect(),
            points_b: idx.iter().map(|&i| self.points_b[i]).collect(),
            confidence: idx.iter().map(|&i| self.confidence[i]).collect(),
        }
    }

    pub fn confident_count(&self, min_confidence: f64) -> usize {
        self.confidence.iter().filter(|&&c| c >= min_confidence).count()
    }
}

/// A match set in normalized camera coordinates.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct NormalizedMatches {
    pub rays_a: Vec<Vector2<f64>>,
    pub rays_b: Vec<Vector2<f64>>,
    pub confidence: Vec<f64>,
}

impl NormalizedMatches {
    pub fn len(&self) -> usize {
        self.rays_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays_a.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> NormalizedMatches {
        NormalizedMatches {
            rays_a: indices.iter().map(|&i| self.rays_a[i]).collect(),
            rays_b: indices.iter().map(|&i| self.rays_b[i]).collect(),
            confidence: indices.iter().map(|&i| self.confidence[i]).collect(),
        }
    }
}

pub fn normalize_matches(
    m: &MatchSet,
    k_a: &CameraIntrinsics,
    k_b: &CameraIntrinsics,
) -> NormalizedMatches {
    NormalizedMatches {
        rays_a: m.points_a.iter().map(|p| k_a.unproject(p)).collect(),
        rays_b: m.points_b.iter().map(|p| k_b.unproject(p)).collect(),
        confidence: m.confidence.clone(),
    }
}

/// Essential matrix, defined up to scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssentialMatrix(Matrix3<f64>);

impl EssentialMatrix {
    /// `[t]ₓ·R` for a known pose.
    pub fn from_pose(pose: &RelativePose) -> Self {
        Self(skew(&pose.translation) * pose.rotation.matrix_unchecked())
    }

    /// Wraps a matrix without projecting it onto the essential manifold.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Algebraic epipolar residual `yᵀ·E·x`.
    pub fn residual(&self, ray_a: &Vector2<f64>, ray_b: &Vector2<f64>) -> f64 {
        homogeneous(ray_b).dot(&(self.0 * homogeneous(ray_a)))
    }
}

/// Cross-product matrix: `skew(v)·w = v × w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub(crate) fn homogeneous(p: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new(p.x, p.y, 1.0)
}

/// Similarity taking the points to zero mean and RMS distance √2.
fn conditioning(points: &[Vector2<f64>]) -> Result<Matrix3<f64>> {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector2<f64>>() / n;
    let rms = (points.iter().map(|p| (p - centroid).norm_squared()).sum::<f64>() / n).sqrt();
    if !(rms > 1e-12) {
        return Err(Error::DegenerateConfiguration(
            "all points of one image coincide".into(),
        ));
    }
    let s = std::f64::consts::SQRT_2 / rms;
    Ok(Matrix3::new(
        s,
        0.0,
        -s * centroid.x,
        0.0,
        s,
        -s * centroid.y,
        0.0,
        0.0,
        1.0,
    ))
}

/// Linear eight-point estimate on normalized coordinates, followed by
/// [`enforce_essential`]. The returned matrix has unit Frobenius norm before
/// enforcement, so singular values are `(σ, σ, 0)` with `σ ≈ 1/√2`.
pub fn eight_point_essential(
    rays_a: &[Vector2<f64>],
    rays_b: &[Vector2<f64>],
) -> Result<EssentialMatrix> {
    if rays_a.len() != rays_b.len() {
        return Err(Error::InvalidInput(format!(
            "{} rays in the first image but {} in the second",
            rays_a.len(),
            rays_b.len()
        )));
    }
    let n = rays_a.len();
    if n < MIN_MATCHES {
        return Err(Error::InsufficientMatches {
            required: MIN_MATCHES,
            got: n,
        });
    }
    let t_a = conditioning(rays_a)?;
    let t_b = conditioning(rays_b)?;

    // Eight rows leave a 9×8 system; a zero row keeps the SVD square so the
    // null vector is still the last right singular vector.
    let rows = n.max(9);
    let mut design = DMatrix::<f64>::zeros(rows, 9);
    for (i, (a, b)) in rays_a.iter().zip(rays_b).enumerate() {
        let x = t_a * homogeneous(a);
        let y = t_b * homogeneous(b);
        for r in 0..3 {
            for c in 0..3 {
                design[(i, 3 * r + c)] = y[r] * x[c];
            }
        }
    }
    let svd = SVD::new(design, false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::DegenerateConfiguration("SVD did not converge".into()))?;
    let e = v_t.row(8);
    let conditioned = Matrix3::new(e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8]);
    let raw = t_b.transpose() * conditioned * t_a;
    let norm = raw.norm();
    if !(norm > 1e-300) || !norm.is_finite() {
        return Err(Error::DegenerateConfiguration(
            "eight-point solve returned a zero matrix".into(),
        ));
    }
    enforce_essential(&(raw / norm))
}

/// Frobenius-nearest essential matrix: singular values `(σ₁, σ₂, σ₃)` are
/// replaced by `(σ, σ, 0)` with `σ = (σ₁ + σ₂)/2`.
pub fn enforce_essential(m: &Matrix3<f64>) -> Result<EssentialMatrix> {
    if !(m.norm() >= 1e-12) {
        return Err(Error::DegenerateConfiguration(format!(
            "matrix norm {:e} is too small to be an essential matrix",
            m.norm()
        )));
    }
    let svd = SVD::new(*m, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateConfiguration("SVD did not converge".into())),
    };
    let s = 0.5 * (svd.singular_values[0] + svd.singular_values[1]);
    let sigma = Matrix3::from_diagonal(&Vector3::new(s, s, 0.0));
    Ok(EssentialMatrix(u * sigma * v_t))
}

/// The four `(R, t)` poses consistent with `E`; translations have unit norm.
///
/// Order: `(U·W·Vᵀ, u₃)`, `(U·W·Vᵀ, −u₃)`, `(U·Wᵀ·Vᵀ, u₃)`, `(U·Wᵀ·Vᵀ, −u₃)`.
pub fn decompose_essential(e: &EssentialMatrix) -> Result<[RelativePose; 4]> {
    let svd = SVD::new(e.0, true, true);
    let (mut u, mut v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateConfiguration("SVD did not converge".into())),
    };
    if !(svd.singular_values[0] > 1e-12) {
        return Err(Error::DegenerateConfiguration(
            "essential matrix has vanishing singular values".into(),
        ));
    }
    // σ₃ = 0, so flipping the last singular vectors leaves E unchanged.
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
    }
    if v_t.determinant() < 0.0 {
        v_t.row_mut(2).neg_mut();
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * v_t;
    let r2 = u * w.transpose() * v_t;
    let t: Vector3<f64> = u.column(2).normalize();

    let to_quat = |r: &Matrix3<f64>| {
        Quaternion::from_matrix(r).map_err(|e| Error::DegenerateConfiguration(e.to_string()))
    };
    let (q1, q2) = (to_quat(&r1)?, to_quat(&r2)?);
    Ok([
        RelativePose::new(q1, t),
        RelativePose::new(q1, -t),
        RelativePose::new(q2, t),
        RelativePose::new(q2, -t),
    ])
}

/// A triangulated correspondence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangulation {
    /// Point in frame-A coordinates.
    pub point: Vector3<f64>,
    pub depth_a: f64,
    pub depth_b: f64,
}

impl Triangulation {
    pub fn in_front(&self) -> bool {
        self.depth_a > 0.0 && self.depth_b > 0.0
    }
}

/// Midpoint triangulation of the two rays `λ_a·R·x̂_a + t` and `λ_b·x̂_b`
/// (expressed in frame B), solved in closed form by linear least squares.
pub fn triangulate(
    pose: &RelativePose,
    ray_a: &Vector2<f64>,
    ray_b: &Vector2<f64>,
) -> Result<Triangulation> {
    let t = pose.translation;
    if !(t.norm() > 1e-12) {
        return Err(Error::Untriangulable);
    }
    let d1 = pose.rotation.rotate(&homogeneous(ray_a));
    let d2 = homogeneous(ray_b);
    let a11 = d1.norm_squared();
    let a22 = d2.norm_squared();
    let a12 = -d1.dot(&d2);
    let det = a11 * a22 - a12 * a12;
    if !(det / (a11 * a22) >= PARALLEL_RAYS_SIN2) {
        return Err(Error::Untriangulable);
    }
    let r1 = -d1.dot(&t);
    let r2 = d2.dot(&t);
    let lambda_a = (r1 * a22 - a12 * r2) / det;
    let lambda_b = (a11 * r2 - a12 * r1) / det;

    let mid_b = 0.5 * ((d1 * lambda_a + t) + d2 * lambda_b);
    let point = pose.rotation.conjugate().rotate(&(mid_b - t));
    Ok(Triangulation {
        point,
        depth_a: point.z,
        depth_b: mid_b.z,
    })
}

#[derive(Clone, Copy, Debug, Default)]
struct CandidateScore {
    in_front: usize,
    untriangulable: usize,
}

fn score_candidate(pose: &RelativePose, m: &NormalizedMatches) -> CandidateScore {
    let mut score = CandidateScore::default();
    for (a, b) in m.rays_a.iter().zip(&m.rays_b) {
        match triangulate(pose, a, b) {
            Ok(tri) if tri.in_front() => score.in_front += 1,
            Ok(_) => {}
            Err(_) => score.untriangulable += 1,
        }
    }
    score
}

fn best_candidate(candidates: &[RelativePose; 4], scores: &[CandidateScore]) -> Result<(RelativePose, usize)> {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i].in_front > scores[best].in_front {
            best = i;
        }
    }
    if scores[best].in_front == 0 {
        return Err(Error::CheiralityFailure);
    }
    Ok((candidates[best], scores[best].in_front))
}

/// Picks the candidate with the most points in front of both cameras (first
/// index wins ties) and returns it with that count.
pub fn select_cheirality(
    candidates: &[RelativePose; 4],
    m: &NormalizedMatches,
) -> Result<(RelativePose, usize)> {
    if m.is_empty() {
        return Err(Error::InvalidInput(
            "cheirality selection needs at least one match".into(),
        ));
    }
    let scores: Vec<CandidateScore> = candidates.iter().map(|c| score_candidate(c, m)).collect();
    best_candidate(candidates, &scores)
}

/// Outcome of [`recover_pose`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecoveredPose {
    /// Relative pose with unit-norm translation.
    pub pose: RelativePose,
    pub in_front: usize,
}

/// Decomposes `E` and selects the physically valid candidate on `m`.
///
/// Fails with [`Error::PureRotation`] when more than half of the matches have
/// parallel rays under some candidate rotation: the camera only rotated and the
/// translation direction is meaningless.
pub fn recover_pose(e: &EssentialMatrix, m: &NormalizedMatches) -> Result<RecoveredPose> {
    if m.is_empty() {
        return Err(Error::InvalidInput(
            "pose recovery needs at least one match".into(),
        ));
    }
    let candidates = decompose_essential(e)?;
    let scores: Vec<CandidateScore> = candidates.iter().map(|c| score_candidate(c, m)).collect();
    let parallel = scores.iter().map(|s| s.untriangulable).max().unwrap_or(0);
    if 2 * parallel > m.len() {
        return Err(Error::PureRotation {
            parallel,
            total: m.len(),
        });
    }
    let (pose, in_front) = best_candidate(&candidates, &scores)?;
    Ok(RecoveredPose { pose, in_front })
}

/// Rotation-only estimate: the rotation best aligning the bearing vectors of
/// the first image onto those of the second (Kabsch).
pub fn rotation_only(m: &NormalizedMatches) -> Result<Quaternion> {
    if m.len() < 2 {
        return Err(Error::InsufficientMatches {
            required: 2,
            got: m.len(),
        });
    }
    let mut cov = Matrix3::zeros();
    for (a, b) in m.rays_a.iter().zip(&m.rays_b) {
        cov += homogeneous(b).normalize() * homogeneous(a).normalize().transpose();
    }
    let svd = SVD::new(cov, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateConfiguration("SVD did not converge".into())),
    };
    if !(svd.singular_values[1] > 1e-12) {
        return Err(Error::DegenerateConfiguration(
            "bearings are collinear; rotation is not observable".into(),
        ));
    }
    let d = (u * v_t).determinant().signum();
    let r = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t;
    Quaternion::from_matrix(&r)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Noiseless rays of random points in front of both cameras.
    pub(crate) fn scene(pose: &RelativePose, n: usize, seed: u64) -> NormalizedMatches {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = NormalizedMatches::default();
        while m.len() < n {
            let p = Vector3::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(4.0..15.0),
            );
            let q = pose.transform_point(&p);
            if q.z < 0.5 {
                continue;
            }
            m.rays_a.push(Vector2::new(p.x / p.z, p.y / p.z));
            m.rays_b.push(Vector2::new(q.x / q.z, q.y / q.z));
            m.confidence.push(1.0);
        }
        m
    }

    fn direction_error(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        let c = a.normalize().dot(&b.normalize()).clamp(-1.0, 1.0);
        c.acos()
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> RelativePose {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let q = Quaternion::from_axis_angle(&axis, rng.random_range(0.0..0.4)).unwrap();
        let t = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        RelativePose::new(q, t)
    }

    #[test]
    fn normalize_examples() {
        let k = CameraIntrinsics::new(500.0, 400.0, 320.0, 240.0, 640, 480).unwrap();
        let m = MatchSet::new(
            "p",
            vec![Vector2::new(320.0, 240.0), Vector2::new(820.0 - 1.0, 240.0)],
            vec![Vector2::new(320.0 + 500.0, 240.0), Vector2::new(0.0, 0.0)],
            vec![0.25, 1.0],
        )
        .unwrap();
        let n = normalize_matches(&m, &k, &k);
        assert_eq!(n.rays_a[0], Vector2::new(0.0, 0.0));
        assert_eq!(n.rays_b[0], Vector2::new(1.0, 0.0));
        assert_eq!(n.confidence, vec![0.25, 1.0]);
    }

    #[test]
    fn match_set_rejects_malformed_input() {
        let p = vec![Vector2::new(1.0, 1.0)];
        assert!(MatchSet::new("x", p.clone(), vec![], vec![1.0]).is_err());
        assert!(MatchSet::new("x", p.clone(), p.clone(), vec![1.5]).is_err());
        assert!(MatchSet::new("x", p.clone(), p.clone(), vec![f64::NAN]).is_err());
        let k = CameraIntrinsics::new(10.0, 10.0, 2.0, 2.0, 4, 4).unwrap();
        let outside = MatchSet::new("x", p.clone(), vec![Vector2::new(4.0, 1.0)], vec![1.0]).unwrap();
        assert!(outside.validate(&k, &k).is_err());
        let inside = MatchSet::new("x", p.clone(), p, vec![1.0]).unwrap();
        assert!(inside.validate(&k, &k).is_ok());
    }

    #[test]
    fn eight_point_on_sideways_translation() {
        let pose = RelativePose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let m = scene(&pose, 20, 1);
        let e = eight_point_essential(&m.rays_a, &m.rays_b).unwrap();
        let expected = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        let scaled: Matrix3<f64> = e.matrix() / e.matrix().norm() * expected.norm();
        let err: f64 = (scaled - expected).amax().min((scaled + expected).amax());
        assert!(err < 1e-9, "{scaled}");
    }

    #[test]
    fn eight_point_error_paths() {
        let pose = RelativePose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let m = scene(&pose, 7, 2);
        assert!(matches!(
            eight_point_essential(&m.rays_a, &m.rays_b),
            Err(Error::InsufficientMatches { required: 8, got: 7 })
        ));
        let same = vec![Vector2::new(0.1, 0.2); 12];
        assert!(matches!(
            eight_point_essential(&same, &same),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn eight_point_with_exactly_eight_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pose = random_pose(&mut rng);
        let m = scene(&pose, 8, 3);
        let e = eight_point_essential(&m.rays_a, &m.rays_b).unwrap();
        let truth = EssentialMatrix::from_pose(&pose);
        for (a, b) in m.rays_a.iter().zip(&m.rays_b) {
            assert!(truth.residual(a, b).abs() < 1e-12);
            assert!(e.residual(a, b).abs() < 1e-8);
        }
    }

    #[test]
    fn enforce_examples() {
        let pose = RelativePose::new(
            Quaternion::from_axis_angle(&Vector3::new(0.2, 1.0, 0.1), 0.3).unwrap(),
            Vector3::new(0.3, -0.1, 0.9),
        );
        let e = EssentialMatrix::from_pose(&pose);
        let enforced = enforce_essential(e.matrix()).unwrap();
        assert_abs_diff_eq!(*enforced.matrix(), *e.matrix(), epsilon = 1e-12);

        let d = Matrix3::from_diagonal(&Vector3::new(3.0, 1.0, 0.1));
        let enforced = enforce_essential(&d).unwrap();
        let expected = Matrix3::from_diagonal(&Vector3::new(2.0, 2.0, 0.0));
        assert_abs_diff_eq!(*enforced.matrix(), expected, epsilon = 1e-12);

        assert!(matches!(
            enforce_essential(&Matrix3::zeros()),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn decompose_forward_translation() {
        let e = EssentialMatrix::from_pose(&RelativePose::from_translation(Vector3::z()));
        let candidates = decompose_essential(&e).unwrap();
        assert!(candidates.iter().any(|c| {
            c.rotation.angle_to(&Quaternion::IDENTITY) < 1e-12
                && (c.translation - Vector3::z()).norm() < 1e-12
        }));
    }

    #[test]
    fn decomposition_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e = EssentialMatrix::from_pose(&random_pose(&mut rng));
        let c = decompose_essential(&e).unwrap();
        assert_eq!(c[0].rotation, c[1].rotation);
        assert_eq!(c[2].rotation, c[3].rotation);
        assert!(c[0].rotation.angle_to(&c[2].rotation) > 1e-3);
        assert_eq!(c[0].translation, -c[1].translation);
        assert_eq!(c[2].translation, -c[3].translation);
        assert_eq!(c[0].translation, c[2].translation);
        for p in &c {
            assert_abs_diff_eq!(p.translation.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn triangulation_examples() {
        // Camera B sits at x = −1 in frame A, so the point (0, 0, 5) is seen
        // 1 m to its right.
        let pose = RelativePose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let tri = triangulate(&pose, &Vector2::new(0.0, 0.0), &Vector2::new(0.2, 0.0)).unwrap();
        assert_abs_diff_eq!(tri.point, Vector3::new(0.0, 0.0, 5.0), epsilon = 1e-9);
        assert_abs_diff_eq!(tri.depth_a, 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(tri.depth_b, 5.0, epsilon = 1e-9);

        let mirrored = RelativePose::from_translation(Vector3::new(-1.0, 0.0, 0.0));
        let tri = triangulate(&mirrored, &Vector2::new(0.0, 0.0), &Vector2::new(-0.2, 0.0)).unwrap();
        assert_abs_diff_eq!(tri.point, Vector3::new(0.0, 0.0, 5.0), epsilon = 1e-9);

        assert!(matches!(
            triangulate(&RelativePose::identity(), &Vector2::new(0.0, 0.0), &Vector2::new(0.1, 0.0)),
            Err(Error::Untriangulable)
        ));
        assert!(matches!(
            triangulate(&pose, &Vector2::new(0.1, 0.0), &Vector2::new(0.1, 0.0)),
            Err(Error::Untriangulable)
        ));
    }

    #[test]
    fn cheirality_on_synthetic_scene() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pose = random_pose(&mut rng);
        let m = scene(&pose, 30, 11);
        let e = EssentialMatrix::from_pose(&pose);
        let candidates = decompose_essential(&e).unwrap();
        let (best, count) = select_cheirality(&candidates, &m).unwrap();
        assert_eq!(count, 30);
        assert!(best.rotation.angle_to(&pose.rotation) < 1e-9);
        assert!(direction_error(&best.translation, &pose.translation) < 1e-9);

        let mirrored = RelativePose::new(best.rotation, -best.translation);
        assert_eq!(score_candidate(&mirrored, &m).in_front, 0);

        assert!(matches!(
            select_cheirality(&candidates, &NormalizedMatches::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn pure_rotation_is_reported() {
        let rot = Quaternion::from_axis_angle(&Vector3::y(), 0.2).unwrap();
        let m = scene(&RelativePose::new(rot, Vector3::zeros()), 40, 5);
        // Any [t]ₓR explains a pure rotation; pick one.
        let e = EssentialMatrix::from_pose(&RelativePose::new(rot, Vector3::new(0.3, 0.1, 0.9)));
        assert!(matches!(recover_pose(&e, &m), Err(Error::PureRotation { .. })));
        let q = rotation_only(&m).unwrap();
        assert!(q.angle_to(&rot) < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn noiseless_recovery(seed in 0u64..u64::MAX) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pose = random_pose(&mut rng);
            let m = scene(&pose, 20, seed);
            let e = eight_point_essential(&m.rays_a, &m.rays_b).unwrap();
            let scale = e.matrix().norm();
            for (a, b) in m.rays_a.iter().zip(&m.rays_b) {
                prop_assert!((e.residual(a, b) / scale).abs() <= 1e-8);
            }
            let rec = recover_pose(&e, &m).unwrap();
            prop_assert!(rec.pose.rotation.angle_to(&pose.rotation) <= 1e-6);
            prop_assert!(direction_error(&rec.pose.translation, &pose.translation) <= 1e-6);
            prop_assert_eq!(rec.in_front, 20);
        }

        #[test]
        fn true_pose_among_candidates(seed in 0u64..u64::MAX) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pose = random_pose(&mut rng);
            let c = decompose_essential(&EssentialMatrix::from_pose(&pose)).unwrap();
            prop_assert!(c.iter().any(|p| p.rotation.angle_to(&pose.rotation) <= 1e-6
                && direction_error(&p.translation, &pose.translation) <= 1e-6));
        }

        #[test]
        fn enforced_singular_values(m in prop::array::uniform9(-5.0f64..5.0)) {
            let m = Matrix3::from_row_slice(&m);
            prop_assume!(m.norm() > 1e-3);
            let e = enforce_essential(&m).unwrap();
            let s = e.matrix().singular_values();
            let mut s: Vec<f64> = s.iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            prop_assert!((s[0] - s[1]).abs() <= 1e-6 * s[0]);
            prop_assert!(s[2] <= 1e-6 * s[0]);
        }

        #[test]
        fn triangulated_points_are_in_front(seed in 0u64..u64::MAX) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pose = random_pose(&mut rng);
            let m = scene(&pose, 10, seed);
            for (a, b) in m.rays_a.iter().zip(&m.rays_b) {
                let tri = triangulate(&pose, a, b).unwrap();
                prop_assert!(tri.in_front());
            }
        }
    }
}
