//! Monocular visual odometry from timestamped pairs of matched image points.
//!
//! The pipeline has two stages. Stage one estimates each consecutive relative
//! pose from a match set with an essential-matrix RANSAC ([`ransac`],
//! [`epipolar`]), fixes the unobservable scale to a constant magnitude and
//! falls back to a constant rotation when too few confident matches survive
//! ([`odometry`]). Stage two is a learned residual on top of that estimate;
//! this crate ships its pose parametrization and loss functions ([`refine`])
//! without the network itself.
//!
//! Supporting modules cover pose-consistent augmentations ([`augment`]), a
//! seeded synthetic scene generator used as ground truth ([`synth`]),
//! trajectory evaluation ([`metrics`]) and the text file formats ([`io`]).
//!
//! Conventions used throughout:
//! - quaternions are Hamilton, stored as `(w, x, y, z)`;
//! - a [`RelativePose`] from frame A to frame B maps points as `x_B = R·x_A + t`;
//! - camera frames are z-forward, x-right, y-down.

pub mod augment;
pub mod epipolar;
mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod odometry;
pub mod ransac;
pub mod refine;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, Quaternion, RelativePose};
pub use epipolar::{EssentialMatrix, MatchSet};
pub use odometry::{FramePair, HeuristicConfig, PairEstimate, TrajectoryEstimate};
pub use ransac::{RansacConfig, RansacResult};

/// Derives an independent 64-bit seed for `stream` from a base seed
/// (splitmix64 finalizer).
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
