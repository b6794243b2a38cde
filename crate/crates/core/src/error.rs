use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("need at least {required} matches, got {got}")]
    InsufficientMatches { required: usize, got: usize },

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    /// Most inlier rays are parallel after rotation compensation: the
    /// translation is unobservable and only the rotation can be trusted.
    #[error("pure rotation: {parallel} of {total} correspondences have no parallax")]
    PureRotation { parallel: usize, total: usize },

    #[error("correspondence cannot be triangulated (parallel rays or zero baseline)")]
    Untriangulable,

    #[error("no candidate pose puts any point in front of both cameras")]
    CheiralityFailure,

    #[error("robust fit failed: {0}")]
    RobustFitFailure(String),

    #[error("residual update collapses the quaternion (norm {norm:e})")]
    DegenerateResidual { norm: f64 },

    #[error("augmentation kept only {kept} of {total} matches")]
    AugmentationDegenerate { kept: usize, total: usize },

    #[error("infeasible scene: {0}")]
    InfeasibleScene(String),

    #[error("timestamp alignment failed: {0}")]
    Alignment(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("cannot read or write {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Errors caused by malformed or inconsistent user input, as opposed to
    /// estimation failures on well-formed data.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidIntrinsics(_)
                | Error::InvalidInput(_)
                | Error::Alignment(_)
                | Error::Parse { .. }
                | Error::Io { .. }
        )
    }
}
