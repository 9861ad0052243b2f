use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("alignment mismatch: durations sum to {sum} but there are {frames} frames (tolerance {tolerance})")]
    AlignmentMismatch {
        sum: usize,
        frames: usize,
        tolerance: usize,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("duration mismatch: video is {video:.4}s, audio is {audio:.4}s (tolerance {tolerance:.4}s)")]
    DurationMismatch { video: f64, audio: f64, tolerance: f64 },

    #[error("checkpoint {path}: config hash {found} does not match expected {expected} (use --force to override)")]
    ConfigMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("training diverged at step {step}: non-finite {what}")]
    Divergence { step: usize, what: &'static str },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("tensor: {0}")]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, skipping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit code used by the CLI: 2 validation, 3 divergence, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Divergence { .. } => 3,
            Error::Io { .. } | Error::Wav(hound::Error::IoError(_)) => 4,
            _ => 2,
        }
    }
}

pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
