use thiserror::Error;

pub type Result<T> = std::result::Result<T, GoudaError>;

#[derive(Debug, Error)]
pub enum GoudaError {
    /// A joint pair coincides in the ground plane, so no facing direction exists.
    #[error("degenerate keypoints: {0}")]
    DegenerateKeypoints(String),

    /// Cosine distance is undefined for an all-zero vector.
    #[error("zero-norm embedding")]
    ZeroNormEmbedding,

    /// The adapter mapped a real embedding onto (numerically) zero.
    #[error("adapter collapsed embedding {index} to zero norm")]
    CollapsedEmbedding { index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// More neighbors requested than exist.
    #[error("k={k} but only {available} other samples available")]
    KTooLarge { k: usize, available: usize },

    /// Optimization produced a non-finite gradient.
    #[error("diverged: non-finite gradient at iteration {iteration}")]
    Diverged { iteration: usize },

    /// The first curriculum stage found nothing to train on.
    #[error("no valid triplets; check thresholds (t_similar={t_similar}, t_cross={t_cross})")]
    NoValidTriplets { t_similar: f64, t_cross: f64 },

    /// An operation needed identity labels that the records do not carry.
    #[error("missing identity label for record {0}")]
    MissingLabel(String),

    /// Supervised training needs at least two identities with positives available.
    #[error("supervised triplets need >=2 identities and an identity with >=2 records")]
    TooFewIdentities,

    /// An operation needed per-frame latents that the records do not carry.
    #[error("record {0} has no frame latents; augmentation needs them")]
    MissingFrames(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
}

impl GoudaError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        GoudaError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<String>, msg: impl Into<String>) -> Self {
        GoudaError::Format { path: path.into(), msg: msg.into() }
    }
}
