use thiserror::Error;

/// Errors surfaced by the inference engine.
///
/// Validation findings are not errors: `model::validate` returns a
/// [`crate::model::ValidationReport`] instead, since a broken model is data
/// to report on, not a failure of the engine.
#[derive(Debug, Error)]
pub enum CegError {
    /// The document does not match the model/evidence schema. `path` points
    /// at the offending field, e.g. `edges[3].prob`.
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    /// A holding-time family outside the supported set.
    #[error("unsupported holding-time family `{0}`")]
    UnsupportedFamily(String),

    /// Evidence references an edge id that does not exist in the graph.
    #[error("unknown edge id `{0}`")]
    UnknownEdge(String),

    /// A query or evidence references a vertex id that does not exist.
    #[error("unknown vertex id `{0}`")]
    UnknownVertex(String),

    /// The retained edge set is not the edge set of its own path closure:
    /// some retained edges lie on no retained root-to-sink path.
    #[error(
        "evidence is not intrinsic: retained edges {0:?} lie on no retained root-to-sink path"
    )]
    NonIntrinsicEvidence(Vec<String>),

    /// Evidence rules out every path.
    #[error("evidence is contradictory: {0}")]
    Contradiction(String),

    /// The evidence has probability zero under the model (some reachable
    /// vertex has zero emphasis, or every queried density vanishes).
    #[error("evidence has zero support under the model: {0}")]
    ZeroSupport(String),

    /// A timed edge is missing a holding-time specification that the
    /// requested computation needs.
    #[error("incomplete model: {0}")]
    IncompleteModel(String),

    /// The density grid cannot hold the distribution's mass.
    #[error("grid resolution too coarse: {0}; increase t_max or decrease dt")]
    GridResolution(String),

    /// An enumeration bound was exceeded.
    #[error("capacity exceeded: more than {limit} paths")]
    Capacity { limit: usize },

    /// The graph violates a structural precondition of the operation.
    #[error("structural error: {0}")]
    Structural(String),
}

pub type Result<T> = std::result::Result<T, CegError>;

impl CegError {
    /// Process exit code used by the command-line surface.
    /// 0 success, 1 zero-support/contradiction, 2 validation/schema, 3 capacity.
    pub fn exit_code(&self) -> i32 {
        match self {
            CegError::Contradiction(_)
            | CegError::ZeroSupport(_)
            | CegError::NonIntrinsicEvidence(_) => 1,
            CegError::Capacity { .. } => 3,
            _ => 2,
        }
    }
}
