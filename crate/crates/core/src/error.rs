use thiserror::Error;

/// Errors surfaced by the library. CLI exit codes map onto these
/// categories (missing input, schema mismatch, infeasible target).
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("entity '{entity}': duplicate key '{key}'")]
    DuplicateKey { entity: String, key: String },

    #[error("entity '{entity}', row {row}: {message}")]
    ParseFatal {
        entity: String,
        row: usize,
        message: String,
    },

    #[error("dangling foreign key '{value}': {child}.{column} has no match in {parent}.{parent_key}")]
    DanglingKey {
        value: String,
        child: String,
        column: String,
        parent: String,
        parent_key: String,
    },

    #[error("relationship cycle: adding {child} -> {parent} closes a loop")]
    RelationshipCycle { parent: String, child: String },

    #[error("unknown entity '{0}'")]
    UnknownEntity(String),

    #[error("entity '{entity}' has no column '{column}'")]
    UnknownColumn { entity: String, column: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stratum '{0}' too small to appear in every split part")]
    StratumTooSmall(String),

    #[error("feature matrix column mismatch: {0}")]
    ColumnMismatch(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("malformed artifact {path}: {message}")]
    MalformedArtifact { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
