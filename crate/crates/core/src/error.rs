//! Engine-wide error type.

use crate::value::HostId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Query text could not be parsed; `position` is a byte offset into the text.
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    /// Catalog JSON was malformed or used an unknown kind/policy label.
    #[error("catalog parse error: {0}")]
    CatalogParse(String),

    /// Catalog was well-formed but violated a structural rule.
    #[error("catalog validation error: {0}")]
    Validation(String),

    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),

    #[error("unknown attribute: {0}")]
    UnknownAttribute(String),

    #[error("type error: {0}")]
    TypeError(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    /// No partition of `relation` can satisfy the k-anonymity constraints.
    /// `host` is set when a single host's complement falls below k; it is
    /// `None` when the relation as a whole is smaller than k.
    #[error("view infeasible for relation {relation}: {detail}{}", host.map(|h| format!(" (host {h})")).unwrap_or_default())]
    ViewInfeasible {
        relation: String,
        host: Option<HostId>,
        detail: String,
    },

    /// A tuple's control-flow value vector is absent from the anonymization
    /// map: the view is stale and must be augmented.
    #[error("unmapped value vector {vector} in relation {relation}")]
    UnmappedValue { relation: String, vector: String },

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("missing anonymization view: {0}")]
    MissingView(String),

    #[error("transport error: {0}")]
    TransportError(String),

    /// A host failed to deliver its result shard.
    #[error("missing result shard from host {host}")]
    MissingShard { host: HostId },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
