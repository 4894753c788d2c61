//! Scalar values and tuples.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Dense identifier of a data-owner host, `0..host_count`.
pub type HostId = u32;

/// Declared kind of an attribute. Dates are stored as integers (days); the
/// distinct kind exists so catalogs document intent and so domain
/// compatibility can be validated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    Integer,
    Text,
    Date,
}

impl ScalarKind {
    /// Dates share the integer runtime representation.
    pub fn runtime_compatible(self, other: ScalarKind) -> bool {
        let int = |k| matches!(k, ScalarKind::Integer | ScalarKind::Date);
        (int(self) && int(other)) || self == other
    }
}

impl fmt::Display for ScalarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarKind::Integer => write!(f, "integer"),
            ScalarKind::Text => write!(f, "text"),
            ScalarKind::Date => write!(f, "date"),
        }
    }
}

/// Runtime value. `Real` only ever appears in client-facing result rows
/// (AVG is carried internally as a SUM/COUNT pair and divided at the
/// client); stored data is integers and text.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Int(i64),
    Real(f64),
    Text(Arc<str>),
}

impl Scalar {
    pub fn text(s: &str) -> Scalar {
        Scalar::Text(Arc::from(s))
    }

    pub fn kind_rank(&self) -> u8 {
        match self {
            Scalar::Int(_) => 0,
            Scalar::Real(_) => 1,
            Scalar::Text(_) => 2,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Scalar::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// Canonical single-line rendering used in class identifiers, CSV output
    /// and error messages.
    pub fn render(&self) -> String {
        match self {
            Scalar::Int(v) => v.to_string(),
            Scalar::Real(v) => format!("{v:?}"),
            Scalar::Text(s) => s.to_string(),
        }
    }
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Scalar::Int(a), Scalar::Int(b)) => a == b,
            (Scalar::Real(a), Scalar::Real(b)) => a.to_bits() == b.to_bits(),
            (Scalar::Text(a), Scalar::Text(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Scalar {}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scalar {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Scalar::Int(a), Scalar::Int(b)) => a.cmp(b),
            (Scalar::Real(a), Scalar::Real(b)) => a.total_cmp(b),
            (Scalar::Text(a), Scalar::Text(b)) => a.cmp(b),
            _ => self.kind_rank().cmp(&other.kind_rank()),
        }
    }
}

impl std::hash::Hash for Scalar {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.kind_rank().hash(state);
        match self {
            Scalar::Int(v) => v.hash(state),
            Scalar::Real(v) => v.to_bits().hash(state),
            Scalar::Text(s) => s.hash(state),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render())
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Scalar {
        Scalar::Int(v)
    }
}

impl From<&str> for Scalar {
    fn from(v: &str) -> Scalar {
        Scalar::text(v)
    }
}

/// One stored or intermediate row. `dummy` tuples exist only to pad
/// cardinalities and are stripped before results reach the client; they still
/// carry well-formed values. `owner` is the host that contributed the tuple.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tuple {
    pub values: Vec<Scalar>,
    pub dummy: bool,
    pub owner: HostId,
}

impl Tuple {
    pub fn real(values: Vec<Scalar>, owner: HostId) -> Tuple {
        Tuple { values, dummy: false, owner }
    }
}

/// Renders a value vector the way map keys and error messages spell it:
/// a JSON array, which is unambiguous for any mix of kinds.
pub fn render_vector(values: &[Scalar]) -> String {
    serde_json::to_string(values).expect("scalar vectors always serialize")
}
