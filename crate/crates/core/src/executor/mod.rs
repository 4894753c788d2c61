//! Query execution. Plain and encrypted queries evaluate centrally over
//! merged shards; oblivious queries evaluate centrally with padded operators;
//! k-anonymous queries evaluate per equivalence class with the padded
//! kernels, which is what makes the distributed run and the local reference
//! in [`engine::eval_kanon_reference`] produce identical traces.

mod engine;
pub(crate) mod ops;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anonymizer::ClassId;
use crate::error::Error;
use crate::value::Tuple;

pub use engine::{
    assemble_result, classify_rows, eval_central, eval_kanon_reference, kanon_placements,
    scan_classes, Placement,
};

/// Query-level execution mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plain,
    Encrypted,
    KAnon,
    Oblivious,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Plain => "plain",
            Mode::Encrypted => "encrypted",
            Mode::KAnon => "kanon",
            Mode::Oblivious => "oblivious",
        };
        f.write_str(s)
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode, Error> {
        match s {
            "plain" => Ok(Mode::Plain),
            "encrypted" => Ok(Mode::Encrypted),
            "kanon" => Ok(Mode::KAnon),
            "oblivious" => Ok(Mode::Oblivious),
            other => Err(Error::Validation(format!(
                "unknown mode {other:?}, expected plain, encrypted, kanon or oblivious"
            ))),
        }
    }
}

/// One equivalence class in flight through a plan: the tuples plus the group
/// id of every protected column of the current node schema. Keying groups by
/// column index keeps self-joins and repeated domains unambiguous.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassedRows {
    pub id: ClassId,
    pub groups: BTreeMap<usize, u32>,
    pub tuples: Vec<Tuple>,
}

/// The classed collection flowing between protected operators.
pub type ClassStream = Vec<ClassedRows>;

/// What one plan node produced: bare rows below the protection frontier and
/// at the client, classed rows inside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NodeOutput {
    Rows(Vec<Tuple>),
    Classes(ClassStream),
}

impl NodeOutput {
    pub fn expect_rows(self) -> Vec<Tuple> {
        match self {
            NodeOutput::Rows(rows) => rows,
            NodeOutput::Classes(_) => panic!("expected bare rows"),
        }
    }

    pub fn expect_classes(self) -> ClassStream {
        match self {
            NodeOutput::Classes(classes) => classes,
            NodeOutput::Rows(_) => panic!("expected classed rows"),
        }
    }
}
