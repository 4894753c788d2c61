//! Frame protocol. Every exchange is one request frame answered by exactly
//! one response frame, so a transcript is a flat list of pairs. On the wire a
//! frame is a 4-byte big-endian length, a 1-byte frame type, and a JSON
//! envelope `{qid, sealed, body}`; the type byte is redundant with the body
//! tag and both must agree. `sealed` marks payloads that travel
//! enclave-to-enclave and are opaque to whoever relays them.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::anonymizer::{AnonymizationMap, ClassId, EquivalenceClass, Histogram};
use crate::error::{Error, Result};
use crate::executor::{ClassedRows, Mode};
use crate::planner::{AdmissionDecision, QueryPlan};
use crate::trace::TraceEvent;
use crate::value::{HostId, Scalar, Tuple};

pub const PROTOCOL_VERSION: u32 = 1;

pub const MAX_FRAME_BYTES: u32 = 256 * 1024 * 1024;

/// Commands the coordinator issues inside [`FrameBody::Execute`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum HostCmd {
    /// Opens per-query scratch state and ships the bound plan.
    BeginQuery { plan: QueryPlan, k: u64 },
    /// Returns the host's shard of one relation, with the named attributes
    /// overwritten by type defaults before the rows leave the host.
    GatherRows { relation: String, redact: Vec<String> },
    /// Routes the host's original shard of one relation into classes for a
    /// view shuffle.
    ShuffleScan { relation: String },
    /// Stages the host's owned classes of a scan node's relation.
    ScanClasses { node: usize },
    EvalFilter { node: usize },
    /// Joins exactly the listed class pairs; the left class must live here.
    EvalJoin { node: usize, pairs: Vec<(String, String)> },
    EvalAggregate { node: usize },
    /// Returns the named classes (all of the node's output when empty).
    EmitNode { node: usize, classes: Option<Vec<String>> },
    EmitTrace,
    EndQuery,
}

/// Response payloads carried by [`FrameBody::ResultShard`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ShardBody {
    Ack,
    Rows { rows: Vec<Tuple> },
    Fragments { classes: Vec<EquivalenceClass> },
    Meta { classes: Vec<ClassMeta> },
    Classes { classes: Vec<ClassedRows> },
    TraceEvents { events: Vec<TraceEvent> },
}

/// Class bookkeeping the coordinator needs for scheduling: identity, group
/// structure and padded cardinality, never tuple contents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMeta {
    pub id: ClassId,
    pub groups: BTreeMap<usize, u32>,
    pub card: u64,
}

impl ClassMeta {
    pub fn of(class: &ClassedRows) -> ClassMeta {
        ClassMeta {
            id: class.id.clone(),
            groups: class.groups.clone(),
            card: class.tuples.len() as u64,
        }
    }

    /// A tuple-less stand-in usable for compatibility checks.
    pub fn as_empty_class(&self) -> ClassedRows {
        ClassedRows { id: self.id.clone(), groups: self.groups.clone(), tuples: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TransferBody {
    /// Full ownership of base-relation classes after a shuffle.
    Base { relation: String, classes: Vec<EquivalenceClass> },
    /// Classes staged as the output of one plan node for the running query.
    Staged { node: usize, classes: Vec<ClassedRows> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FrameBody {
    Hello { host: HostId, hosts: u32, version: u32 },
    AttestStub { quote: String },
    HistogramRequest { relation: String, attrs: Vec<String> },
    HistogramResponse { histogram: Histogram },
    ViewMap { map: AnonymizationMap },
    ClassTransfer(TransferBody),
    Execute(HostCmd),
    ResultShard(ShardBody),
    SubmitQuery { sql: String, mode: Mode, k: u64 },
    QueryResult(QueryOutcome),
    Error { message: String, unmapped: Option<(String, String)> },
}

/// What a query submission returns to the client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Scalar>>,
    pub decision: Option<AdmissionDecision>,
    pub trace: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub qid: u64,
    pub sealed: bool,
    pub body: FrameBody,
}

impl Frame {
    pub fn new(qid: u64, sealed: bool, body: FrameBody) -> Frame {
        Frame { qid, sealed, body }
    }

    pub fn type_byte(&self) -> u8 {
        match self.body {
            FrameBody::Hello { .. } => 1,
            FrameBody::AttestStub { .. } => 2,
            FrameBody::HistogramRequest { .. } => 3,
            FrameBody::HistogramResponse { .. } => 4,
            FrameBody::ViewMap { .. } => 5,
            FrameBody::ClassTransfer(_) => 6,
            FrameBody::Execute(_) => 7,
            FrameBody::ResultShard(_) => 8,
            FrameBody::SubmitQuery { .. } => 9,
            FrameBody::QueryResult(_) => 10,
            FrameBody::Error { .. } => 11,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.body {
            FrameBody::Hello { .. } => "hello",
            FrameBody::AttestStub { .. } => "attest_stub",
            FrameBody::HistogramRequest { .. } => "histogram_request",
            FrameBody::HistogramResponse { .. } => "histogram_response",
            FrameBody::ViewMap { .. } => "view_map",
            FrameBody::ClassTransfer(_) => "class_transfer",
            FrameBody::Execute(_) => "execute",
            FrameBody::ResultShard(_) => "result_shard",
            FrameBody::SubmitQuery { .. } => "submit_query",
            FrameBody::QueryResult(_) => "query_result",
            FrameBody::Error { .. } => "error",
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let json = serde_json::to_vec(self)?;
        let len = 1 + json.len();
        if len as u64 > u64::from(MAX_FRAME_BYTES) {
            return Err(Error::TransportError(format!("frame of {len} bytes exceeds limit")));
        }
        let mut out = Vec::with_capacity(4 + len);
        out.extend_from_slice(&(len as u32).to_be_bytes());
        out.push(self.type_byte());
        out.extend_from_slice(&json);
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.encode()?)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Frame> {
        let mut len_buf = [0u8; 4];
        r.read_exact(&mut len_buf)?;
        let len = u32::from_be_bytes(len_buf);
        if len == 0 || len > MAX_FRAME_BYTES {
            return Err(Error::TransportError(format!("bad frame length {len}")));
        }
        let mut payload = vec![0u8; len as usize];
        r.read_exact(&mut payload)?;
        let frame: Frame = serde_json::from_slice(&payload[1..])?;
        if frame.type_byte() != payload[0] {
            return Err(Error::TransportError(format!(
                "frame type byte {} does not match body {}",
                payload[0],
                frame.kind_name()
            )));
        }
        Ok(frame)
    }

    /// Turns an error response into the error it carries; passes other
    /// frames through.
    pub fn into_result(self) -> Result<Frame> {
        match self.body {
            FrameBody::Error { message, unmapped: Some((relation, vector)) } => {
                let _ = message;
                Err(Error::UnmappedValue { relation, vector })
            }
            FrameBody::Error { message, unmapped: None } => Err(Error::TransportError(message)),
            _ => Ok(self),
        }
    }
}

/// Renders an error as an error frame, preserving what the coordinator needs
/// to react to a stale view.
pub fn error_frame(qid: u64, err: &Error) -> Frame {
    let unmapped = match err {
        Error::UnmappedValue { relation, vector } => {
            Some((relation.clone(), vector.clone()))
        }
        _ => None,
    };
    Frame::new(qid, false, FrameBody::Error { message: err.to_string(), unmapped })
}
