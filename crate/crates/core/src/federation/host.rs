//! One data host. A host answers coordinator frames and never initiates;
//! every mutation of its state is visible in the transcript. It keeps its
//! original shards forever, so views can be rebuilt or reshuffled from
//! scratch at any time.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::anonymizer::{apply_view, AnonymizationMap, ClassId, EquivalenceClass, Histogram};
use crate::error::{Error, Result};
use crate::executor::{kanon_placements, ops, ClassStream, ClassedRows, Placement};
use crate::planner::{PlanNode, QueryPlan};
use crate::schema::Catalog;
use crate::trace::Trace;
use crate::value::{HostId, Tuple};

use super::wire::{error_frame, Frame, FrameBody, HostCmd, ShardBody, TransferBody, PROTOCOL_VERSION};

struct Scratch {
    plan: QueryPlan,
    placements: Vec<Placement>,
    k: u64,
    outputs: BTreeMap<usize, ClassStream>,
    trace: Trace,
}

pub struct HostNode {
    id: HostId,
    catalog: Catalog,
    shards: BTreeMap<String, Vec<Tuple>>,
    map: Option<AnonymizationMap>,
    owned: BTreeMap<String, BTreeMap<ClassId, EquivalenceClass>>,
    queries: BTreeMap<u64, Scratch>,
}

impl HostNode {
    /// `shards` holds this host's rows per relation; tuple owners are forced
    /// to the host id.
    pub fn new(id: HostId, catalog: Catalog, mut shards: BTreeMap<String, Vec<Tuple>>) -> HostNode {
        for rows in shards.values_mut() {
            for t in rows.iter_mut() {
                t.owner = id;
            }
        }
        HostNode { id, catalog, shards, map: None, owned: BTreeMap::new(), queries: BTreeMap::new() }
    }

    pub fn id(&self) -> HostId {
        self.id
    }

    pub fn handle(&mut self, frame: Frame) -> Frame {
        let (qid, sealed) = (frame.qid, frame.sealed);
        match self.dispatch(frame) {
            Ok(body) => Frame::new(qid, sealed, body),
            Err(e) => error_frame(qid, &e),
        }
    }

    fn scratch(&mut self, qid: u64) -> Result<&mut Scratch> {
        self.queries
            .get_mut(&qid)
            .ok_or_else(|| Error::TransportError(format!("unknown query {qid}")))
    }

    fn dispatch(&mut self, frame: Frame) -> Result<FrameBody> {
        let qid = frame.qid;
        match frame.body {
            FrameBody::Hello { host, hosts, version } => {
                if version != PROTOCOL_VERSION {
                    return Err(Error::TransportError(format!(
                        "protocol version {version}, this host speaks {PROTOCOL_VERSION}"
                    )));
                }
                if host != self.id {
                    return Err(Error::TransportError(format!(
                        "addressed as host {host} but running as host {}",
                        self.id
                    )));
                }
                Ok(FrameBody::Hello { host: self.id, hosts, version })
            }
            FrameBody::AttestStub { quote: challenge } => {
                Ok(FrameBody::AttestStub { quote: attest_quote(&self.catalog, &challenge) })
            }
            FrameBody::HistogramRequest { relation, attrs } => {
                let rel = self.catalog.relation(&relation)?;
                let rows = self.shards.get(&relation).map(|r| r.as_slice()).unwrap_or(&[]);
                let histogram = Histogram::build(rel, &attrs, rows, self.id)?;
                Ok(FrameBody::HistogramResponse { histogram })
            }
            FrameBody::ViewMap { map } => {
                self.map = Some(map);
                self.owned.clear();
                Ok(FrameBody::ResultShard(ShardBody::Ack))
            }
            FrameBody::ClassTransfer(TransferBody::Base { relation, classes }) => {
                let slot = self.owned.entry(relation).or_default();
                for class in classes {
                    slot.insert(class.id.clone(), class);
                }
                Ok(FrameBody::ResultShard(ShardBody::Ack))
            }
            FrameBody::ClassTransfer(TransferBody::Staged { node, classes }) => {
                let scratch = self.scratch(qid)?;
                scratch.outputs.entry(node).or_default().extend(classes);
                Ok(FrameBody::ResultShard(ShardBody::Ack))
            }
            FrameBody::Execute(cmd) => Ok(FrameBody::ResultShard(self.execute(qid, cmd)?)),
            FrameBody::HistogramResponse { .. }
            | FrameBody::ResultShard(_)
            | FrameBody::QueryResult(_)
            | FrameBody::Error { .. } => {
                Err(Error::TransportError("response frame sent as a request".into()))
            }
            FrameBody::SubmitQuery { .. } => {
                Err(Error::TransportError("query submitted to a data host".into()))
            }
        }
    }

    fn execute(&mut self, qid: u64, cmd: HostCmd) -> Result<ShardBody> {
        match cmd {
            HostCmd::BeginQuery { plan, k } => {
                let placements = kanon_placements(&plan);
                self.queries.insert(
                    qid,
                    Scratch { plan, placements, k, outputs: BTreeMap::new(), trace: Trace::new() },
                );
                Ok(ShardBody::Ack)
            }
            HostCmd::GatherRows { relation, redact } => {
                let rel = self.catalog.relation(&relation)?;
                let mut rows = self.shards.get(&relation).cloned().unwrap_or_default();
                for attr in &redact {
                    let idx = rel.attr_index(attr).ok_or_else(|| {
                        Error::UnknownAttribute(format!("{relation}.{attr}"))
                    })?;
                    let blank = ops::kind_default(rel.attributes[idx].kind);
                    for t in rows.iter_mut() {
                        t.values[idx] = blank.clone();
                    }
                }
                Ok(ShardBody::Rows { rows })
            }
            HostCmd::ShuffleScan { relation } => {
                let map = self
                    .map
                    .as_ref()
                    .ok_or_else(|| Error::MissingView("no view installed".into()))?;
                let rows = self.shards.get(&relation).map(|r| r.as_slice()).unwrap_or(&[]);
                let classes = apply_view(map, &self.catalog, &relation, rows)?;
                Ok(ShardBody::Fragments { classes })
            }
            HostCmd::ScanClasses { node } => {
                let owned = self.owned.clone();
                let scratch = self.scratch(qid)?;
                let PlanNode::Scan { relation, .. } = &scratch.plan.nodes[node] else {
                    return Err(Error::Validation("scan command on a non-scan node".into()));
                };
                let schema = &scratch.plan.schemas[node];
                let mut stream = Vec::new();
                for class in owned.get(relation).into_iter().flat_map(|m| m.values()) {
                    let mut groups = BTreeMap::new();
                    for (attr, g) in &class.group_ids {
                        let col = schema
                            .iter()
                            .position(|c| &c.attr == attr)
                            .ok_or_else(|| {
                                Error::UnknownAttribute(format!("{relation}.{attr}"))
                            })?;
                        groups.insert(col, *g);
                    }
                    stream.push(ClassedRows {
                        id: class.id.clone(),
                        groups,
                        tuples: class.tuples.clone(),
                    });
                }
                let meta = meta_of(&stream);
                scratch.outputs.insert(node, stream);
                Ok(ShardBody::Meta { classes: meta })
            }
            HostCmd::EvalFilter { node } => {
                let scratch = self.scratch(qid)?;
                let PlanNode::Filter { input, predicate } = scratch.plan.nodes[node].clone()
                else {
                    return Err(Error::Validation("filter command on a non-filter node".into()));
                };
                let classes = scratch.outputs.remove(&input).unwrap_or_default();
                let stream = match scratch.placements[node] {
                    Placement::Classed => classes
                        .into_iter()
                        .map(|c| ClassedRows {
                            id: c.id,
                            groups: c.groups,
                            tuples: ops::rows_filter(&c.tuples, &predicate),
                        })
                        .collect(),
                    Placement::Distributed => {
                        let schema = &scratch.plan.schemas[input];
                        let mut kept = Vec::new();
                        for class in classes {
                            let size = class.tuples.len() as u64;
                            match ops::filter_kanon(&predicate, &class, schema)? {
                                Some(out) => {
                                    scratch.trace.class_emit(
                                        node as u32,
                                        out.id.as_str(),
                                        size,
                                        size,
                                    );
                                    kept.push(out);
                                }
                                None => scratch.trace.class_drop(
                                    node as u32,
                                    class.id.as_str(),
                                    size,
                                ),
                            }
                        }
                        kept
                    }
                    _ => {
                        return Err(Error::Validation(
                            "filter command outside the protected region".into(),
                        ))
                    }
                };
                let meta = meta_of(&stream);
                scratch.outputs.insert(node, stream);
                Ok(ShardBody::Meta { classes: meta })
            }
            HostCmd::EvalJoin { node, pairs } => {
                let scratch = self.scratch(qid)?;
                let PlanNode::Join { left, right, pairs: cols } =
                    scratch.plan.nodes[node].clone()
                else {
                    return Err(Error::Validation("join command on a non-join node".into()));
                };
                let left_width = scratch.plan.schemas[left].len();
                let mut stream = Vec::new();
                for (lid, rid) in &pairs {
                    let lc = find_class(&scratch.outputs, left, lid)?;
                    let rc = find_class(&scratch.outputs, right, rid)?;
                    let joined = ops::join_kanon(&lc, &rc, &cols, left_width);
                    let n = joined.tuples.len() as u64;
                    scratch.trace.pair_emit(node as u32, lid, rid, n, n);
                    stream.push(joined);
                }
                let meta = meta_of(&stream);
                scratch.outputs.entry(node).or_default().extend(stream);
                Ok(ShardBody::Meta { classes: meta })
            }
            HostCmd::EvalAggregate { node } => {
                let scratch = self.scratch(qid)?;
                let PlanNode::Aggregate { input, group_by, aggregates, entity_col } =
                    scratch.plan.nodes[node].clone()
                else {
                    return Err(Error::Validation(
                        "aggregate command on a non-aggregate node".into(),
                    ));
                };
                let classes = scratch.outputs.remove(&input).unwrap_or_default();
                let k = scratch.k;
                let out_schema = scratch.plan.schemas[node].clone();
                let stream: ClassStream = classes
                    .iter()
                    .map(|c| {
                        ops::aggregate_kanon(
                            node as u32,
                            c,
                            &group_by,
                            &aggregates,
                            entity_col,
                            k,
                            &out_schema,
                            &mut scratch.trace,
                        )
                    })
                    .collect();
                let meta = meta_of(&stream);
                scratch.outputs.insert(node, stream);
                Ok(ShardBody::Meta { classes: meta })
            }
            HostCmd::EmitNode { node, classes } => {
                let scratch = self.scratch(qid)?;
                let stream = scratch.outputs.get(&node).cloned().unwrap_or_default();
                let picked = match classes {
                    None => stream,
                    Some(ids) => stream
                        .into_iter()
                        .filter(|c| ids.iter().any(|i| i == c.id.as_str()))
                        .collect(),
                };
                Ok(ShardBody::Classes { classes: picked })
            }
            HostCmd::EmitTrace => {
                let scratch = self.scratch(qid)?;
                Ok(ShardBody::TraceEvents { events: scratch.trace.events.clone() })
            }
            HostCmd::EndQuery => {
                self.queries.remove(&qid);
                Ok(ShardBody::Ack)
            }
        }
    }
}

fn meta_of(stream: &[ClassedRows]) -> Vec<super::wire::ClassMeta> {
    stream.iter().map(super::wire::ClassMeta::of).collect()
}

fn find_class(
    outputs: &BTreeMap<usize, ClassStream>,
    node: usize,
    id: &str,
) -> Result<ClassedRows> {
    outputs
        .get(&node)
        .and_then(|s| s.iter().find(|c| c.id.as_str() == id))
        .cloned()
        .ok_or_else(|| {
            Error::TransportError(format!("class {id} of node {node} is not present here"))
        })
}

/// Stand-in for an enclave quote: a digest binding the protocol version, the
/// shared catalog and the coordinator's challenge. Equal across honest hosts.
pub fn attest_quote(catalog: &Catalog, challenge: &str) -> String {
    let mut h = Sha256::new();
    h.update(PROTOCOL_VERSION.to_be_bytes());
    h.update(serde_json::to_vec(catalog).expect("catalogs always serialize"));
    h.update(challenge.as_bytes());
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
