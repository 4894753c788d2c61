//! The federation: a coordinator enclave orchestrating data hosts over a
//! star topology. The coordinator owns admission, view installation and
//! query scheduling; hosts hold shards, evaluate operators over the classes
//! they own, and ship classes to each other only on explicit instruction.
//! Every exchange is a request frame answered by exactly one response frame,
//! and all scheduling loops run in ascending host and class order, so a
//! whole run is reproducible from the inputs alone.

mod host;
mod tcp;
mod wire;

pub use host::{attest_quote, HostNode};
pub use tcp::{serve_coordinator, serve_host, Client, TcpTransport};
pub use wire::{
    error_frame, ClassMeta, Frame, FrameBody, HostCmd, QueryOutcome, ShardBody, TransferBody,
    MAX_FRAME_BYTES, PROTOCOL_VERSION,
};

use std::collections::{btree_map::Entry, BTreeMap, BTreeSet};

use crate::anonymizer::{
    class_owner, generate_view, merge_for_k, splitmix64, AnonymizationMap, ClassId,
    EquivalenceClass, Histogram,
};
use crate::error::{Error, Result};
use crate::executor::{
    assemble_result, classify_rows, eval_central, eval_kanon_reference, kanon_placements, ops,
    ClassStream, ClassedRows, Mode, NodeOutput, Placement,
};
use crate::planner::{
    admit, plan_query, AdmissionDecision, ControlFlowSet, PlanNode, QueryPlan, WorkloadState,
};
use crate::schema::{Catalog, Dataset, Policy};
use crate::trace::Trace;
use crate::value::{HostId, Scalar, Tuple};

/// Picks the coordinator among `hosts` peers. Without a seed the lowest id
/// leads; with one, the choice is a keyed hash so repeated elections over
/// the same seed agree on every machine.
pub fn elect_coordinator(hosts: u32, seed: Option<u64>) -> HostId {
    match seed {
        None => 0,
        Some(s) => (splitmix64(s) % u64::from(hosts.max(1))) as HostId,
    }
}

/// One request frame delivered to a host and the frame it answered with.
#[derive(Clone, Debug)]
pub struct Exchange {
    pub host: HostId,
    pub request: Frame,
    pub response: Frame,
}

pub trait Transport {
    fn hosts(&self) -> u32;
    fn round_trip(&mut self, host: HostId, frame: Frame) -> Result<Frame>;
}

/// In-process transport over a vector of host nodes. Frames still pass
/// through the wire codec both ways, so anything that runs locally would
/// have survived a socket, and the full transcript is kept for inspection.
pub struct LocalTransport {
    nodes: Vec<HostNode>,
    log: Vec<Exchange>,
}

impl LocalTransport {
    pub fn new(nodes: Vec<HostNode>) -> LocalTransport {
        LocalTransport { nodes, log: Vec::new() }
    }

    pub fn log(&self) -> &[Exchange] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<Exchange> {
        std::mem::take(&mut self.log)
    }
}

impl Transport for LocalTransport {
    fn hosts(&self) -> u32 {
        self.nodes.len() as u32
    }

    fn round_trip(&mut self, host: HostId, frame: Frame) -> Result<Frame> {
        let node = self
            .nodes
            .get_mut(host as usize)
            .ok_or_else(|| Error::TransportError(format!("no host {host}")))?;
        let bytes = frame.encode()?;
        let request = Frame::read_from(&mut bytes.as_slice())?;
        let raw = node.handle(request).encode()?;
        let response = Frame::read_from(&mut raw.as_slice())?;
        self.log.push(Exchange { host, request: frame, response: response.clone() });
        Ok(response)
    }
}

/// What one query submission produced.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryRun {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Scalar>>,
    /// Admission verdict; `None` for plain, encrypted and oblivious runs,
    /// which never touch the shared view.
    pub decision: Option<AdmissionDecision>,
    pub trace: Trace,
}

pub struct Federation<T: Transport> {
    transport: T,
    catalog: Catalog,
    hash_seed: u64,
    state: WorkloadState,
    map: Option<AnonymizationMap>,
    histograms: BTreeMap<String, Histogram>,
    next_qid: u64,
}

pub type LocalFederation = Federation<LocalTransport>;

impl LocalFederation {
    /// Spins up one in-process host per dataset shard holder and runs the
    /// handshake against them.
    pub fn local(catalog: Catalog, dataset: &Dataset, hash_seed: u64) -> Result<LocalFederation> {
        let mut nodes = Vec::new();
        for h in 0..dataset.hosts {
            let mut shards = BTreeMap::new();
            for (relation, list) in &dataset.relations {
                if let Some(shard) = list.iter().find(|s| s.host == h) {
                    shards.insert(relation.clone(), shard.tuples.clone());
                }
            }
            nodes.push(HostNode::new(h, catalog.clone(), shards));
        }
        Federation::new(LocalTransport::new(nodes), catalog, hash_seed)
    }
}

impl<T: Transport> Federation<T> {
    pub fn new(transport: T, catalog: Catalog, hash_seed: u64) -> Result<Federation<T>> {
        let mut fed = Federation {
            transport,
            catalog,
            hash_seed,
            state: WorkloadState::default(),
            map: None,
            histograms: BTreeMap::new(),
            next_qid: 0,
        };
        fed.handshake()?;
        Ok(fed)
    }

    pub fn hosts(&self) -> u32 {
        self.transport.hosts()
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn view(&self) -> Option<&AnonymizationMap> {
        self.map.as_ref()
    }

    pub fn workload(&self) -> &WorkloadState {
        &self.state
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    /// Checks protocol versions and attestation quotes across all hosts.
    /// The quote is a digest over the protocol version and the shared
    /// catalog, so a host running different code or schema is caught here.
    fn handshake(&mut self) -> Result<()> {
        let n = self.transport.hosts();
        if n == 0 {
            return Err(Error::TransportError("a federation needs at least one host".into()));
        }
        let challenge = format!("{:016x}", splitmix64(self.hash_seed));
        let expected = attest_quote(&self.catalog, &challenge);
        for h in 0..n {
            let hello = FrameBody::Hello { host: h, hosts: n, version: PROTOCOL_VERSION };
            let resp = self.transport.round_trip(h, Frame::new(0, false, hello))?.into_result()?;
            let FrameBody::Hello { host, .. } = resp.body else {
                return Err(Error::TransportError("handshake answered with a non-hello".into()));
            };
            if host != h {
                return Err(Error::TransportError(format!("host {h} identifies as {host}")));
            }
            let attest = FrameBody::AttestStub { quote: challenge.clone() };
            let resp = self.transport.round_trip(h, Frame::new(0, false, attest))?.into_result()?;
            let FrameBody::AttestStub { quote } = resp.body else {
                return Err(Error::TransportError("attestation answered with a non-quote".into()));
            };
            if quote != expected {
                return Err(Error::TransportError(format!("host {h} failed attestation")));
            }
        }
        Ok(())
    }

    /// Runs one query in the requested mode. Plain, encrypted and oblivious
    /// queries are evaluated centrally over gathered rows. K-anonymous
    /// queries first pass admission, which may install or coarsen the shared
    /// view (or divert the query to an oblivious run), and then execute
    /// across the hosts. A stale view is rebuilt once if a row no longer
    /// maps into it.
    pub fn run_query(&mut self, sql: &str, mode: Mode, k: u64) -> Result<QueryRun> {
        let plan = plan_query(&self.catalog, sql)?;
        self.next_qid += 1;
        let qid = self.next_qid;
        if mode != Mode::KAnon {
            let (rows, trace) = self.run_central(qid, &plan, mode)?;
            return Ok(QueryRun { columns: plan.output_names, rows, decision: None, trace });
        }

        let decision = admit(&self.state, &plan.control_flow, k);
        self.apply_decision(qid, &decision)?;
        self.state = self.state.after(&decision);

        if decision == AdmissionDecision::ObliviousFallback {
            let (rows, trace) = self.run_central(qid, &plan, Mode::Oblivious)?;
            return Ok(QueryRun {
                columns: plan.output_names,
                rows,
                decision: Some(decision),
                trace,
            });
        }

        let (rows, trace) = match self.run_kanon(qid, &plan, k) {
            Err(Error::UnmappedValue { .. }) => {
                self.rebuild_view()?;
                self.next_qid += 1;
                let retry_qid = self.next_qid;
                self.run_kanon(retry_qid, &plan, k)?
            }
            other => other?,
        };
        Ok(QueryRun { columns: plan.output_names, rows, decision: Some(decision), trace })
    }

    /// [`Federation::run_query`] with the trace flattened to its line
    /// format, for shipping back over a socket.
    pub fn submit(&mut self, sql: &str, mode: Mode, k: u64) -> Result<QueryOutcome> {
        let run = self.run_query(sql, mode, k)?;
        Ok(QueryOutcome {
            columns: run.columns,
            rows: run.rows,
            decision: run.decision,
            trace: run.trace.to_json_lines(),
        })
    }

    /// Installs `map` on every host for test setups, bypassing admission.
    pub fn force_view(&mut self, map: AnonymizationMap) -> Result<()> {
        self.state =
            WorkloadState { k_sys: map.k, c_sys: map.c.clone() };
        self.install_view(0, map)
    }

    fn apply_decision(&mut self, qid: u64, decision: &AdmissionDecision) -> Result<()> {
        match decision {
            AdmissionDecision::ReuseView | AdmissionDecision::ObliviousFallback => Ok(()),
            AdmissionDecision::MergeClasses { k } => {
                // Vacuous while no view is installed, which only happens
                // when nothing is covered yet.
                let Some(map) = &self.map else { return Ok(()) };
                let merged = merge_for_k(map, &self.catalog, &self.histograms, *k)?;
                self.install_view(qid, merged)
            }
            AdmissionDecision::AugmentView { c, k } => {
                if c.is_empty() {
                    return Ok(());
                }
                let hists = self.fetch_histograms(qid, c)?;
                let map = generate_view(&self.catalog, c, &hists, *k, self.hash_seed)?;
                self.histograms = hists;
                self.install_view(qid, map)
            }
        }
    }

    /// Regenerates the current view from fresh histograms. Covered
    /// attributes and k stay as they are; only the value groups move.
    fn rebuild_view(&mut self) -> Result<()> {
        let Some(old) = self.map.clone() else {
            return Err(Error::MissingView("no view to rebuild".into()));
        };
        self.next_qid += 1;
        let qid = self.next_qid;
        let hists = self.fetch_histograms(qid, &old.c)?;
        let map = generate_view(&self.catalog, &old.c, &hists, old.k, self.hash_seed)?;
        self.histograms = hists;
        self.install_view(qid, map)
    }

    fn fetch_histograms(
        &mut self,
        qid: u64,
        c: &ControlFlowSet,
    ) -> Result<BTreeMap<String, Histogram>> {
        let n = self.transport.hosts();
        let mut out = BTreeMap::new();
        for relation in c.relations() {
            let attrs = c.attrs_of(&relation);
            let mut merged: Option<Histogram> = None;
            for h in 0..n {
                let req = FrameBody::HistogramRequest {
                    relation: relation.clone(),
                    attrs: attrs.clone(),
                };
                let resp = self.transport.round_trip(h, Frame::new(qid, true, req))?.into_result()?;
                let FrameBody::HistogramResponse { histogram } = resp.body else {
                    return Err(Error::TransportError("histogram request unanswered".into()));
                };
                match &mut merged {
                    None => merged = Some(histogram),
                    Some(m) => m.merge(&histogram)?,
                }
            }
            out.insert(relation, merged.expect("at least one host"));
        }
        Ok(out)
    }

    /// Broadcasts the view, then reshuffles every covered relation: each
    /// host classes its shard locally, the coordinator merges the sealed
    /// fragments in host order and ships every class whole to its owner.
    fn install_view(&mut self, qid: u64, map: AnonymizationMap) -> Result<()> {
        let n = self.transport.hosts();
        for h in 0..n {
            let frame = Frame::new(qid, false, FrameBody::ViewMap { map: map.clone() });
            self.transport.round_trip(h, frame)?.into_result()?;
        }
        for relation in map.c.relations() {
            let mut merged: BTreeMap<ClassId, EquivalenceClass> = BTreeMap::new();
            for h in 0..n {
                let cmd = HostCmd::ShuffleScan { relation: relation.clone() };
                let ShardBody::Fragments { classes } = self.execute(qid, true, h, cmd)? else {
                    return Err(Error::TransportError("shuffle scan returned no fragments".into()));
                };
                for frag in classes {
                    match merged.entry(frag.id.clone()) {
                        Entry::Vacant(v) => {
                            v.insert(frag);
                        }
                        Entry::Occupied(mut o) => o.get_mut().tuples.extend(frag.tuples),
                    }
                }
            }
            let mut per_owner: BTreeMap<HostId, Vec<EquivalenceClass>> = BTreeMap::new();
            for (id, class) in merged {
                per_owner.entry(class_owner(map.hash_seed, &id, n)).or_default().push(class);
            }
            for (owner, classes) in per_owner {
                let body = TransferBody::Base { relation: relation.clone(), classes };
                self.transfer_ack(qid, owner, body)?;
            }
        }
        self.map = Some(map);
        Ok(())
    }

    fn run_central(
        &mut self,
        qid: u64,
        plan: &QueryPlan,
        mode: Mode,
    ) -> Result<(Vec<Vec<Scalar>>, Trace)> {
        let sealed = mode != Mode::Plain;
        let mut rows_of = BTreeMap::new();
        for relation in plan.scan_relations() {
            let rows = self.gather_rows(qid, &relation, Vec::new(), sealed)?;
            rows_of.insert(relation, rows);
        }
        let mut trace = Trace::new();
        let out = eval_central(plan, mode, &rows_of, &mut trace)?;
        trace.canonicalize();
        let rows = assemble_result(plan, NodeOutput::Rows(out))?;
        Ok((rows, trace))
    }

    fn run_kanon(
        &mut self,
        qid: u64,
        plan: &QueryPlan,
        k: u64,
    ) -> Result<(Vec<Vec<Scalar>>, Trace)> {
        let n = self.transport.hosts();
        let begin = HostCmd::BeginQuery { plan: plan.clone(), k };
        for h in 0..n {
            self.execute_ack(qid, false, h, begin.clone())?;
        }
        let result = self.kanon_phases(qid, plan);
        for h in 0..n {
            let frame = Frame::new(qid, false, FrameBody::Execute(HostCmd::EndQuery));
            let _ = self.transport.round_trip(h, frame);
        }
        result
    }

    fn kanon_phases(&mut self, qid: u64, plan: &QueryPlan) -> Result<(Vec<Vec<Scalar>>, Trace)> {
        let n = self.transport.hosts();
        let placements = kanon_placements(plan);
        let map = self.map.clone();
        let referenced = plan.referenced_attrs();
        let hr = plan.host_root();
        let mut central: BTreeMap<usize, Vec<Tuple>> = BTreeMap::new();
        let mut registry: BTreeMap<usize, Vec<(ClassMeta, HostId)>> = BTreeMap::new();

        for id in 0..=hr {
            match placements[id] {
                Placement::Client => {
                    return Err(Error::Validation("client node inside host region".into()))
                }
                Placement::Central => {
                    let rows = match &plan.nodes[id] {
                        PlanNode::Scan { relation, .. } => {
                            let redact = self.redaction_for(relation, &referenced, map.as_ref())?;
                            self.gather_rows(qid, relation, redact, true)?
                        }
                        PlanNode::Filter { input, predicate } => {
                            ops::rows_filter(&central.remove(input).unwrap_or_default(), predicate)
                        }
                        PlanNode::Join { left, right, pairs } => {
                            let l = central.remove(left).unwrap_or_default();
                            let r = central.remove(right).unwrap_or_default();
                            ops::rows_join(&l, &r, pairs)
                        }
                        _ => {
                            return Err(Error::Validation(
                                "only scans, filters and joins run centrally below the frontier"
                                    .into(),
                            ))
                        }
                    };
                    central.insert(id, rows);
                }
                Placement::Classed => {
                    let cmd = match &plan.nodes[id] {
                        PlanNode::Scan { .. } => HostCmd::ScanClasses { node: id },
                        PlanNode::Filter { .. } => HostCmd::EvalFilter { node: id },
                        _ => unreachable!("classed chains hold scans and filters only"),
                    };
                    registry.insert(id, self.execute_meta_all(qid, cmd)?);
                }
                Placement::Distributed => {
                    let map = map
                        .as_ref()
                        .ok_or_else(|| Error::MissingView("no view installed".into()))?;
                    for input in plan.nodes[id].inputs() {
                        if placements[input] == Placement::Central {
                            let rows = central.remove(&input).unwrap_or_default();
                            let classes = classify_rows(map, &plan.schemas[input], &rows)?;
                            registry.insert(input, self.scatter(qid, input, classes, map)?);
                        }
                    }
                    let meta = match plan.nodes[id].clone() {
                        PlanNode::Filter { .. } => {
                            self.execute_meta_all(qid, HostCmd::EvalFilter { node: id })?
                        }
                        PlanNode::Aggregate { .. } => {
                            self.execute_meta_all(qid, HostCmd::EvalAggregate { node: id })?
                        }
                        PlanNode::Join { left, right, pairs } => {
                            self.run_join(qid, plan, id, left, right, &pairs, &registry)?
                        }
                        _ => unreachable!("scans run plain; client nodes stay outside"),
                    };
                    registry.insert(id, meta);
                }
            }
        }

        let output = if placements[hr] == Placement::Central {
            NodeOutput::Rows(central.remove(&hr).unwrap_or_default())
        } else {
            let holders: BTreeSet<HostId> = registry
                .get(&hr)
                .map(|v| v.iter().map(|(_, h)| *h).collect())
                .unwrap_or_default();
            let mut classes = Vec::new();
            for host in holders {
                let cmd = HostCmd::EmitNode { node: hr, classes: None };
                let ShardBody::Classes { classes: cs } = self.execute(qid, true, host, cmd)? else {
                    return Err(Error::TransportError("emit returned no classes".into()));
                };
                classes.extend(cs);
            }
            NodeOutput::Classes(classes)
        };

        let mut trace = Trace::new();
        for host in 0..n {
            let ShardBody::TraceEvents { events } = self.execute(qid, true, host, HostCmd::EmitTrace)?
            else {
                return Err(Error::TransportError("trace request returned no events".into()));
            };
            trace.absorb(Trace { events });
        }
        trace.canonicalize();
        let rows = assemble_result(plan, output)?;
        Ok((rows, trace))
    }

    /// Classes rows the coordinator holds and ships each class to its
    /// owner, staged as the output of `node`.
    fn scatter(
        &mut self,
        qid: u64,
        node: usize,
        classes: ClassStream,
        map: &AnonymizationMap,
    ) -> Result<Vec<(ClassMeta, HostId)>> {
        let n = self.transport.hosts();
        let mut meta = Vec::new();
        let mut per_dst: BTreeMap<HostId, Vec<ClassedRows>> = BTreeMap::new();
        for class in classes {
            let dst = class_owner(map.hash_seed, &class.id, n);
            meta.push((ClassMeta::of(&class), dst));
            per_dst.entry(dst).or_default().push(class);
        }
        for (dst, classes) in per_dst {
            self.transfer_ack(qid, dst, TransferBody::Staged { node, classes })?;
        }
        Ok(meta)
    }

    /// Joins are scheduled centrally: the registry knows every class of
    /// both children and where it lives, compatibility is decided on group
    /// ids alone, visiting classes are moved to the host of their partner's
    /// left class, and each involved host gets its explicit pair list.
    fn run_join(
        &mut self,
        qid: u64,
        plan: &QueryPlan,
        node: usize,
        left: usize,
        right: usize,
        cols: &[(usize, usize)],
        registry: &BTreeMap<usize, Vec<(ClassMeta, HostId)>>,
    ) -> Result<Vec<(ClassMeta, HostId)>> {
        let (ls, rs) = (&plan.schemas[left], &plan.schemas[right]);
        let empty = Vec::new();
        let lefts = registry.get(&left).unwrap_or(&empty);
        let rights = registry.get(&right).unwrap_or(&empty);
        let mut pair_lists: BTreeMap<HostId, Vec<(String, String)>> = BTreeMap::new();
        let mut moves: BTreeMap<(HostId, HostId), BTreeSet<String>> = BTreeMap::new();
        for (lm, lhost) in lefts {
            let lc = lm.as_empty_class();
            for (rm, rhost) in rights {
                if !ops::classes_compatible(&lc, &rm.as_empty_class(), cols, ls, rs)? {
                    continue;
                }
                pair_lists
                    .entry(*lhost)
                    .or_default()
                    .push((lm.id.as_str().to_string(), rm.id.as_str().to_string()));
                if rhost != lhost {
                    moves
                        .entry((*rhost, *lhost))
                        .or_default()
                        .insert(rm.id.as_str().to_string());
                }
            }
        }
        for ((src, dst), ids) in moves {
            let ids: Vec<String> = ids.into_iter().collect();
            let cmd = HostCmd::EmitNode { node: right, classes: Some(ids.clone()) };
            let ShardBody::Classes { classes } = self.execute(qid, true, src, cmd)? else {
                return Err(Error::TransportError("emit returned no classes".into()));
            };
            if classes.len() != ids.len() {
                return Err(Error::TransportError(format!(
                    "host {src} holds {} of {} requested classes",
                    classes.len(),
                    ids.len()
                )));
            }
            self.transfer_ack(qid, dst, TransferBody::Staged { node: right, classes })?;
        }
        let mut meta = Vec::new();
        for (host, pairs) in pair_lists {
            let ShardBody::Meta { classes } =
                self.execute(qid, true, host, HostCmd::EvalJoin { node, pairs })?
            else {
                return Err(Error::TransportError("join returned no class meta".into()));
            };
            meta.extend(classes.into_iter().map(|m| (m, host)));
        }
        Ok(meta)
    }

    /// K-anonymity attributes of `relation` that the query never reads and
    /// classing does not need. Hosts blank them before rows leave.
    fn redaction_for(
        &self,
        relation: &str,
        referenced: &BTreeSet<(String, String)>,
        map: Option<&AnonymizationMap>,
    ) -> Result<Vec<String>> {
        let rel = self.catalog.relation(relation)?;
        let control: BTreeSet<String> =
            map.map(|m| m.control_attrs(relation).into_iter().collect()).unwrap_or_default();
        Ok(rel
            .attributes
            .iter()
            .filter(|a| {
                a.policy == Policy::KAnon
                    && !control.contains(&a.name)
                    && !referenced.contains(&(relation.to_string(), a.name.clone()))
            })
            .map(|a| a.name.clone())
            .collect())
    }

    fn gather_rows(
        &mut self,
        qid: u64,
        relation: &str,
        redact: Vec<String>,
        sealed: bool,
    ) -> Result<Vec<Tuple>> {
        let mut all = Vec::new();
        for h in 0..self.transport.hosts() {
            let cmd = HostCmd::GatherRows { relation: relation.to_string(), redact: redact.clone() };
            let ShardBody::Rows { rows } = self.execute(qid, sealed, h, cmd)? else {
                return Err(Error::TransportError("gather returned no rows".into()));
            };
            all.extend(rows);
        }
        Ok(all)
    }

    fn execute(&mut self, qid: u64, sealed: bool, host: HostId, cmd: HostCmd) -> Result<ShardBody> {
        let frame = Frame::new(qid, sealed, FrameBody::Execute(cmd));
        let resp = self.transport.round_trip(host, frame)?.into_result()?;
        let kind = resp.kind_name();
        match resp.body {
            FrameBody::ResultShard(body) => Ok(body),
            _ => Err(Error::TransportError(format!("expected a result shard, got {kind}"))),
        }
    }

    fn execute_ack(&mut self, qid: u64, sealed: bool, host: HostId, cmd: HostCmd) -> Result<()> {
        match self.execute(qid, sealed, host, cmd)? {
            ShardBody::Ack => Ok(()),
            _ => Err(Error::TransportError("expected a bare acknowledgement".into())),
        }
    }

    fn execute_meta_all(&mut self, qid: u64, cmd: HostCmd) -> Result<Vec<(ClassMeta, HostId)>> {
        let mut out = Vec::new();
        for h in 0..self.transport.hosts() {
            let ShardBody::Meta { classes } = self.execute(qid, true, h, cmd.clone())? else {
                return Err(Error::TransportError("expected class meta".into()));
            };
            out.extend(classes.into_iter().map(|m| (m, h)));
        }
        Ok(out)
    }

    fn transfer_ack(&mut self, qid: u64, host: HostId, body: TransferBody) -> Result<()> {
        let frame = Frame::new(qid, true, FrameBody::ClassTransfer(body));
        let resp = self.transport.round_trip(host, frame)?.into_result()?;
        match resp.body {
            FrameBody::ResultShard(ShardBody::Ack) => Ok(()),
            _ => Err(Error::TransportError("transfer not acknowledged".into())),
        }
    }
}

/// Single-machine rerun of a k-anonymous query over the merged dataset and
/// a given view: the yardstick a distributed run is compared against. Rows
/// and the canonical trace must both match exactly.
pub fn reference_run(
    catalog: &Catalog,
    dataset: &Dataset,
    map: &AnonymizationMap,
    sql: &str,
    k: u64,
) -> Result<(Vec<Vec<Scalar>>, Trace)> {
    let plan = plan_query(catalog, sql)?;
    let mut rows_of = BTreeMap::new();
    for relation in plan.scan_relations() {
        rows_of.insert(relation.clone(), dataset.merged_rows(&relation));
    }
    let mut trace = Trace::new();
    let out = eval_kanon_reference(catalog, &plan, map, k, &rows_of, &mut trace)?;
    trace.canonicalize();
    let rows = assemble_result(&plan, out)?;
    Ok((rows, trace))
}
