//! Plan evaluation. [`eval_central`] runs plain, encrypted and oblivious
//! queries over merged rows at one site. [`eval_kanon_reference`] is the
//! single-site reference for protected queries: it evaluates class by class
//! with the same kernels the federation uses, so a correct distributed run
//! reproduces its trace event for event.

use std::collections::BTreeMap;

use crate::anonymizer::{apply_view, AnonymizationMap, ClassId};
use crate::error::{Error, Result};
use crate::planner::{AggFunc, Column, PlanNode, QueryPlan};
use crate::schema::Catalog;
use crate::trace::Trace;
use crate::value::{Scalar, Tuple};

use super::ops;
use super::{ClassStream, ClassedRows, Mode, NodeOutput};

/// Where a node of a protected query runs.
///
/// Plain nodes below the protection frontier fall in two camps: a subtree
/// that reads a single protected relation stays classed at the partition
/// owners (`Classed`), while anything touching several relations is gathered
/// and evaluated at the coordinator (`Central`), then classed on the way into
/// the first protected operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    Client,
    Central,
    Classed,
    Distributed,
}

#[derive(Clone, Copy)]
enum Ctx {
    UnderKanon,
    UnderCentral,
    UnderClassed,
}

pub fn kanon_placements(plan: &QueryPlan) -> Vec<Placement> {
    let modes = plan.modes_for(Mode::KAnon);
    let mut scans: Vec<Vec<String>> = Vec::with_capacity(plan.nodes.len());
    for node in &plan.nodes {
        let own = match node {
            PlanNode::Scan { relation, .. } => vec![relation.clone()],
            _ => node.inputs().iter().flat_map(|&i| scans[i].clone()).collect(),
        };
        scans.push(own);
    }

    let mut out = vec![Placement::Client; plan.nodes.len()];
    let mut stack = vec![(plan.host_root(), Ctx::UnderKanon)];
    while let Some((id, ctx)) = stack.pop() {
        let ctx_below = if modes[id] == Mode::KAnon {
            out[id] = Placement::Distributed;
            Ctx::UnderKanon
        } else {
            match ctx {
                Ctx::UnderCentral => {
                    out[id] = Placement::Central;
                    Ctx::UnderCentral
                }
                Ctx::UnderClassed => {
                    out[id] = Placement::Classed;
                    Ctx::UnderClassed
                }
                Ctx::UnderKanon => {
                    let single = scans[id].len() == 1
                        && !plan.control_flow.attrs_of(&scans[id][0]).is_empty();
                    if single {
                        out[id] = Placement::Classed;
                        Ctx::UnderClassed
                    } else {
                        out[id] = Placement::Central;
                        Ctx::UnderCentral
                    }
                }
            }
        };
        for input in plan.nodes[id].inputs() {
            stack.push((input, ctx_below));
        }
    }
    out
}

/// Routes the rows of one scan into runtime classes.
pub fn scan_classes(
    map: &AnonymizationMap,
    catalog: &Catalog,
    plan: &QueryPlan,
    node: usize,
    rows: &[Tuple],
) -> Result<ClassStream> {
    let PlanNode::Scan { relation, .. } = &plan.nodes[node] else {
        return Err(Error::Validation("scan_classes needs a scan node".into()));
    };
    let schema = &plan.schemas[node];
    let mut out = Vec::new();
    for class in apply_view(map, catalog, relation, rows)? {
        let mut groups = BTreeMap::new();
        for (attr, g) in &class.group_ids {
            let col = schema
                .iter()
                .position(|c| &c.attr == attr)
                .ok_or_else(|| Error::UnknownAttribute(format!("{relation}.{attr}")))?;
            groups.insert(col, *g);
        }
        out.push(ClassedRows { id: class.id, groups, tuples: class.tuples });
    }
    Ok(out)
}

/// Classes arbitrary rows crossing the protection frontier. Every protected
/// relation contributing columns gets a class component; the composite class
/// is their pairing in schema order.
pub fn classify_rows(
    map: &AnonymizationMap,
    schema: &[Column],
    rows: &[Tuple],
) -> Result<ClassStream> {
    let mut components: Vec<(String, Vec<(String, usize)>)> = Vec::new();
    for col in schema {
        if map.covers(&col.relation) && !components.iter().any(|(r, _)| r == &col.relation) {
            let mut attr_cols = Vec::new();
            for attr in map.control_attrs(&col.relation) {
                let matches: Vec<usize> = schema
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.relation == col.relation && c.attr == attr)
                    .map(|(i, _)| i)
                    .collect();
                match matches.as_slice() {
                    [one] => attr_cols.push((attr.clone(), *one)),
                    [] => {
                        return Err(Error::Validation(format!(
                            "column {}.{attr} is not available for classing",
                            col.relation
                        )))
                    }
                    _ => {
                        return Err(Error::UnsupportedFeature(format!(
                            "self join over protected relation {}",
                            col.relation
                        )))
                    }
                }
            }
            components.push((col.relation.clone(), attr_cols));
        }
    }
    if components.is_empty() {
        return Err(Error::Validation(
            "no protected relation contributes to rows crossing the frontier".into(),
        ));
    }

    let mut cache: BTreeMap<Vec<Scalar>, (ClassId, BTreeMap<usize, u32>)> = BTreeMap::new();
    let mut classes: BTreeMap<ClassId, ClassedRows> = BTreeMap::new();
    for tuple in rows {
        let probe: Vec<Scalar> = components
            .iter()
            .flat_map(|(_, ac)| ac.iter().map(|&(_, c)| tuple.values[c].clone()))
            .collect();
        if !cache.contains_key(&probe) {
            let mut composite: Option<ClassId> = None;
            let mut groups = BTreeMap::new();
            for (relation, attr_cols) in &components {
                let vector: Vec<Scalar> =
                    attr_cols.iter().map(|&(_, c)| tuple.values[c].clone()).collect();
                let key = crate::value::render_vector(&vector);
                let id = map.class_of[relation].get(&key).ok_or_else(|| {
                    Error::UnmappedValue { relation: relation.clone(), vector: key.clone() }
                })?;
                let attr_groups = map.class_groups(relation, id)?;
                for &(ref attr, col) in attr_cols {
                    groups.insert(col, attr_groups[attr]);
                }
                composite = Some(match composite {
                    None => id.clone(),
                    Some(left) => ClassId::pair(&left, id),
                });
            }
            cache.insert(probe.clone(), (composite.expect("components checked"), groups));
        }
        let (id, groups) = &cache[&probe];
        classes
            .entry(id.clone())
            .or_insert_with(|| ClassedRows {
                id: id.clone(),
                groups: groups.clone(),
                tuples: Vec::new(),
            })
            .tuples
            .push(tuple.clone());
    }
    Ok(classes.into_values().collect())
}

/// Central evaluation for the plain, encrypted and oblivious modes, up to the
/// host root. Plain and encrypted record true cardinalities; oblivious
/// records the padded ones.
pub fn eval_central(
    plan: &QueryPlan,
    query_mode: Mode,
    rows_of: &BTreeMap<String, Vec<Tuple>>,
    trace: &mut Trace,
) -> Result<Vec<Tuple>> {
    debug_assert!(query_mode != Mode::KAnon);
    let modes = plan.modes_for(query_mode);
    let hr = plan.host_root();
    let mut outs: Vec<Option<Vec<Tuple>>> = vec![None; plan.nodes.len()];
    for id in 0..=hr {
        let node_id = id as u32;
        let padded = modes[id] == Mode::Oblivious;
        let account = matches!(query_mode, Mode::Plain | Mode::Encrypted);
        let out = match &plan.nodes[id] {
            PlanNode::Scan { relation, .. } => {
                rows_of.get(relation).cloned().unwrap_or_default()
            }
            PlanNode::Filter { input, predicate } => {
                let rows = outs[*input].as_ref().expect("inputs precede");
                let cmp = rows.len() as u64;
                let out = if padded {
                    ops::filter_padded(rows, predicate)
                } else {
                    ops::rows_filter(rows, predicate)
                };
                if padded || account {
                    trace.class_emit(node_id, "*", out.len() as u64, cmp);
                }
                out
            }
            PlanNode::Join { left, right, pairs } => {
                let l = outs[*left].as_ref().expect("inputs precede");
                let r = outs[*right].as_ref().expect("inputs precede");
                if padded {
                    let out = ops::join_padded(l, r, pairs);
                    let n = out.len() as u64;
                    trace.pair_emit(node_id, "*", "*", n, n);
                    out
                } else {
                    let cmp = (l.len() + r.len()) as u64;
                    let out = ops::rows_join(l, r, pairs);
                    if account {
                        trace.pair_emit(node_id, "*", "*", out.len() as u64, cmp);
                    }
                    out
                }
            }
            PlanNode::Aggregate { input, group_by, aggregates, .. } => {
                let rows = outs[*input].as_ref().expect("inputs precede");
                if padded {
                    ops::aggregate_oblivious(
                        node_id,
                        "*",
                        rows,
                        group_by,
                        aggregates,
                        &plan.schemas[id],
                        trace,
                    )
                } else {
                    let mut out = Vec::new();
                    for (bin, (key, rows)) in
                        ops::group_bins(rows, group_by).into_iter().enumerate()
                    {
                        if account {
                            trace.bin_emit(node_id, "*", bin as u64, 1, rows.len() as u64);
                        }
                        let mut values = key;
                        values.extend(ops::fold_aggs(aggregates, &rows));
                        out.push(Tuple::real(values, rows[0].owner));
                    }
                    out
                }
            }
            PlanNode::Project { .. } | PlanNode::Sort { .. } | PlanNode::Limit { .. } => {
                return Err(Error::Validation("client node inside host region".into()))
            }
        };
        outs[id] = Some(out);
    }
    Ok(outs[hr].take().expect("host root evaluated"))
}

fn as_classes(
    out: NodeOutput,
    map: &AnonymizationMap,
    schema: &[Column],
) -> Result<ClassStream> {
    match out {
        NodeOutput::Classes(classes) => Ok(classes),
        NodeOutput::Rows(rows) => classify_rows(map, schema, &rows),
    }
}

/// Single-site reference evaluation of a protected query over a view: the
/// trace any compliant distributed execution must reproduce.
pub fn eval_kanon_reference(
    catalog: &Catalog,
    plan: &QueryPlan,
    map: &AnonymizationMap,
    k: u64,
    rows_of: &BTreeMap<String, Vec<Tuple>>,
    trace: &mut Trace,
) -> Result<NodeOutput> {
    fn take(outs: &mut [Option<NodeOutput>], i: usize) -> NodeOutput {
        outs[i].take().expect("inputs precede")
    }

    let placements = kanon_placements(plan);
    let hr = plan.host_root();
    let mut outs: Vec<Option<NodeOutput>> = vec![None; plan.nodes.len()];
    for id in 0..=hr {
        let node_id = id as u32;
        let out = match placements[id] {
            Placement::Client => {
                return Err(Error::Validation("client node inside host region".into()))
            }
            Placement::Central => {
                let rows = match &plan.nodes[id] {
                    PlanNode::Scan { relation, .. } => {
                        rows_of.get(relation).cloned().unwrap_or_default()
                    }
                    PlanNode::Filter { input, predicate } => {
                        ops::rows_filter(&take(&mut outs, *input).expect_rows(), predicate)
                    }
                    PlanNode::Join { left, right, pairs } => ops::rows_join(
                        &take(&mut outs, *left).expect_rows(),
                        &take(&mut outs, *right).expect_rows(),
                        pairs,
                    ),
                    _ => {
                        return Err(Error::Validation(
                            "only scans, filters and joins run centrally below the frontier"
                                .into(),
                        ))
                    }
                };
                NodeOutput::Rows(rows)
            }
            Placement::Classed => {
                let classes = match &plan.nodes[id] {
                    PlanNode::Scan { relation, .. } => {
                        let rows = rows_of.get(relation).cloned().unwrap_or_default();
                        scan_classes(map, catalog, plan, id, &rows)?
                    }
                    PlanNode::Filter { input, predicate } => take(&mut outs, *input)
                        .expect_classes()
                        .into_iter()
                        .map(|c| ClassedRows {
                            id: c.id,
                            groups: c.groups,
                            tuples: ops::rows_filter(&c.tuples, predicate),
                        })
                        .collect(),
                    _ => unreachable!("classed chains hold scans and filters only"),
                };
                NodeOutput::Classes(classes)
            }
            Placement::Distributed => {
                let classes = match &plan.nodes[id] {
                    PlanNode::Filter { input, predicate } => {
                        let input_schema = &plan.schemas[*input];
                        let classes =
                            as_classes(take(&mut outs, *input), map, input_schema)?;
                        let mut kept = Vec::new();
                        for class in classes {
                            let size = class.tuples.len() as u64;
                            match ops::filter_kanon(predicate, &class, input_schema)? {
                                Some(out) => {
                                    trace.class_emit(node_id, out.id.as_str(), size, size);
                                    kept.push(out);
                                }
                                None => trace.class_drop(node_id, class.id.as_str(), size),
                            }
                        }
                        kept
                    }
                    PlanNode::Join { left, right, pairs } => {
                        let (ls, rs) = (&plan.schemas[*left], &plan.schemas[*right]);
                        let lcs = as_classes(take(&mut outs, *left), map, ls)?;
                        let rcs = as_classes(take(&mut outs, *right), map, rs)?;
                        let mut out = Vec::new();
                        for lc in &lcs {
                            for rc in &rcs {
                                if !ops::classes_compatible(lc, rc, pairs, ls, rs)? {
                                    continue;
                                }
                                let joined = ops::join_kanon(lc, rc, pairs, ls.len());
                                let n = joined.tuples.len() as u64;
                                trace.pair_emit(node_id, lc.id.as_str(), rc.id.as_str(), n, n);
                                out.push(joined);
                            }
                        }
                        out
                    }
                    PlanNode::Aggregate { input, group_by, aggregates, entity_col } => {
                        let input_schema = &plan.schemas[*input];
                        let classes =
                            as_classes(take(&mut outs, *input), map, input_schema)?;
                        classes
                            .iter()
                            .map(|c| {
                                ops::aggregate_kanon(
                                    node_id,
                                    c,
                                    group_by,
                                    aggregates,
                                    *entity_col,
                                    k,
                                    &plan.schemas[id],
                                    trace,
                                )
                            })
                            .collect()
                    }
                    PlanNode::Scan { .. } => unreachable!("scans always run plain"),
                    _ => unreachable!("client node inside host region"),
                };
                NodeOutput::Classes(classes)
            }
        };
        outs[id] = Some(out);
    }
    Ok(outs[hr].take().expect("host root evaluated"))
}

fn combine_partials(specs: &[AggFunc], into: &mut [Scalar], from: &[Scalar]) {
    for (i, func) in specs.iter().enumerate() {
        into[i] = match func {
            AggFunc::Count | AggFunc::Sum | AggFunc::Avg => Scalar::Int(
                into[i].as_int().unwrap_or(0) + from[i].as_int().unwrap_or(0),
            ),
            AggFunc::Min => into[i].clone().min(from[i].clone()),
            AggFunc::Max => into[i].clone().max(from[i].clone()),
        };
    }
}

/// Client-side result assembly: strip padding, merge per-class aggregate
/// partials by grouping value, finalize averages, then project, sort and
/// limit. Rows always leave in a canonical order: the ORDER BY keys first if
/// any, full-row comparison as the tiebreak.
pub fn assemble_result(plan: &QueryPlan, output: NodeOutput) -> Result<Vec<Vec<Scalar>>> {
    let hr = plan.host_root();
    let tuples = match output {
        NodeOutput::Rows(rows) => rows,
        NodeOutput::Classes(classes) => {
            classes.into_iter().flat_map(|c| c.tuples).collect()
        }
    };
    let mut rows: Vec<Vec<Scalar>> =
        tuples.into_iter().filter(|t| !t.dummy).map(|t| t.values).collect();

    if let PlanNode::Aggregate { group_by, aggregates, .. } = &plan.nodes[hr] {
        let funcs: Vec<AggFunc> = aggregates.iter().map(|a| a.func).collect();
        let hidden: Vec<AggFunc> =
            funcs.iter().filter(|f| **f == AggFunc::Avg).map(|_| AggFunc::Sum).collect();
        let all_funcs: Vec<AggFunc> = funcs.iter().copied().chain(hidden).collect();
        let groups = group_by.len();
        let mut acc: BTreeMap<Vec<Scalar>, Vec<Scalar>> = BTreeMap::new();
        for row in rows {
            let key = row[..groups].to_vec();
            let aggs = row[groups..].to_vec();
            match acc.entry(key) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(aggs);
                }
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    combine_partials(&all_funcs, e.get_mut(), &aggs);
                }
            }
        }
        rows = acc
            .into_iter()
            .map(|(key, mut aggs)| {
                let mut avg_ordinal = 0;
                for (i, func) in funcs.iter().enumerate() {
                    if *func == AggFunc::Avg {
                        let sum = aggs[i].as_int().unwrap_or(0) as f64;
                        let n = aggs[funcs.len() + avg_ordinal].as_int().unwrap_or(0) as f64;
                        avg_ordinal += 1;
                        aggs[i] = Scalar::Real(sum / n);
                    }
                }
                let mut row = key;
                row.extend(aggs);
                row
            })
            .collect();
    }

    let mut sorted = false;
    for id in hr + 1..plan.nodes.len() {
        match &plan.nodes[id] {
            PlanNode::Project { columns, .. } => {
                rows = rows
                    .into_iter()
                    .map(|r| columns.iter().map(|&c| r[c].clone()).collect())
                    .collect();
            }
            PlanNode::Sort { keys, .. } => {
                sort_rows(&mut rows, keys);
                sorted = true;
            }
            PlanNode::Limit { count, .. } => {
                if !sorted {
                    sort_rows(&mut rows, &[]);
                    sorted = true;
                }
                rows.truncate(*count as usize);
            }
            _ => return Err(Error::Validation("host node above the host root".into())),
        }
    }
    if !sorted {
        sort_rows(&mut rows, &[]);
    }
    Ok(rows)
}

fn sort_rows(rows: &mut [Vec<Scalar>], keys: &[(usize, bool)]) {
    rows.sort_by(|a, b| {
        for &(col, desc) in keys {
            let ord = a[col].cmp(&b[col]);
            if !ord.is_eq() {
                return if desc { ord.reverse() } else { ord };
            }
        }
        a.cmp(b)
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anonymizer::DomainPartition;
    use crate::planner::{plan_query, tests::health_catalog, ControlFlowSet};
    use crate::value::ScalarKind;

    fn ints(vals: &[i64]) -> Vec<Scalar> {
        vals.iter().map(|&v| Scalar::Int(v)).collect()
    }

    fn demo_rows() -> Vec<Tuple> {
        [(1, "F", 10), (2, "F", 11), (3, "M", 12), (4, "M", 13)]
            .iter()
            .map(|&(pid, sex, zip)| {
                Tuple::real(vec![Scalar::Int(pid), Scalar::from(sex), Scalar::Int(zip)], 0)
            })
            .collect()
    }

    fn diag_rows() -> Vec<Tuple> {
        [(1, "flu", 100), (2, "flu", 101), (3, "hd", 102), (4, "hd", 103)]
            .iter()
            .map(|&(pid, diag, ddate)| {
                Tuple::real(vec![Scalar::Int(pid), Scalar::from(diag), Scalar::Int(ddate)], 0)
            })
            .collect()
    }

    fn health_map() -> AnonymizationMap {
        let mut c = ControlFlowSet::default();
        c.insert("demographics", "pid");
        c.insert("demographics", "sex");
        c.insert("diagnosis", "pid");
        c.insert("diagnosis", "diag");
        let partitions = BTreeMap::from([
            (
                "pid".to_string(),
                DomainPartition {
                    domain: "pid".into(),
                    kind: ScalarKind::Integer,
                    values: ints(&[1, 2, 3, 4]),
                    group_of: vec![0, 0, 1, 1],
                },
            ),
            (
                "sex".to_string(),
                DomainPartition {
                    domain: "sex".into(),
                    kind: ScalarKind::Text,
                    values: vec![Scalar::from("F"), Scalar::from("M")],
                    group_of: vec![0, 1],
                },
            ),
            (
                "diag".to_string(),
                DomainPartition {
                    domain: "diag".into(),
                    kind: ScalarKind::Text,
                    values: vec![Scalar::from("flu"), Scalar::from("hd")],
                    group_of: vec![0, 1],
                },
            ),
        ]);
        let demo_classes = BTreeMap::from([
            ("[1,\"F\"]".to_string(), ClassId("demographics/0.0".into())),
            ("[2,\"F\"]".to_string(), ClassId("demographics/0.0".into())),
            ("[3,\"M\"]".to_string(), ClassId("demographics/1.1".into())),
            ("[4,\"M\"]".to_string(), ClassId("demographics/1.1".into())),
        ]);
        let diag_classes = BTreeMap::from([
            ("[\"flu\",1]".to_string(), ClassId("diagnosis/0.0".into())),
            ("[\"flu\",2]".to_string(), ClassId("diagnosis/0.0".into())),
            ("[\"hd\",3]".to_string(), ClassId("diagnosis/1.1".into())),
            ("[\"hd\",4]".to_string(), ClassId("diagnosis/1.1".into())),
        ]);
        AnonymizationMap {
            k: 2,
            c,
            partitions,
            class_of: BTreeMap::from([
                ("demographics".to_string(), demo_classes),
                ("diagnosis".to_string(), diag_classes),
            ]),
            hash_seed: 7,
        }
    }

    fn rows_of() -> BTreeMap<String, Vec<Tuple>> {
        BTreeMap::from([
            ("demographics".to_string(), demo_rows()),
            ("diagnosis".to_string(), diag_rows()),
        ])
    }

    const JOIN_COUNT: &str = "SELECT diag, COUNT(*) AS n FROM demographics, diagnosis \
                              WHERE demographics.pid = diagnosis.pid AND sex = 'F' \
                              GROUP BY diag";

    #[test]
    fn placements_split_frontier_and_protected_region() {
        let catalog = health_catalog();
        let plan = plan_query(&catalog, JOIN_COUNT).unwrap();
        let placements = kanon_placements(&plan);
        assert_eq!(
            placements,
            vec![
                Placement::Classed,
                Placement::Distributed,
                Placement::Classed,
                Placement::Distributed,
                Placement::Distributed,
                Placement::Client,
            ]
        );
    }

    #[test]
    fn reference_run_matches_plain_result_and_pins_events() {
        let catalog = health_catalog();
        let plan = plan_query(&catalog, JOIN_COUNT).unwrap();
        let map = health_map();

        let mut plain_trace = Trace::new();
        let plain = eval_central(&plan, Mode::Plain, &rows_of(), &mut plain_trace).unwrap();
        let plain_rows = assemble_result(&plan, NodeOutput::Rows(plain)).unwrap();
        assert_eq!(plain_rows, vec![vec![Scalar::from("flu"), Scalar::Int(2)]]);

        let mut trace = Trace::new();
        let out =
            eval_kanon_reference(&catalog, &plan, &map, 2, &rows_of(), &mut trace).unwrap();
        let rows = assemble_result(&plan, out).unwrap();
        assert_eq!(rows, plain_rows);

        trace.canonicalize();
        let lines: Vec<String> =
            trace.events.iter().map(|e| serde_json::to_string(e).unwrap()).collect();
        assert_eq!(
            lines,
            vec![
                r#"{"node":1,"kind":"class_emit","class":"demographics/0.0","seq":0,"card":2,"cmp":2}"#,
                r#"{"node":1,"kind":"class_drop","class":"demographics/1.1","seq":0,"card":0,"cmp":2}"#,
                r#"{"node":3,"kind":"pair_emit","class":"demographics/0.0","class2":"diagnosis/0.0","seq":0,"card":4,"cmp":4}"#,
                r#"{"node":4,"kind":"bin_emit","class":"(demographics/0.0)x(diagnosis/0.0)","seq":0,"card":1,"cmp":4}"#,
            ]
        );
    }

    #[test]
    fn oblivious_run_pads_and_still_matches_plain_rows() {
        let catalog = health_catalog();
        let plan = plan_query(&catalog, JOIN_COUNT).unwrap();

        let mut trace = Trace::new();
        let out = eval_central(&plan, Mode::Oblivious, &rows_of(), &mut trace).unwrap();
        let rows = assemble_result(&plan, NodeOutput::Rows(out)).unwrap();
        assert_eq!(rows, vec![vec![Scalar::from("flu"), Scalar::Int(2)]]);

        trace.canonicalize();
        let lines: Vec<String> =
            trace.events.iter().map(|e| serde_json::to_string(e).unwrap()).collect();
        assert_eq!(
            lines,
            vec![
                r#"{"node":1,"kind":"class_emit","class":"*","seq":0,"card":4,"cmp":4}"#,
                r#"{"node":3,"kind":"pair_emit","class":"*","class2":"*","seq":0,"card":16,"cmp":16}"#,
                r#"{"node":4,"kind":"bin_emit","class":"*","seq":0,"card":1,"cmp":16}"#,
                r#"{"node":4,"kind":"bin_emit","class":"*","seq":1,"card":1,"cmp":16}"#,
            ]
        );
    }

    #[test]
    fn single_relation_filter_drops_unsatisfiable_class() {
        let catalog = health_catalog();
        let plan = plan_query(&catalog, "SELECT zip FROM demographics WHERE sex = 'F'").unwrap();
        let map = health_map();

        let mut trace = Trace::new();
        let out =
            eval_kanon_reference(&catalog, &plan, &map, 2, &rows_of(), &mut trace).unwrap();
        let rows = assemble_result(&plan, out).unwrap();
        assert_eq!(rows, vec![ints(&[10]), ints(&[11])]);
        assert_eq!(trace.events.len(), 2);
        assert_eq!(trace.total_card(), 2);
        assert_eq!(trace.total_cmp(), 4);
    }

    #[test]
    fn average_partials_merge_by_group_value() {
        let catalog = health_catalog();
        let plan =
            plan_query(&catalog, "SELECT sex, AVG(zip) AS az FROM demographics GROUP BY sex")
                .unwrap();
        let partials = vec![
            Tuple::real(vec![Scalar::from("F"), Scalar::Int(10), Scalar::Int(4)], 0),
            Tuple::real(vec![Scalar::from("F"), Scalar::Int(6), Scalar::Int(2)], 0),
            Tuple::real(vec![Scalar::from("M"), Scalar::Int(7), Scalar::Int(1)], 0),
        ];
        let rows = assemble_result(&plan, NodeOutput::Rows(partials)).unwrap();
        assert_eq!(
            rows,
            vec![
                vec![Scalar::from("F"), Scalar::Real(16.0 / 6.0)],
                vec![Scalar::from("M"), Scalar::Real(7.0)],
            ]
        );
    }

    #[test]
    fn limit_without_order_by_truncates_canonical_order() {
        let catalog = health_catalog();
        let plan = plan_query(&catalog, "SELECT zip FROM demographics LIMIT 2").unwrap();
        let mut trace = Trace::new();
        let out = eval_central(&plan, Mode::Plain, &rows_of(), &mut trace).unwrap();
        let rows = assemble_result(&plan, NodeOutput::Rows(out)).unwrap();
        assert_eq!(rows, vec![ints(&[10]), ints(&[11])]);
    }
}
