//! Query planning: parsing the SQL subset, binding it against a catalog into
//! a left-deep operator tree, deriving the control-flow attribute set that an
//! anonymized view must cover, and admitting queries against the workload
//! state the federation already maintains.
//!
//! Node indices double as stable node ids: the arena is filled bottom-up
//! (scans first, the root last), so a node's inputs always have smaller ids,
//! and identical SQL against the same catalog yields the identical tree.

pub mod admission;
mod control_flow;
mod parse;

pub use admission::{admit, AdmissionDecision, WorkloadState};
pub use parse::{AggFunc, CmpOp};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::Mode;
use crate::schema::{Catalog, Policy};
use crate::value::{Scalar, ScalarKind};

use parse::{ColName, Lit, SelectItem, SelectStmt, WhereTerm};

/// Set of (relation, attribute) pairs that feed control flow somewhere in a
/// query: filter predicates, join keys, grouping keys, and the entity
/// attribute of protected aggregations.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlFlowSet(pub BTreeSet<(String, String)>);

impl ControlFlowSet {
    pub fn insert(&mut self, relation: &str, attr: &str) {
        self.0.insert((relation.to_string(), attr.to_string()));
    }

    pub fn contains(&self, relation: &str, attr: &str) -> bool {
        self.0.contains(&(relation.to_string(), attr.to_string()))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_subset(&self, other: &ControlFlowSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn intersects(&self, other: &ControlFlowSet) -> bool {
        self.0.intersection(&other.0).next().is_some()
    }

    pub fn union(&self, other: &ControlFlowSet) -> ControlFlowSet {
        ControlFlowSet(self.0.union(&other.0).cloned().collect())
    }

    pub fn relations(&self) -> BTreeSet<String> {
        self.0.iter().map(|(r, _)| r.clone()).collect()
    }

    /// Attributes of one relation, sorted by name.
    pub fn attrs_of(&self, relation: &str) -> Vec<String> {
        self.0
            .iter()
            .filter(|(r, _)| r == relation)
            .map(|(_, a)| a.clone())
            .collect()
    }
}

impl std::fmt::Display for ControlFlowSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(r, a)| format!("{r}.{a}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// One column of a node's output schema, carrying its base-relation
/// provenance. Aggregate outputs have an empty `relation`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub display: String,
    pub relation: String,
    pub attr: String,
    pub kind: ScalarKind,
    pub kanon: bool,
    pub domain: Option<String>,
    pub entity: bool,
    /// Internal companion columns (running counts for AVG) that the client
    /// strips after merging partial aggregates.
    pub hidden: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PredTerm {
    Compare { col: usize, op: CmpOp, value: Scalar },
    InList { col: usize, values: Vec<Scalar> },
}

/// Conjunction of simple terms over one node's input schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub terms: Vec<PredTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggSpec {
    pub func: AggFunc,
    pub col: Option<usize>,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PlanNode {
    Scan {
        relation: String,
        alias: String,
    },
    Filter {
        input: usize,
        predicate: Predicate,
    },
    Join {
        left: usize,
        right: usize,
        /// Column index pairs (left schema, right schema), all equated.
        pairs: Vec<(usize, usize)>,
    },
    Aggregate {
        input: usize,
        group_by: Vec<usize>,
        aggregates: Vec<AggSpec>,
        /// Entity attribute of the leftmost base relation, as an input
        /// column index; contributor counting is done over it.
        entity_col: usize,
    },
    Project {
        input: usize,
        columns: Vec<usize>,
        names: Vec<String>,
    },
    Sort {
        input: usize,
        keys: Vec<(usize, bool)>,
    },
    Limit {
        input: usize,
        count: u64,
    },
}

impl PlanNode {
    pub fn inputs(&self) -> Vec<usize> {
        match self {
            PlanNode::Scan { .. } => vec![],
            PlanNode::Filter { input, .. }
            | PlanNode::Aggregate { input, .. }
            | PlanNode::Project { input, .. }
            | PlanNode::Sort { input, .. }
            | PlanNode::Limit { input, .. } => vec![*input],
            PlanNode::Join { left, right, .. } => vec![*left, *right],
        }
    }
}

/// A bound query plan. `client_side` marks the trailing projection, sort and
/// limit, which run at the client on the assembled plaintext result; hosts
/// execute everything up to [`QueryPlan::host_root`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub nodes: Vec<PlanNode>,
    pub schemas: Vec<Vec<Column>>,
    pub root: usize,
    pub client_side: Vec<bool>,
    pub tainted: Vec<bool>,
    pub control_flow: ControlFlowSet,
    pub output_names: Vec<String>,
    pub sql: String,
}

/// Parses and binds a query. The returned plan is independent of execution
/// mode; per-node modes come from [`QueryPlan::modes_for`].
pub fn plan_query(catalog: &Catalog, sql: &str) -> Result<QueryPlan> {
    let stmt = parse::parse(sql)?;
    let mut plan = Binder { catalog, nodes: Vec::new(), schemas: Vec::new() }.bind(&stmt, sql)?;
    control_flow::derive(&mut plan);
    Ok(plan)
}

impl QueryPlan {
    /// Topmost node executed on hosts.
    pub fn host_root(&self) -> usize {
        let mut n = self.root;
        while self.client_side[n] {
            n = self.nodes[n].inputs()[0];
        }
        n
    }

    pub fn scan_relations(&self) -> BTreeSet<String> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                PlanNode::Scan { relation, .. } => Some(relation.clone()),
                _ => None,
            })
            .collect()
    }

    /// Base attributes the query actually reads: filter and join columns,
    /// grouping keys, aggregate targets, entity columns and projected
    /// outputs. Anything outside this set can be blanked before rows leave
    /// a host without changing the result.
    pub fn referenced_attrs(&self) -> BTreeSet<(String, String)> {
        let mut out = BTreeSet::new();
        let mut add = |schema: &[Column], col: usize| {
            let c = &schema[col];
            if !c.relation.is_empty() {
                out.insert((c.relation.clone(), c.attr.clone()));
            }
        };
        for node in &self.nodes {
            match node {
                PlanNode::Scan { .. } | PlanNode::Limit { .. } => {}
                PlanNode::Filter { input, predicate } => {
                    let schema = &self.schemas[*input];
                    for term in &predicate.terms {
                        match term {
                            PredTerm::Compare { col, .. } | PredTerm::InList { col, .. } => {
                                add(schema, *col)
                            }
                        }
                    }
                }
                PlanNode::Join { left, right, pairs } => {
                    for (l, r) in pairs {
                        add(&self.schemas[*left], *l);
                        add(&self.schemas[*right], *r);
                    }
                }
                PlanNode::Aggregate { input, group_by, aggregates, entity_col } => {
                    let schema = &self.schemas[*input];
                    for col in group_by {
                        add(schema, *col);
                    }
                    for spec in aggregates {
                        if let Some(col) = spec.col {
                            add(schema, col);
                        }
                    }
                    add(schema, *entity_col);
                }
                PlanNode::Project { input, columns, .. } => {
                    for col in columns {
                        add(&self.schemas[*input], *col);
                    }
                }
                PlanNode::Sort { input, keys } => {
                    for (col, _) in keys {
                        add(&self.schemas[*input], *col);
                    }
                }
            }
        }
        out
    }

    /// Per-node execution modes for a query-level mode. Scans always run
    /// plain: reading a host's own shard reveals nothing. Under k-anonymous
    /// execution exactly the tainted nodes are protected; under oblivious
    /// execution every non-scan host node is.
    pub fn modes_for(&self, query_mode: Mode) -> Vec<Mode> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let scan = matches!(n, PlanNode::Scan { .. });
                match query_mode {
                    Mode::Plain => Mode::Plain,
                    Mode::Encrypted => Mode::Encrypted,
                    Mode::KAnon => {
                        if self.tainted[i] && !self.client_side[i] {
                            Mode::KAnon
                        } else {
                            Mode::Plain
                        }
                    }
                    Mode::Oblivious => {
                        if scan || self.client_side[i] {
                            Mode::Plain
                        } else {
                            Mode::Oblivious
                        }
                    }
                }
            })
            .collect()
    }

    pub fn describe(&self, query_mode: Mode) -> String {
        let modes = self.modes_for(query_mode);
        let mut out = String::new();
        self.describe_node(self.root, 0, &modes, &mut out);
        out
    }

    fn describe_node(&self, id: usize, depth: usize, modes: &[Mode], out: &mut String) {
        let indent = "  ".repeat(depth);
        let schema = |n: usize| &self.schemas[n];
        let label = match &self.nodes[id] {
            PlanNode::Scan { relation, alias } if relation == alias => {
                format!("Scan {relation}")
            }
            PlanNode::Scan { relation, alias } => format!("Scan {relation} {alias}"),
            PlanNode::Filter { input, predicate } => {
                let cols = schema(*input);
                let parts: Vec<String> = predicate
                    .terms
                    .iter()
                    .map(|t| match t {
                        PredTerm::Compare { col, op, value } => {
                            format!("{} {op} {}", cols[*col].display, value.render())
                        }
                        PredTerm::InList { col, values } => {
                            let vs: Vec<String> = values.iter().map(|v| v.render()).collect();
                            format!("{} in ({})", cols[*col].display, vs.join(", "))
                        }
                    })
                    .collect();
                format!("Filter {}", parts.join(" and "))
            }
            PlanNode::Join { left, right, pairs } => {
                let parts: Vec<String> = pairs
                    .iter()
                    .map(|&(l, r)| {
                        format!("{} = {}", schema(*left)[l].display, schema(*right)[r].display)
                    })
                    .collect();
                format!("Join {}", parts.join(" and "))
            }
            PlanNode::Aggregate { input, group_by, aggregates, .. } => {
                let cols = schema(*input);
                let groups: Vec<String> =
                    group_by.iter().map(|&g| cols[g].display.clone()).collect();
                let aggs: Vec<String> = aggregates.iter().map(|a| a.label.clone()).collect();
                format!("Aggregate [{}] {}", groups.join(", "), aggs.join(", "))
            }
            PlanNode::Project { names, .. } => format!("Project {}", names.join(", ")),
            PlanNode::Sort { input, keys } => {
                let cols = schema(*input);
                let parts: Vec<String> = keys
                    .iter()
                    .map(|&(c, asc)| {
                        format!("{} {}", cols[c].display, if asc { "asc" } else { "desc" })
                    })
                    .collect();
                format!("Sort {}", parts.join(", "))
            }
            PlanNode::Limit { count, .. } => format!("Limit {count}"),
        };
        let mode = if self.client_side[id] {
            "client".to_string()
        } else {
            modes[id].to_string()
        };
        out.push_str(&format!("{indent}{label} ({mode})\n"));
        for input in self.nodes[id].inputs() {
            self.describe_node(input, depth + 1, modes, out);
        }
    }
}

struct Binder<'a> {
    catalog: &'a Catalog,
    nodes: Vec<PlanNode>,
    schemas: Vec<Vec<Column>>,
}

struct Scope {
    alias: String,
    relation: String,
    columns: Vec<Column>,
}

impl<'a> Binder<'a> {
    fn push(&mut self, node: PlanNode, schema: Vec<Column>) -> usize {
        self.nodes.push(node);
        self.schemas.push(schema);
        self.nodes.len() - 1
    }

    fn bind(mut self, stmt: &SelectStmt, sql: &str) -> Result<QueryPlan> {
        let mut scopes = Vec::new();
        for (rel_name, alias) in &stmt.from {
            let rel = self.catalog.relation(rel_name)?;
            let alias = alias.clone().unwrap_or_else(|| rel_name.clone());
            if scopes.iter().any(|s: &Scope| s.alias == alias) {
                return Err(Error::Validation(format!("duplicate relation alias {alias}")));
            }
            let mut columns = Vec::new();
            for attr in &rel.attributes {
                columns.push(Column {
                    display: attr.name.clone(),
                    relation: rel.name.clone(),
                    attr: attr.name.clone(),
                    kind: attr.kind,
                    kanon: attr.policy == Policy::KAnon,
                    domain: Some(self.catalog.domain_of(&rel.name, &attr.name)?),
                    entity: attr.name == rel.entity_attr,
                    hidden: false,
                });
            }
            scopes.push(Scope { alias, relation: rel_name.clone(), columns });
        }

        let resolve = |col: &ColName| -> Result<(usize, usize)> {
            match &col.qualifier {
                Some(q) => {
                    let (si, scope) = scopes
                        .iter()
                        .enumerate()
                        .find(|(_, s)| s.alias == *q)
                        .ok_or_else(|| Error::UnknownAttribute(col.to_string()))?;
                    let ai = scope
                        .columns
                        .iter()
                        .position(|c| c.attr == col.name)
                        .ok_or_else(|| Error::UnknownAttribute(col.to_string()))?;
                    Ok((si, ai))
                }
                None => {
                    let mut hits = Vec::new();
                    for (si, scope) in scopes.iter().enumerate() {
                        if let Some(ai) = scope.columns.iter().position(|c| c.attr == col.name) {
                            hits.push((si, ai));
                        }
                    }
                    match hits.len() {
                        0 => Err(Error::UnknownAttribute(col.to_string())),
                        1 => Ok(hits[0]),
                        _ => Err(Error::Validation(format!("ambiguous column {col}"))),
                    }
                }
            }
        };

        let lit_to_scalar = |lit: &Lit, col: &Column| -> Result<Scalar> {
            match (lit, col.kind) {
                (Lit::Int(n), ScalarKind::Integer) | (Lit::Int(n), ScalarKind::Date) => {
                    Ok(Scalar::Int(*n))
                }
                (Lit::Str(s), ScalarKind::Text) => Ok(Scalar::from(s.as_str())),
                (Lit::Int(_), _) => Err(Error::TypeError(format!(
                    "{}.{} is {}, got an integer literal",
                    col.relation, col.attr, col.kind
                ))),
                (Lit::Str(_), _) => Err(Error::TypeError(format!(
                    "{}.{} is {}, got a string literal",
                    col.relation, col.attr, col.kind
                ))),
            }
        };

        let mut scope_preds: Vec<Vec<PredTerm>> = scopes.iter().map(|_| Vec::new()).collect();
        let mut edges: Vec<((usize, usize), (usize, usize), bool)> = Vec::new();
        for term in &stmt.where_terms {
            match term {
                WhereTerm::Compare { col, op, value } => {
                    let (si, ai) = resolve(col)?;
                    let scalar = lit_to_scalar(value, &scopes[si].columns[ai])?;
                    scope_preds[si].push(PredTerm::Compare { col: ai, op: *op, value: scalar });
                }
                WhereTerm::InList { col, values } => {
                    let (si, ai) = resolve(col)?;
                    let column = &scopes[si].columns[ai];
                    let scalars = values
                        .iter()
                        .map(|v| lit_to_scalar(v, column))
                        .collect::<Result<Vec<_>>>()?;
                    scope_preds[si].push(PredTerm::InList { col: ai, values: scalars });
                }
                WhereTerm::JoinEq { left, right } => {
                    let l = resolve(left)?;
                    let r = resolve(right)?;
                    if l.0 == r.0 {
                        return Err(Error::UnsupportedFeature(format!(
                            "comparison between columns of one relation: {left} = {right}"
                        )));
                    }
                    let (lc, rc) =
                        (&scopes[l.0].columns[l.1], &scopes[r.0].columns[r.1]);
                    if !lc.kind.runtime_compatible(rc.kind) {
                        return Err(Error::TypeError(format!(
                            "join {left} = {right} mixes {} and {}",
                            lc.kind, rc.kind
                        )));
                    }
                    edges.push((l, r, false));
                }
            }
        }

        let mut scope_node = Vec::new();
        for (si, scope) in scopes.iter().enumerate() {
            let scan = self.push(
                PlanNode::Scan { relation: scope.relation.clone(), alias: scope.alias.clone() },
                scope.columns.clone(),
            );
            let node = if scope_preds[si].is_empty() {
                scan
            } else {
                let terms = std::mem::take(&mut scope_preds[si]);
                self.push(
                    PlanNode::Filter { input: scan, predicate: Predicate { terms } },
                    scope.columns.clone(),
                )
            };
            scope_node.push(node);
        }

        let mut current = scope_node[0];
        let mut offset: BTreeMap<usize, usize> = BTreeMap::from([(0, 0)]);
        for si in 1..scopes.len() {
            let mut pairs = Vec::new();
            for (l, r, used) in edges.iter_mut() {
                if *used {
                    continue;
                }
                let (bound, fresh) = if offset.contains_key(&l.0) && r.0 == si {
                    (*l, *r)
                } else if offset.contains_key(&r.0) && l.0 == si {
                    (*r, *l)
                } else {
                    continue;
                };
                pairs.push((offset[&bound.0] + bound.1, fresh.1));
                *used = true;
            }
            if pairs.is_empty() {
                return Err(Error::UnsupportedFeature(format!(
                    "cross join: {} has no equality link to the preceding relations",
                    scopes[si].alias
                )));
            }
            let mut schema = self.schemas[current].clone();
            offset.insert(si, schema.len());
            schema.extend(scopes[si].columns.iter().cloned());
            current = self.push(
                PlanNode::Join { left: current, right: scope_node[si], pairs },
                schema,
            );
        }
        if let Some((l, r, _)) = edges.iter().find(|(_, _, used)| !used) {
            let (lc, rc) = (&scopes[l.0].columns[l.1], &scopes[r.0].columns[r.1]);
            return Err(Error::Validation(format!(
                "join condition {}.{} = {}.{} was never applied",
                scopes[l.0].alias, lc.attr, scopes[r.0].alias, rc.attr
            )));
        }

        let global = |si: usize, ai: usize| offset[&si] + ai;
        let has_aggs = stmt
            .items
            .iter()
            .any(|i| matches!(i, SelectItem::Aggregate { .. }));

        let mut project_cols = Vec::new();
        let mut project_names = Vec::new();

        if has_aggs || !stmt.group_by.is_empty() {
            let mut group_by = Vec::new();
            for col in &stmt.group_by {
                let (si, ai) = resolve(col)?;
                group_by.push(global(si, ai));
            }
            let input_schema = self.schemas[current].clone();
            let mut aggregates = Vec::new();
            let mut out_schema: Vec<Column> = group_by
                .iter()
                .map(|&g| input_schema[g].clone())
                .collect();

            for item in &stmt.items {
                match item {
                    SelectItem::AllColumns => {
                        return Err(Error::Validation(
                            "select * cannot be combined with aggregation".into(),
                        ));
                    }
                    SelectItem::Column { col, alias } => {
                        let (si, ai) = resolve(col)?;
                        let g = global(si, ai);
                        let pos =
                            group_by.iter().position(|&x| x == g).ok_or_else(|| {
                                Error::Validation(format!(
                                    "column {col} must appear in GROUP BY"
                                ))
                            })?;
                        project_cols.push(pos);
                        project_names
                            .push(alias.clone().unwrap_or_else(|| col.name.clone()));
                    }
                    SelectItem::Aggregate { func, col, alias } => {
                        let bound = match col {
                            Some(c) => {
                                let (si, ai) = resolve(c)?;
                                let column = &scopes[si].columns[ai];
                                if matches!(func, AggFunc::Sum | AggFunc::Avg)
                                    && column.kind != ScalarKind::Integer
                                {
                                    return Err(Error::TypeError(format!(
                                        "{func} over {} column {c}",
                                        column.kind
                                    )));
                                }
                                Some((global(si, ai), c))
                            }
                            None => None,
                        };
                        let label = match (&bound, alias) {
                            (_, Some(a)) => a.clone(),
                            (Some((_, c)), None) => format!("{func}({c})"),
                            (None, None) => format!("{func}(*)"),
                        };
                        let kind = match func {
                            AggFunc::Count => ScalarKind::Integer,
                            AggFunc::Sum => ScalarKind::Integer,
                            AggFunc::Avg => ScalarKind::Integer,
                            AggFunc::Min | AggFunc::Max => {
                                input_schema[bound.as_ref().unwrap().0].kind
                            }
                        };
                        project_cols.push(group_by.len() + aggregates.len());
                        project_names.push(label.clone());
                        aggregates.push(AggSpec {
                            func: *func,
                            col: bound.map(|(g, _)| g),
                            label: label.clone(),
                        });
                        out_schema.push(Column {
                            display: label.clone(),
                            relation: String::new(),
                            attr: label,
                            kind,
                            kanon: false,
                            domain: None,
                            entity: false,
                            hidden: false,
                        });
                    }
                }
            }
            for spec in &aggregates {
                if spec.func == AggFunc::Avg {
                    let attr = format!("{}__n", spec.label);
                    out_schema.push(Column {
                        display: attr.clone(),
                        relation: String::new(),
                        attr,
                        kind: ScalarKind::Integer,
                        kanon: false,
                        domain: None,
                        entity: false,
                        hidden: true,
                    });
                }
            }
            let entity_col = scopes[0]
                .columns
                .iter()
                .position(|c| c.entity)
                .expect("catalog validation guarantees an entity attribute");
            current = self.push(
                PlanNode::Aggregate { input: current, group_by, aggregates, entity_col },
                out_schema,
            );
        } else {
            for item in &stmt.items {
                match item {
                    SelectItem::AllColumns => {
                        for (si, scope) in scopes.iter().enumerate() {
                            for (ai, c) in scope.columns.iter().enumerate() {
                                project_cols.push(global(si, ai));
                                project_names.push(c.attr.clone());
                            }
                        }
                    }
                    SelectItem::Column { col, alias } => {
                        let (si, ai) = resolve(col)?;
                        project_cols.push(global(si, ai));
                        project_names.push(alias.clone().unwrap_or_else(|| col.name.clone()));
                    }
                    SelectItem::Aggregate { .. } => unreachable!("handled above"),
                }
            }
        }

        let project_schema: Vec<Column> = project_cols
            .iter()
            .zip(&project_names)
            .map(|(&c, name)| {
                let mut col = self.schemas[current][c].clone();
                col.display = name.clone();
                col
            })
            .collect();
        current = self.push(
            PlanNode::Project {
                input: current,
                columns: project_cols,
                names: project_names.clone(),
            },
            project_schema,
        );

        if !stmt.order_by.is_empty() {
            let mut keys = Vec::new();
            for (col, asc) in &stmt.order_by {
                if col.qualifier.is_some() {
                    return Err(Error::UnknownAttribute(format!(
                        "ORDER BY {col}: order keys name output columns"
                    )));
                }
                let hits: Vec<usize> = project_names
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| **n == col.name)
                    .map(|(i, _)| i)
                    .collect();
                match hits.len() {
                    0 => return Err(Error::UnknownAttribute(format!("ORDER BY {col}"))),
                    1 => keys.push((hits[0], *asc)),
                    _ => {
                        return Err(Error::Validation(format!("ambiguous ORDER BY {col}")));
                    }
                }
            }
            let schema = self.schemas[current].clone();
            current = self.push(PlanNode::Sort { input: current, keys }, schema);
        }

        if let Some(count) = stmt.limit {
            let schema = self.schemas[current].clone();
            current = self.push(PlanNode::Limit { input: current, count }, schema);
        }

        let client_side = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                matches!(n, PlanNode::Sort { .. } | PlanNode::Limit { .. })
                    || (matches!(n, PlanNode::Project { .. }) && {
                        let mut top = current;
                        let mut found = false;
                        loop {
                            if top == i {
                                found = true;
                                break;
                            }
                            match &self.nodes[top] {
                                PlanNode::Sort { input, .. } | PlanNode::Limit { input, .. } => {
                                    top = *input;
                                }
                                _ => break,
                            }
                        }
                        found
                    })
            })
            .collect();

        Ok(QueryPlan {
            nodes: self.nodes,
            schemas: self.schemas,
            root: current,
            client_side,
            tainted: Vec::new(),
            control_flow: ControlFlowSet::default(),
            output_names: project_names,
            sql: sql.to_string(),
        })
    }
}
