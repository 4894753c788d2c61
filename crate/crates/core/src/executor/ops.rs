//! Operator kernels. Row-level helpers are pure; the padded kernels own the
//! all-or-nothing semantics and record their trace events at the call site
//! that knows the node id.
//!
//! Padding discipline: a dummy tuple stays a dummy through every operator,
//! carries plausible values so that downstream grouping still sees it, and is
//! stripped only at the client.

use std::collections::{BTreeMap, BTreeSet};

use crate::anonymizer::ClassId;
use crate::error::{Error, Result};
use crate::planner::{AggFunc, AggSpec, CmpOp, Column, PredTerm, Predicate};
use crate::trace::Trace;
use crate::value::{Scalar, ScalarKind, Tuple};

use super::ClassedRows;

pub(crate) fn kind_default(kind: ScalarKind) -> Scalar {
    match kind {
        ScalarKind::Integer | ScalarKind::Date => Scalar::Int(0),
        ScalarKind::Text => Scalar::from(""),
    }
}

fn compare(op: CmpOp, left: &Scalar, right: &Scalar) -> bool {
    let ord = left.cmp(right);
    match op {
        CmpOp::Eq => ord.is_eq(),
        CmpOp::Ne => ord.is_ne(),
        CmpOp::Lt => ord.is_lt(),
        CmpOp::Le => ord.is_le(),
        CmpOp::Gt => ord.is_gt(),
        CmpOp::Ge => ord.is_ge(),
    }
}

fn value_passes(term: &PredTerm, candidate: &Scalar) -> bool {
    match term {
        PredTerm::Compare { op, value, .. } => compare(*op, candidate, value),
        PredTerm::InList { values, .. } => values.contains(candidate),
    }
}

fn term_passes(term: &PredTerm, tuple: &Tuple) -> bool {
    let col = match term {
        PredTerm::Compare { col, .. } | PredTerm::InList { col, .. } => *col,
    };
    value_passes(term, &tuple.values[col])
}

pub(crate) fn tuple_passes(pred: &Predicate, tuple: &Tuple) -> bool {
    pred.terms.iter().all(|t| term_passes(t, tuple))
}

pub(crate) fn rows_filter(rows: &[Tuple], pred: &Predicate) -> Vec<Tuple> {
    rows.iter()
        .filter(|t| !t.dummy && tuple_passes(pred, t))
        .cloned()
        .collect()
}

/// Oblivious filter: cardinality-preserving, failing tuples become dummies.
pub(crate) fn filter_padded(rows: &[Tuple], pred: &Predicate) -> Vec<Tuple> {
    rows.iter()
        .map(|t| {
            let mut out = t.clone();
            out.dummy = t.dummy || !tuple_passes(pred, t);
            out
        })
        .collect()
}

/// Protected filter over one class. A class holding at least one live match
/// flows on in its entirety with non-matching tuples dummied; a class with no
/// live match drops whole. Returns `None` for a drop; the caller records the
/// event. Predicate columns must be classed.
pub(crate) fn filter_kanon(
    pred: &Predicate,
    class: &ClassedRows,
    schema: &[Column],
) -> Result<Option<ClassedRows>> {
    for term in &pred.terms {
        let col = match term {
            PredTerm::Compare { col, .. } | PredTerm::InList { col, .. } => *col,
        };
        if !class.groups.contains_key(&col) {
            return Err(Error::Validation(format!(
                "protected filter over unclassed column {}",
                schema[col].display
            )));
        }
    }
    if !class.tuples.iter().any(|t| !t.dummy && tuple_passes(pred, t)) {
        return Ok(None);
    }
    Ok(Some(ClassedRows {
        id: class.id.clone(),
        groups: class.groups.clone(),
        tuples: filter_padded(&class.tuples, pred),
    }))
}

fn keys_match(left: &Tuple, right: &Tuple, pairs: &[(usize, usize)]) -> bool {
    pairs.iter().all(|&(l, r)| left.values[l] == right.values[r])
}

fn concat(left: &Tuple, right: &Tuple, dummy: bool) -> Tuple {
    let mut values = left.values.clone();
    values.extend(right.values.iter().cloned());
    Tuple { values, dummy, owner: left.owner }
}

/// Plain equi-join, left-major output order.
pub(crate) fn rows_join(
    left: &[Tuple],
    right: &[Tuple],
    pairs: &[(usize, usize)],
) -> Vec<Tuple> {
    let mut out = Vec::new();
    for l in left.iter().filter(|t| !t.dummy) {
        for r in right.iter().filter(|t| !t.dummy) {
            if keys_match(l, r, pairs) {
                out.push(concat(l, r, false));
            }
        }
    }
    out
}

/// Padded join: the full cross product, real exactly where both inputs are
/// real and the keys agree.
pub(crate) fn join_padded(
    left: &[Tuple],
    right: &[Tuple],
    pairs: &[(usize, usize)],
) -> Vec<Tuple> {
    let mut out = Vec::with_capacity(left.len() * right.len());
    for l in left {
        for r in right {
            let real = !l.dummy && !r.dummy && keys_match(l, r, pairs);
            out.push(concat(l, r, !real));
        }
    }
    out
}

/// Whether two classes can hold matching keys: equal group ids on every join
/// column's shared domain. Public, since it reads only the view structure.
pub(crate) fn classes_compatible(
    left: &ClassedRows,
    right: &ClassedRows,
    pairs: &[(usize, usize)],
    left_schema: &[Column],
    right_schema: &[Column],
) -> Result<bool> {
    for &(lc, rc) in pairs {
        let (ld, rd) = (&left_schema[lc].domain, &right_schema[rc].domain);
        if ld != rd {
            return Err(Error::DomainMismatch(format!(
                "join equates {} and {} from different domains",
                left_schema[lc].display, right_schema[rc].display
            )));
        }
        let lg = left.groups.get(&lc).copied().ok_or_else(|| {
            Error::Validation(format!("unclassed join column {}", left_schema[lc].display))
        })?;
        let rg = right.groups.get(&rc).copied().ok_or_else(|| {
            Error::Validation(format!("unclassed join column {}", right_schema[rc].display))
        })?;
        if lg != rg {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Joins one compatible class pair: padded cross product under a composite
/// class id, with the right side's group columns re-based past the left
/// schema.
pub(crate) fn join_kanon(
    left: &ClassedRows,
    right: &ClassedRows,
    pairs: &[(usize, usize)],
    left_width: usize,
) -> ClassedRows {
    let mut groups = left.groups.clone();
    for (&col, &g) in &right.groups {
        groups.insert(left_width + col, g);
    }
    ClassedRows {
        id: ClassId::pair(&left.id, &right.id),
        groups,
        tuples: join_padded(&left.tuples, &right.tuples, pairs),
    }
}

/// Groups rows (dummies included) by their grouping-column values, sorted by
/// value vector; the index of a bin in this order is its trace sequence.
pub(crate) fn group_bins<'a>(
    rows: &'a [Tuple],
    group_by: &[usize],
) -> Vec<(Vec<Scalar>, Vec<&'a Tuple>)> {
    let mut bins: BTreeMap<Vec<Scalar>, Vec<&Tuple>> = BTreeMap::new();
    for t in rows {
        let key: Vec<Scalar> = group_by.iter().map(|&c| t.values[c].clone()).collect();
        bins.entry(key).or_default().push(t);
    }
    bins.into_iter().collect()
}

/// Aggregate values over the real rows of one bin: the visible aggregate
/// columns followed by one hidden running count per AVG.
pub(crate) fn fold_aggs(specs: &[AggSpec], rows: &[&Tuple]) -> Vec<Scalar> {
    let real: Vec<&&Tuple> = rows.iter().filter(|t| !t.dummy).collect();
    let mut visible = Vec::with_capacity(specs.len());
    let mut hidden = Vec::new();
    for spec in specs {
        let ints = |col: usize| real.iter().map(move |t| t.values[col].as_int().unwrap_or(0));
        let value = match (spec.func, spec.col) {
            (AggFunc::Count, _) => Scalar::Int(real.len() as i64),
            (AggFunc::Sum, Some(col)) => Scalar::Int(ints(col).sum()),
            (AggFunc::Avg, Some(col)) => {
                hidden.push(Scalar::Int(real.len() as i64));
                Scalar::Int(ints(col).sum())
            }
            (AggFunc::Min, Some(col)) => real
                .iter()
                .map(|t| t.values[col].clone())
                .min()
                .expect("bins with a real row are non-empty"),
            (AggFunc::Max, Some(col)) => real
                .iter()
                .map(|t| t.values[col].clone())
                .max()
                .expect("bins with a real row are non-empty"),
            (AggFunc::Sum | AggFunc::Avg | AggFunc::Min | AggFunc::Max, None) => {
                unreachable!("binder always attaches a column")
            }
        };
        visible.push(value);
    }
    visible.extend(hidden);
    visible
}

fn padding_row(
    key: &[Scalar],
    specs: &[AggSpec],
    out_schema: &[Column],
    owner: u32,
) -> Tuple {
    let mut values = key.to_vec();
    for col in &out_schema[key.len()..key.len() + specs.len()] {
        values.push(kind_default(col.kind));
    }
    for _ in out_schema.iter().filter(|c| c.hidden) {
        values.push(Scalar::Int(0));
    }
    Tuple { values, dummy: true, owner }
}

/// Protected aggregation over one class. Bins are the distinct grouping
/// vectors across all class tuples, dummies included. A bin whose real rows
/// span at least `k` distinct entities releases a single aggregate tuple;
/// any other bin hides its (at most one) aggregate tuple inside a padding of
/// exactly the class size. Events charge one full class scan per bin.
pub(crate) fn aggregate_kanon(
    node: u32,
    class: &ClassedRows,
    group_by: &[usize],
    specs: &[AggSpec],
    entity_col: usize,
    k: u64,
    out_schema: &[Column],
    trace: &mut Trace,
) -> ClassedRows {
    let size = class.tuples.len() as u64;
    let mut out = Vec::new();
    for (bin, (key, rows)) in group_bins(&class.tuples, group_by).into_iter().enumerate() {
        let contributors: BTreeSet<&Scalar> = rows
            .iter()
            .filter(|t| !t.dummy)
            .map(|t| &t.values[entity_col])
            .collect();
        let has_real = !contributors.is_empty();
        let owner = class.tuples[0].owner;
        let true_row = has_real.then(|| {
            let mut values = key.clone();
            values.extend(fold_aggs(specs, &rows));
            Tuple { values, dummy: false, owner }
        });
        if contributors.len() as u64 >= k {
            let row = true_row.expect("threshold met implies real rows");
            trace.bin_emit(node, class.id.as_str(), bin as u64, 1, size);
            out.push(row);
        } else {
            let mut emitted = 0;
            if let Some(row) = true_row {
                out.push(row);
                emitted = 1;
            }
            for _ in emitted..class.tuples.len() {
                out.push(padding_row(&key, specs, out_schema, owner));
            }
            trace.bin_emit(node, class.id.as_str(), bin as u64, size, size);
        }
    }
    let groups = group_by
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| class.groups.get(&c).map(|&g| (i, g)))
        .collect();
    ClassedRows { id: class.id.clone(), groups, tuples: out }
}

/// Oblivious aggregation: one unconditional tuple per distinct grouping
/// vector, dummy when no real row backs it.
pub(crate) fn aggregate_oblivious(
    node: u32,
    class_id: &str,
    rows: &[Tuple],
    group_by: &[usize],
    specs: &[AggSpec],
    out_schema: &[Column],
    trace: &mut Trace,
) -> Vec<Tuple> {
    let total = rows.len() as u64;
    let mut out = Vec::new();
    for (bin, (key, bin_rows)) in group_bins(rows, group_by).into_iter().enumerate() {
        let has_real = bin_rows.iter().any(|t| !t.dummy);
        let owner = bin_rows[0].owner;
        if has_real {
            let mut values = key.clone();
            values.extend(fold_aggs(specs, &bin_rows));
            out.push(Tuple { values, dummy: false, owner });
        } else {
            out.push(padding_row(&key, specs, out_schema, owner));
        }
        trace.bin_emit(node, class_id, bin as u64, 1, total);
    }
    out
}
