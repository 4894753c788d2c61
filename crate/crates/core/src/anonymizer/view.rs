use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::planner::ControlFlowSet;
use crate::schema::Catalog;
use crate::value::{render_vector, HostId, Scalar, ScalarKind};

use super::{AnonymizationMap, ClassId, DomainPartition, Histogram};

/// Builds an anonymized view over the given control-flow set from merged
/// per-relation histograms. Starts from singleton value groups in frequency
/// order and greedily merges adjacent groups until every class of every
/// relation satisfies both k-anonymity constraints.
///
/// Fails fast with `ViewInfeasible` when no grouping can succeed: a relation
/// whose total row count is positive but below k, or one where removing a
/// single host's rows would strand a remainder between zero and k.
pub fn generate_view(
    catalog: &Catalog,
    c: &ControlFlowSet,
    histograms: &BTreeMap<String, Histogram>,
    k: u64,
    hash_seed: u64,
) -> Result<AnonymizationMap> {
    let mut b = Builder::new(catalog, c, histograms, None)?;
    b.check_feasible(k)?;
    b.greedy(k)?;
    Ok(b.finish(k, c.clone(), hash_seed))
}

/// Coarsens an existing view to a larger k by resuming the greedy merge from
/// the view's current partitions. Value order is inherited from the view, so
/// every new group is a union of old groups.
pub fn merge_for_k(
    map: &AnonymizationMap,
    catalog: &Catalog,
    histograms: &BTreeMap<String, Histogram>,
    k_new: u64,
) -> Result<AnonymizationMap> {
    let mut b = Builder::new(catalog, &map.c, histograms, Some(&map.partitions))?;
    b.check_feasible(k_new)?;
    b.greedy(k_new)?;
    Ok(b.finish(k_new, map.c.clone(), map.hash_seed))
}

struct DomainState {
    domain: String,
    kind: ScalarKind,
    values: Vec<Scalar>,
    /// Start index of each group; always begins with 0, strictly increasing.
    boundaries: Vec<usize>,
}

impl DomainState {
    fn group_count(&self) -> usize {
        if self.values.is_empty() {
            0
        } else {
            self.boundaries.len()
        }
    }

    fn group_of_index(&self, i: usize) -> u32 {
        (self.boundaries.partition_point(|&b| b <= i) - 1) as u32
    }

    fn merged(&self, left_group: usize) -> DomainState {
        let mut next = DomainState {
            domain: self.domain.clone(),
            kind: self.kind,
            values: self.values.clone(),
            boundaries: self.boundaries.clone(),
        };
        next.boundaries.remove(left_group + 1);
        next
    }
}

struct RelationRows {
    relation: String,
    /// Per control attribute: domain name and the value's index in that
    /// domain's frozen value order, for every histogram row.
    domains: Vec<String>,
    rows: Vec<RowRef>,
}

struct RowRef {
    value_indices: Vec<usize>,
    values: Vec<Scalar>,
    counts: BTreeMap<HostId, u64>,
}

struct Builder {
    domains: BTreeMap<String, DomainState>,
    relations: Vec<RelationRows>,
}

impl Builder {
    fn new(
        catalog: &Catalog,
        c: &ControlFlowSet,
        histograms: &BTreeMap<String, Histogram>,
        frozen: Option<&BTreeMap<String, DomainPartition>>,
    ) -> Result<Builder> {
        let mut rel_names: Vec<String> = c.relations().into_iter().collect();
        rel_names.sort();

        let mut domain_kind: BTreeMap<String, ScalarKind> = BTreeMap::new();
        let mut rel_attrs: Vec<(String, Vec<String>, Vec<String>)> = Vec::new();
        for name in &rel_names {
            let rel = catalog.relation(name)?;
            let attrs = c.attrs_of(name);
            let mut doms = Vec::with_capacity(attrs.len());
            for a in &attrs {
                let attr = rel
                    .attribute(a)
                    .ok_or_else(|| Error::UnknownAttribute(format!("{name}.{a}")))?;
                let dom = catalog.domain_of(name, a)?;
                if let Some(k) = domain_kind.get(&dom) {
                    if !k.runtime_compatible(attr.kind) {
                        return Err(Error::DomainMismatch(format!(
                            "domain {dom} used at kinds {k} and {}",
                            attr.kind
                        )));
                    }
                } else {
                    domain_kind.insert(dom.clone(), attr.kind);
                }
                doms.push(dom);
            }
            rel_attrs.push((name.clone(), attrs, doms));
        }

        let mut domains: BTreeMap<String, DomainState> = BTreeMap::new();
        match frozen {
            Some(parts) => {
                for (dom, kind) in &domain_kind {
                    let p = parts.get(dom).ok_or_else(|| {
                        Error::MissingView(format!("domain {dom} absent from view"))
                    })?;
                    let mut boundaries = Vec::new();
                    for (i, &g) in p.group_of.iter().enumerate() {
                        if boundaries.len() == g as usize {
                            boundaries.push(i);
                        }
                    }
                    domains.insert(
                        dom.clone(),
                        DomainState {
                            domain: dom.clone(),
                            kind: *kind,
                            values: p.values.clone(),
                            boundaries,
                        },
                    );
                }
            }
            None => {
                let mut freq: BTreeMap<String, BTreeMap<Scalar, u64>> = BTreeMap::new();
                for (name, attrs, doms) in &rel_attrs {
                    let hist = expect_histogram(histograms, name, attrs)?;
                    for row in &hist.rows {
                        for (pos, dom) in doms.iter().enumerate() {
                            *freq
                                .entry(dom.clone())
                                .or_default()
                                .entry(row.values[pos].clone())
                                .or_insert(0) += row.total();
                        }
                    }
                }
                for (dom, kind) in &domain_kind {
                    let counts = freq.remove(dom).unwrap_or_default();
                    let mut order: Vec<(Scalar, u64)> = counts.into_iter().collect();
                    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                    let values: Vec<Scalar> = order.into_iter().map(|(v, _)| v).collect();
                    let boundaries = (0..values.len()).collect();
                    domains.insert(
                        dom.clone(),
                        DomainState { domain: dom.clone(), kind: *kind, values, boundaries },
                    );
                }
            }
        }

        let mut index: BTreeMap<&str, BTreeMap<&Scalar, usize>> = BTreeMap::new();
        for (dom, st) in &domains {
            index.insert(dom.as_str(), st.values.iter().enumerate().map(|(i, v)| (v, i)).collect());
        }

        let mut relations = Vec::new();
        for (name, attrs, doms) in &rel_attrs {
            let hist = expect_histogram(histograms, name, attrs)?;
            let mut rows = Vec::with_capacity(hist.rows.len());
            for row in &hist.rows {
                let mut value_indices = Vec::with_capacity(doms.len());
                for (pos, dom) in doms.iter().enumerate() {
                    let i = index[dom.as_str()].get(&row.values[pos]).ok_or_else(|| {
                        Error::UnmappedValue {
                            relation: name.clone(),
                            vector: render_vector(&row.values),
                        }
                    })?;
                    value_indices.push(*i);
                }
                rows.push(RowRef {
                    value_indices,
                    values: row.values.clone(),
                    counts: row.counts.clone(),
                });
            }
            relations.push(RelationRows { relation: name.clone(), domains: doms.clone(), rows });
        }

        Ok(Builder { domains, relations })
    }

    fn check_feasible(&self, k: u64) -> Result<()> {
        for rel in &self.relations {
            let mut total = 0u64;
            let mut per_host: BTreeMap<HostId, u64> = BTreeMap::new();
            for row in &rel.rows {
                for (&h, &n) in &row.counts {
                    total += n;
                    *per_host.entry(h).or_insert(0) += n;
                }
            }
            if total > 0 && total < k {
                return Err(Error::ViewInfeasible {
                    relation: rel.relation.clone(),
                    host: None,
                    detail: format!("{total} tuples in total, need {k}"),
                });
            }
            for (&h, &n) in &per_host {
                let rem = total - n;
                if rem > 0 && rem < k {
                    return Err(Error::ViewInfeasible {
                        relation: rel.relation.clone(),
                        host: Some(h),
                        detail: format!("{rem} tuples remain without host {h}, need {k} or none"),
                    });
                }
            }
        }
        Ok(())
    }

    fn classes_of(
        &self,
        rel: &RelationRows,
        dom_override: Option<&DomainState>,
    ) -> BTreeMap<Vec<u32>, (u64, BTreeMap<HostId, u64>)> {
        let mut out: BTreeMap<Vec<u32>, (u64, BTreeMap<HostId, u64>)> = BTreeMap::new();
        for row in &rel.rows {
            let mut vector = Vec::with_capacity(rel.domains.len());
            for (pos, dom) in rel.domains.iter().enumerate() {
                let st = match dom_override {
                    Some(o) if o.domain == *dom => o,
                    _ => &self.domains[dom],
                };
                vector.push(st.group_of_index(row.value_indices[pos]));
            }
            let entry = out.entry(vector).or_default();
            for (&h, &n) in &row.counts {
                entry.0 += n;
                *entry.1.entry(h).or_insert(0) += n;
            }
        }
        out
    }

    fn violations(&self, k: u64) -> Vec<(u64, String, Vec<u32>)> {
        let mut out = Vec::new();
        for rel in &self.relations {
            for (vector, (size, hosts)) in self.classes_of(rel, None) {
                let violating = size < k
                    || hosts.values().any(|&n| {
                        let rem = size - n;
                        rem > 0 && rem < k
                    });
                if violating {
                    out.push((size, rel.relation.clone(), vector));
                }
            }
        }
        out.sort();
        out
    }

    fn max_class_size(&self, dom_override: Option<&DomainState>) -> u64 {
        let mut max = 0;
        for rel in &self.relations {
            for (_, (size, _)) in self.classes_of(rel, dom_override) {
                max = max.max(size);
            }
        }
        max
    }

    fn greedy(&mut self, k: u64) -> Result<()> {
        loop {
            let viols = self.violations(k);
            let Some((_, rel_name, vector)) = viols.first() else {
                return Ok(());
            };
            let rel = self
                .relations
                .iter()
                .find(|r| r.relation == *rel_name)
                .expect("violation names a known relation");

            let mut candidates: BTreeSet<(String, usize)> = BTreeSet::new();
            for (pos, dom) in rel.domains.iter().enumerate() {
                let g = vector[pos] as usize;
                let groups = self.domains[dom].group_count();
                if g > 0 {
                    candidates.insert((dom.clone(), g - 1));
                }
                if g + 1 < groups {
                    candidates.insert((dom.clone(), g));
                }
            }
            let best = candidates
                .into_iter()
                .map(|(dom, left)| {
                    let merged = self.domains[&dom].merged(left);
                    (self.max_class_size(Some(&merged)), dom, left)
                })
                .min();
            let Some((_, dom, left)) = best else {
                return Err(Error::Validation(format!(
                    "class {} of {} cannot be repaired by merging",
                    ClassId::base(rel_name, vector),
                    rel_name
                )));
            };
            let merged = self.domains[&dom].merged(left);
            self.domains.insert(dom, merged);
        }
    }

    fn finish(self, k: u64, c: ControlFlowSet, hash_seed: u64) -> AnonymizationMap {
        let mut partitions = BTreeMap::new();
        for (name, st) in &self.domains {
            let group_of = (0..st.values.len()).map(|i| st.group_of_index(i)).collect();
            partitions.insert(
                name.clone(),
                DomainPartition {
                    domain: st.domain.clone(),
                    kind: st.kind,
                    values: st.values.clone(),
                    group_of,
                },
            );
        }
        let mut class_of = BTreeMap::new();
        for rel in &self.relations {
            let mut classes: BTreeMap<String, ClassId> = BTreeMap::new();
            for row in &rel.rows {
                let vector: Vec<u32> = rel
                    .domains
                    .iter()
                    .zip(&row.value_indices)
                    .map(|(dom, &i)| self.domains[dom].group_of_index(i))
                    .collect();
                classes.insert(render_vector(&row.values), ClassId::base(&rel.relation, &vector));
            }
            class_of.insert(rel.relation.clone(), classes);
        }
        AnonymizationMap { k, c, partitions, class_of, hash_seed }
    }
}

fn expect_histogram<'h>(
    histograms: &'h BTreeMap<String, Histogram>,
    relation: &str,
    attrs: &[String],
) -> Result<&'h Histogram> {
    let hist = histograms
        .get(relation)
        .ok_or_else(|| Error::MissingView(format!("no histogram for relation {relation}")))?;
    if hist.attrs != attrs {
        return Err(Error::SchemaMismatch(format!(
            "histogram for {relation} covers {:?}, expected {:?}",
            hist.attrs, attrs
        )));
    }
    Ok(hist)
}
