//! Anonymized view machinery.
//!
//! A view partitions each domain's value space into groups; the equivalence
//! classes of a relation are the distinct group-id vectors over that
//! relation's control-flow attributes. A valid view guarantees, per relation:
//!
//! * every class holds at least k tuples (duplicates count);
//! * removing any single host's contribution from a class leaves at least k
//!   tuples or none (the federated constraint);
//! * every projection of the class-id-rewritten relation still groups at
//!   least k tuples per distinct value (checked exhaustively for small
//!   control sets; it follows structurally from the first rule since classes
//!   project onto unions of classes).
//!
//! Views are generated greedily from value-frequency histograms, validated
//! independently by [`check_view`], strengthened by [`merge_for_k`], and
//! applied to shards with [`apply_view`].

mod check;
mod view;

pub use check::{check_view, violations_to_json_lines, Violation, ViolationKind};
pub use view::{generate_view, merge_for_k};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::ControlFlowSet;
use crate::schema::{Catalog, RelationDef};
use crate::value::{render_vector, HostId, Scalar, ScalarKind, Tuple};

/// Identifier of an equivalence class. Base-relation classes render as
/// `relation/g0.g1` over the relation's sorted control attributes; classes
/// created by secure joins concatenate their parents as `(left)x(right)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassId(pub String);

impl ClassId {
    pub fn base(relation: &str, groups: &[u32]) -> ClassId {
        let parts: Vec<String> = groups.iter().map(|g| g.to_string()).collect();
        ClassId(format!("{}/{}", relation, parts.join(".")))
    }

    pub fn pair(left: &ClassId, right: &ClassId) -> ClassId {
        ClassId(format!("({})x({})", left.0, right.0))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ClassId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Value-frequency histogram of one relation over its control attributes,
/// with per-host counts. Rows are stored sorted by value vector; greedy view
/// generation iterates them by descending total count (ties by value order).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub relation: String,
    /// Control attributes, sorted by name; row value vectors follow this order.
    pub attrs: Vec<String>,
    pub rows: Vec<HistogramRow>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub values: Vec<Scalar>,
    pub counts: BTreeMap<HostId, u64>,
}

impl HistogramRow {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

impl Histogram {
    /// Counts one host's tuples. `attrs` must be the relation's control
    /// attributes, sorted.
    pub fn build(rel: &RelationDef, attrs: &[String], tuples: &[Tuple], host: HostId) -> Result<Histogram> {
        let mut idx = Vec::with_capacity(attrs.len());
        for a in attrs {
            idx.push(rel.attr_index(a).ok_or_else(|| {
                Error::UnknownAttribute(format!("{}.{}", rel.name, a))
            })?);
        }
        let mut map: BTreeMap<Vec<Scalar>, u64> = BTreeMap::new();
        for t in tuples {
            let key: Vec<Scalar> = idx.iter().map(|&i| t.values[i].clone()).collect();
            *map.entry(key).or_insert(0) += 1;
        }
        let rows = map
            .into_iter()
            .map(|(values, n)| HistogramRow { values, counts: BTreeMap::from([(host, n)]) })
            .collect();
        Ok(Histogram { relation: rel.name.clone(), attrs: attrs.to_vec(), rows })
    }

    /// Sums another shard's histogram into this one.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if other.relation != self.relation || other.attrs != self.attrs {
            return Err(Error::SchemaMismatch(format!(
                "histogram merge: {} over {:?} vs {} over {:?}",
                self.relation, self.attrs, other.relation, other.attrs
            )));
        }
        let mut map: BTreeMap<Vec<Scalar>, BTreeMap<HostId, u64>> = self
            .rows
            .drain(..)
            .map(|r| (r.values, r.counts))
            .collect();
        for row in &other.rows {
            let counts = map.entry(row.values.clone()).or_default();
            for (&h, &n) in &row.counts {
                *counts.entry(h).or_insert(0) += n;
            }
        }
        self.rows = map
            .into_iter()
            .map(|(values, counts)| HistogramRow { values, counts })
            .collect();
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.total()).sum()
    }

    pub fn host_total(&self, host: HostId) -> u64 {
        self.rows.iter().map(|r| r.counts.get(&host).copied().unwrap_or(0)).sum()
    }

    /// Rows by descending total count, then ascending value vector.
    pub fn frequency_order(&self) -> Vec<&HistogramRow> {
        let mut rows: Vec<&HistogramRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| b.total().cmp(&a.total()).then_with(|| a.values.cmp(&b.values)));
        rows
    }
}

/// Partition of one domain's observed values into groups. Values are kept in
/// the frequency order fixed at generation time; groups are contiguous runs
/// in that order, numbered left to right.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainPartition {
    pub domain: String,
    pub kind: ScalarKind,
    pub values: Vec<Scalar>,
    pub group_of: Vec<u32>,
}

impl DomainPartition {
    pub fn group_count(&self) -> u32 {
        self.group_of.last().map(|g| g + 1).unwrap_or(0)
    }

    pub fn lookup(&self) -> BTreeMap<&Scalar, u32> {
        self.values.iter().zip(self.group_of.iter().copied()).collect()
    }

    /// Values belonging to one group, in frequency order.
    pub fn group_values(&self, group: u32) -> Vec<&Scalar> {
        self.values
            .iter()
            .zip(self.group_of.iter())
            .filter(|(_, &g)| g == group)
            .map(|(v, _)| v)
            .collect()
    }
}

/// The anonymized view: k, the control-flow set it protects, per-domain
/// partitions, and the explicit value-vector-to-class mapping per relation.
/// Serialization is canonical (sorted keys, fixed field order), so equal
/// views are byte-identical.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonymizationMap {
    pub k: u64,
    pub c: ControlFlowSet,
    pub partitions: BTreeMap<String, DomainPartition>,
    /// relation -> rendered value vector (JSON array over sorted control
    /// attributes) -> class id.
    pub class_of: BTreeMap<String, BTreeMap<String, ClassId>>,
    pub hash_seed: u64,
}

impl AnonymizationMap {
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("maps always serialize")
    }

    pub fn from_json(json: &str) -> Result<AnonymizationMap> {
        Ok(serde_json::from_str(json)?)
    }

    /// Sorted control attributes of one relation under this view.
    pub fn control_attrs(&self, relation: &str) -> Vec<String> {
        self.c.attrs_of(relation)
    }

    pub fn covers(&self, relation: &str) -> bool {
        self.class_of.contains_key(relation)
    }

    /// Class ids of one relation in ascending order.
    pub fn class_ids(&self, relation: &str) -> Vec<ClassId> {
        let mut ids: Vec<ClassId> = self
            .class_of
            .get(relation)
            .map(|m| m.values().cloned().collect())
            .unwrap_or_default();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Group id per control attribute for one class of a relation.
    pub fn class_groups(&self, relation: &str, id: &ClassId) -> Result<BTreeMap<String, u32>> {
        let attrs = self.control_attrs(relation);
        let tail = id
            .0
            .strip_prefix(&format!("{relation}/"))
            .ok_or_else(|| Error::DomainMismatch(format!("class {id} does not belong to {relation}")))?;
        let groups: Vec<u32> = tail
            .split('.')
            .map(|p| p.parse::<u32>().map_err(|_| Error::DomainMismatch(format!("bad class id {id}"))))
            .collect::<Result<_>>()?;
        Ok(attrs.into_iter().zip(groups).collect())
    }
}

/// One materialized equivalence class: its id, its group id per control
/// attribute, and its tuples (stable input order).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceClass {
    pub id: ClassId,
    pub group_ids: BTreeMap<String, u32>,
    pub tuples: Vec<Tuple>,
}

/// Deterministic class-to-owner assignment derived from the map's hash seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionAssignment {
    pub hosts: u32,
    pub seed: u64,
    pub owner_of: BTreeMap<ClassId, HostId>,
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded 64-bit mixing hash of the class id bytes, reduced mod host count.
pub fn class_owner(seed: u64, class_id: &ClassId, hosts: u32) -> HostId {
    let mut h = splitmix64(seed);
    for &b in class_id.0.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    (h % u64::from(hosts.max(1))) as HostId
}

/// Assigns every class of every relation in the map to a partition owner.
pub fn assign_partitions(map: &AnonymizationMap, hosts: u32) -> PartitionAssignment {
    let mut owner_of = BTreeMap::new();
    for relation in map.class_of.keys() {
        for id in map.class_ids(relation) {
            let owner = class_owner(map.hash_seed, &id, hosts);
            owner_of.insert(id, owner);
        }
    }
    PartitionAssignment { hosts, seed: map.hash_seed, owner_of }
}

/// Routes rows of one relation into their equivalence classes. Class order is
/// ascending by id; tuple order within a class follows input order. A value
/// vector absent from the map means the view is stale and must be augmented.
pub fn apply_view(
    map: &AnonymizationMap,
    catalog: &Catalog,
    relation: &str,
    rows: &[Tuple],
) -> Result<Vec<EquivalenceClass>> {
    let rel = catalog.relation(relation)?;
    let classes_of = map
        .class_of
        .get(relation)
        .ok_or_else(|| Error::MissingView(format!("relation {relation} is not covered")))?;
    let attrs = map.control_attrs(relation);
    let mut idx = Vec::with_capacity(attrs.len());
    for a in &attrs {
        idx.push(rel.attr_index(a).ok_or_else(|| {
            Error::UnknownAttribute(format!("{relation}.{a}"))
        })?);
    }

    let mut out: BTreeMap<ClassId, EquivalenceClass> = BTreeMap::new();
    for tuple in rows {
        let vector: Vec<Scalar> = idx.iter().map(|&i| tuple.values[i].clone()).collect();
        let key = render_vector(&vector);
        let id = classes_of.get(&key).ok_or_else(|| Error::UnmappedValue {
            relation: relation.to_string(),
            vector: key.clone(),
        })?;
        let class = out.entry(id.clone()).or_insert_with(|| EquivalenceClass {
            id: id.clone(),
            group_ids: map.class_groups(relation, id).unwrap_or_default(),
            tuples: Vec::new(),
        });
        class.tuples.push(tuple.clone());
    }
    Ok(out.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_merge_sums_counts_per_host() {
        let rel = RelationDef {
            name: "r".into(),
            attributes: vec![crate::schema::AttributeDef {
                name: "x".into(),
                kind: ScalarKind::Integer,
                policy: crate::schema::Policy::Public,
                domain: None,
            }],
            entity_attr: "x".into(),
        };
        let attrs = vec!["x".to_string()];
        let t = |v: i64, host| Tuple::real(vec![Scalar::Int(v)], host);
        let mut h0 = Histogram::build(&rel, &attrs, &[t(1, 0), t(1, 0), t(2, 0)], 0).unwrap();
        let h1 = Histogram::build(&rel, &attrs, &[t(1, 1)], 1).unwrap();
        let h2 = Histogram::build(&rel, &attrs, &[t(3, 2), t(1, 2)], 2).unwrap();
        h0.merge(&h1).unwrap();
        h0.merge(&h2).unwrap();
        assert_eq!(h0.total(), 6);
        let one = h0.rows.iter().find(|r| r.values == vec![Scalar::Int(1)]).unwrap();
        assert_eq!(one.total(), 4);
        assert_eq!(one.counts, BTreeMap::from([(0, 2), (1, 1), (2, 1)]));
    }

    #[test]
    fn frequency_order_is_count_desc_then_value_asc() {
        let rel = RelationDef {
            name: "r".into(),
            attributes: vec![crate::schema::AttributeDef {
                name: "x".into(),
                kind: ScalarKind::Integer,
                policy: crate::schema::Policy::Public,
                domain: None,
            }],
            entity_attr: "x".into(),
        };
        let attrs = vec!["x".to_string()];
        let tuples: Vec<Tuple> = [5, 5, 9, 9, 1, 7]
            .iter()
            .map(|&v| Tuple::real(vec![Scalar::Int(v)], 0))
            .collect();
        let h = Histogram::build(&rel, &attrs, &tuples, 0).unwrap();
        let order: Vec<i64> = h
            .frequency_order()
            .iter()
            .map(|r| r.values[0].as_int().unwrap())
            .collect();
        assert_eq!(order, vec![5, 9, 1, 7]);
    }

    #[test]
    fn class_owner_is_stable_and_in_range() {
        let id = ClassId::base("demographics", &[0, 1]);
        let a = class_owner(7, &id, 4);
        let b = class_owner(7, &id, 4);
        assert_eq!(a, b);
        assert!(a < 4);
        // Different seeds shuffle assignments.
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..64 {
            seen.insert(class_owner(seed, &id, 4));
        }
        assert!(seen.len() > 1);
    }
}
