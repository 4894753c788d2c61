//! Catalogs, security policies and shard storage.
//!
//! A catalog declares the federated schema: relations with typed attributes,
//! a per-attribute security policy (`public` or `kanon`), an entity attribute
//! per relation (the column that names the individual a row is about), and
//! optional functional dependencies over the universal schema.
//!
//! Attributes that may be joined share a *domain*. An attribute's domain is
//! its declared `domain` name when present, otherwise its bare attribute
//! name; two attributes with the same domain identity are join-compatible and
//! are anonymized over a single shared partition of their value space.
//!
//! Data lives in headerless CSV files, one per `(relation, host)` pair.

mod decomposition;

pub use decomposition::{validate_decomposition, DecompositionReport, FdPreservation};

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{HostId, Scalar, ScalarKind, Tuple};

/// Per-attribute security policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Visible to every party; may flow in the clear.
    Public,
    /// Quasi-identifier: control flow over this attribute must be
    /// k-anonymous.
    KAnon,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub kind: ScalarKind,
    pub policy: Policy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationDef {
    pub name: String,
    pub attributes: Vec<AttributeDef>,
    /// Attribute naming the individual a row describes; aggregates count
    /// distinct entities against k.
    pub entity_attr: String,
}

impl RelationDef {
    pub fn attribute(&self, name: &str) -> Option<&AttributeDef> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }
}

/// Functional dependency over universal attribute identities.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalDependency {
    pub lhs: Vec<String>,
    pub rhs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub relations: Vec<RelationDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fds: Vec<FunctionalDependency>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    relations: Vec<RawRelation>,
    #[serde(default)]
    fds: Vec<FunctionalDependency>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRelation {
    name: String,
    attributes: Vec<RawAttribute>,
    entity_attr: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttribute {
    name: String,
    kind: String,
    policy: String,
    #[serde(default)]
    domain: Option<String>,
}

/// Parses and validates a catalog from its JSON form.
pub fn load_catalog(json: &str) -> Result<Catalog> {
    let raw: RawCatalog =
        serde_json::from_str(json).map_err(|e| Error::CatalogParse(e.to_string()))?;

    let mut relations = Vec::new();
    for rel in raw.relations {
        let mut attributes = Vec::new();
        for attr in rel.attributes {
            let kind = match attr.kind.as_str() {
                "integer" => ScalarKind::Integer,
                "text" => ScalarKind::Text,
                "date" => ScalarKind::Date,
                other => {
                    return Err(Error::CatalogParse(format!(
                        "relation {} attribute {}: unknown kind {:?}",
                        rel.name, attr.name, other
                    )))
                }
            };
            let policy = match attr.policy.as_str() {
                "public" => Policy::Public,
                "kanon" => Policy::KAnon,
                other => {
                    return Err(Error::CatalogParse(format!(
                        "relation {} attribute {}: unknown policy {:?}",
                        rel.name, attr.name, other
                    )))
                }
            };
            attributes.push(AttributeDef { name: attr.name, kind, policy, domain: attr.domain });
        }
        relations.push(RelationDef { name: rel.name, attributes, entity_attr: rel.entity_attr });
    }

    let catalog = Catalog { relations, fds: raw.fds };
    catalog.validate()?;
    Ok(catalog)
}

pub fn load_catalog_file(path: &Path) -> Result<Catalog> {
    load_catalog(&std::fs::read_to_string(path)?)
}

impl Catalog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalogs always serialize")
    }

    pub fn relation(&self, name: &str) -> Result<&RelationDef> {
        self.relations
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::UnknownAttribute(format!("relation {name}")))
    }

    /// Domain identity of an attribute: the declared domain name, or the
    /// attribute name itself. Attributes sharing this identity are
    /// join-compatible and share one value partition.
    pub fn domain_of(&self, relation: &str, attr: &str) -> Result<String> {
        let rel = self.relation(relation)?;
        let def = rel
            .attribute(attr)
            .ok_or_else(|| Error::UnknownAttribute(format!("{relation}.{attr}")))?;
        Ok(def.domain.clone().unwrap_or_else(|| def.name.clone()))
    }

    /// Universal attribute identities of a relation, used by the
    /// decomposition check (shared identities are shared columns of the
    /// universal relation).
    pub fn universal_attrs(&self, relation: &str) -> Result<BTreeSet<String>> {
        let rel = self.relation(relation)?;
        Ok(rel
            .attributes
            .iter()
            .map(|a| a.domain.clone().unwrap_or_else(|| a.name.clone()))
            .collect())
    }

    /// All `(relation, attr)` pairs grouped by domain identity.
    pub fn domains(&self) -> BTreeMap<String, Vec<(String, String)>> {
        let mut out: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        for rel in &self.relations {
            for attr in &rel.attributes {
                let dom = attr.domain.clone().unwrap_or_else(|| attr.name.clone());
                out.entry(dom).or_default().push((rel.name.clone(), attr.name.clone()));
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let mut rel_names = BTreeSet::new();
        let mut universe = BTreeSet::new();
        let mut domain_kinds: BTreeMap<String, (ScalarKind, String)> = BTreeMap::new();

        for rel in &self.relations {
            if !rel_names.insert(rel.name.clone()) {
                return Err(Error::Validation(format!("duplicate relation name {}", rel.name)));
            }
            let mut attr_names = BTreeSet::new();
            for attr in &rel.attributes {
                if !attr_names.insert(attr.name.clone()) {
                    return Err(Error::Validation(format!(
                        "relation {}: duplicate attribute name {}",
                        rel.name, attr.name
                    )));
                }
                let dom = attr.domain.clone().unwrap_or_else(|| attr.name.clone());
                universe.insert(dom.clone());
                match domain_kinds.get(&dom) {
                    None => {
                        domain_kinds
                            .insert(dom, (attr.kind, format!("{}.{}", rel.name, attr.name)));
                    }
                    Some((kind, first)) => {
                        if !kind.runtime_compatible(attr.kind) {
                            return Err(Error::Validation(format!(
                                "domain {}: kind {} of {}.{} conflicts with kind {} of {}",
                                dom, attr.kind, rel.name, attr.name, kind, first
                            )));
                        }
                    }
                }
            }
            if rel.attribute(&rel.entity_attr).is_none() {
                return Err(Error::Validation(format!(
                    "relation {}: entity_attr {} is not an attribute",
                    rel.name, rel.entity_attr
                )));
            }
        }

        for fd in &self.fds {
            if fd.lhs.is_empty() || fd.rhs.is_empty() {
                return Err(Error::Validation("functional dependency with empty side".into()));
            }
            for a in fd.lhs.iter().chain(fd.rhs.iter()) {
                if !universe.contains(a) {
                    return Err(Error::Validation(format!(
                        "functional dependency references unknown attribute {a}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The tuples one host stores for one relation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationShard {
    pub relation: String,
    pub host: HostId,
    pub tuples: Vec<Tuple>,
}

/// Reads a headerless CSV shard. Fields are parsed per the relation's
/// attribute kinds; arity or kind mismatches are rejected (there is no NULL).
pub fn load_shard_csv<R: Read>(rel: &RelationDef, host: HostId, reader: R) -> Result<RelationShard> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut tuples = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != rel.attributes.len() {
            return Err(Error::SchemaMismatch(format!(
                "relation {} row {}: expected {} fields, found {}",
                rel.name,
                idx + 1,
                rel.attributes.len(),
                record.len()
            )));
        }
        let mut values = Vec::with_capacity(rel.attributes.len());
        for (attr, field) in rel.attributes.iter().zip(record.iter()) {
            let value = match attr.kind {
                ScalarKind::Integer | ScalarKind::Date => {
                    Scalar::Int(field.trim().parse::<i64>().map_err(|_| {
                        Error::SchemaMismatch(format!(
                            "relation {} row {} attribute {}: {:?} is not an integer",
                            rel.name,
                            idx + 1,
                            attr.name,
                            field
                        ))
                    })?)
                }
                ScalarKind::Text => Scalar::text(field),
            };
            values.push(value);
        }
        tuples.push(Tuple::real(values, host));
    }
    Ok(RelationShard { relation: rel.name.clone(), host, tuples })
}

pub fn load_shard_csv_file(rel: &RelationDef, host: HostId, path: &Path) -> Result<RelationShard> {
    load_shard_csv(rel, host, std::fs::File::open(path)?)
}

/// Writes a shard back to headerless CSV. Text is quoted only when it
/// contains separators; rows end in `\n`.
pub fn write_shard_csv<W: Write>(shard: &RelationShard, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for tuple in &shard.tuples {
        let fields: Vec<String> = tuple.values.iter().map(|v| v.render()).collect();
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}

/// All shards of a federation keyed by relation, each list sorted by host.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub hosts: u32,
    pub relations: BTreeMap<String, Vec<RelationShard>>,
}

impl Dataset {
    pub fn new(hosts: u32) -> Dataset {
        Dataset { hosts, relations: BTreeMap::new() }
    }

    pub fn add_shard(&mut self, shard: RelationShard) {
        let list = self.relations.entry(shard.relation.clone()).or_default();
        list.push(shard);
        list.sort_by_key(|s| s.host);
    }

    /// Rows of one relation merged in host order (stable within a shard).
    pub fn merged_rows(&self, relation: &str) -> Vec<Tuple> {
        self.relations
            .get(relation)
            .map(|shards| shards.iter().flat_map(|s| s.tuples.iter().cloned()).collect())
            .unwrap_or_default()
    }

    pub fn shard_of(&self, relation: &str, host: HostId) -> Option<&RelationShard> {
        self.relations.get(relation).and_then(|v| v.iter().find(|s| s.host == host))
    }
}
