use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::schema::{Catalog, Dataset};
use crate::value::HostId;

use super::{apply_view, AnonymizationMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationKind {
    /// Class holds fewer than k tuples.
    Size,
    /// Removing one host's tuples leaves between one and k-1 tuples.
    Federated,
    /// A projection of the class-id-rewritten relation groups fewer than k
    /// tuples under some value.
    Projection,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub relation: String,
    pub class_id: String,
    pub kind: ViolationKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub host: Option<HostId>,
}

pub fn violations_to_json_lines(violations: &[Violation]) -> String {
    let mut out = String::new();
    for v in violations {
        out.push_str(&serde_json::to_string(v).expect("violations always serialize"));
        out.push('\n');
    }
    out
}

/// Revalidates a view against the actual shards: every class is recomputed
/// from the data, checked for minimum size and for the federated
/// all-or-nothing property, and, for relations with at most three control
/// attributes, every proper projection of the group-id rewriting is checked
/// to still aggregate at least k tuples per distinct value.
///
/// Returns the sorted list of violations; a valid view yields an empty list.
/// Data containing value vectors absent from the map is an error, not a
/// violation: the view is stale rather than unsafe.
pub fn check_view(
    map: &AnonymizationMap,
    catalog: &Catalog,
    dataset: &Dataset,
) -> Result<Vec<Violation>> {
    let k = map.k as usize;
    let mut out = Vec::new();
    for relation in map.class_of.keys() {
        if !dataset.relations.contains_key(relation) {
            continue;
        }
        let rows = dataset.merged_rows(relation);
        let classes = apply_view(map, catalog, relation, &rows)?;
        let attrs = map.control_attrs(relation);

        for class in &classes {
            let size = class.tuples.len();
            if size < k {
                out.push(Violation {
                    relation: relation.clone(),
                    class_id: class.id.0.clone(),
                    kind: ViolationKind::Size,
                    host: None,
                });
            }
            let mut per_host: BTreeMap<HostId, usize> = BTreeMap::new();
            for t in &class.tuples {
                *per_host.entry(t.owner).or_insert(0) += 1;
            }
            for (&h, &n) in &per_host {
                let rem = size - n;
                if rem > 0 && rem < k {
                    out.push(Violation {
                        relation: relation.clone(),
                        class_id: class.id.0.clone(),
                        kind: ViolationKind::Federated,
                        host: Some(h),
                    });
                }
            }
        }

        if attrs.len() >= 2 && attrs.len() <= 3 {
            for mask in 1..(1u32 << attrs.len()) - 1 {
                let subset: Vec<usize> =
                    (0..attrs.len()).filter(|i| mask & (1 << i) != 0).collect();
                let mut buckets: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
                let mut labels: BTreeMap<Vec<u32>, String> = BTreeMap::new();
                for class in &classes {
                    let full: Vec<u32> = attrs.iter().map(|a| class.group_ids[a]).collect();
                    let projected: Vec<u32> = subset.iter().map(|&i| full[i]).collect();
                    *buckets.entry(projected.clone()).or_insert(0) += class.tuples.len();
                    labels.entry(projected.clone()).or_insert_with(|| {
                        let parts: Vec<String> = subset
                            .iter()
                            .zip(&projected)
                            .map(|(&i, g)| format!("{}={g}", attrs[i]))
                            .collect();
                        format!("{relation}[{}]", parts.join(","))
                    });
                }
                for (projected, n) in &buckets {
                    if *n > 0 && *n < k {
                        out.push(Violation {
                            relation: relation.clone(),
                            class_id: labels[projected].clone(),
                            kind: ViolationKind::Projection,
                            host: None,
                        });
                    }
                }
            }
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}
