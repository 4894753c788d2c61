//! Fixtures shared by the criterion benches: synthetic datasets with their
//! plans, merged rows, histograms and a generated view, built once outside
//! the measured loops.

use std::collections::BTreeMap;

use kloak_core::anonymizer::{generate_view, AnonymizationMap, Histogram};
use kloak_core::bench::{gen_health, gen_uniform_join, BuiltDataset};
use kloak_core::planner::{plan_query, ControlFlowSet, QueryPlan};
use kloak_core::schema::{Catalog, Dataset};
use kloak_core::value::Tuple;

pub const JOIN_SQL: &str = "SELECT ljoin.lkey FROM ljoin, rjoin WHERE ljoin.lkey = rjoin.rkey";
pub const HEALTH_SQL: &str = "SELECT med, COUNT(*) AS uses FROM demographics, medications \
     WHERE demographics.pid = medications.pid AND gender = 'F' GROUP BY med";

pub struct Fixture {
    pub catalog: Catalog,
    pub dataset: Dataset,
    pub plan: QueryPlan,
    pub rows: BTreeMap<String, Vec<Tuple>>,
    pub histograms: BTreeMap<String, Histogram>,
    pub map: AnonymizationMap,
    pub k: u64,
    pub sql: String,
}

pub fn histograms_for(
    catalog: &Catalog,
    dataset: &Dataset,
    c: &ControlFlowSet,
) -> BTreeMap<String, Histogram> {
    let mut out = BTreeMap::new();
    for relation in c.relations() {
        let rel = catalog.relation(&relation).expect("control flow names catalog relations");
        let attrs = c.attrs_of(&relation);
        let mut merged: Option<Histogram> = None;
        for host in 0..dataset.hosts {
            let empty = Vec::new();
            let tuples = dataset.shard_of(&relation, host).map_or(&empty, |s| &s.tuples);
            let hist = Histogram::build(rel, &attrs, tuples, host).expect("shards fit the catalog");
            match merged.as_mut() {
                None => merged = Some(hist),
                Some(m) => m.merge(&hist).expect("same relation"),
            }
        }
        out.insert(relation, merged.expect("at least one host"));
    }
    out
}

fn build(built: BuiltDataset, sql: &str, k: u64, seed: u64) -> Fixture {
    let plan = plan_query(&built.catalog, sql).expect("fixture query plans");
    let mut rows = BTreeMap::new();
    for rel in &built.catalog.relations {
        rows.insert(rel.name.clone(), built.dataset.merged_rows(&rel.name));
    }
    let histograms = histograms_for(&built.catalog, &built.dataset, &plan.control_flow);
    let map = generate_view(&built.catalog, &plan.control_flow, &histograms, k, seed)
        .expect("fixture view generates");
    Fixture {
        catalog: built.catalog,
        dataset: built.dataset,
        plan,
        rows,
        histograms,
        map,
        k,
        sql: sql.to_string(),
    }
}

pub fn join_fixture(n: u64, k: u64) -> Fixture {
    build(gen_uniform_join(n, k, 2, 11), JOIN_SQL, k, 11)
}

pub fn health_fixture(patients: u64, k: u64) -> Fixture {
    build(gen_health(patients, 2, 11, 1.1), HEALTH_SQL, k, 11)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kloak_core::executor::{eval_central, Mode};
    use kloak_core::federation::reference_run;
    use kloak_core::trace::Trace;

    #[test]
    fn join_fixture_is_usable_in_every_lane() {
        let fx = join_fixture(60, 3);
        assert_eq!(fx.map.k, 3);
        let mut trace = Trace::default();
        let plain = eval_central(&fx.plan, Mode::Plain, &fx.rows, &mut trace).unwrap();
        assert_eq!(plain.len(), 180);
        let (rows, trace) =
            reference_run(&fx.catalog, &fx.dataset, &fx.map, &fx.sql, fx.k).unwrap();
        assert_eq!(rows.len(), 180);
        assert_eq!(trace.total_card(), 180);
    }

    #[test]
    fn health_fixture_generates_a_view() {
        let fx = health_fixture(30, 2);
        assert!(!fx.map.class_of["demographics"].is_empty());
        assert!(fx.histograms.contains_key("medications"));
    }
}
