//! Synthetic datasets and the scenario runner behind `kloak bench`.
//!
//! Three generators cover the workload shapes of interest: a TPC-H-like
//! star schema with uniform keys, a health schema with Zipf-skewed
//! per-patient record counts and condition registries, and a two-relation
//! uniform join whose equivalence classes come out at an exact target size.
//! A scenario grids queries over modes and k values; every cell runs on a
//! fresh in-process federation, is gated against the plain-mode result, and
//! lands in one CSV row. Comparison counters are the reported metric; wall
//! time is recorded but makes no claims.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::executor::Mode;
use crate::federation::LocalFederation;
use crate::planner::plan_query;
use crate::schema::{
    AttributeDef, Catalog, Dataset, Policy, RelationDef, RelationShard,
};
use crate::trace::Trace;
use crate::value::{Scalar, ScalarKind, Tuple};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuerySpec {
    pub name: String,
    pub sql: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Customers, orders, lineitem and supplier at a fraction of desk
    /// scale: `scale` = 1 means 15000 orders.
    TpchLike { scale: f64 },
    /// Demographics, diagnosis, medications and vitals for `patients`
    /// individuals; record counts per patient follow a Zipf law with
    /// exponent `zipf_s` (0 = uniform).
    Health {
        patients: u64,
        #[serde(default)]
        zipf_s: f64,
    },
    /// Two relations of `n` rows each over a shared key domain; every key
    /// appears exactly `class size` times per side, where the class size is
    /// the cell's k. Classes land whole on alternating hosts.
    UniformJoin { n: u64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub dataset: DatasetSpec,
    #[serde(default = "default_hosts")]
    pub hosts: u32,
    #[serde(default)]
    pub seed: u64,
    pub queries: Vec<QuerySpec>,
    pub modes: Vec<Mode>,
    pub ks: Vec<u64>,
    /// Report file name, relative to the output directory.
    #[serde(default)]
    pub output: String,
}

fn default_hosts() -> u32 {
    2
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub query: String,
    pub mode: Mode,
    pub k: u64,
    pub output_tuples: u64,
    pub comparisons: u64,
    pub wall_millis: u64,
    pub trace_hash: String,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub row: ReportRow,
    pub trace: Option<Trace>,
}

pub struct BuiltDataset {
    pub catalog: Catalog,
    pub dataset: Dataset,
    /// `$name` placeholders usable in scenario SQL, e.g. generated cohort
    /// id lists.
    pub substitutions: BTreeMap<String, String>,
}

/// One scenario file holds a single scenario or a list of them.
pub fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Box<Scenario>),
        Many(Vec<Scenario>),
    }
    let text = std::fs::read_to_string(path)?;
    let parsed: OneOrMany = serde_json::from_str(&text)?;
    let mut scenarios = match parsed {
        OneOrMany::One(s) => vec![*s],
        OneOrMany::Many(v) => v,
    };
    for s in &mut scenarios {
        if s.output.is_empty() {
            s.output = format!("{}.csv", s.name);
        }
        s.validate()?;
    }
    Ok(scenarios)
}

impl Scenario {
    /// Structural checks before any cell runs: sane grid, and every query
    /// plans against the generated catalog.
    pub fn validate(&self) -> Result<()> {
        if self.hosts == 0 {
            return Err(Error::Validation(format!("scenario {}: zero hosts", self.name)));
        }
        if self.queries.is_empty() || self.modes.is_empty() || self.ks.is_empty() {
            return Err(Error::Validation(format!(
                "scenario {}: queries, modes and ks must all be non-empty",
                self.name
            )));
        }
        if let DatasetSpec::TpchLike { scale } = self.dataset {
            if scale <= 0.0 {
                return Err(Error::Validation(format!(
                    "scenario {}: scale must be positive",
                    self.name
                )));
            }
        }
        if let DatasetSpec::Health { patients, .. } = self.dataset {
            if patients == 0 {
                return Err(Error::Validation(format!(
                    "scenario {}: at least one patient",
                    self.name
                )));
            }
        }
        let built = build_dataset(&self.dataset, self.hosts, self.seed, self.ks[0].max(1));
        for q in &self.queries {
            let sql = substitute(&q.sql, &built.substitutions);
            plan_query(&built.catalog, &sql).map_err(|e| {
                Error::Validation(format!("scenario {} query {}: {e}", self.name, q.name))
            })?;
        }
        Ok(())
    }
}

/// Runs the full (query, mode, k) grid sequentially, one fresh federation
/// per cell. A failing cell contributes an error row and keeps the run
/// going.
pub fn run_scenario(scenario: &Scenario) -> Vec<CellOutcome> {
    let mut out = Vec::new();
    for q in &scenario.queries {
        for &mode in &scenario.modes {
            for &k in &scenario.ks {
                out.push(run_cell(scenario, q, mode, k));
            }
        }
    }
    out
}

fn run_cell(scenario: &Scenario, query: &QuerySpec, mode: Mode, k: u64) -> CellOutcome {
    let mut row = ReportRow {
        scenario: scenario.name.clone(),
        query: query.name.clone(),
        mode,
        k,
        output_tuples: 0,
        comparisons: 0,
        wall_millis: 0,
        trace_hash: String::new(),
        error: String::new(),
    };
    let built = build_dataset(&scenario.dataset, scenario.hosts, scenario.seed, k.max(1));
    let sql = substitute(&query.sql, &built.substitutions);
    let attempt = (|| -> Result<(Trace, u64, bool)> {
        let mut fed = LocalFederation::local(built.catalog, &built.dataset, scenario.seed)?;
        let baseline =
            if mode == Mode::Plain { None } else { Some(fed.run_query(&sql, Mode::Plain, 0)?) };
        let start = Instant::now();
        let run = fed.run_query(&sql, mode, k)?;
        let wall = start.elapsed().as_millis() as u64;
        let clean = baseline.map(|b| b.rows == run.rows).unwrap_or(true);
        Ok((run.trace, wall, clean))
    })();
    match attempt {
        Ok((trace, wall, clean)) => {
            row.output_tuples = trace.total_card();
            row.comparisons = trace.total_cmp();
            row.wall_millis = wall;
            row.trace_hash = sha_hex(trace.to_json_lines().as_bytes());
            if !clean {
                row.error = "dummy-stripped result diverges from the plain baseline".into();
            }
            CellOutcome { row, trace: Some(trace) }
        }
        Err(e) => {
            row.error = e.to_string();
            CellOutcome { row, trace: None }
        }
    }
}

/// Writes the CSV report and one trace file per clean cell into `out_dir`;
/// returns the report path.
pub fn write_outputs(
    scenario: &Scenario,
    outcomes: &[CellOutcome],
    out_dir: &Path,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let report_path = out_dir.join(&scenario.output);
    let mut w = csv::Writer::from_writer(std::fs::File::create(&report_path)?);
    for cell in outcomes {
        w.serialize(&cell.row)?;
    }
    w.flush()?;
    for cell in outcomes {
        if let Some(trace) = &cell.trace {
            let name = format!(
                "{}_{}_{}_{}.trace",
                cell.row.scenario, cell.row.query, cell.row.mode, cell.row.k
            );
            let mut f = std::fs::File::create(out_dir.join(name))?;
            f.write_all(trace.to_json_lines().as_bytes())?;
        }
    }
    Ok(report_path)
}

pub fn build_dataset(spec: &DatasetSpec, hosts: u32, seed: u64, class: u64) -> BuiltDataset {
    match *spec {
        DatasetSpec::TpchLike { scale } => gen_tpch_like(scale, hosts, seed),
        DatasetSpec::Health { patients, zipf_s } => gen_health(patients, hosts, seed, zipf_s),
        DatasetSpec::UniformJoin { n } => gen_uniform_join(n, class, hosts, seed),
    }
}

pub fn substitute(sql: &str, substitutions: &BTreeMap<String, String>) -> String {
    let mut out = sql.to_string();
    for (name, value) in substitutions {
        out = out.replace(&format!("${name}"), value);
    }
    out
}

fn sha_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn attr(name: &str, kind: ScalarKind, policy: Policy, domain: Option<&str>) -> AttributeDef {
    AttributeDef { name: name.into(), kind, policy, domain: domain.map(String::from) }
}

fn shard_split(
    relation: &str,
    rows: Vec<(u32, Vec<Scalar>)>,
    hosts: u32,
    dataset: &mut Dataset,
) {
    let mut per_host: BTreeMap<u32, Vec<Tuple>> = (0..hosts).map(|h| (h, Vec::new())).collect();
    for (host, values) in rows {
        per_host.get_mut(&host).expect("host in range").push(Tuple::real(values, host));
    }
    for (host, tuples) in per_host {
        dataset.add_shard(RelationShard { relation: relation.into(), host, tuples });
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, weighted: &[(&'a str, u32)]) -> &'a str {
    let total: u32 = weighted.iter().map(|(_, w)| w).sum();
    let mut roll = rng.gen_range(0..total);
    for (value, w) in weighted {
        if roll < *w {
            return value;
        }
        roll -= w;
    }
    weighted[weighted.len() - 1].0
}

/// Per-rank record counts following a Zipf law with exponent `s`,
/// normalized so the mean lands near `mean`; every rank gets at least one.
fn zipf_counts(n: u64, s: f64, mean: f64) -> Vec<u64> {
    let weights: Vec<f64> = (1..=n).map(|r| 1.0 / (r as f64).powf(s)).collect();
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .map(|w| ((mean * n as f64 * w / total).round() as u64).max(1))
        .collect()
}

/// TPC-H-like star schema with uniform foreign keys. Cardinalities scale
/// from 15000 orders at scale 1, lineitems average four per order, and the
/// supplier dimension stays whole on host 0 (splitting a relation of a few
/// rows across sites strands every sub-k remainder).
pub fn gen_tpch_like(scale: f64, hosts: u32, seed: u64) -> BuiltDataset {
    assert!(scale > 0.0, "scale must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orders = ((15000.0 * scale).round() as u64).max(1);
    let customers = ((1500.0 * scale).round() as u64).max(1);
    let suppliers = ((100.0 * scale).round() as u64).max(1);

    let catalog = Catalog {
        relations: vec![
            RelationDef {
                name: "customers".into(),
                attributes: vec![
                    attr("c_custkey", ScalarKind::Integer, Policy::KAnon, Some("custkey")),
                    attr("c_mktsegment", ScalarKind::Text, Policy::Public, None),
                    attr("c_nationkey", ScalarKind::Integer, Policy::Public, None),
                ],
                entity_attr: "c_custkey".into(),
            },
            RelationDef {
                name: "orders".into(),
                attributes: vec![
                    attr("o_orderkey", ScalarKind::Integer, Policy::Public, Some("orderkey")),
                    attr("o_custkey", ScalarKind::Integer, Policy::KAnon, Some("custkey")),
                    attr("o_orderdate", ScalarKind::Date, Policy::Public, None),
                    attr("o_totalprice", ScalarKind::Integer, Policy::Public, None),
                ],
                entity_attr: "o_custkey".into(),
            },
            RelationDef {
                name: "lineitem".into(),
                attributes: vec![
                    attr("l_orderkey", ScalarKind::Integer, Policy::KAnon, Some("orderkey")),
                    attr("l_suppkey", ScalarKind::Integer, Policy::KAnon, Some("suppkey")),
                    attr("l_extendedprice", ScalarKind::Integer, Policy::Public, None),
                    attr("l_quantity", ScalarKind::Integer, Policy::Public, None),
                ],
                entity_attr: "l_orderkey".into(),
            },
            RelationDef {
                name: "supplier".into(),
                attributes: vec![
                    attr("s_suppkey", ScalarKind::Integer, Policy::KAnon, Some("suppkey")),
                    attr("s_nationkey", ScalarKind::Integer, Policy::Public, None),
                ],
                entity_attr: "s_suppkey".into(),
            },
        ],
        fds: Vec::new(),
    };

    let segments =
        [("building", 3), ("automobile", 2), ("machinery", 2), ("household", 2), ("furniture", 1)];
    let mut dataset = Dataset::new(hosts);
    let mut rows = Vec::new();
    for c in 1..=customers {
        let seg = pick(&mut rng, &segments);
        let nation = rng.gen_range(0..25i64);
        rows.push((
            rng.gen_range(0..hosts),
            vec![Scalar::Int(c as i64), Scalar::text(seg), Scalar::Int(nation)],
        ));
    }
    shard_split("customers", rows, hosts, &mut dataset);

    let mut order_rows = Vec::new();
    let mut line_rows = Vec::new();
    for o in 1..=orders {
        let cust = rng.gen_range(1..=customers) as i64;
        let date = rng.gen_range(1..=60i64);
        let price = rng.gen_range(100..=50_000i64);
        order_rows.push((
            rng.gen_range(0..hosts),
            vec![Scalar::Int(o as i64), Scalar::Int(cust), Scalar::Int(date), Scalar::Int(price)],
        ));
        for _ in 0..rng.gen_range(1..=7u32) {
            let supp = rng.gen_range(1..=suppliers) as i64;
            let ext = rng.gen_range(100..=10_000i64);
            let qty = rng.gen_range(1..=50i64);
            line_rows.push((
                rng.gen_range(0..hosts),
                vec![Scalar::Int(o as i64), Scalar::Int(supp), Scalar::Int(ext), Scalar::Int(qty)],
            ));
        }
    }
    shard_split("orders", order_rows, hosts, &mut dataset);
    shard_split("lineitem", line_rows, hosts, &mut dataset);

    let mut supp_rows = Vec::new();
    for s in 1..=suppliers {
        let nation = rng.gen_range(0..25i64);
        supp_rows.push((0, vec![Scalar::Int(s as i64), Scalar::Int(nation)]));
    }
    shard_split("supplier", supp_rows, hosts, &mut dataset);

    BuiltDataset { catalog, dataset, substitutions: BTreeMap::new() }
}

/// Health records for `patients` individuals: one demographics row each,
/// plus diagnosis, medication and vitals rows whose per-patient counts are
/// Zipf-skewed (patient 1 heaviest). Condition registries for c. diff and
/// heart disease come back as `$cdiff_cohort` and `$hd_cohort` id lists,
/// guaranteed non-empty.
pub fn gen_health(patients: u64, hosts: u32, seed: u64, zipf_s: f64) -> BuiltDataset {
    assert!(patients >= 1, "at least one patient");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let catalog = Catalog {
        relations: vec![
            RelationDef {
                name: "demographics".into(),
                attributes: vec![
                    attr("pid", ScalarKind::Integer, Policy::KAnon, Some("pid")),
                    attr("gender", ScalarKind::Text, Policy::KAnon, None),
                    attr("race", ScalarKind::Text, Policy::KAnon, None),
                ],
                entity_attr: "pid".into(),
            },
            RelationDef {
                name: "diagnosis".into(),
                attributes: vec![
                    attr("pid", ScalarKind::Integer, Policy::KAnon, Some("pid")),
                    attr("diag", ScalarKind::Text, Policy::KAnon, None),
                ],
                entity_attr: "pid".into(),
            },
            RelationDef {
                name: "medications".into(),
                attributes: vec![
                    attr("pid", ScalarKind::Integer, Policy::KAnon, Some("pid")),
                    attr("med", ScalarKind::Text, Policy::KAnon, None),
                    attr("dose", ScalarKind::Integer, Policy::Public, None),
                ],
                entity_attr: "pid".into(),
            },
            RelationDef {
                name: "vitals".into(),
                attributes: vec![
                    attr("pid", ScalarKind::Integer, Policy::KAnon, Some("pid")),
                    attr("pulse", ScalarKind::Integer, Policy::Public, None),
                ],
                entity_attr: "pid".into(),
            },
        ],
        fds: Vec::new(),
    };

    let genders = [("F", 1), ("M", 1)];
    let races = [("asian", 1), ("black", 2), ("hispanic", 2), ("white", 3), ("other", 1)];
    let diags = [
        ("flu", 4),
        ("hd", 3),
        ("cdiff", 3),
        ("asthma", 2),
        ("internal bleeding", 1),
        ("lyme", 1),
    ];
    let meds = [("aspirin", 3), ("statin", 2), ("insulin", 2), ("ibuprofen", 3)];

    let mut dataset = Dataset::new(hosts);
    let mut demo_rows = Vec::new();
    for p in 1..=patients {
        let g = pick(&mut rng, &genders);
        let r = pick(&mut rng, &races);
        demo_rows.push((
            rng.gen_range(0..hosts),
            vec![Scalar::Int(p as i64), Scalar::text(g), Scalar::text(r)],
        ));
    }
    shard_split("demographics", demo_rows, hosts, &mut dataset);

    let diag_counts = zipf_counts(patients, zipf_s, 3.0);
    let med_counts = zipf_counts(patients, zipf_s, 2.0);
    let vital_counts = zipf_counts(patients, zipf_s, 4.0);

    let mut diag_rows = Vec::new();
    let mut cdiff = BTreeSet::new();
    let mut hd = BTreeSet::new();
    for p in 1..=patients {
        for _ in 0..diag_counts[(p - 1) as usize] {
            let d = pick(&mut rng, &diags);
            match d {
                "cdiff" => {
                    cdiff.insert(p);
                }
                "hd" => {
                    hd.insert(p);
                }
                _ => {}
            }
            diag_rows.push((
                rng.gen_range(0..hosts),
                vec![Scalar::Int(p as i64), Scalar::text(d)],
            ));
        }
    }
    for (registry, name) in [(&mut cdiff, "cdiff"), (&mut hd, "hd")] {
        if registry.is_empty() {
            diag_rows.push((rng.gen_range(0..hosts), vec![Scalar::Int(1), Scalar::text(name)]));
            registry.insert(1);
        }
    }
    shard_split("diagnosis", diag_rows, hosts, &mut dataset);

    let mut med_rows = Vec::new();
    for p in 1..=patients {
        for _ in 0..med_counts[(p - 1) as usize] {
            let m = pick(&mut rng, &meds);
            let dose = rng.gen_range(1..=4i64) * 25;
            med_rows.push((
                rng.gen_range(0..hosts),
                vec![Scalar::Int(p as i64), Scalar::text(m), Scalar::Int(dose)],
            ));
        }
    }
    shard_split("medications", med_rows, hosts, &mut dataset);

    let mut vital_rows = Vec::new();
    for p in 1..=patients {
        for _ in 0..vital_counts[(p - 1) as usize] {
            let pulse = rng.gen_range(50..=110i64);
            vital_rows.push((
                rng.gen_range(0..hosts),
                vec![Scalar::Int(p as i64), Scalar::Int(pulse)],
            ));
        }
    }
    shard_split("vitals", vital_rows, hosts, &mut dataset);

    let list = |ids: &BTreeSet<u64>| {
        ids.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
    };
    let mut substitutions = BTreeMap::new();
    substitutions.insert("cdiff_cohort".into(), list(&cdiff));
    substitutions.insert("hd_cohort".into(), list(&hd));
    BuiltDataset { catalog, dataset, substitutions }
}

/// Two relations over one shared key domain, `class` rows per key per side,
/// `n` rows per side in total (rounded down to a multiple of `class`). Each
/// key's rows sit whole on one host, left and right offset by one, so the
/// anonymized view keeps singleton key groups and every equivalence class
/// has exactly `class` tuples.
pub fn gen_uniform_join(n: u64, class: u64, hosts: u32, seed: u64) -> BuiltDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class = class.max(1);
    let keys = (n / class).max(1);
    let catalog = Catalog {
        relations: vec![
            RelationDef {
                name: "ljoin".into(),
                attributes: vec![
                    attr("lkey", ScalarKind::Integer, Policy::KAnon, Some("jkey")),
                    attr("lval", ScalarKind::Integer, Policy::Public, None),
                ],
                entity_attr: "lkey".into(),
            },
            RelationDef {
                name: "rjoin".into(),
                attributes: vec![
                    attr("rkey", ScalarKind::Integer, Policy::KAnon, Some("jkey")),
                    attr("rval", ScalarKind::Integer, Policy::Public, None),
                ],
                entity_attr: "rkey".into(),
            },
        ],
        fds: Vec::new(),
    };
    let mut dataset = Dataset::new(hosts);
    let mut left = Vec::new();
    let mut right = Vec::new();
    for key in 0..keys {
        let lhost = (key % u64::from(hosts)) as u32;
        let rhost = ((key + 1) % u64::from(hosts)) as u32;
        for _ in 0..class {
            left.push((lhost, vec![Scalar::Int(key as i64), Scalar::Int(rng.gen_range(0..1000))]));
            right.push((rhost, vec![Scalar::Int(key as i64), Scalar::Int(rng.gen_range(0..1000))]));
        }
    }
    shard_split("ljoin", left, hosts, &mut dataset);
    shard_split("rjoin", right, hosts, &mut dataset);
    BuiltDataset { catalog, dataset, substitutions: BTreeMap::new() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let a = gen_tpch_like(0.002, 2, 9);
        let b = gen_tpch_like(0.002, 2, 9);
        assert_eq!(a.dataset.relations, b.dataset.relations);
        let a = gen_health(12, 3, 9, 1.2);
        let b = gen_health(12, 3, 9, 1.2);
        assert_eq!(a.dataset.relations, b.dataset.relations);
        let c = gen_health(12, 3, 10, 1.2);
        assert_ne!(a.dataset.relations, c.dataset.relations);
    }

    #[test]
    fn tpch_cardinalities_track_scale() {
        let built = gen_tpch_like(0.001, 2, 5);
        let count = |rel: &str| built.dataset.merged_rows(rel).len();
        assert_eq!(count("orders"), 15);
        assert_eq!(count("customers"), 2);
        assert_eq!(count("supplier"), 1);
        let lines = count("lineitem");
        assert!((15..=105).contains(&lines), "lineitem count {lines} out of range");
    }

    #[test]
    fn health_has_registries_and_skew() {
        let built = gen_health(20, 2, 3, 1.5);
        assert!(!built.substitutions["cdiff_cohort"].is_empty());
        assert!(!built.substitutions["hd_cohort"].is_empty());
        let vitals = built.dataset.merged_rows("vitals");
        let count_of = |p: i64| {
            vitals.iter().filter(|t| t.values[0] == Scalar::Int(p)).count()
        };
        assert!(count_of(1) > count_of(20), "rank 1 should dominate under skew");
        let flat = zipf_counts(10, 0.0, 3.0);
        assert!(flat.iter().all(|&c| c == 3));
    }

    #[test]
    fn uniform_join_builds_exact_classes() {
        let built = gen_uniform_join(100, 5, 2, 1);
        let left = built.dataset.merged_rows("ljoin");
        assert_eq!(left.len(), 100);
        let mut per_key: BTreeMap<Scalar, usize> = BTreeMap::new();
        for t in &left {
            *per_key.entry(t.values[0].clone()).or_default() += 1;
        }
        assert_eq!(per_key.len(), 20);
        assert!(per_key.values().all(|&c| c == 5));
    }

    #[test]
    fn join_scenario_counters_match_the_scaling_law() {
        let scenario = Scenario {
            name: "mini_join".into(),
            dataset: DatasetSpec::UniformJoin { n: 40 },
            hosts: 2,
            seed: 3,
            queries: vec![QuerySpec {
                name: "key_join".into(),
                sql: "SELECT ljoin.lkey FROM ljoin, rjoin WHERE ljoin.lkey = rjoin.rkey".into(),
            }],
            modes: vec![Mode::KAnon, Mode::Oblivious],
            ks: vec![2, 4],
            output: "mini.csv".into(),
        };
        scenario.validate().unwrap();
        let outcomes = run_scenario(&scenario);
        assert_eq!(outcomes.len(), 4);
        for cell in &outcomes {
            assert_eq!(cell.row.error, "", "cell {:?} failed", cell.row);
            let n = 40;
            let expected = match cell.row.mode {
                Mode::KAnon => n * cell.row.k,
                Mode::Oblivious => n * n,
                _ => unreachable!(),
            };
            assert_eq!(cell.row.output_tuples, expected);
            assert_eq!(cell.row.comparisons, expected);
        }
    }

    #[test]
    fn reports_round_trip_through_csv() {
        let scenario = Scenario {
            name: "tiny".into(),
            dataset: DatasetSpec::UniformJoin { n: 8 },
            hosts: 2,
            seed: 1,
            queries: vec![QuerySpec {
                name: "key_join".into(),
                sql: "SELECT ljoin.lkey FROM ljoin, rjoin WHERE ljoin.lkey = rjoin.rkey".into(),
            }],
            modes: vec![Mode::Plain, Mode::KAnon],
            ks: vec![2],
            output: "tiny.csv".into(),
        };
        let outcomes = run_scenario(&scenario);
        let dir = tempfile::tempdir().unwrap();
        let path = write_outputs(&scenario, &outcomes, dir.path()).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "scenario,query,mode,k,output_tuples,comparisons,wall_millis,trace_hash,error"
        );
        assert_eq!(lines.count(), 2);
        assert!(dir.path().join("tiny_key_join_kanon_2.trace").exists());
    }
}
