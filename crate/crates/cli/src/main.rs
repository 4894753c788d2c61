//! `kloak`: serve a data host, coordinate a federation, run queries, build
//! and audit anonymized views, and drive benchmark scenarios.
//!
//! A data directory holds `catalog.json` plus one headerless CSV per
//! relation shard, named `<relation>.<host>.csv`. A serving host loads only
//! its own shards; the central tools (setup, check-view, local query) load
//! all of them.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use kloak_core::anonymizer::{check_view, generate_view, AnonymizationMap, Histogram};
use kloak_core::bench::{load_scenarios, run_scenario, write_outputs};
use kloak_core::executor::Mode;
use kloak_core::federation::{
    elect_coordinator, serve_coordinator, serve_host, Client, Federation, HostNode,
    LocalFederation, QueryOutcome, TcpTransport,
};
use kloak_core::planner::ControlFlowSet;
use kloak_core::schema::{load_catalog_file, load_shard_csv, Catalog, Dataset};
use kloak_core::value::{HostId, Tuple};

#[derive(Parser)]
#[command(name = "kloak", version, about = "k-anonymous federated query engine")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one data host; the elected host additionally coordinates and
    /// accepts client queries.
    Serve {
        #[arg(long)]
        host_id: HostId,
        /// Address this host answers coordinator frames on.
        #[arg(long)]
        listen: String,
        #[arg(long)]
        data_dir: PathBuf,
        /// All host addresses in id order; required to elect and run the
        /// coordinator.
        #[arg(long, value_delimiter = ',')]
        peers: Vec<String>,
        /// Address the coordinator accepts client queries on.
        #[arg(long)]
        client_listen: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Submit a query to a running coordinator, or run one locally over a
    /// data directory.
    Query {
        /// Coordinator address.
        #[arg(long, conflicts_with_all = ["data_dir", "seed"])]
        connect: Option<String>,
        /// Run in process against this data directory instead.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value = "plain")]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        k: u64,
        #[arg(long)]
        query_file: PathBuf,
        /// Write the execution trace (JSON lines) here.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Class hash seed for a local run.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build an anonymized view over a data directory and write the map.
    Setup {
        /// Catalog JSON file.
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Control-flow attributes as comma-separated relation.attr pairs.
        #[arg(long)]
        control_flow: String,
        #[arg(long)]
        k: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audit a view map against a data directory; exits nonzero on
    /// violations.
    CheckView {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run benchmark scenarios and write CSV reports plus trace files.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Serve { host_id, listen, data_dir, peers, client_listen, seed } => {
            cmd_serve(host_id, &listen, &data_dir, peers, client_listen, seed)
        }
        Cmd::Query { connect, data_dir, mode, k, query_file, trace_out, seed } => {
            cmd_query(connect, data_dir, mode, k, &query_file, trace_out, seed)
        }
        Cmd::Setup { schema, data, control_flow, k, seed, out } => {
            cmd_setup(&schema, &data, &control_flow, k, seed, out)
        }
        Cmd::CheckView { map, data } => cmd_check_view(&map, &data),
        Cmd::Bench { scenario, out } => cmd_bench(&scenario, &out),
    }
}

/// Shard files in a data directory: `(relation, host, path)` parsed from
/// `<relation>.<host>.csv` names. Files not matching the pattern are
/// ignored; a matching name with an unknown relation is an error.
fn shard_files(catalog: &Catalog, dir: &Path) -> Result<Vec<(String, HostId, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let parts: Vec<&str> = name.split('.').collect();
        let [relation, host, "csv"] = parts[..] else { continue };
        let Ok(host) = host.parse::<HostId>() else { continue };
        if catalog.relation(relation).is_err() {
            bail!("shard file {name} names a relation that is not in the catalog");
        }
        out.push((relation.to_string(), host, path));
    }
    out.sort();
    Ok(out)
}

fn read_shard(catalog: &Catalog, relation: &str, host: HostId, path: &Path) -> Result<Vec<Tuple>> {
    let rel = catalog.relation(relation)?;
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let shard = load_shard_csv(rel, host, file).with_context(|| path.display().to_string())?;
    Ok(shard.tuples)
}

fn load_dataset(catalog: &Catalog, dir: &Path) -> Result<Dataset> {
    let files = shard_files(catalog, dir)?;
    if files.is_empty() {
        bail!("no <relation>.<host>.csv shard files in {}", dir.display());
    }
    let hosts = files.iter().map(|(_, h, _)| h + 1).max().unwrap_or(1);
    let mut dataset = Dataset::new(hosts);
    for (relation, host, path) in files {
        let tuples = read_shard(catalog, &relation, host, &path)?;
        dataset.add_shard(kloak_core::schema::RelationShard { relation, host, tuples });
    }
    Ok(dataset)
}

fn load_host_shards(
    catalog: &Catalog,
    dir: &Path,
    host: HostId,
) -> Result<BTreeMap<String, Vec<Tuple>>> {
    let mut out = BTreeMap::new();
    for (relation, h, path) in shard_files(catalog, dir)? {
        if h == host {
            out.insert(relation.clone(), read_shard(catalog, &relation, h, &path)?);
        }
    }
    Ok(out)
}

fn cmd_serve(
    host_id: HostId,
    listen: &str,
    data_dir: &Path,
    peers: Vec<String>,
    client_listen: Option<String>,
    seed: Option<u64>,
) -> Result<()> {
    let catalog = load_catalog_file(&data_dir.join("catalog.json"))?;
    let shards = load_host_shards(&catalog, data_dir, host_id)?;
    let listener = TcpListener::bind(listen).with_context(|| format!("binding {listen}"))?;
    let node = HostNode::new(host_id, catalog.clone(), shards);

    let coordinator = !peers.is_empty() && elect_coordinator(peers.len() as u32, seed) == host_id;
    if coordinator && client_listen.is_none() {
        bail!("this host is the elected coordinator and needs --client-listen");
    }
    if !peers.is_empty() && peers.len() <= host_id as usize {
        bail!("--peers lists {} hosts, so host id {host_id} is out of range", peers.len());
    }

    eprintln!("host {host_id} serving on {listen}");
    let host_loop = std::thread::spawn(move || {
        let mut node = node;
        serve_host(&mut node, &listener)
    });

    if coordinator {
        let fed = connect_federation(peers, catalog, seed.unwrap_or(0))?;
        let client_listen = client_listen.expect("checked above");
        let api = TcpListener::bind(&client_listen)
            .with_context(|| format!("binding {client_listen}"))?;
        eprintln!("coordinator accepting queries on {client_listen}");
        let mut fed = fed;
        serve_coordinator(&mut fed, &api)?;
    }
    match host_loop.join() {
        Ok(r) => r.map_err(Into::into),
        Err(_) => bail!("host loop panicked"),
    }
}

/// Peers may still be starting up, so the handshake retries for a while.
fn connect_federation(
    peers: Vec<String>,
    catalog: Catalog,
    hash_seed: u64,
) -> Result<Federation<TcpTransport>> {
    let mut last = None;
    for _ in 0..40 {
        match Federation::new(TcpTransport::new(peers.clone()), catalog.clone(), hash_seed) {
            Ok(fed) => return Ok(fed),
            Err(e) => {
                last = Some(e);
                std::thread::sleep(Duration::from_millis(250));
            }
        }
    }
    Err(last.expect("loop ran").into())
}

fn cmd_query(
    connect: Option<String>,
    data_dir: Option<PathBuf>,
    mode: Mode,
    k: u64,
    query_file: &Path,
    trace_out: Option<PathBuf>,
    seed: u64,
) -> Result<()> {
    let sql = std::fs::read_to_string(query_file)
        .with_context(|| format!("reading {}", query_file.display()))?;
    if mode == Mode::KAnon && k < 2 {
        bail!("kanon mode needs --k of at least 2");
    }
    let outcome = match (connect, data_dir) {
        (Some(addr), None) => Client::connect(addr)?.submit(&sql, mode, k)?,
        (None, Some(dir)) => {
            let catalog = load_catalog_file(&dir.join("catalog.json"))?;
            let dataset = load_dataset(&catalog, &dir)?;
            LocalFederation::local(catalog, &dataset, seed)?.submit(&sql, mode, k)?
        }
        _ => bail!("pass exactly one of --connect or --data-dir"),
    };
    print_outcome(&outcome, trace_out.as_deref())
}

fn print_outcome(outcome: &QueryOutcome, trace_out: Option<&Path>) -> Result<()> {
    if let Some(decision) = &outcome.decision {
        eprintln!("admission: {}", serde_json::to_string(decision)?);
    }
    let stdout = std::io::stdout();
    let mut w = csv::Writer::from_writer(stdout.lock());
    w.write_record(&outcome.columns)?;
    for row in &outcome.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    if let Some(path) = trace_out {
        std::fs::write(path, &outcome.trace)?;
        eprintln!("trace written to {}", path.display());
    }
    Ok(())
}

fn parse_control_flow(text: &str) -> Result<ControlFlowSet> {
    let mut c = ControlFlowSet::default();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let Some((relation, attr)) = part.split_once('.') else {
            bail!("control-flow entry {part:?} is not relation.attr");
        };
        c.insert(relation, attr);
    }
    if c.0.is_empty() {
        bail!("empty control-flow set");
    }
    Ok(c)
}

fn cmd_setup(
    schema: &Path,
    data: &Path,
    control_flow: &str,
    k: u64,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    let catalog = load_catalog_file(schema)?;
    let dataset = load_dataset(&catalog, data)?;
    let c = parse_control_flow(control_flow)?;
    let mut histograms: BTreeMap<String, Histogram> = BTreeMap::new();
    for relation in c.relations() {
        let rel = catalog.relation(&relation)?;
        let attrs = c.attrs_of(&relation);
        let mut merged: Option<Histogram> = None;
        for host in 0..dataset.hosts {
            let empty = Vec::new();
            let tuples = dataset.shard_of(&relation, host).map_or(&empty, |s| &s.tuples);
            let hist = Histogram::build(rel, &attrs, tuples, host)?;
            match merged.as_mut() {
                None => merged = Some(hist),
                Some(m) => m.merge(&hist)?,
            }
        }
        histograms.insert(relation.clone(), merged.expect("at least one host"));
    }
    let map = generate_view(&catalog, &c, &histograms, k, seed)?;
    let json = serde_json::to_string_pretty(&map)?;
    match out {
        Some(path) => {
            std::fs::write(&path, json)?;
            eprintln!("view map written to {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_check_view(map: &Path, data: &Path) -> Result<()> {
    let map: AnonymizationMap = serde_json::from_str(
        &std::fs::read_to_string(map).with_context(|| format!("reading {}", map.display()))?,
    )?;
    let catalog = load_catalog_file(&data.join("catalog.json"))?;
    let dataset = load_dataset(&catalog, data)?;
    let violations = check_view(&map, &catalog, &dataset)?;
    if violations.is_empty() {
        let classes: usize = map.class_of.values().map(|m| m.len()).sum();
        println!("view ok: k={} holds across {} mapped class entries", map.k, classes);
        return Ok(());
    }
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for v in &violations {
        writeln!(w, "{}", serde_json::to_string(v)?)?;
    }
    drop(w);
    eprintln!("view violates its guarantee: {} violations", violations.len());
    std::process::exit(1);
}

fn cmd_bench(scenario: &Path, out: &Path) -> Result<()> {
    let scenarios = load_scenarios(scenario)?;
    for s in &scenarios {
        let outcomes = run_scenario(s);
        let report = write_outputs(s, &outcomes, out)?;
        let errors = outcomes.iter().filter(|c| !c.row.error.is_empty()).count();
        eprintln!(
            "{}: {} cells, {} with errors, report {}",
            s.name,
            outcomes.len(),
            errors,
            report.display()
        );
    }
    Ok(())
}
