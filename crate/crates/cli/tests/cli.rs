use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use kloak_core::schema::{AttributeDef, Catalog, Policy, RelationDef};
use kloak_core::value::ScalarKind;

fn kloak() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kloak"))
}

fn health_catalog() -> Catalog {
    let attr = |name: &str, kind, policy, domain: Option<&str>| AttributeDef {
        name: name.into(),
        kind,
        policy,
        domain: domain.map(String::from),
    };
    Catalog {
        relations: vec![
            RelationDef {
                name: "demographics".into(),
                attributes: vec![
                    attr("pid", ScalarKind::Integer, Policy::KAnon, Some("pid")),
                    attr("sex", ScalarKind::Text, Policy::KAnon, None),
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
        ],
        fds: Vec::new(),
    }
}

fn write_data_dir(dir: &Path) {
    std::fs::write(dir.join("catalog.json"), health_catalog().to_json()).unwrap();
    std::fs::write(dir.join("demographics.0.csv"), "1,F\n2,M\n5,F\n").unwrap();
    std::fs::write(dir.join("demographics.1.csv"), "3,F\n4,M\n6,M\n").unwrap();
    std::fs::write(dir.join("diagnosis.0.csv"), "1,flu\n3,flu\n5,hd\n").unwrap();
    std::fs::write(dir.join("diagnosis.1.csv"), "2,flu\n4,hd\n6,flu\n").unwrap();
}

const JOIN_SQL: &str = "SELECT diag, COUNT(*) AS n FROM demographics, diagnosis \
     WHERE demographics.pid = diagnosis.pid AND sex = 'F' GROUP BY diag";

#[test]
fn local_query_matches_across_modes() {
    let dir = tempfile::tempdir().unwrap();
    write_data_dir(dir.path());
    let query_file = dir.path().join("q.sql");
    std::fs::write(&query_file, JOIN_SQL).unwrap();
    let trace_file = dir.path().join("q.trace");

    let plain = kloak()
        .args(["query", "--data-dir"])
        .arg(dir.path())
        .args(["--mode", "plain", "--query-file"])
        .arg(&query_file)
        .output()
        .unwrap();
    assert!(plain.status.success(), "{}", String::from_utf8_lossy(&plain.stderr));
    assert_eq!(String::from_utf8_lossy(&plain.stdout), "diag,n\nflu,2\nhd,1\n");

    let kanon = kloak()
        .args(["query", "--data-dir"])
        .arg(dir.path())
        .args(["--mode", "kanon", "--k", "2", "--query-file"])
        .arg(&query_file)
        .arg("--trace-out")
        .arg(&trace_file)
        .output()
        .unwrap();
    assert!(kanon.status.success(), "{}", String::from_utf8_lossy(&kanon.stderr));
    assert_eq!(kanon.stdout, plain.stdout);
    let stderr = String::from_utf8_lossy(&kanon.stderr);
    assert!(stderr.contains("admission"), "missing admission line: {stderr}");
    let trace = std::fs::read_to_string(&trace_file).unwrap();
    assert!(trace.lines().count() > 1, "trace should carry events and totals");
}

#[test]
fn setup_then_check_view_then_catch_tampering() {
    let dir = tempfile::tempdir().unwrap();
    write_data_dir(dir.path());
    let map_file = dir.path().join("view.json");

    let setup = kloak()
        .args(["setup", "--schema"])
        .arg(dir.path().join("catalog.json"))
        .arg("--data")
        .arg(dir.path())
        .args(["--control-flow", "demographics.pid,demographics.sex,diagnosis.pid", "--k", "2"])
        .arg("--out")
        .arg(&map_file)
        .output()
        .unwrap();
    assert!(setup.status.success(), "{}", String::from_utf8_lossy(&setup.stderr));

    let ok = kloak()
        .args(["check-view", "--map"])
        .arg(&map_file)
        .arg("--data")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("view ok"));

    std::fs::write(dir.path().join("diagnosis.0.csv"), "1,flu\n").unwrap();
    std::fs::write(dir.path().join("diagnosis.1.csv"), "").unwrap();
    let bad = kloak()
        .args(["check-view", "--map"])
        .arg(&map_file)
        .arg("--data")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!bad.status.success());
    let stdout = String::from_utf8_lossy(&bad.stdout);
    assert!(stdout.contains("\"size\""), "expected size violations, got: {stdout}");
}

#[test]
fn bench_writes_report_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("tiny.json");
    std::fs::write(
        &scenario,
        r#"{
            "name": "tiny",
            "dataset": { "generator": "uniform_join", "n": 12 },
            "hosts": 2,
            "seed": 4,
            "queries": [
                { "name": "key_join",
                  "sql": "SELECT ljoin.lkey FROM ljoin, rjoin WHERE ljoin.lkey = rjoin.rkey" }
            ],
            "modes": ["kanon"],
            "ks": [3]
        }"#,
    )
    .unwrap();
    let out = dir.path().join("reports");
    let run = kloak().arg("bench").arg("--scenario").arg(&scenario).arg("--out").arg(&out).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report = std::fs::read_to_string(out.join("tiny.csv")).unwrap();
    let mut lines = report.lines();
    assert!(lines.next().unwrap().starts_with("scenario,query,mode,k"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("tiny,key_join,kanon,3,36,36,"), "unexpected row: {row}");
    assert!(out.join("tiny_key_join_kanon_3.trace").exists());
}

struct Reap(Child);

impl Drop for Reap {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_addr() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    listener.local_addr().unwrap().to_string()
}

#[test]
fn tcp_federation_answers_remote_queries() {
    let dir = tempfile::tempdir().unwrap();
    write_data_dir(dir.path());
    let query_file = dir.path().join("q.sql");
    std::fs::write(&query_file, JOIN_SQL).unwrap();

    let h0 = free_addr();
    let h1 = free_addr();
    let api = free_addr();
    let peers = format!("{h0},{h1}");

    // Default election seats host 0 as coordinator.
    let _c0 = Reap(kloak()
        .args(["serve", "--host-id", "0", "--listen", &h0, "--data-dir"])
        .arg(dir.path())
        .args(["--peers", &peers, "--client-listen", &api])
        .stderr(Stdio::null())
        .spawn()
        .unwrap());
    let _c1 = Reap(kloak()
        .args(["serve", "--host-id", "1", "--listen", &h1, "--data-dir"])
        .arg(dir.path())
        .args(["--peers", &peers])
        .stderr(Stdio::null())
        .spawn()
        .unwrap());

    let mut last = None;
    for _ in 0..60 {
        let out = kloak()
            .args(["query", "--connect", &api, "--mode", "kanon", "--k", "2", "--query-file"])
            .arg(&query_file)
            .output()
            .unwrap();
        if out.status.success() {
            assert_eq!(String::from_utf8_lossy(&out.stdout), "diag,n\nflu,2\nhd,1\n");
            return;
        }
        last = Some(String::from_utf8_lossy(&out.stderr).into_owned());
        std::thread::sleep(Duration::from_millis(250));
    }
    panic!("federation never answered: {last:?}");
}
