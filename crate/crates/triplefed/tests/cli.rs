//! End-to-end checks of the command-line binary: the in-process one-shot
//! commands, the workload CSV, and a real multi-process TCP cluster
//! driven entirely through the executable.

mod common;

use std::io::{BufRead, BufReader};
use std::process::{Child, Command, Output, Stdio};

use common::ACADEMIC_DATA;

const BIN: &str = env!("CARGO_BIN_EXE_triplefed");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn oneshot_query_output_is_deterministic() {
    let dir = tempfile::TempDir::new().expect("tempdir");
    let data = dir.path().join("academic.nt");
    std::fs::write(&data, ACADEMIC_DATA).expect("write data");
    let data = data.to_str().unwrap();

    let args = [
        "--workers",
        "2",
        "--seed",
        "7",
        "query",
        "SELECT ?s ?u WHERE { ?d subOrgOf ?u . ?s memberOf ?d }",
        "--data",
        data,
    ];
    let first = run(&args);
    assert!(first.status.success(), "query run failed: {first:?}");
    let text = stdout_of(&first);
    assert!(text.contains("semijoin"), "mode line missing: {text}");
    assert!(text.contains("Ben\tStanford"), "expected row missing: {text}");
    assert!(text.contains("Peter\tMIT"), "expected row missing: {text}");

    let second = run(&args);
    assert_eq!(first.stdout, second.stdout, "stdout must be byte-identical across runs");
}

#[test]
fn oneshot_errors_exit_nonzero() {
    // Client-only commands refuse to run without a TCP master.
    let out = run(&["metrics"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--transport tcp"));

    // A malformed query reports a parse error, not a panic.
    let dir = tempfile::TempDir::new().expect("tempdir");
    let data = dir.path().join("d.nt");
    std::fs::write(&data, "a p b .\n").expect("write data");
    let out = run(&["query", "SELECT WHERE", "--data", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

/// Six repetitions of one query shape: the first three run as semi-joins,
/// the fourth crosses the default frequency threshold and redistributes,
/// and the tail runs parallel with the replication ratio up.
#[test]
fn workload_csv_shows_the_mode_flip() {
    let dir = tempfile::TempDir::new().expect("tempdir");
    let data = dir.path().join("pairs.nt");
    let mut text = String::new();
    for j in 0..60 {
        let m = if j < 3 { format!("s{j}") } else { format!("u{j}") };
        text.push_str(&format!("a{j} q {m} .\n"));
        let m = if j < 3 { format!("s{j}") } else { format!("w{j}") };
        text.push_str(&format!("{m} r b{j} .\n"));
    }
    std::fs::write(&data, text).expect("write data");

    let wl = dir.path().join("workload.rq");
    let one = "SELECT ?a ?b WHERE { ?a q ?m . ?m r ?b }";
    std::fs::write(&wl, [one; 6].join("\n---\n")).expect("write workload");

    let out = run(&["workload", wl.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert!(out.status.success(), "workload failed: {out:?}");
    let csv = stdout_of(&out);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7, "header plus six rows: {csv}");
    assert_eq!(
        lines[0],
        "query_seq,mode,wall_ms,cumulative_ms,replication_ratio,remote_bytes"
    );
    let field = |line: &str, i: usize| -> String {
        line.split(',').nth(i).unwrap_or_default().to_owned()
    };
    for q in 1..=3 {
        assert_eq!(field(lines[q], 1), "semijoin", "query {q}: {csv}");
        assert_eq!(field(lines[q], 4), "0.000000", "no replicas yet: {csv}");
    }
    for q in 4..=6 {
        assert_eq!(field(lines[q], 1), "parallel", "query {q}: {csv}");
        let ratio: f64 = field(lines[q], 4).parse().expect("ratio parses");
        assert!(ratio > 0.0, "replicas exist after the flip: {csv}");
    }
}

struct KillOnDrop(Child);

impl Drop for KillOnDrop {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

/// A free loopback port, released just before the master takes it.
fn free_port() -> u16 {
    let l = std::net::TcpListener::bind("127.0.0.1:0").expect("probe bind");
    l.local_addr().expect("probe addr").port()
}

#[test]
fn tcp_cluster_runs_end_to_end_through_the_binary() {
    let dir = tempfile::TempDir::new().expect("tempdir");
    let data = dir.path().join("academic.nt");
    std::fs::write(&data, ACADEMIC_DATA).expect("write data");
    let addr = format!("127.0.0.1:{}", free_port());
    let base = ["--transport", "tcp", "--master-addr", &addr, "--workers", "2"];

    let mut master = Command::new(BIN)
        .args(base)
        .args(["serve", "--role", "master"])
        .stderr(Stdio::piped())
        .spawn()
        .expect("master starts");
    let mut master_err = BufReader::new(master.stderr.take().expect("master stderr"));
    let master = KillOnDrop(master);
    let mut line = String::new();
    master_err.read_line(&mut line).expect("master banner");
    assert!(line.contains("waiting for 2 workers"), "unexpected banner: {line}");

    let workers: Vec<KillOnDrop> = (0..2)
        .map(|id| {
            KillOnDrop(
                Command::new(BIN)
                    .args(base)
                    .args(["serve", "--role", "worker", "--id", &id.to_string()])
                    .stderr(Stdio::null())
                    .spawn()
                    .expect("worker starts"),
            )
        })
        .collect();

    line.clear();
    master_err.read_line(&mut line).expect("master ready line");
    assert!(line.contains("mesh ready"), "mesh never came up: {line}");

    let out = run(&[&base[..], &["load", data.to_str().unwrap()]].concat());
    assert!(out.status.success(), "load failed: {out:?}");
    assert!(stdout_of(&out).contains("loaded 15"), "load reply: {out:?}");

    let q = "SELECT ?s ?u WHERE { ?d subOrgOf ?u . ?s memberOf ?d }";
    let out = run(&[&base[..], &["query", q]].concat());
    assert!(out.status.success(), "query failed: {out:?}");
    let text = stdout_of(&out);
    assert!(text.contains("semijoin") && text.contains("Ben\tStanford"), "rows: {text}");

    let out = run(&[&base[..], &["update", "+ Carol memberOf MIT-CS\n- Ben memberOf Stanford-CS"]].concat());
    assert!(out.status.success(), "update failed: {out:?}");
    assert!(stdout_of(&out).contains("applied 2"), "update reply: {out:?}");

    let out = run(&[&base[..], &["query", q]].concat());
    let text = stdout_of(&out);
    assert!(text.contains("Carol\tMIT"), "inserted row visible: {text}");
    assert!(!text.contains("Ben\tStanford"), "deleted row gone: {text}");

    let out = run(&[&base[..], &["metrics"]].concat());
    assert!(out.status.success(), "metrics failed: {out:?}");
    assert!(stdout_of(&out).contains("main"), "metrics text: {out:?}");

    let out = run(&[&base[..], &["shutdown"]].concat());
    assert!(out.status.success(), "shutdown failed: {out:?}");

    // Everyone exits cleanly once told to.
    let mut master = master;
    assert!(master.0.wait().expect("master exit").success());
    for mut w in workers {
        assert!(w.0.wait().expect("worker exit").success());
    }
}
