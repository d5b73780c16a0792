use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn safelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_safelab")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn summary_scores(path: &Path) -> Vec<(String, f64)> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            (cols[0].to_string(), cols[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn simulate_creates_the_output_dir_and_safeopt_beats_random() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/run");
    let o = safelab(&["simulate", "--experiment", "1", "--agent", "safeopt,random", "--runs", "10", "--out", arg(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("records.jsonl").is_file());
    let scores = summary_scores(&out.join("summary.csv"));
    let get = |a: &str| scores.iter().find(|(n, _)| n == a).unwrap().1;
    assert!(get("safeopt") > get("random"), "{scores:?}");
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("violation rate"));
}

#[test]
fn analyses_write_csv_and_text_reports() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(safelab(&["simulate", "--agent", "tree2", "--runs", "4", "--out", arg(&sim)]).status.success());
    let records = sim.join("records.jsonl");
    for analysis in ["logistic", "tree", "distance"] {
        let out = dir.path().join(analysis);
        let o = safelab(&["analyze", arg(&records), analysis, "--out", arg(&out)]);
        assert!(o.status.success(), "{analysis}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join(format!("{analysis}.csv")).is_file());
        assert!(out.join(format!("{analysis}.txt")).is_file());
    }
    let distance = std::fs::read_to_string(dir.path().join("distance/distance.csv")).unwrap();
    assert!(distance.starts_with("condition,distance,count,empirical,random_reference"));
}

#[test]
fn depth_one_tree_on_tree2_records_splits_on_safety() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(safelab(&["simulate", "--experiment", "2", "--agent", "tree2", "--runs", "3", "--out", arg(&sim)]).status.success());
    let out = dir.path().join("tree");
    let o = safelab(&["analyze", arg(&sim.join("records.jsonl")), "tree", "--depth", "1", "--out", arg(&out)]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(out.join("tree.csv")).unwrap();
    for group in ["normal", "safe"] {
        assert!(csv.contains(&format!("{group},root,split,p_safe,")), "{csv}");
    }
}

#[test]
fn logistic_on_tree1_records_has_positive_set_effects() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(safelab(&["simulate", "--experiment", "2", "--agent", "tree1", "--runs", "3", "--out", arg(&sim)]).status.success());
    let records = sim.join("records.jsonl");
    let out = dir.path().join("logistic");
    let o = safelab(&["analyze", arg(&records), "logistic", "--out", arg(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("logistic.csv")).unwrap();
    let estimate = |group: &str, term: &str| -> f64 {
        let line = csv.lines().find(|l| l.starts_with(&format!("{group},{term},"))).unwrap();
        line.split(',').nth(2).unwrap().parse().unwrap()
    };
    assert!(estimate("normal", "safe") > 0.0 && estimate("normal", "maximizer") > 0.0, "{csv}");

    let strict = safelab(&["analyze", arg(&records), "logistic", "--no-firth", "--out", arg(&out)]);
    assert_eq!(strict.status.code(), Some(3), "{}", String::from_utf8_lossy(&strict.stderr));
}

#[test]
fn malformed_record_line_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(safelab(&["simulate", "--agent", "random", "--runs", "1", "--out", arg(&sim)]).status.success());
    let text = std::fs::read_to_string(sim.join("records.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = "{\"subject\": broken";
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let o = safelab(&["analyze", arg(&bad), "distance", "--out", arg(&dir.path().join("a"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    for args in [
        vec!["simulate", "--agent", "greedy"],
        vec!["simulate", "--experiment", "3", "--out", arg(&out)],
        vec!["simulate", "--runs", "0", "--out", arg(&out)],
        vec!["frobnicate"],
        vec!["analyze", "missing.jsonl"],
    ] {
        assert_eq!(safelab(&args).status.code(), Some(1), "{args:?}");
    }
    let o = safelab(&["analyze", arg(&dir.path().join("missing.jsonl")), "tree"]);
    assert_eq!(o.status.code(), Some(2));
}

fn get(port: u16, path: &str) -> Option<String> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut response = String::new();
    stream.read_to_string(&mut response).ok()?;
    Some(response)
}

#[test]
fn serve_answers_and_shuts_down_on_interrupt() {
    let dir = tempfile::tempdir().unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let log = dir.path().join("sessions.jsonl");
    let mut child = Command::new(env!("CARGO_BIN_EXE_safelab"))
        .args(["serve", "--port", &port.to_string(), "--log", arg(&log)])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let response = loop {
        if let Some(r) = get(port, "/sessions/unknown/state") {
            break r;
        }
        assert!(Instant::now() < deadline, "server did not come up");
        std::thread::sleep(Duration::from_millis(50));
    };
    assert!(response.starts_with("HTTP/1.1 404"), "{response}");

    let busy = safelab(&["serve", "--port", &port.to_string(), "--log", arg(&dir.path().join("other.jsonl"))]);
    assert_eq!(busy.status.code(), Some(2));

    assert!(Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap().success());
    let deadline = Instant::now() + Duration::from_secs(20);
    let status = loop {
        if let Some(s) = child.try_wait().unwrap() {
            break s;
        }
        assert!(Instant::now() < deadline, "server ignored SIGINT");
        std::thread::sleep(Duration::from_millis(50));
    };
    assert!(status.success());
    assert!(log.exists());
}
