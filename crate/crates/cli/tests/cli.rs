use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use serde_json::Value;
use tempfile::TempDir;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

fn setpoint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_setpoint"))
        .args(args)
        .output()
        .expect("run setpoint")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all = vec!["--out", dir.to_str().unwrap()];
    all.extend_from_slice(args);
    setpoint(&all)
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn num(v: &Value) -> f64 {
    match v {
        Value::String(s) => s.parse().unwrap(),
        other => other.as_f64().unwrap(),
    }
}

#[test]
fn help_exits_zero_and_unknown_flags_exit_one() {
    assert_eq!(code(&setpoint(&["--help"])), 0);
    assert_eq!(code(&setpoint(&["simulate", "--no-such-flag"])), 1);
    assert_eq!(code(&setpoint(&["fairness", "--format", "xml"])), 1);
}

#[test]
fn simulate_writes_outputs_and_manifest() {
    let dir = TempDir::new().unwrap();
    let config = fixture("scenarios/standard_n3.toml");
    let out = run_in(
        dir.path(),
        &["simulate", "--config", config.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in [
        "result.json",
        "rounds.csv",
        "occupants.csv",
        "manifest.json",
    ] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["seed_override"], false);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["scenario_hash"].is_string());
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
    let rounds = std::fs::read_to_string(dir.path().join("rounds.csv")).unwrap();
    let result = read_json(&dir.path().join("result.json"));
    assert_eq!(
        rounds.lines().count(),
        result["rounds"].as_array().unwrap().len() + 1
    );
}

#[test]
fn format_flag_limits_outputs() {
    let dir = TempDir::new().unwrap();
    let config = fixture("scenarios/standard_n3.toml");
    let out = run_in(
        dir.path(),
        &[
            "simulate",
            "--format",
            "csv",
            "--config",
            config.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("rounds.csv").exists());
    assert!(!dir.path().join("result.json").exists());
}

#[test]
fn missing_config_exits_one_and_names_the_path() {
    let dir = TempDir::new().unwrap();
    let out = run_in(
        dir.path(),
        &["simulate", "--config", "no/such/scenario.toml"],
    );
    assert_eq!(code(&out), 1);
    assert!(
        stderr(&out).contains("no/such/scenario.toml"),
        "{}",
        stderr(&out)
    );
    let out = run_in(dir.path(), &["fairness"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--config"));
}

#[test]
fn identical_runs_produce_identical_files() {
    let config = fixture("scenarios/skewed_warm.toml");
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        assert_eq!(
            code(&run_in(
                dir.path(),
                &["simulate", "--config", config.to_str().unwrap()]
            )),
            0
        );
    }
    for name in ["result.json", "rounds.csv", "occupants.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn seed_override_changes_the_run_and_is_recorded() {
    let config = fixture("scenarios/skewed_warm.toml");
    let base = TempDir::new().unwrap();
    let other = TempDir::new().unwrap();
    assert_eq!(
        code(&run_in(
            base.path(),
            &["simulate", "--config", config.to_str().unwrap()]
        )),
        0
    );
    let out = run_in(
        other.path(),
        &[
            "simulate",
            "--seed",
            "7",
            "--config",
            config.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let manifest = read_json(&other.path().join("manifest.json"));
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["seed_override"], true);
    assert_ne!(
        std::fs::read(base.path().join("rounds.csv")).unwrap(),
        std::fs::read(other.path().join("rounds.csv")).unwrap()
    );
}

#[test]
fn fairness_symmetric_gives_equal_shares() {
    let dir = TempDir::new().unwrap();
    let config = fixture("priors/symmetric_n3.json");
    let out = run_in(
        dir.path(),
        &["fairness", "--config", config.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let solution = read_json(&dir.path().join("fairness.json"));
    for a in solution["params"]["alpha"].as_array().unwrap() {
        assert!((num(a) - 1.0 / 3.0).abs() < 1e-6, "{a}");
    }
    for (i, row) in solution["params"]["beta"]
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
    {
        for (j, b) in row.as_array().unwrap().iter().enumerate() {
            let want = if i == j { 0.0 } else { 0.5 };
            assert!((num(b) - want).abs() < 1e-6, "beta[{i}][{j}] = {b}");
        }
    }
}

#[test]
fn fairness_asymmetric_pair_matches_the_frozen_grid_oracle() {
    let dir = TempDir::new().unwrap();
    let config = fixture("priors/asymmetric_n2.json");
    let out = run_in(
        dir.path(),
        &["fairness", "--config", config.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let solution = read_json(&dir.path().join("fairness.json"));
    let oracle = read_json(&fixture("audit/asymmetric_n2_fairness_oracle.json"));
    assert!((num(&solution["params"]["alpha"][0]) - num(&oracle["alpha_1"])).abs() < 1e-4);
    assert!((num(&solution["sum_variance"]) - num(&oracle["sum_variance"])).abs() < 1e-6);
}

#[test]
fn fairness_infeasible_exits_three_with_outputs() {
    let dir = TempDir::new().unwrap();
    let config = fixture("priors/infeasible_n2.json");
    let out = run_in(
        dir.path(),
        &["fairness", "--config", config.to_str().unwrap()],
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert_eq!(
        read_json(&dir.path().join("fairness.json"))["solver_status"],
        "infeasible"
    );
    assert_eq!(
        read_json(&dir.path().join("manifest.json"))["status"],
        "infeasible"
    );
}

#[test]
fn audit_passes_on_shipped_fixtures() {
    for rel in [
        "priors/asymmetric_n2.json",
        "priors/symmetric_n3.json",
        "scenarios/skewed_cool_n2.toml",
    ] {
        let dir = TempDir::new().unwrap();
        let config = fixture(rel);
        let out = run_in(
            dir.path(),
            &[
                "audit",
                "--samples",
                "2000",
                "--config",
                config.to_str().unwrap(),
            ],
        );
        assert_eq!(code(&out), 0, "{rel}: {}", stderr(&out));
        assert!(dir.path().join("audit.json").exists());
    }
}

#[test]
fn audit_fails_with_corrupted_redistribution() {
    let dir = TempDir::new().unwrap();
    let config = fixture("priors/asymmetric_n2.json");
    let out = run_in(
        dir.path(),
        &[
            "audit",
            "--corrupt-beta",
            "--config",
            config.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let report = read_json(&dir.path().join("audit.json"));
    assert!(report["budget"]["violations"].as_u64().unwrap() > 0);
    assert_eq!(
        read_json(&dir.path().join("manifest.json"))["status"],
        "audit_failed"
    );
}

#[test]
fn audit_interim_table_matches_the_frozen_enumeration() {
    let dir = TempDir::new().unwrap();
    let config = fixture("priors/asymmetric_n2.json");
    let out = run_in(
        dir.path(),
        &[
            "audit",
            "--params",
            "standard",
            "--config",
            config.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_json(&dir.path().join("audit.json"));
    let oracle = read_json(&fixture("audit/asymmetric_n2_interim_oracle.json"));
    let got = report["interim"].as_array().unwrap();
    let want = oracle["interim"].as_array().unwrap();
    assert_eq!(got.len(), want.len());
    for (g, w) in got
        .iter()
        .flat_map(|r| r.as_array().unwrap())
        .zip(want.iter().flat_map(|r| r.as_array().unwrap()))
    {
        for (x, y) in g.as_array().unwrap().iter().zip(w.as_array().unwrap()) {
            assert!((num(x) - num(y)).abs() < 1e-12, "{x} vs {y}");
        }
    }
}

#[test]
fn sweep_then_export_gives_two_columns() {
    let dir = TempDir::new().unwrap();
    let config = fixture("priors/price_sweep_n3.json");
    let out = run_in(dir.path(), &["sweep", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let exported = TempDir::new().unwrap();
    let sweep = dir.path().join("price_sweep.json");
    let out = run_in(
        exported.path(),
        &["export", "--config", sweep.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(exported.path().join("price_sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "price_per_kwh,expected_net_benefit");
    assert_eq!(lines.len(), 11);
    let benefits: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 2));
    assert!(benefits.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn export_of_empty_input_is_header_only() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "").unwrap();
    let out_dir = dir.path().join("out");
    let out = run_in(
        &out_dir,
        &[
            "export",
            "--kind",
            "price-sweep",
            "--config",
            empty.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        std::fs::read_to_string(out_dir.join("price_sweep.csv")).unwrap(),
        "price_per_kwh,expected_net_benefit\n"
    );
    assert_eq!(
        code(&run_in(
            &out_dir,
            &["export", "--config", empty.to_str().unwrap()]
        )),
        1
    );
}

#[test]
fn export_of_malformed_input_names_the_file() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("broken.json");
    std::fs::write(&bad, "{\"points\": [oops").unwrap();
    let out = run_in(
        &dir.path().join("out"),
        &["export", "--config", bad.to_str().unwrap()],
    );
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(
        err.contains("broken.json") && err.contains("parse error"),
        "{err}"
    );
}

#[test]
fn compare_reports_every_group() {
    let dir = TempDir::new().unwrap();
    let config = fixture("scenarios/skewed_warm.toml");
    let out = run_in(
        dir.path(),
        &[
            "compare",
            "--groups",
            "3",
            "--config",
            config.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_json(&dir.path().join("baseline.json"));
    assert_eq!(report["groups"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(dir.path().join("baseline.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
}

struct Server {
    child: std::process::Child,
    addr: String,
}

impl Server {
    fn start(data_dir: &Path, out: &Path) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_setpoint"))
            .args([
                "--out",
                out.to_str().unwrap(),
                "serve",
                "--port",
                "0",
                "--data-dir",
            ])
            .arg(data_dir)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn server");
        let mut line = String::new();
        BufReader::new(child.stdout.as_mut().unwrap())
            .read_line(&mut line)
            .unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on http://")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        Self { child, addr }
    }

    fn request(&self, method: &str, path: &str, body: Option<&str>) -> (u16, Value) {
        let mut stream = TcpStream::connect(&self.addr).unwrap();
        stream
            .set_read_timeout(Some(Duration::from_secs(10)))
            .unwrap();
        let body = body.unwrap_or("");
        write!(
            stream,
            "{method} {path} HTTP/1.1\r\nHost: {}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
            self.addr,
            body.len()
        )
        .unwrap();
        let mut response = String::new();
        stream.read_to_string(&mut response).unwrap();
        let status = response.split_whitespace().nth(1).unwrap().parse().unwrap();
        let (_, payload) = response.split_once("\r\n\r\n").unwrap();
        (status, serde_json::from_str(payload).unwrap_or(Value::Null))
    }

    fn terminate(mut self) -> std::process::ExitStatus {
        let pid = self.child.id().to_string();
        assert!(Command::new("kill")
            .args(["-TERM", &pid])
            .status()
            .unwrap()
            .success());
        self.child.wait().unwrap()
    }
}

#[test]
fn invalid_port_exits_one() {
    let out = setpoint(&["serve", "--port", "99999"]);
    assert_eq!(code(&out), 1);
}

#[cfg(unix)]
#[test]
fn serve_answers_and_flushes_the_log_on_sigterm() {
    let data = TempDir::new().unwrap();
    let out = TempDir::new().unwrap();
    let server = Server::start(data.path(), out.path());
    let (status, health) = server.request("GET", "/health", None);
    assert_eq!(status, 200);
    assert_eq!(health["status"], "ok");
    let (status, created) = server.request(
        "POST",
        "/sessions",
        Some(r#"{"occupancy": ["a", "b"], "initial_temp": 24}"#),
    );
    assert_eq!(status, 201, "{created}");
    let id = created["session_id"].as_str().unwrap().to_string();
    let admin = created["admin_token"].as_str().unwrap().to_string();
    let mut stream = TcpStream::connect(&server.addr).unwrap();
    write!(
        stream,
        "POST /sessions/{id}/admin/open-round HTTP/1.1\r\nHost: x\r\nAuthorization: Bearer {admin}\r\nConnection: close\r\nContent-Length: 0\r\n\r\n"
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    let (_, events) = server.request("GET", &format!("/sessions/{id}/events"), None);
    let last_seq = events["last_seq"].as_u64().unwrap();

    assert!(server.terminate().success());
    let log = data.path().join(format!("{id}.jsonl"));
    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.ends_with('\n'));
    assert_eq!(text.lines().count() as u64, last_seq);

    let replayed = TempDir::new().unwrap();
    let out = run_in(
        replayed.path(),
        &["replay", "--config", log.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        read_json(&replayed.path().join("state.json"))["last_seq"],
        last_seq
    );
}
