use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dcs_core::scenario::Scenario;
use dcs_core::violations::ViolationMode;

fn dcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcs")).args(args).output().expect("dcs runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn simulate(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    dcs(&args)
}

#[test]
fn simulate_writes_manifest_and_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(tmp.path(), &["--scenario", "concurrent", "--seed", "3"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.starts_with("seed: 3\n"), "{text}");
    assert!(text.contains("contributions: 2"));
    for f in ["manifest.toml", "digest.txt", "contributions.log", "trace.log", "states.tsv", "dag.txt", "dag.dot"] {
        assert!(tmp.path().join(f).is_file(), "missing {f}");
    }
    let manifest = fs::read_to_string(tmp.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 3"));
    assert!(manifest.contains("command = \"simulate\""));
}

#[test]
fn seed_defaults_to_zero_and_is_printed() {
    let out = dcs(&["simulate"]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("seed: 0\n"));
}

#[test]
fn missing_scenario_is_an_error() {
    let out = dcs(&["simulate", "--scenario", "no-such-scenario.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario not found"));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        assert!(simulate(dir.path(), &["--scenario", "random", "--seed", "11"]).status.success());
    }
    for f in ["digest.txt", "contributions.log", "trace.log", "states.tsv", "dag.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn replay_reproduces_the_recorded_run() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(simulate(tmp.path(), &["--scenario", "random", "--seed", "5"]).status.success());
    let out = dcs(&["replay", tmp.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("REPLAY OK"));

    // tampering with an artifact is noticed
    let log = tmp.path().join("states.tsv");
    let mut body = fs::read_to_string(&log).unwrap();
    body.push_str("# edited\n");
    fs::write(&log, body).unwrap();
    let out = dcs(&["replay", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("REPLAY MISMATCH"));
}

#[test]
fn verify_accepts_a_lawful_log() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(simulate(tmp.path(), &["--scenario", "random"]).status.success());
    let out = dcs(&["verify", tmp.path().join("contributions.log").to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("OK: sealed DAG"));
}

#[test]
fn verify_reports_forged_cycles() {
    let tmp = tempfile::tempdir().unwrap();
    let run = simulate(tmp.path(), &["--mode", "causal-forgery"]);
    assert!(run.status.success(), "{}", stdout(&run));
    let out = dcs(&["verify", tmp.path().join("contributions.log").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("CycleDetected"), "{}", stdout(&out));
}

#[test]
fn verify_compares_two_logs() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(simulate(a.path(), &["--scenario", "random", "--seed", "1"]).status.success());
    assert!(simulate(b.path(), &["--scenario", "random", "--seed", "2"]).status.success());
    assert!(simulate(c.path(), &["--scenario", "concurrent"]).status.success());
    let log = |d: &tempfile::TempDir| d.path().join("contributions.log").to_str().unwrap().to_string();

    let same = dcs(&["verify", &log(&a), &log(&b)]);
    assert!(same.status.success());
    assert!(stdout(&same).contains("ISOMORPHIC\nobservationally equivalent"));

    let different = dcs(&["verify", &log(&a), &log(&c)]);
    assert_eq!(different.status.code(), Some(1));
    assert!(stdout(&different).contains("NOT ISOMORPHIC"));
    assert!(stdout(&different).contains("distinguished by"));
}

#[test]
fn report_commands_pass_their_claims() {
    let cases: [&[&str]; 4] = [
        &["ambiguity", "--seeds", "5"],
        &["separation"],
        &["prop1-check", "--seeds", "20"],
        &["policy-matrix", "--seeds", "4", "--tasks", "60"],
    ];
    for args in cases {
        let out = dcs(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let text = stdout(&out);
        assert!(text.contains("PASS") && !text.contains("FAIL"), "{args:?}\n{text}");
        assert!(text.contains("manifest="), "tsv goes to stdout without --out");
    }
    assert!(stdout(&dcs(&["separation"])).contains("verdict: values equal, structures non-isomorphic"));
}

#[test]
fn performance_writes_tables_and_q_values() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dcs(&["performance", "--tasks", "100", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["manifest.toml", "performance.txt", "performance.tsv", "qtable-static.txt", "qtable-qlearning.txt"] {
        assert!(tmp.path().join(f).is_file(), "missing {f}");
    }
    let tsv = fs::read_to_string(tmp.path().join("performance.tsv")).unwrap();
    assert!(tsv.starts_with("# "));
    assert!(tsv.lines().nth(1).unwrap().contains('\t'));
}

#[test]
fn config_overrides_reach_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("over.toml");
    fs::write(&cfg, "[network]\nduplicate = 0.25\n[policy]\ndispatch = { batching = 2 }\ndelivery = \"lifo\"\n")
        .unwrap();
    let out_dir = tmp.path().join("run");
    let out = simulate(&out_dir, &["--scenario", "random", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(out_dir.join("manifest.toml")).unwrap();
    assert!(manifest.contains("duplicate = 0.25"), "{manifest}");
    assert!(stdout(&out).contains("policy: batching(2)/lifo"), "{}", stdout(&out));

    fs::write(&cfg, "unknown = 1\n").unwrap();
    let out = dcs(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_scenarios_match_the_builtins() {
    let dir = scenarios_dir();
    let load = |name: &str| Scenario::load(&dir.join(format!("{name}.toml"))).unwrap();
    assert_eq!(load("concurrent"), Scenario::concurrent());
    assert_eq!(load("causal"), Scenario::causal());
    for mode in ViolationMode::ALL {
        assert_eq!(load(mode.as_str()), mode.canonical_scenario(), "{}", mode.as_str());
    }
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let mut args = vec!["simulate", "--scenario", path.to_str().unwrap()];
        // violation scenarios only make sense with their injector
        let stem = path.file_stem().unwrap().to_str().unwrap();
        if stem.parse::<ViolationMode>().is_ok() {
            args.extend(["--mode", stem]);
        }
        let out = dcs(&args);
        assert!(out.status.success(), "{}: {}", path.display(), stdout(&out));
    }
}
