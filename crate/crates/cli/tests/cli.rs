use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn asset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/configs").join(name)
}

fn coevo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coevo")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_variant(dir: &Path, name: &str, source: &str, from: &str, to: &str) -> PathBuf {
    let text = fs::read_to_string(asset(source)).unwrap();
    assert!(text.contains(from), "{from} not in {source}");
    let path = dir.join(name);
    fs::write(&path, text.replace(from, to)).unwrap();
    path
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = asset("reference.json");
    let outs = [dir.path().join("a"), dir.path().join("b")];
    for out in &outs {
        let o = coevo(&["simulate", "--config", s(&config), "--mode", "coevolve", "--seed", "42", "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["report.json", "timeline.csv", "events.jsonl"] {
        assert_eq!(fs::read(outs[0].join(name)).unwrap(), fs::read(outs[1].join(name)).unwrap(), "{name}");
    }
}

#[test]
fn simulate_replays_generated_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = asset("reference.json");
    let trace = dir.path().join("trace.jsonl");
    let again = dir.path().join("again.jsonl");
    for t in [&trace, &again] {
        assert_eq!(code(&coevo(&["gen-trace", "--config", s(&config), "--seed", "9", "--out", s(t)])), 0);
    }
    assert_eq!(fs::read(&trace).unwrap(), fs::read(&again).unwrap());

    let (live, replay) = (dir.path().join("live"), dir.path().join("replay"));
    let base = ["simulate", "--config", s(&config), "--mode", "independent", "--seed", "9"];
    assert_eq!(code(&coevo(&[&base[..], &["--out", s(&live)]].concat())), 0);
    assert_eq!(code(&coevo(&[&base[..], &["--trace", s(&trace), "--out", s(&replay)]].concat())), 0);
    assert_eq!(fs::read(live.join("report.json")).unwrap(), fs::read(replay.join("report.json")).unwrap());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = write_variant(
        dir.path(),
        "bad.json",
        "reference.json",
        "\"bandwidth_bytes_per_s\": 2000.0",
        "\"bandwidth_bytes_per_s\": -5.0",
    );
    let o = coevo(&["simulate", "--config", s(&bad), "--mode", "coevolve", "--seed", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("network.bandwidth_bytes_per_s"));
    assert!(!out.exists());

    let unknown =
        write_variant(dir.path(), "unknown.json", "reference.json", "\"seed\": 42", "\"seed\": 42, \"gpu_count\": 2");
    assert_eq!(code(&coevo(&["gen-trace", "--config", s(&unknown), "--seed", "1", "--out", s(&out)])), 2);

    let missing = dir.path().join("missing.json");
    assert_eq!(code(&coevo(&["gen-trace", "--config", s(&missing), "--seed", "1", "--out", s(&out)])), 2);

    assert_eq!(
        code(&coevo(&[
            "simulate",
            "--config",
            s(&asset("reference.json")),
            "--mode",
            "solo",
            "--seed",
            "1",
            "--out",
            s(&out)
        ])),
        2
    );
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = coevo(&[
        "gen-trace",
        "--config",
        s(&asset("reference.json")),
        "--seed",
        "1",
        "--out",
        s(&blocker.join("t.jsonl")),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("file"));
}

#[test]
fn plan_writes_groups() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = coevo(&["plan", "--snapshot", s(&asset("snapshot.json")), "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.starts_with('['));
    assert!(text.contains("\"jobs\": [\n      0,\n      1\n    ]"));
}

#[test]
fn plan_rejects_infeasible_singleton_and_bad_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plan.json");
    let huge = write_variant(
        dir.path(),
        "huge.json",
        "snapshot.json",
        "\"mem_model_mb\": 3000.0",
        "\"mem_model_mb\": 30000.0",
    );
    let o = coevo(&["plan", "--snapshot", s(&huge), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());

    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{\"jobs\": 3}").unwrap();
    assert_eq!(code(&coevo(&["plan", "--snapshot", s(&broken), "--out", s(&out)])), 2);
}

#[test]
fn sweep_writes_table_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = coevo(&["sweep", "--config", s(&asset("reference.json")), "--seeds", "0..1", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("sweep.json")).unwrap();
    assert_eq!(table.matches("\"margin\"").count(), 2);
    assert!(table.find("\"seed\": 0").unwrap() < table.find("\"seed\": 1").unwrap());
    for seed in 0..2 {
        for mode in ["coevolve", "independent"] {
            assert!(dir.path().join(format!("seed-{seed}/{mode}/report.json")).is_file());
        }
    }
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 2);
    assert_eq!(
        code(&coevo(&["sweep", "--config", s(&asset("reference.json")), "--seeds", "3..1", "--out", s(dir.path())])),
        2
    );
}
