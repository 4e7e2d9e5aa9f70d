use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_coldstart-al"));
    c.env_remove("COLDSTART_AL_SEED");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn generate(dir: &Path, train: usize, test: usize) {
    let o = run(
        dir,
        &["generate", "--out-dir", "d", "--train-size", &train.to_string(), "--test-size", &test.to_string()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn write_config(dir: &Path, body: &str) {
    let head = "[data]\npath = \"d/train.jsonl\"\ntest_path = \"d/test.jsonl\"\n";
    fs::write(dir.join("c.toml"), format!("{head}{body}")).unwrap();
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
    let o = run(dir.path(), &["--version"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn bad_flags_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["simulate"])), 1);
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 1);
}

#[test]
fn unknown_strategy_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 60, 20);
    write_config(dir.path(), "[run]\nstrategies = [\"coreset\"]\nk = 5\niterations = 1\nseeds = [0]\n");
    let o = run(dir.path(), &["simulate", "--config", "c.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("coreset"), "{}", stderr(&o));

    let o = run(dir.path(), &["sample", "--data", "d/train.jsonl", "--k", "3", "--out", "s.txt", "--strategy", "coreset"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unknown_config_key_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 60, 20);
    write_config(dir.path(), "[run]\nkk = 5\n");
    let o = run(dir.path(), &["simulate", "--config", "c.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("kk"), "{}", stderr(&o));
}

#[test]
fn warm_start_strategy_cannot_sample_cold() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 60, 20);
    for s in ["entropy", "badge", "ft-emb-km"] {
        let o = run(dir.path(), &["sample", "--data", "d/train.jsonl", "--k", "3", "--out", "s.txt", "--strategy", s]);
        assert_eq!(code(&o), 1, "{s}");
        assert!(stderr(&o).contains("cannot run cold"), "{}", stderr(&o));
    }
}

#[test]
fn missing_data_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["sample", "--data", "nope.jsonl", "--k", "3", "--out", "s.txt"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nope.jsonl"));
}

#[test]
fn analyze_on_empty_dir_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("empty")).unwrap();
    let o = run(dir.path(), &["analyze", "--results", "empty"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no run results"));
}

#[test]
fn minimal_random_run_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 80, 20);
    write_config(
        dir.path(),
        "[run]\nstrategies = [\"random\"]\nk = 10\niterations = 1\nseeds = [3]\n[output]\ndir = \"out\"\n",
    );
    let o = run(dir.path(), &["simulate", "--config", "c.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 2, "{csv}");
    assert!(rows[0].starts_with("strategy,seed,iteration,n_labeled,accuracy,micro_f1,g_d,g_u"));
    assert!(rows[1].starts_with("random,3,1,10,"));
    let run_json = fs::read_to_string(dir.path().join("out/runs/random-seed3.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&run_json).unwrap();
    assert_eq!(v["records"].as_array().unwrap().len(), 1);
}

#[test]
fn reruns_are_byte_identical_without_timings() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 120, 40);
    write_config(
        dir.path(),
        "[run]\nstrategies = [\"random\", \"alps\", \"badge\"]\nk = 10\niterations = 2\nseeds = [0, 1]\n",
    );
    let files = ["results.csv", "aggregate.csv", "aggregate.json", "diagnostics.csv", "summary.txt"];
    let a = run(dir.path(), &["simulate", "--config", "c.toml", "--out", "a", "--no-timings", "--jobs", "1"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    let b = run(dir.path(), &["simulate", "--config", "c.toml", "--out", "b", "--no-timings", "--jobs", "3"]);
    assert_eq!(code(&b), 0, "{}", stderr(&b));
    for f in files {
        let x = fs::read(dir.path().join("a").join(f)).unwrap();
        let y = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(x == y, "{f} differs between reruns");
    }

    // Re-running from the manifest reproduces the same results.
    let c = run(dir.path(), &["simulate", "--manifest", "a/manifest.json", "--out", "c", "--no-timings"]);
    assert_eq!(code(&c), 0, "{}", stderr(&c));
    for f in files {
        let x = fs::read(dir.path().join("a").join(f)).unwrap();
        let y = fs::read(dir.path().join("c").join(f)).unwrap();
        assert!(x == y, "{f} differs on manifest rerun");
    }

    // Analyze rebuilds the aggregate from the per-run files.
    let o = run(dir.path(), &["analyze", "--results", "a"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read(dir.path().join("a/aggregate.csv")).unwrap(),
        fs::read(dir.path().join("b/aggregate.csv")).unwrap()
    );
}

#[test]
fn manifest_rejects_changed_data() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 60, 20);
    write_config(dir.path(), "[run]\nstrategies = [\"random\"]\nk = 5\niterations = 1\nseeds = [0]\n");
    let o = run(dir.path(), &["simulate", "--config", "c.toml", "--out", "a"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["datasets"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["datasets"][0]["sha256"].as_str().unwrap().len(), 64);

    let mut text = fs::read_to_string(dir.path().join("d/train.jsonl")).unwrap();
    text = text.replacen("topic0", "topic1", 1);
    fs::write(dir.path().join("d/train.jsonl"), text).unwrap();
    let o = run(dir.path(), &["simulate", "--manifest", "a/manifest.json", "--out", "b"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("changed"), "{}", stderr(&o));
}

#[test]
fn seed_env_fallback_matches_flag() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 100, 20);
    let base = ["sample", "--data", "d/train.jsonl", "--k", "8"];
    let o = run(dir.path(), &[&base[..], &["--seed", "11", "--out", "flag.txt"]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = bin()
        .current_dir(dir.path())
        .env("COLDSTART_AL_SEED", "11")
        .args([&base[..], &["--out", "env.txt"]].concat())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let flag = fs::read_to_string(dir.path().join("flag.txt")).unwrap();
    assert_eq!(flag, fs::read_to_string(dir.path().join("env.txt")).unwrap());
    assert_eq!(flag.lines().count(), 8);

    let o = bin()
        .current_dir(dir.path())
        .env("COLDSTART_AL_SEED", "eleven")
        .args([&base[..], &["--out", "bad.txt"]].concat())
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn sample_with_exported_nlls_matches_builtin_model() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 150, 20);
    let o = run(dir.path(), &["train-lm", "--data", "d/train.jsonl", "--out", "nll.jsonl"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let nll = fs::read_to_string(dir.path().join("nll.jsonl")).unwrap();
    assert_eq!(nll.lines().count(), 150);
    let first: serde_json::Value = serde_json::from_str(nll.lines().next().unwrap()).unwrap();
    for key in ["id", "l", "real_len", "nll"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }

    let common = ["sample", "--data", "d/train.jsonl", "--k", "12", "--seed", "5"];
    let o = run(dir.path(), &[&common[..], &["--out", "builtin.txt"]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(dir.path(), &[&common[..], &["--nll", "nll.jsonl", "--out", "external.txt"]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(dir.path().join("builtin.txt")).unwrap(),
        fs::read_to_string(dir.path().join("external.txt")).unwrap()
    );
}

#[test]
fn dump_embeddings_round_trips_as_features() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 90, 20);
    let o = run(
        dir.path(),
        &["dump-embeddings", "--data", "d/train.jsonl", "--kind", "feature", "--feature-dim", "32", "--out", "f.jsonl", "--cluster-k", "4", "--report", "r.txt"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dump = fs::read_to_string(dir.path().join("f.jsonl")).unwrap();
    assert_eq!(dump.lines().count(), 90);
    let rec: serde_json::Value = serde_json::from_str(dump.lines().next().unwrap()).unwrap();
    assert_eq!(rec["vec"].as_array().unwrap().len(), 32);
    assert!(fs::read_to_string(dir.path().join("r.txt")).unwrap().contains("silhouette"));

    // The dumped vectors are a valid sentence-embedding input.
    let o = run(
        dir.path(),
        &["sample", "--data", "d/train.jsonl", "--strategy", "emb-km", "--k", "6", "--embeddings", "f.jsonl", "--out", "s.txt"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(dir.path().join("s.txt")).unwrap().lines().count(), 6);
}

#[test]
fn malformed_interchange_is_reported_with_line() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 40, 10);
    fs::write(dir.path().join("bad.jsonl"), "{\"id\":\"tr0\",\"vec\":[1.0]}\n{\"id\":\"tr1\",\"vec\":[1.0,2.0]}\n").unwrap();
    let o = run(
        dir.path(),
        &["sample", "--data", "d/train.jsonl", "--strategy", "emb-km", "--k", "3", "--embeddings", "bad.jsonl", "--out", "s.txt"],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains(":2:"), "{}", stderr(&o));
}
