//! End-to-end runs of the `masfs` binary: exit codes, artifact sets, and
//! rerun determinism. Workloads here are tiny; the heavyweight checks live
//! in the `acceptance` target.

use std::path::Path;
use std::process::{Command, Output};

fn masfs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_masfs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TINY: &str = "costs.models = 2\n\
                    costs.layers_min = 3\n\
                    costs.layers_max = 4\n\
                    tenants.count = 3\n\
                    tenants.target = 0.7\n\
                    trace.horizon = 40000\n\
                    trace.xmin = 500\n\
                    scheduler = fcfs-h\n";

#[test]
fn simulate_writes_the_full_artifact_set_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "sim.cfg", TINY);
    let out_dir = dir.path().join("out");
    let out = masfs(&["--quiet", "--out", out_dir.to_str().unwrap(), "simulate", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in [
        "results.json",
        "results.csv",
        "metrics.json",
        "swarm.csv",
        "sla_store.csv",
        "energy.json",
    ] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    // Heuristic scheduler: zero model overhead in the energy report.
    let energy = std::fs::read_to_string(out_dir.join("energy.json")).unwrap();
    let energy: serde_json::Value = serde_json::from_str(&energy).unwrap();
    assert_eq!(energy["mac_count"], 0);
    assert_eq!(energy["overhead"], 0.0);
}

#[test]
fn replications_suffix_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "sim.cfg",
        &format!("{TINY}replications = 2\n"),
    );
    let out_dir = dir.path().join("out");
    let out = masfs(&["--quiet", "--out", out_dir.to_str().unwrap(), "simulate", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out_dir.join("metrics.json").exists());
    assert!(out_dir.join("metrics_r1.json").exists());
    // Different reps consume different traces.
    let a = std::fs::read(out_dir.join("results.csv")).unwrap();
    let b = std::fs::read(out_dir.join("results_r1.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn config_mistakes_exit_two_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();

    let unknown = write_cfg(dir.path(), "u.cfg", &format!("{TINY}trace.xmax = 9\n"));
    let out = masfs(&["--quiet", "simulate", &unknown]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("trace.xmax"), "{}", stderr(&out));

    let missing = write_cfg(dir.path(), "m.cfg", "tenants.count = 1\ntrace.horizon = 10\n");
    let out = masfs(&["--quiet", "simulate", &missing]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("costs.path"), "{}", stderr(&out));

    let badsched = write_cfg(dir.path(), "s.cfg", &TINY.replace("fcfs-h", "sjf"));
    let out = masfs(&["--quiet", "simulate", &badsched]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sjf"), "{}", stderr(&out));

    let dup = write_cfg(dir.path(), "d.cfg", &format!("{TINY}scheduler = edf-h\n"));
    let out = masfs(&["--quiet", "simulate", &dup]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("duplicate"), "{}", stderr(&out));
}

#[test]
fn runtime_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "r.cfg",
        "costs.models = 2\n\
         tenants.count = 1\n\
         tenants.target = 0.5\n\
         trace.path = no_such_trace.csv\n\
         scheduler = edf-h\n",
    );
    let out = masfs(&["--quiet", "simulate", &cfg]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn compare_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "c.cfg", TINY);
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = masfs(&[
            "--quiet",
            "--out",
            out_dir.to_str().unwrap(),
            "compare",
            &cfg,
            "--schedulers",
            "fcfs-h,edf-h,herald",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let mut blob = Vec::new();
        for f in ["box.csv", "swarm.csv", "comparison.json"] {
            blob.extend(std::fs::read(out_dir.join(f)).unwrap());
        }
        bytes.push(blob);
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn gen_trace_then_simulate_from_files_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let gen_cfg = write_cfg(
        dir.path(),
        "gen.cfg",
        "costs.models = 2\n\
         tenants.count = 3\n\
         tenants.target = 0.7\n\
         trace.horizon = 40000\n\
         trace.xmin = 500\n",
    );
    let gen_dir = dir.path().join("gen");
    let out = masfs(&["--quiet", "--out", gen_dir.to_str().unwrap(), "gen-trace", &gen_cfg]);
    assert!(out.status.success(), "{}", stderr(&out));

    let sim_cfg = write_cfg(
        dir.path(),
        "fromfiles.cfg",
        &format!(
            "costs.path = {gen}/costs.csv\n\
             tenants.path = {gen}/tenants.csv\n\
             trace.path = {gen}/trace.csv\n\
             scheduler = edf-h\n",
            gen = gen_dir.to_str().unwrap()
        ),
    );
    let out_dir = dir.path().join("out");
    let out = masfs(&["--quiet", "--out", out_dir.to_str().unwrap(), "simulate", &sim_cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out_dir.join("metrics.json").exists());
}

#[test]
fn train_then_evaluate_with_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "t.cfg",
        "costs.models = 1\n\
         costs.layers_min = 3\n\
         costs.layers_max = 3\n\
         tenants.count = 2\n\
         tenants.target = 0.6\n\
         trace.horizon = 20000\n\
         trace.xmin = 800\n\
         scheduler = rl-baseline\n\
         train.episodes = 2\n\
         train.n_h = 8\n\
         train.batch = 4\n",
    );
    let out_dir = dir.path().join("out");
    let out = masfs(&["--quiet", "--out", out_dir.to_str().unwrap(), "train", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = out_dir.join("checkpoint.bin");
    assert!(ckpt.exists());
    assert!(out_dir.join("curve.csv").exists());

    let eval_dir = dir.path().join("eval");
    let out = masfs(&[
        "--quiet",
        "--out",
        eval_dir.to_str().unwrap(),
        "evaluate",
        &cfg,
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let energy = std::fs::read_to_string(eval_dir.join("energy.json")).unwrap();
    let energy: serde_json::Value = serde_json::from_str(&energy).unwrap();
    assert!(energy["mac_count"].as_u64().unwrap() > 0);
}
