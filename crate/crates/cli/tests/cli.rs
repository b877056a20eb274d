use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn segar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segar"))
        .args(args)
        .env_remove("SEGAR_DATA_DIR")
        .output()
        .expect("run segar")
}

fn ok(args: &[&str]) -> Output {
    let out = segar(args);
    assert!(
        out.status.success(),
        "segar {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file under `dir` except manifests, as (relative path, bytes).
fn data_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "manifest.json" {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn shifted_template(dir: &Path, delta: f64) -> PathBuf {
    let text = format!(
        r#"{{"schema": 1, "name": "shift",
            "arena": {{"min": [-0.2, -0.2], "max": [1.8, 1.2]}},
            "entities": [{{"name": "ball", "type": "Object"}}],
            "priors": {{"ball.Position": {{"components": [
                {{"dist": "uniform", "params": [{lo}, {hi}]}},
                {{"dist": "uniform", "params": [0, 1]}}]}},
                "ball.ControlledFlag": {{"dist": "constant", "params": true}}}}}}"#,
        lo = delta,
        hi = 1.0 + delta
    );
    let path = dir.join(format!("shift-{delta}.json"));
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn sample_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["--seed", "1", "--out", p(&a), "sample", "-t", "puttputt", "-n", "10"]);
    ok(&["--seed", "1", "--out", p(&b), "sample", "-t", "puttputt", "-n", "10", "--jobs", "3"]);
    assert_eq!(data_files(&a), data_files(&b));
    assert!(a.join("manifest.json").is_file());
    let inst = json(&a.join("instances.json"));
    assert_eq!(inst["n"], 10);
    let d = inst["d"].as_u64().unwrap() as usize;
    assert_eq!(fs::read(a.join("matrix.bin")).unwrap().len(), 10 * d * 8);
}

#[test]
fn empty_sample_is_a_valid_archive() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    ok(&["--out", p(&a), "sample", "-t", "billiards", "-n", "0"]);
    assert_eq!(fs::read(a.join("matrix.bin")).unwrap().len(), 0);
    let r = tmp.path().join("r");
    ok(&["--out", p(&r), "render", "--archive", p(&a)]);
}

#[test]
fn malformed_prior_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path().join("bad.json");
    fs::write(
        &t,
        r#"{"schema": 1, "entities": [{"name": "ball", "type": "Object"}],
            "priors": {"ball.Mass": {"dist": "uniform", "params": [2, 1]}}}"#,
    )
    .unwrap();
    let out = segar(&["--out", p(&tmp.path().join("o")), "sample", "-t", p(&t), "-n", "3"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("segar: error[template]:"), "{err}");
    assert!(err.contains("priors.ball.Mass.params"), "{err}");
}

#[test]
fn syntax_error_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path().join("bad.json");
    fs::write(&t, "{\n  \"schema\": 1,\n  \"entities\": [\n}").unwrap();
    let out = segar(&["--out", p(&tmp.path().join("o")), "sample", "-t", p(&t), "-n", "1"]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(!out.status.success());
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn still_policy_pays_only_step_costs() {
    let tmp = tempfile::tempdir().unwrap();
    // Ball one radius away from the goal's edge; nothing moves it.
    let t = tmp.path().join("near.json");
    fs::write(
        &t,
        r#"{"schema": 1, "name": "near", "max_steps": 50,
            "entities": [{"name": "ball", "type": "Object"}, {"name": "goal", "type": "Goal"}],
            "priors": {"ball.Position": {"components": [
                          {"dist": "constant", "params": 0.5},
                          {"dist": "constant", "params": 0.32}]},
                       "ball.ControlledFlag": {"dist": "constant", "params": true},
                       "goal.Position": {"dist": "constant", "params": 0.5},
                       "goal.Radius": {"dist": "constant", "params": 0.15}},
            "rules": ["friction", "motion", "collisions"],
            "reward": "puttputt"}"#,
    )
    .unwrap();
    let a = tmp.path().join("a");
    ok(&["--out", p(&a), "sample", "-t", p(&t), "-n", "2"]);
    let r = tmp.path().join("r");
    ok(&["--out", p(&r), "rollout", "--archive", p(&a), "--policy", "still", "--episodes", "3"]);
    let returns = json(&r.join("returns.json"));
    for ep in returns["episodes"].as_array().unwrap() {
        assert_eq!(ep["steps"], 50);
        assert!((ep["return"].as_f64().unwrap() + 0.01 * 50.0).abs() < 1e-9);
    }
    let log = fs::read_to_string(r.join("episodes/episode-00000.ndjson")).unwrap();
    assert_eq!(log.lines().count(), 50);
    let last: Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    assert_eq!(last["done"], true);
    assert_eq!(last["t"], 50);
}

#[test]
fn scripted_policy_reaches_goal() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path().join("push.json");
    fs::write(
        &t,
        r#"{"schema": 1, "name": "push", "max_steps": 100,
            "entities": [{"name": "ball", "type": "Object"}, {"name": "goal", "type": "Goal"}],
            "priors": {"ball.Position": {"components": [
                          {"dist": "constant", "params": 0.2},
                          {"dist": "constant", "params": 0.5}]},
                       "ball.ControlledFlag": {"dist": "constant", "params": true},
                       "goal.Position": {"components": [
                          {"dist": "constant", "params": 0.8},
                          {"dist": "constant", "params": 0.5}]},
                       "goal.Radius": {"dist": "constant", "params": 0.05}},
            "rules": ["motion", "collisions"],
            "reward": "puttputt"}"#,
    )
    .unwrap();
    let script = tmp.path().join("script.json");
    fs::write(&script, r#"{"actions": [[1.0, 0.0]]}"#).unwrap();
    let a = tmp.path().join("a");
    ok(&["--out", p(&a), "sample", "-t", p(&t), "-n", "1"]);
    let r = tmp.path().join("r");
    ok(&["--out", p(&r), "rollout", "--archive", p(&a), "--policy", p(&script)]);
    let ep = &json(&r.join("returns.json"))["episodes"][0];
    // Unit impulse on unit mass: 0.01 per step, 0.55 to cover, so the goal
    // disc is entered on step 55 after 54 step costs.
    assert_eq!(ep["steps"], 55);
    assert!((ep["return"].as_f64().unwrap() - (1.0 - 0.54)).abs() < 1e-9);
}

#[test]
fn rollouts_are_deterministic_and_uniform_over_tasks() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    ok(&["--seed", "4", "--out", p(&a), "sample", "-t", "puttputt", "-n", "10"]);
    let (r1, r2) = (tmp.path().join("r1"), tmp.path().join("r2"));
    let args = |r: &Path, jobs: &'static str| {
        vec![
            "--seed".to_string(),
            "9".into(),
            "--jobs".into(),
            jobs.into(),
            "--out".into(),
            p(r).into(),
            "rollout".into(),
            "--archive".into(),
            p(&a).into(),
            "--episodes".into(),
            "1000".into(),
            "--policy".into(),
            "still".into(),
        ]
    };
    let a1 = args(&r1, "1");
    ok(&a1.iter().map(String::as_str).collect::<Vec<_>>());
    let a2 = args(&r2, "4");
    ok(&a2.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(data_files(&r1), data_files(&r2));
    let counts = json(&r1.join("returns.json"))["task_counts"].clone();
    for c in counts.as_array().unwrap() {
        let c = c.as_u64().unwrap();
        assert!((60..=140).contains(&c), "task count {c}");
    }
}

#[test]
fn unknown_policy_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    ok(&["--out", p(&a), "sample", "-t", "puttputt", "-n", "1"]);
    let out = segar(&["--out", p(&tmp.path().join("r")), "rollout", "--archive", p(&a), "--policy", "greedy"]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("unknown policy"));
}

#[test]
fn metrics_identity_mismatch_and_shift() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    ok(&["--seed", "2", "--out", p(&a), "sample", "-t", "puttputt", "-n", "30"]);
    let m = tmp.path().join("m");
    ok(&["--out", p(&m), "metrics", "--a", p(&a), "--b", p(&a)]);
    let report = json(&m.join("report.json"));
    assert_eq!(report["w2"], 0.0);
    assert_eq!(report["n_a"], 30);
    assert_eq!(report["normalized"], false);
    assert!(report["per_factor_ks"].as_array().unwrap().iter().all(|k| k["d_two_sample"] == 0.0));

    let bil = tmp.path().join("bil");
    ok(&["--out", p(&bil), "sample", "-t", "billiards", "-n", "30"]);
    let out = segar(&["--out", p(&tmp.path().join("m2")), "metrics", "--a", p(&a), "--b", p(&bil)]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("segar: error[layout]:"), "{err}");

    let mut w = Vec::new();
    for delta in [0.0, 0.1, 0.3] {
        let t = shifted_template(tmp.path(), delta);
        let dir = tmp.path().join(format!("s{delta}"));
        ok(&["--seed", "5", "--out", p(&dir), "sample", "-t", p(&t), "-n", "100"]);
        let md = tmp.path().join(format!("ms{delta}"));
        ok(&["--format", "json", "--out", p(&md), "metrics", "--a", p(&tmp.path().join("s0")), "--b", p(&dir)]);
        w.push(json(&md.join("report.json"))["w2"].as_f64().unwrap());
    }
    assert_eq!(w[0], 0.0);
    assert!(w[1] < w[2], "{w:?}");
}

#[test]
fn render_bytes_and_resolution() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    ok(&["--out", p(&a), "sample", "-t", "invisiball", "-n", "3"]);
    let r = |seed: &str, res: &str, name: &str| {
        let dir = tmp.path().join(name);
        ok(&["--out", p(&dir), "render", "--archive", p(&a), "--renderer-seed", seed, "--resolution", res]);
        dir
    };
    let r1 = r("1", "40", "r1");
    let r1b = r("1", "40", "r1b");
    let r2 = r("2", "40", "r2");
    assert_eq!(data_files(&r1), data_files(&r1b));
    assert_ne!(data_files(&r1), data_files(&r2));
    let png = fs::read(r1.join("task-00000.png")).unwrap();
    // IHDR width and height, big-endian, at bytes 16..24.
    assert_eq!(u32::from_be_bytes(png[16..20].try_into().unwrap()), 40);
    assert_eq!(u32::from_be_bytes(png[20..24].try_into().unwrap()), 40);
    let out = segar(&["--out", p(&tmp.path().join("r3")), "render", "--archive", p(&a), "--resolution", "4"]);
    assert!(!out.status.success());
}

#[test]
fn data_dir_env_sets_default_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_segar"))
        .args(["sample", "-t", "puttputt", "-n", "2"])
        .env("SEGAR_DATA_DIR", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("sample/matrix.bin").is_file());
    assert!(tmp.path().join("sample/manifest.json").is_file());
}

#[test]
fn describe_prints_json() {
    let out = ok(&["--format", "json", "describe", "-t", "billiards"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["name"], "billiards");
    assert_eq!(v["slots"].as_array().unwrap().len(), 7);
    assert!(v["entropy"].as_f64().unwrap().is_finite());
}
