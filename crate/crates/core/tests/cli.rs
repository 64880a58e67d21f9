use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn randsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_randsum"))
        .args(args)
        .env_remove("RANDSUM_THREADS")
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = r#"{
  "label": "small",
  "array": { "array": "iid", "base": { "family": "uniform", "a": -1, "b": 1 } },
  "index": { "family": "poisson", "mean": "n" },
  "grids": { "n": [4, 16], "epsilon": [0.25], "delta": [1.0] },
  "monte_carlo": { "samples": 5000 },
  "distances": { "mixture": false, "randomsum": false }
}"#;

#[test]
fn conditions_csv_header_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = randsum(&["conditions", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("conditions.csv")).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "label,n,epsilon,delta,functional,value,error_bound,status"
    );
    let functionals: Vec<&str> = text
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("small,4,"))
        .map(|l| l.split(',').nth(4).unwrap())
        .collect();
    assert_eq!(
        functionals,
        ["L", "Lambda", "F", "I", "I_ratio", "cf_dev[t=1]", "R", "sigma_star", "RL", "RLambda", "RF", "RI", "RR", "R_sigma_star"]
    );
    assert!(out.join("effective_config.json").exists());
}

#[test]
fn study_csv_header_is_stable_and_seeded_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = randsum(&["study", "--config", cfg.to_str().unwrap(), "--seed", "42", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out.join("study.csv")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "label,n,seed,metric,epsilon,delta,value,bound,method,status"
    );
    assert!(text.lines().any(|l| l.contains(",empirical,")));
}

#[test]
fn json_study_echoes_a_reparsable_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = randsum(&["study", "--config", cfg.to_str().unwrap(), "--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("study.json")).unwrap()).unwrap();
    let echoed = serde_json::to_string(&doc["config"]).unwrap();
    let back = randsum_core::config::ScenarioConfig::from_json(&echoed).unwrap();
    let orig = randsum_core::config::ScenarioConfig::from_json(SMALL).unwrap();
    assert_eq!(back.study_plan().unwrap().array, orig.study_plan().unwrap().array);
    assert_eq!(back.monte_carlo, orig.monte_carlo);
    assert_eq!(doc["result"]["seed"], 42);
    assert!(out.join("timings.json").exists());
}

#[test]
fn dry_run_prints_effective_config_and_runs_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = randsum(&["study", "--config", cfg.to_str().unwrap(), "--dry-run", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["monte_carlo"]["alpha"], 0.01);
    assert_eq!(doc["numerics"]["eta"], 1e-10);
    assert!(!out.exists());
}

#[test]
fn negative_epsilon_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"array": {"array": "shiryaev"}, "grids": {"epsilon": [-0.5]}}"#);
    let o = randsum(&["conditions", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grids.epsilon[0]"));
}

#[test]
fn unknown_key_and_missing_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"array": {"array": "shiryaev", "colour": 1}}"#);
    let o = randsum(&["conditions", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    assert_eq!(randsum(&["study"]).status.code(), Some(2));
    assert_eq!(randsum(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn failing_cells_exit_3_only_when_all_fail_or_strict() {
    let dir = tempfile::tempdir().unwrap();
    // row 2 of the explicit array has variance sum 2 and fails validation
    let cfg = write_config(
        dir.path(),
        r#"{
          "array": { "array": "explicit", "rows": [
            [ { "family": "normal", "mean": 0, "var": 1 } ],
            [ { "family": "normal", "mean": 0, "var": 1 }, { "family": "normal", "mean": 0, "var": 1 } ]
          ] },
          "grids": { "n": [1, 2], "epsilon": [0.5] }
        }"#,
    );
    let out = dir.path().join("out");
    let args = ["conditions", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(randsum(&args).status.code(), Some(0));
    let text = std::fs::read_to_string(out.join("conditions.csv")).unwrap();
    assert!(text.lines().any(|l| l.contains("error:")));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(randsum(&strict).status.code(), Some(3));
    let bad = write_config(
        dir.path(),
        r#"{ "array": { "array": "explicit", "rows": [[ { "family": "normal", "mean": 0, "var": 2 } ]] },
             "grids": { "n": [1], "epsilon": [0.5] } }"#,
    );
    let o = randsum(&["conditions", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn deterministic_index_gives_equal_classical_and_randomized_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
          "array": { "array": "iid", "base": { "family": "exponential-centered", "rate": 1.0 } },
          "index": { "family": "deterministic", "k": "n" },
          "grids": { "n": [8], "epsilon": [0.3] }
        }"#,
    );
    let out = dir.path().join("out");
    let o = randsum(&["conditions", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("conditions.csv")).unwrap();
    let value = |name: &str| -> f64 {
        text.lines()
            .find(|l| l.split(',').nth(4) == Some(name))
            .and_then(|l| l.split(',').nth(5))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((value("RL") - value("L")).abs() <= 1e-10);
    assert!((value("RF") - value("F")).abs() <= 1e-10);
}

#[test]
fn counterexample_scenario_holds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = scenario("counterexample_shiryaev.json");
    let o = randsum(&["counterexample", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let text = std::fs::read_to_string(out.join("counterexample.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "name,n,epsilon,value,threshold,holds");
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn violated_finding_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // at ε = 50 the truncated second moments vanish, so L is no longer bounded away from 0
    let cfg = write_config(
        dir.path(),
        r#"{ "counterexample": { "n": [4], "epsilon": [0.5], "lindeberg_epsilon": 50.0, "oracle_samples": 1000 } }"#,
    );
    let o = randsum(&["counterexample", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lindeberg_bounded_away"));
}

#[test]
fn selfcheck_is_byte_identical() {
    let a = randsum(&["selfcheck", "--seed", "42"]);
    let b = randsum(&["selfcheck", "--seed", "42"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let doc: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(doc["passed"], true);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |threads: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = Command::new(env!("CARGO_BIN_EXE_randsum"))
            .args(["distances", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .env("RANDSUM_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(out.join("distances.csv")).unwrap()
    };
    assert_eq!(run("1", "one"), run("3", "three"));
    let o = Command::new(env!("CARGO_BIN_EXE_randsum"))
        .args(["selfcheck"])
        .env("RANDSUM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
