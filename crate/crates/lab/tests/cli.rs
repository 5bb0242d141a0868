use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_width-sde"));
    c.env_remove("WIDTH_SDE_WORKERS");
    c
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const P321: &str = r#""params":{"delta":3,"gamma":2,"d":1}"#;

#[test]
fn params_for_the_gaussian_profile() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "c.json",
        r#"{"subcommand":"params","profile":"gaussian","physical":{"lambda":1,"d_r":1,"mass_sq":3.14159265},"output_dir":"out","seed":11}"#,
    );
    let out = run(&["params", "c.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("out/params.json"));
    let rel = |k: &str, t: f64| (v[k].as_f64().unwrap() - t).abs() / t;
    assert!(rel("delta", 3.0) < 1e-6 && rel("gamma", 2.0) < 1e-6 && rel("d", 8.0 * std::f64::consts::PI) < 1e-6 && rel("amp", 1.0) < 1e-6, "{v}");
    for k in ["c120", "c320", "c102", "c140", "c322"] {
        assert!(v[k].is_f64(), "{k}");
    }
    let m = json(&dir.path().join("out/manifest.json"));
    assert_eq!(m["seed"], 11);
    assert_eq!(m["subcommand"], "params");
    assert!(m["versions"]["width_sde_core"].is_string());
    assert!(m["wall_time_s"].is_f64());
    assert_eq!(m["config"]["physical"]["mass_sq"].to_string(), "3.14159265");
}

#[test]
fn tabulated_profile_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut table = String::from("r,f\n");
    for k in 0..=1200 {
        let r = k as f64 * 0.01;
        table.push_str(&format!("{r},{}\n", (-r * r / 2.0).exp()));
    }
    fs::write(dir.path().join("gauss.csv"), table).unwrap();
    write_config(
        dir.path(),
        "c.json",
        r#"{"subcommand":"params","profile":{"csv":"gauss.csv"},"physical":{"lambda":1,"d_r":1,"mass_sq":3.141592653589793}}"#,
    );
    let out = run(&["run", "c.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("out/params.json"));
    assert!((v["delta"].as_f64().unwrap() - 3.0).abs() < 1e-4, "{v}");
    assert!((v["gamma"].as_f64().unwrap() - 2.0).abs() < 1e-4, "{v}");
}

#[test]
fn rank_map_verification_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "v.json",
        &format!(r#"{{"subcommand":"verify",{P321},"verify":{{"claims":[{{"rank_map":{{"xi":[0.1,3],"eta":[-3,3],"n":[20,20]}}}}]}}}}"#),
    );
    let out = run(&["verify", "v.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = fs::read_to_string(dir.path().join("out/reports.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 1);
    let r: Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(r["claim_id"], "hormander_rank");
    assert_eq!(r["pass"], true);
    // claim_id, grid_spec, pass, witness, notes in that order
    let first = lines.lines().next().unwrap();
    let pos = |k: &str| first.find(k).unwrap();
    assert!(pos("claim_id") < pos("grid_spec") && pos("grid_spec") < pos("\"pass\"") && pos("\"pass\"") < pos("witness") && pos("witness") < pos("notes"));
}

#[test]
fn failing_claim_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // the grid reaches the xi = 0 axis, where the bracket vanishes
    write_config(
        dir.path(),
        "v.json",
        &format!(r#"{{"subcommand":"verify",{P321},"verify":{{"claims":[{{"rank_map":{{"xi":[0,1],"eta":[-1,1],"n":[5,5]}}}}]}}}}"#),
    );
    let out = run(&["run", "v.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let m = json(&dir.path().join("out/manifest.json"));
    assert_eq!(m["claim_passed"], false);
}

#[test]
fn decay_of_a_synthetic_exponential() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("t,x,y\n");
    for k in 0..=4000 {
        let t = k as f64 * 0.01;
        text.push_str(&format!("{t},{},0\n", (-t).exp()));
    }
    fs::write(dir.path().join("path.csv"), text).unwrap();
    write_config(dir.path(), "d.json", r#"{"subcommand":"decay","decay":{"input":"path.csv","window_length":1}}"#);
    let out = run(&["decay", "d.json"], dir.path());
    // the audit detects the decay: the claim of no decay fails
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("out/decay.json"));
    assert!((v["slope"].as_f64().unwrap() + 1.0).abs() < 1e-12, "{v}");
    assert_eq!(v["windows"], 40);
    for k in ["ci_lo", "ci_hi", "fraction_below_floor"] {
        assert!(v[k].is_number(), "{k}");
    }
    let csv = fs::read_to_string(dir.path().join("out/decay_windows.csv")).unwrap();
    assert!(csv.starts_with("t_mid,mean_log_x\n"));
}

#[test]
fn configuration_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "a.json", &format!(r#"{{"subcommand":"params",{P321}}}"#));
    let out = run(&["simulate", "a.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));

    write_config(dir.path(), "b.json", "{\n\"subcommand\":\"params\",\n\"paramz\":{}\n}");
    let out = run(&["run", "b.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("paramz"), "{err}");

    write_config(
        dir.path(),
        "c.json",
        &format!(r#"{{"subcommand":"params","profile":"gaussian","physical":{{"lambda":1,"d_r":1,"mass":1}},{P321}}}"#),
    );
    assert_eq!(run(&["run", "c.json"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["run", "missing.json"], dir.path()).status.code(), Some(1));
}

fn read_tree(root: &Path, ext: &str) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == ext) {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn artifacts_do_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let sim = format!(
        r#"{{"subcommand":"simulate",{P321},"integrator":{{"scheme":"adaptive_em","dt":0.01,"t_end":1}},"simulate":{{"n_paths":12,"write_paths":12}}}}"#
    );
    write_config(dir.path(), "s.json", &sim);
    let tc = format!(r#"{{"subcommand":"timechange",{P321},"timechange":{{"n_paths":12,"write_paths":4,"extensions":1}}}}"#);
    write_config(dir.path(), "t.json", &tc);
    for cfg in ["s.json", "t.json"] {
        let a = run(&["run", cfg, "--workers", "1", "--output-dir", "w1"], dir.path());
        let b = run(&["run", cfg, "--workers", "3", "--output-dir", "w3"], dir.path());
        let c = run(&["run", cfg, "--workers", "3", "--output-dir", "w3b"], dir.path());
        for o in [&a, &b, &c] {
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        }
        let ta = read_tree(&dir.path().join("w1"), "csv");
        assert!(!ta.is_empty());
        assert_eq!(ta, read_tree(&dir.path().join("w3"), "csv"));
        assert_eq!(ta, read_tree(&dir.path().join("w3b"), "csv"));
        assert_eq!(fs::read(dir.path().join("w1/summary.json")).unwrap(), fs::read(dir.path().join("w3/summary.json")).unwrap());
        for d in ["w1", "w3", "w3b"] {
            fs::remove_dir_all(dir.path().join(d)).unwrap();
        }
    }
}

#[test]
fn seed_flag_changes_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "s.json", &format!(r#"{{"subcommand":"simulate",{P321},"seed":1,"simulate":{{"n_paths":1}}}}"#));
    assert_eq!(run(&["run", "s.json", "--output-dir", "a"], dir.path()).status.code(), Some(0));
    assert_eq!(run(&["run", "s.json", "--output-dir", "b", "--seed", "2"], dir.path()).status.code(), Some(0));
    let a = fs::read(dir.path().join("a/paths/path_00000.csv")).unwrap();
    let b = fs::read(dir.path().join("b/paths/path_00000.csv")).unwrap();
    assert!(a.starts_with(b"t,x,y\n"));
    assert_ne!(a, b);
    assert_eq!(json(&dir.path().join("b/manifest.json"))["seed"], 2);
    let side = json(&dir.path().join("a/paths/path_00000.json"));
    assert_eq!(side["termination"], "completed");
    assert!(side["rng_fingerprint"].is_u64());
}

#[test]
fn workers_fall_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "p.json", &format!(r#"{{"subcommand":"params",{P321}}}"#));
    let out = bin().args(["run", "p.json"]).env("WIDTH_SDE_WORKERS", "2").current_dir(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&dir.path().join("out/manifest.json"))["workers"], 2);
    let out = bin().args(["run", "p.json"]).env("WIDTH_SDE_WORKERS", "zero").current_dir(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn transformed_paths_use_their_own_columns() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "s.json",
        &format!(r#"{{"subcommand":"simulate",{P321},"simulate":{{"system":"transformed","x0":2,"y0":3}}}}"#),
    );
    assert_eq!(run(&["run", "s.json"], dir.path()).status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("out/paths/path_00000.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,xi,eta"));
    assert_eq!(lines.next(), Some("0.0,0.5,12.0"));
}

#[test]
fn control_and_invariant_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "c.json",
        &format!(r#"{{"subcommand":"control",{P321},"control":{{"endpoints":[[1,0,0.5,0],[1,-10,1,10]],"random_pairs":3}}}}"#),
    );
    let out = run(&["control", "c.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(dir.path().join("out/control/control_0000.csv")).unwrap();
    assert!(csv.starts_with("t,p,u\n"));
    let lines: Vec<Value> =
        fs::read_to_string(dir.path().join("out/control.jsonl")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[1]["report"]["interpolant_kind"], "quartic_polynomial");

    write_config(
        dir.path(),
        "i.json",
        &format!(
            r#"{{"subcommand":"invariant",{P321},"output_dir":"inv","integrator":{{"scheme":"adaptive_em","dt":0.01,"t_end":1}},"invariant":{{"t_total":200,"burn_in":10,"second_seed":5,"transformed_bins":[78,128]}}}}"#
        ),
    );
    let out = run(&["invariant", "i.json"], dir.path());
    assert!(matches!(out.status.code(), Some(0 | 2)), "{}", String::from_utf8_lossy(&out.stderr));
    let h = fs::read_to_string(dir.path().join("inv/histogram_original_seed_a.csv")).unwrap();
    assert!(h.starts_with("x_edge,y_edge,mass\n"));
    assert_eq!(h.lines().count(), 1 + 40 * 40);
    let v = json(&dir.path().join("inv/invariant.json"));
    assert!(v["tv_original_vs_pushforward"].is_number());
    assert!(v["tv_between_seeds"]["pushforward"].is_number());
}
