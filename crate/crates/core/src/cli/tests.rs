use serde_json::json;

use super::*;

fn run_in(dir: &Path, cmd: &str, config: serde_json::Value, extra: &[&str]) -> i32 {
    let path = dir.join("config.json");
    std::fs::write(&path, config.to_string()).unwrap();
    let mut argv = vec!["mkv-neuro".to_string(), cmd.to_string(), "--config".into(), path.display().to_string()];
    argv.extend(extra.iter().map(|s| s.to_string()));
    run(argv)
}

#[test]
fn empty_document_is_all_defaults() {
    let v = validate_config(&json!({})).unwrap();
    assert_eq!(v.config, RunConfig::default());
    for p in ["/model", "/seed", "/threads", "/output_dir", "/control", "/network"] {
        assert!(v.defaulted.iter().any(|d| d == p), "{p}");
    }
}

#[test]
fn defaulted_fields_are_listed_by_pointer() {
    let v = validate_config(&json!({"seed": 3, "model": {"J": 0.5}, "network": {"N": 20}})).unwrap();
    assert_eq!(v.config.model.j, 0.5);
    assert_eq!(v.config.network.n, 20);
    assert!(!v.defaulted.iter().any(|d| d == "/seed" || d == "/model/J" || d == "/network/N"));
    assert!(v.defaulted.iter().any(|d| d == "/model/w_b"));
    assert!(v.defaulted.iter().any(|d| d == "/network/horizon"));
    assert!(!v.defaulted.iter().any(|d| d == "/network"));
}

#[test]
fn unknown_key_is_rejected_with_its_path() {
    let err = validate_config(&json!({"stationary": {"plane": {"nodez": 4}}})).unwrap_err();
    assert!(err.is_validation());
    assert!(err.to_string().contains("/stationary/plane/nodez"), "{err}");
    let err = validate_config(&json!({"sed": 4})).unwrap_err();
    assert!(err.to_string().contains("/sed"), "{err}");
}

#[test]
fn nonpositive_w_b_is_rejected() {
    for w_b in [0.0, -1.0] {
        let err = validate_config(&json!({"model": {"w_b": w_b}})).unwrap_err();
        assert!(err.to_string().contains("/model"), "{err}");
    }
    assert!(validate_config(&json!({"model": {"J": -0.1}})).is_err());
    assert!(validate_config(&json!({"model": {"J": 0.0}})).is_ok());
}

#[test]
fn bad_types_carry_their_path() {
    let err = validate_config(&json!({"certify": {"r_range": [0.1, "x"]}})).unwrap_err();
    assert!(err.to_string().contains("/certify/r_range/1"), "{err}");
    assert!(validate_config(&json!({"threads": 0})).is_err());
    assert!(validate_config(&json!({"threads": "many"})).is_err());
    assert_eq!(validate_config(&json!({"threads": 3})).unwrap().config.threads, Threads::Count(3));
}

#[test]
fn threads_round_trip() {
    for t in [Threads::Auto, Threads::Count(8)] {
        let back: Threads = serde_json::from_value(serde_json::to_value(t).unwrap()).unwrap();
        assert_eq!(back, t);
    }
}

#[test]
fn j_grid_spacing() {
    let c = ContinuationConfig { j_max: 1.0, j_count: 5, ..Default::default() };
    assert_eq!(c.j_grid(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    let c = ContinuationConfig { j_values: Some(vec![0.0, 3.0]), ..c };
    assert_eq!(c.j_grid(), vec![0.0, 3.0]);
}

#[test]
fn stochastic_commands_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    let cfg = json!({"simulate": {"horizon": 0.5}});
    assert_eq!(run_in(dir.path(), "simulate-linear", cfg.clone(), &["--out", o]), EXIT_VALIDATION);
    assert!(!out.join("manifest.json").exists());
    assert_eq!(run_in(dir.path(), "simulate-linear", cfg, &["--out", o, "--seed", "4"]), EXIT_OK);
    let m: serde_json::Value = serde_json::from_reader(File::open(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 4);
    assert_eq!(m["outputs"], json!(["jumps.csv"]));
    assert!(!m["defaulted"].as_array().unwrap().iter().any(|d| d == "/seed" || d == "/output_dir"));
    // deterministic commands run without one
    assert_eq!(run_in(dir.path(), "check-assumptions", json!({}), &["--out", o]), EXIT_OK);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let o = o.to_str().unwrap();
    assert_eq!(run(["mkv-neuro", "no-such-command"]), EXIT_VALIDATION);
    assert_eq!(run(["mkv-neuro", "check-assumptions", "--config", "/nonexistent/x.json"]), EXIT_VALIDATION);
    assert_eq!(run_in(dir.path(), "check-assumptions", json!({"bogus": 1}), &["--out", o]), EXIT_VALIDATION);
    // zero delay without the flag is a validation error, with it the watchdog trips
    let cfg = json!({"seed": 1, "model": {"J": 40.0, "D": 0.0}, "network": {"N": 10, "horizon": 2.0}});
    assert_eq!(run_in(dir.path(), "simulate-network", cfg, &["--out", o]), EXIT_VALIDATION);
    let cfg = json!({"seed": 1, "model": {"J": 40.0, "D": 0.0},
        "network": {"N": 10, "horizon": 2.0, "allow_zero_delay": true, "watchdog": 5.0}});
    assert_eq!(run_in(dir.path(), "simulate-network", cfg, &["--out", o]), EXIT_NUMERICAL);
}

#[test]
fn csv_numbers_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let cfg = json!({"seed": 2, "simulate": {"horizon": 1.0, "first_jumps": 50}});
    assert_eq!(run_in(dir.path(), "simulate-linear", cfg, &["--out", o.to_str().unwrap()]), EXIT_OK);
    let text = std::fs::read_to_string(o.join("first_jumps.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("sample_id,T1,v_pre,w_pre,exp_draw"));
    let mut n = 0;
    for line in lines {
        for field in line.split(',').skip(1) {
            // shortest round-trip form, never a long run of zeros
            let x: f64 = field.parse().unwrap();
            assert!(x.is_finite() && field.len() <= 24, "{field}");
        }
        n += 1;
    }
    assert_eq!(n, 50);
}
