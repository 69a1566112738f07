use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bellint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bellint")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bellint-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn reference_s(n: usize, v: f64) -> f64 {
    use bellint::quantum::{Settings, TwoQubitState};
    bellint::aggregation::s_n(&TwoQubitState::werner(v).unwrap(), &Settings::paper(), n).unwrap().value()
}

#[test]
fn sn_examples() {
    let out = bellint(&["sn", "--n", "1", "--v", "1"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "S_1 = 0.792893\n");
    assert_eq!(stdout(&bellint(&["sn", "--n", "2", "--v", "1"])), "S_2 = 0.958947\n");
    assert_eq!(stdout(&bellint(&["sn", "--n", "1", "--v", "0"])), "S_1 = 1.500000\n");
}

#[test]
fn sn_json_round_trips() {
    let path = scratch("sn.json");
    let out = bellint(&["sn", "--n", "3", "--v", "0.97", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(json["n"], 3);
    assert_eq!(json["v"], 0.97);
    let mut angles = Vec::new();
    for label in ["A1", "A2", "B1", "B2"] {
        angles.push(json["settings"][label]["theta"].as_f64().unwrap().to_string());
        angles.push(json["settings"][label]["phi"].as_f64().unwrap().to_string());
    }
    let replay_path = scratch("sn-replay.json");
    let replay = bellint(&[
        "sn",
        "--n",
        "3",
        "--v",
        "0.97",
        "--angles",
        &angles.join(","),
        "--out",
        replay_path.to_str().unwrap(),
    ]);
    assert!(replay.status.success());
    let again: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&replay_path).unwrap()).unwrap();
    assert_eq!(json["s"].as_f64().unwrap().to_bits(), again["s"].as_f64().unwrap().to_bits());
    assert!((json["s"].as_f64().unwrap() - reference_s(3, 0.97)).abs() < 1e-14);
}

#[test]
fn sn_optimized_beats_reference() {
    let out = bellint(&["sn", "--n", "2", "--settings", "optimize", "--starts", "4"]);
    assert!(out.status.success());
    let line = stdout(&out);
    let s: f64 = line.trim().strip_prefix("S_2 = ").unwrap().parse().unwrap();
    assert!(s < 0.958947);
}

#[test]
fn sweep_reference_settings() {
    let path = scratch("sweep-v0.csv");
    let out = bellint(&["sweep", "--v", "0", "--n-max", "3", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["n", "v", "s", "converged", "theta1", "phi1", "theta2", "phi2", "theta3", "phi3", "theta4", "phi4"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row[0].parse::<usize>().unwrap(), k + 1);
        let s: f64 = row[2].parse().unwrap();
        // Even n can tie, which the majority rule breaks towards 1.
        let expected = if k % 2 == 0 { 1.5 } else { 1.375 };
        assert!((s - expected).abs() < 1e-12, "n = {}: {s}", k + 1);
    }
}

#[test]
fn sweep_rows_recompute_exactly() {
    use bellint::loss::s_n_eta;
    use bellint::optimizer::{settings_from_angles, AngleVector};
    use bellint::quantum::TwoQubitState;

    let path = scratch("sweep-opt.csv");
    let out = bellint(&[
        "sweep", "--v", "1,0.95", "--n-max", "3", "--optimize", "--starts", "3", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let rows: Vec<csv::StringRecord> =
        csv::Reader::from_path(&path).unwrap().records().map(Result::unwrap).collect();
    let keys: Vec<(f64, usize)> =
        rows.iter().map(|r| (r[1].parse().unwrap(), r[0].parse().unwrap())).collect();
    assert_eq!(keys, [(0.95, 1), (0.95, 2), (0.95, 3), (1.0, 1), (1.0, 2), (1.0, 3)]);
    for row in &rows {
        let mut a = [0.0; 8];
        for (k, slot) in a.iter_mut().enumerate() {
            *slot = row[4 + k].parse().unwrap();
        }
        let v: f64 = row[1].parse().unwrap();
        let n: usize = row[0].parse().unwrap();
        let state = TwoQubitState::werner(v).unwrap();
        let s = s_n_eta(&state, &settings_from_angles(&AngleVector(a)), n, 1.0).unwrap().value();
        assert_eq!(s.to_bits(), row[2].parse::<f64>().unwrap().to_bits());
        assert_eq!(&row[3], "true");
    }
}

#[test]
fn sweep_is_deterministic() {
    let first = scratch("sweep-a.csv");
    let second = scratch("sweep-b.csv");
    for path in [&first, &second] {
        let out = bellint(&[
            "sweep", "--v", "0.97", "--n-max", "4", "--optimize", "--starts", "3", "--seed", "7",
            "--out", path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
}

#[test]
fn sweep_rejects_cap() {
    assert_eq!(bellint(&["sweep", "--n-max", "25"]).status.code(), Some(1));
    assert_eq!(bellint(&["sweep", "--n-max", "0"]).status.code(), Some(1));
}

#[test]
fn etamin_table() {
    let path = scratch("eta.csv");
    let out = bellint(&["etamin", "--n", "1,2", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,eta_min,iterations");
    assert!(lines[1].starts_with("1,0.828427,"));
    let rows: Vec<csv::StringRecord> =
        csv::Reader::from_path(&path).unwrap().records().map(Result::unwrap).collect();
    let eta: f64 = rows[0][1].parse().unwrap();
    assert!((eta - 2.0 / (1.0 + 2f64.sqrt())).abs() < 1e-9);
}

#[test]
fn etamin_marks_missing_threshold() {
    let out = bellint(&["etamin", "--n", "1", "--v", "0.5"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "n,eta_min,iterations\n1,none,0\n");
    assert_eq!(bellint(&["etamin", "--n", "0"]).status.code(), Some(1));
    assert_eq!(bellint(&["etamin", "--tol", "1e-12"]).status.code(), Some(1));
}

#[test]
fn simulate_exit_codes() {
    assert_eq!(bellint(&["simulate", "--n", "1", "--ambiguity", "--runs", "2000"]).status.code(), Some(2));
    assert_eq!(bellint(&["simulate", "--runs", "0"]).status.code(), Some(1));
    assert_eq!(bellint(&["simulate", "--n", "16"]).status.code(), Some(1));
    assert_eq!(bellint(&["simulate", "--v", "1.5"]).status.code(), Some(1));
}

#[test]
fn simulate_outputs_are_reproducible() {
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let summary = scratch(&format!("sim-{tag}.json"));
        let log = scratch(&format!("sim-{tag}.jsonl"));
        let out = bellint(&[
            "simulate", "--n", "3", "--runs", "5000", "--seed", "9", "--bootstrap", "50", "--out",
            summary.to_str().unwrap(), "--log", log.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        outputs.push((fs::read(&summary).unwrap(), fs::read(&log).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);

    let report: serde_json::Value = serde_json::from_slice(&outputs[0].0).unwrap();
    let log = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert_eq!(log.lines().count(), 5000);
    let mut kept = 0;
    for line in log.lines() {
        let run: serde_json::Value = serde_json::from_str(line).unwrap();
        if run["kept"].as_bool().unwrap() {
            kept += 1;
        }
    }
    assert_eq!(report["kept_runs"], kept);
    assert_eq!(report["total_runs"], 5000);
    let terms: f64 = report["terms"].as_array().unwrap().iter().map(|t| t["probability"].as_f64().unwrap()).sum();
    assert_eq!(terms, report["s_hat"].as_f64().unwrap());
}

#[test]
fn thread_count_does_not_change_results() {
    let runs = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_bellint"))
            .args(["simulate", "--n", "4", "--runs", "20000", "--bootstrap", "20"])
            .env("BELLINT_THREADS", threads)
            .output()
            .unwrap()
    };
    let single = runs("1");
    assert!(single.status.success());
    assert_eq!(single.stdout, runs("0").stdout);
    assert_eq!(single.stdout, runs("3").stdout);
    assert_eq!(runs("many").status.code(), Some(1));
}

#[test]
fn asymptote_values() {
    assert_eq!(stdout(&bellint(&["asymptote", "--v", "1"])), "S_inf = 1.000000\n");
    assert_eq!(stdout(&bellint(&["asymptote", "--v", "0"])), "S_inf = 1.500000\n");
    let closed = 1.5 - 2.0 / std::f64::consts::PI * (0.95 / 2f64.sqrt()).asin();
    assert_eq!(stdout(&bellint(&["asymptote", "--v", "0.95"])), format!("S_inf = {closed:.6}\n"));
}

#[test]
fn config_file_and_overrides() {
    let conf = scratch("run.conf");
    fs::write(&conf, "# defaults\nn = 2\nv = 0\n").unwrap();
    let conf = conf.to_str().unwrap();
    assert_eq!(stdout(&bellint(&["--config", conf, "sn"])), "S_2 = 1.375000\n");
    assert_eq!(stdout(&bellint(&["--config", conf, "sn", "--v", "1"])), "S_2 = 0.958947\n");
    assert_eq!(stdout(&bellint(&["sn", "--config", conf, "--n", "1"])), "S_1 = 1.500000\n");

    let bad = scratch("bad.conf");
    fs::write(&bad, "colour = blue\n").unwrap();
    assert_eq!(bellint(&["--config", bad.to_str().unwrap(), "sn"]).status.code(), Some(1));
    assert_eq!(bellint(&["--config", "/nonexistent/bellint.conf", "sn"]).status.code(), Some(1));
}

#[test]
fn usage_errors_are_single_line() {
    for args in [
        &["sn", "--bogus"][..],
        &["sn"],
        &["sn", "--n", "two"],
        &["sn", "--n", "1", "--eta", "2"],
        &["nosuch"],
    ] {
        let out = bellint(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn help_lists_flags_with_defaults() {
    let out = bellint(&["simulate", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    let help = stdout(&out);
    for flag in ["--n", "--v", "--eta", "--runs", "--seed", "--ambiguity", "--delays", "--tau", "--bootstrap", "--out", "--log"] {
        assert!(help.contains(flag), "missing {flag}");
    }
    for default in ["[default: 3]", "[default: 100000]", "[default: 42]", "[default: 6,7,8,9,10]"] {
        assert!(help.contains(default), "missing {default}");
    }
    let sweep = stdout(&bellint(&["sweep", "--help"]));
    assert!(sweep.contains("[default: 24]") && sweep.contains("[default: 0.95,0.97,0.99,1]"));
}
