use std::io::Write;
use std::path::Path;

use bellint::aggregation::asymptotic_s;
use bellint::experiment::{estimate_from_tally, Experiment, ExperimentConfig, Tally};
use bellint::loss::{eta_min, s_n_eta};
use bellint::optimizer::{minimize_s_n, settings_from_angles, sweep, AngleVector, OptimizerConfig};
use bellint::quantum::{Settings, TwoQubitState};
use bellint::Error;
use serde::Serialize;

use crate::output::{self, csv_failure, csv_writer, io_failure, SettingsJson};
use crate::{AsymptoteArgs, EtaminArgs, Failure, SettingsSource, SimulateArgs, SnArgs, SweepArgs};

/// Runs per chunk when streaming a run log.
const LOG_CHUNK: u64 = 1 << 16;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn check_unit(name: &str, value: f64) -> Result<(), Failure> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(usage(format!("--{name} must lie in [0, 1], got {value}")))
    }
}

fn optimizer_config(starts: usize, seed: u64) -> Result<OptimizerConfig, Failure> {
    if starts == 0 {
        return Err(usage("--starts must be at least 1"));
    }
    Ok(OptimizerConfig { starts, seed, ..OptimizerConfig::default() })
}

/// Angles for `settings`, together with the settings rebuilt from those
/// angles. Evaluating at the rebuilt settings keeps written files consistent
/// with what a reader recomputes from the angle columns.
fn via_angles(settings: &Settings) -> (AngleVector, Settings) {
    let angles = AngleVector::from_settings(settings);
    (angles, settings_from_angles(&angles))
}

#[derive(Serialize)]
struct SnSummary {
    n: usize,
    v: f64,
    eta: f64,
    s: f64,
    settings: SettingsJson,
}

pub fn run_sn(args: &SnArgs) -> Result<(), Failure> {
    if args.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    check_unit("v", args.v)?;
    check_unit("eta", args.eta)?;

    let (angles, s) = match (&args.angles, args.settings) {
        (Some(raw), _) => {
            let a: [f64; 8] = raw
                .as_slice()
                .try_into()
                .map_err(|_| usage(format!("--angles needs 8 values, got {}", raw.len())))?;
            if a.iter().any(|x| !x.is_finite()) {
                return Err(usage("--angles must be finite"));
            }
            let angles = AngleVector(a);
            let settings = settings_from_angles(&angles);
            let s = s_n_eta(&TwoQubitState::werner(args.v)?, &settings, args.n, args.eta)?;
            (angles, s.value())
        }
        (None, SettingsSource::Paper) => {
            let (angles, settings) = via_angles(&Settings::paper());
            let s = s_n_eta(&TwoQubitState::werner(args.v)?, &settings, args.n, args.eta)?;
            (angles, s.value())
        }
        (None, SettingsSource::Optimize) => {
            let cfg = optimizer_config(args.starts, args.seed)?;
            let result = minimize_s_n(args.v, args.n, args.eta, &cfg)?;
            (result.best_angles, result.best_s.value())
        }
    };

    println!("S_{} = {s:.6}", args.n);
    if let Some(path) = &args.out {
        let summary = SnSummary { n: args.n, v: args.v, eta: args.eta, s, settings: (&angles).into() };
        output::write_json(path, &summary)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    n: usize,
    v: f64,
    s: f64,
    converged: bool,
    theta1: f64,
    phi1: f64,
    theta2: f64,
    phi2: f64,
    theta3: f64,
    phi3: f64,
    theta4: f64,
    phi4: f64,
}

impl SweepRow {
    fn new(n: usize, v: f64, s: f64, converged: bool, angles: &AngleVector) -> Self {
        let a = angles.0;
        Self {
            n,
            v,
            s,
            converged,
            theta1: a[0],
            phi1: a[1],
            theta2: a[2],
            phi2: a[3],
            theta3: a[4],
            phi3: a[5],
            theta4: a[6],
            phi4: a[7],
        }
    }
}

pub fn run_sweep(args: &SweepArgs) -> Result<(), Failure> {
    if args.n_max == 0 || args.n_max > args.n_cap {
        return Err(usage(format!("--n-max must lie in 1..={}, got {}", args.n_cap, args.n_max)));
    }
    if args.v.is_empty() {
        return Err(usage("--v needs at least one visibility"));
    }
    for &v in &args.v {
        check_unit("v", v)?;
    }
    check_unit("eta", args.eta)?;

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    if args.optimize {
        let cfg = OptimizerConfig { n_cap: args.n_cap, ..optimizer_config(args.starts, args.seed)? };
        for cell in sweep(&args.v, args.n_max, args.eta, &cfg)? {
            match cell.result {
                Ok(r) => rows.push(SweepRow::new(cell.n, cell.v, r.best_s.value(), true, &r.best_angles)),
                Err(Error::NonConvergence { best }) => {
                    failures.push(format!("v = {}, n = {}: optimizer did not converge", cell.v, cell.n));
                    rows.push(SweepRow::new(cell.n, cell.v, best.best_s.value(), false, &best.best_angles));
                }
                Err(e) => {
                    failures.push(format!("v = {}, n = {}: {e}", cell.v, cell.n));
                    rows.push(SweepRow::new(cell.n, cell.v, f64::NAN, false, &AngleVector([f64::NAN; 8])));
                }
            }
        }
    } else {
        let (angles, settings) = via_angles(&Settings::paper());
        let mut vs = args.v.clone();
        vs.sort_by(f64::total_cmp);
        for v in vs {
            let state = TwoQubitState::werner(v)?;
            for n in 1..=args.n_max {
                let s = s_n_eta(&state, &settings, n, args.eta)?.value();
                rows.push(SweepRow::new(n, v, s, true, &angles));
            }
        }
    }

    let path = args.out.as_deref();
    let mut writer = csv_writer(path)?;
    for row in &rows {
        writer.serialize(row).map_err(|e| csv_failure(path, e))?;
    }
    writer.flush().map_err(|e| csv_failure(path, e))?;
    for failure in &failures {
        eprintln!("warning: {failure}");
    }
    if rows.iter().all(|r| !r.converged) {
        return Err(Failure::Numerical("no sweep cell succeeded".into()));
    }
    Ok(())
}

pub fn run_etamin(args: &EtaminArgs) -> Result<(), Failure> {
    if args.n.is_empty() || args.n.contains(&0) {
        return Err(usage("--n needs pair counts of at least 1"));
    }
    check_unit("v", args.v)?;
    if !(args.tol >= bellint::loss::MIN_TOLERANCE && args.tol < 1.0) {
        return Err(usage(format!(
            "--tol must lie in [{}, 1), got {}",
            bellint::loss::MIN_TOLERANCE,
            args.tol
        )));
    }
    let state = TwoQubitState::werner(args.v)?;
    let settings = Settings::paper();

    let mut rows: Vec<(usize, Option<f64>, usize)> = Vec::new();
    for &n in &args.n {
        match eta_min(&state, &settings, n, args.tol) {
            Ok(r) => rows.push((n, Some(r.eta_min), r.iterations)),
            Err(Error::NoThreshold { .. }) => rows.push((n, None, 0)),
            Err(e) => return Err(e.into()),
        }
    }

    println!("n,eta_min,iterations");
    for (n, eta, iterations) in &rows {
        match eta {
            Some(eta) => println!("{n},{eta:.6},{iterations}"),
            None => println!("{n},none,0"),
        }
    }
    if let Some(path) = &args.out {
        let mut writer = csv_writer(Some(path))?;
        let fail = |e| csv_failure(Some(path), e);
        writer.write_record(["n", "eta_min", "iterations"]).map_err(fail)?;
        for (n, eta, iterations) in &rows {
            let eta = eta.map_or_else(|| "none".to_string(), |e| e.to_string());
            writer.write_record([n.to_string(), eta, iterations.to_string()]).map_err(fail)?;
        }
        writer.flush().map_err(|e| csv_failure(Some(path), e))?;
    }
    Ok(())
}

pub fn run_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::new(args.n, args.v, args.eta, args.runs, args.seed)
        .with_ambiguity(args.ambiguity);
    cfg.tau = args.tau;
    cfg.path_delays = args.delays.clone();
    let experiment = Experiment::new(cfg)?;

    let tally = match &args.log {
        Some(path) => simulate_with_log(&experiment, path)?,
        None => experiment.tally(),
    };
    let report = estimate_from_tally(&tally, args.bootstrap, args.seed)?;

    println!("s_hat = {:.6} ± {:.6}", report.s_hat, report.stderr);
    println!(
        "postselection_rate = {:.6} ({} of {} runs kept)",
        report.postselection_rate, report.kept_runs, report.total_runs
    );
    let reference = s_n_eta(&TwoQubitState::werner(args.v)?, &Settings::paper(), args.n, args.eta)?;
    println!("S_{} without postselection = {:.6}", args.n, reference.value());
    if let Some(path) = &args.out {
        output::write_json(path, &report)?;
    }
    Ok(())
}

fn simulate_with_log(experiment: &Experiment, path: &Path) -> Result<Tally, Failure> {
    let cfg = experiment.config();
    let mut file = output::create(path)?;
    let mut tally = Tally::default();
    let mut first = 0;
    while first < cfg.runs {
        let count = LOG_CHUNK.min(cfg.runs - first);
        for record in experiment.simulate_range(first, count) {
            tally.add(&record);
            serde_json::to_writer(&mut file, &record.log_line(cfg.tau)).map_err(|e| io_failure(path, e))?;
            file.write_all(b"\n").map_err(|e| io_failure(path, e))?;
        }
        first += count;
    }
    file.flush().map_err(|e| io_failure(path, e))?;
    Ok(tally)
}

pub fn run_asymptote(args: &AsymptoteArgs) -> Result<(), Failure> {
    check_unit("v", args.v)?;
    let s = asymptotic_s(&TwoQubitState::werner(args.v)?, &Settings::paper())?;
    println!("S_inf = {:.6}", s.value());
    Ok(())
}
