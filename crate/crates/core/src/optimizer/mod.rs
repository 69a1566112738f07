//! Minimization of `S_N` over the four measurement directions for Werner
//! states.
//!
//! Each start runs Nelder-Mead in the 8-dimensional space of polar and
//! azimuthal angles, restarting the simplex at its own optimum until a restart
//! no longer improves the objective. Start 0 is always the reference settings
//! from [`Settings::paper`]; the rest are uniform random angle vectors drawn
//! from a ChaCha stream keyed by `(seed, start index)`.

mod simplex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::loss::s_n_eta;
use crate::quantum::{BellValue, MeasurementSetting, Settings, TwoQubitState};

use simplex::nelder_mead;

/// Initial simplex edge, in radians.
const INITIAL_STEP: f64 = 0.4;
/// Simplex restarts per start after the first convergence.
const MAX_RESTARTS: usize = 8;

/// `(theta, phi)` for A1, A2, B1, B2, flattened.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleVector(pub [f64; 8]);

impl AngleVector {
    pub fn from_settings(settings: &Settings) -> Self {
        let mut angles = [0.0; 8];
        for (k, m) in settings.as_array().iter().enumerate() {
            let (theta, phi) = m.angles();
            angles[2 * k] = theta;
            angles[2 * k + 1] = phi;
        }
        Self(angles)
    }

    /// Same directions with `theta` in `[0, pi]` and `phi` in `[0, 2 pi)`.
    pub fn canonical(&self) -> Self {
        Self::from_settings(&settings_from_angles(self))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn settings_from_angles(angles: &AngleVector) -> Settings {
    let a = &angles.0;
    Settings::from_array([
        MeasurementSetting::from_angles(a[0], a[1]),
        MeasurementSetting::from_angles(a[2], a[3]),
        MeasurementSetting::from_angles(a[4], a[5]),
        MeasurementSetting::from_angles(a[6], a[7]),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub starts: usize,
    /// Convergence threshold on the spread of objective values in the simplex.
    pub tolerance: f64,
    /// Evaluation budget per start.
    pub max_evaluations: usize,
    pub seed: u64,
    /// Largest `n` a sweep or threshold scan may reach.
    pub n_cap: usize,
    /// `S < 1 - margin` counts as a violation.
    pub margin: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            starts: 32,
            tolerance: 1e-9,
            max_evaluations: 20_000,
            seed: 0,
            n_cap: 24,
            margin: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_angles: AngleVector,
    pub best_s: BellValue,
    pub n: usize,
    pub v: f64,
    pub eta: f64,
    pub starts: usize,
    /// Index of the start that produced the optimum.
    pub best_start: usize,
    pub converged: bool,
    /// Objective evaluations over all starts.
    pub evaluations: usize,
}

impl OptimizationResult {
    pub fn settings(&self) -> Settings {
        settings_from_angles(&self.best_angles)
    }
}

struct StartOutcome {
    angles: AngleVector,
    s: f64,
    evaluations: usize,
    converged: bool,
}

fn start_angles(cfg: &OptimizerConfig, index: usize) -> AngleVector {
    if index == 0 {
        return AngleVector::from_settings(&Settings::paper());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let mut angles = [0.0; 8];
    for pair in angles.chunks_exact_mut(2) {
        pair[0] = rng.random_range(0.0..PI);
        pair[1] = rng.random_range(0.0..TAU);
    }
    AngleVector(angles)
}

fn run_start<F>(objective: &F, cfg: &OptimizerConfig, index: usize) -> StartOutcome
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = start_angles(cfg, index).0.to_vec();
    let mut s = objective(&x);
    let mut evaluations = 1;
    let mut converged = false;
    let mut step = INITIAL_STEP;
    for _ in 0..=MAX_RESTARTS {
        let budget = cfg.max_evaluations.saturating_sub(evaluations);
        if budget == 0 {
            break;
        }
        let out = nelder_mead(objective, &x, step, cfg.tolerance, budget);
        evaluations += out.evaluations;
        let improvement = s - out.f;
        if out.f < s {
            x = out.x;
            s = out.f;
        }
        converged = out.converged;
        if !out.converged || improvement <= cfg.tolerance {
            break;
        }
        step = (step * 0.5).max(1e-3);
    }
    let mut angles = [0.0; 8];
    angles.copy_from_slice(&x);
    StartOutcome { angles: AngleVector(angles), s, evaluations, converged }
}

/// Multi-start minimization of `S_N(werner(v), settings, n, eta)` over the
/// measurement directions. Deterministic for a given configuration.
pub fn minimize_s_n(v: f64, n: usize, eta: f64, cfg: &OptimizerConfig) -> Result<OptimizationResult> {
    if cfg.starts == 0 {
        return Err(Error::domain("optimizer needs at least one start"));
    }
    if cfg.tolerance.is_nan() || cfg.tolerance < 0.0 {
        return Err(Error::domain(format!("invalid tolerance {}", cfg.tolerance)));
    }
    let state = TwoQubitState::werner(v)?;
    let evaluate = |angles: &AngleVector| -> Result<f64> {
        Ok(s_n_eta(&state, &settings_from_angles(angles), n, eta)?.value())
    };
    // surfaces domain errors in n or eta before any search
    evaluate(&AngleVector::from_settings(&Settings::paper()))?;

    let objective = |x: &[f64]| -> f64 {
        let mut a = [0.0; 8];
        a.copy_from_slice(x);
        evaluate(&AngleVector(a)).unwrap_or(f64::INFINITY)
    };

    let outcomes: Vec<StartOutcome> =
        (0..cfg.starts).into_par_iter().map(|k| run_start(&objective, cfg, k)).collect();

    let mut best_start = 0;
    for (k, outcome) in outcomes.iter().enumerate() {
        if outcome.s < outcomes[best_start].s {
            best_start = k;
        }
    }
    let best = &outcomes[best_start];
    let best_angles = best.angles.canonical();
    let best_s = BellValue::new(evaluate(&best_angles)?);
    let result = OptimizationResult {
        best_angles,
        best_s,
        n,
        v,
        eta,
        starts: cfg.starts,
        best_start,
        converged: best.converged,
        evaluations: outcomes.iter().map(|o| o.evaluations).sum(),
    };
    if !outcomes.iter().any(|o| o.converged) {
        return Err(Error::NonConvergence { best: Box::new(result) });
    }
    Ok(result)
}

/// One `(v, n)` cell of a sweep.
#[derive(Debug)]
pub struct SweepCell {
    pub v: f64,
    pub n: usize,
    pub result: Result<OptimizationResult>,
}

/// Optimizes every `(v, n)` with `n in 1..=n_max`, ordered by `(v, n)`.
/// A failing cell is reported in place without aborting the sweep.
pub fn sweep(v_list: &[f64], n_max: usize, eta: f64, cfg: &OptimizerConfig) -> Result<Vec<SweepCell>> {
    if n_max == 0 || n_max > cfg.n_cap {
        return Err(Error::domain(format!("n_max {n_max} outside 1..={}", cfg.n_cap)));
    }
    let mut vs = v_list.to_vec();
    vs.sort_by(f64::total_cmp);
    let cells: Vec<(f64, usize)> =
        vs.iter().flat_map(|&v| (1..=n_max).map(move |n| (v, n))).collect();
    Ok(cells
        .into_par_iter()
        .map(|(v, n)| SweepCell { v, n, result: minimize_s_n(v, n, eta, cfg) })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    pub fn first(self) -> usize {
        match self {
            Parity::Odd => 1,
            Parity::Even => 2,
        }
    }
}

/// Largest `n` of the given parity whose optimized `S_N` (perfect detection)
/// lies below `1 - cfg.margin`. Scans upward and stops after two consecutive
/// non-violations or at `cfg.n_cap`; 0 if nothing violates.
pub fn violation_threshold(v: f64, parity: Parity, cfg: &OptimizerConfig) -> Result<usize> {
    let mut last = 0;
    let mut misses = 0;
    let mut n = parity.first();
    while n <= cfg.n_cap && misses < 2 {
        let best = match minimize_s_n(v, n, 1.0, cfg) {
            Ok(result) => result.best_s,
            Err(Error::NonConvergence { best }) => best.best_s,
            Err(e) => return Err(e),
        };
        if best.violates(cfg.margin) {
            last = n;
            misses = 0;
        } else {
            misses += 1;
        }
        n += 2;
    }
    Ok(last)
}
