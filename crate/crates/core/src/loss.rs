//! Majority voting with lossy detectors and the critical efficiency below
//! which the aggregated correlations no longer violate `S >= 1`.
//!
//! Every photon is lost independently with probability `1 - eta` on all four
//! detectors; the source is heralded and there are no dark counts. A lost
//! photon leaves that party's count difference unchanged, so per pair the
//! difference increments are in `{-1, 0, +1}`.

use serde::{Deserialize, Serialize};

use crate::aggregation::{
    aggregate_table, bell_value_of, s_n, DifferenceDistribution,
};
use crate::error::{Error, Result};
use crate::quantum::{BellValue, PairDistribution, Settings, TwoQubitState};

/// Bisection iteration cap for [`eta_min`].
pub const MAX_BISECTION_ITERATIONS: usize = 60;

/// Smallest tolerance accepted by [`eta_min`].
pub const MIN_TOLERANCE: f64 = 1e-10;

const SCAN_STEP: f64 = 0.01;

/// Per-pair law of `(delta_A, delta_B)`, indexed `[delta_A + 1][delta_B + 1]`.
/// `+1` is a detector-0 click, `-1` a detector-1 click, `0` no click.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossyIncrementLaw {
    prob: [[f64; 3]; 3],
}

impl LossyIncrementLaw {
    pub fn prob(&self, delta_a: i64, delta_b: i64) -> f64 {
        self.prob[(delta_a + 1) as usize][(delta_b + 1) as usize]
    }

    pub fn total(&self) -> f64 {
        self.prob.iter().flatten().sum()
    }
}

fn increment(outcome: usize) -> usize {
    // index of delta + 1: outcome 0 -> +1 -> 2, outcome 1 -> -1 -> 0
    if outcome == 0 {
        2
    } else {
        0
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::domain(format!("efficiency {eta} outside [0, 1]")));
    }
    Ok(())
}

pub fn lossy_increment_law(pair: &PairDistribution, eta: f64) -> Result<LossyIncrementLaw> {
    check_eta(eta)?;
    let both = eta * eta;
    let one = eta * (1.0 - eta);
    let mut prob = [[0.0; 3]; 3];
    for a in 0..2 {
        for b in 0..2 {
            prob[increment(a)][increment(b)] += both * pair.p(a, b);
        }
        prob[increment(a)][1] += one * pair.alice_marginal(a);
    }
    for b in 0..2 {
        prob[1][increment(b)] += one * pair.bob_marginal(b);
    }
    prob[1][1] += (1.0 - eta) * (1.0 - eta);
    Ok(LossyIncrementLaw { prob })
}

/// Convolution of the given per-pair laws, in order.
pub fn convolve_increments(laws: &[LossyIncrementLaw]) -> Result<DifferenceDistribution> {
    let n = laws.len();
    if n == 0 {
        return Err(Error::domain("pair count n must be at least 1"));
    }
    let side = 2 * n + 1;
    let mut old = vec![0.0; side * side];
    let mut new = vec![0.0; side * side];
    old[n * side + n] = 1.0;
    for (step, law) in laws.iter().enumerate() {
        // support after `step` pairs is [n - step, n + step]^2
        let lo = n - step - 1;
        let hi = n + step + 1;
        for i in lo..=hi {
            let out = &mut new[i * side..(i + 1) * side];
            for value in &mut out[lo..=hi] {
                *value = 0.0;
            }
            for (da, row) in law.prob.iter().enumerate() {
                // new[i][j] += w * old[i + 1 - da][j + 1 - db]
                let src = match (i + 1).checked_sub(da) {
                    Some(src) if src < side => src,
                    _ => continue,
                };
                let source = &old[src * side..(src + 1) * side];
                for (db, &w) in row.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let first = lo.max(db.saturating_sub(1));
                    let last = hi.min(side + db - 2);
                    for j in first..=last {
                        out[j] += w * source[j + 1 - db];
                    }
                }
            }
        }
        std::mem::swap(&mut old, &mut new);
    }
    Ok(DifferenceDistribution::from_differences(n, old))
}

/// `S_N` at detection efficiency `eta`; undetected photons contribute no
/// counts and ties still output 1. At `eta = 1` this is exactly [`s_n`].
pub fn s_n_eta(state: &TwoQubitState, settings: &Settings, n: usize, eta: f64) -> Result<BellValue> {
    check_eta(eta)?;
    if eta == 1.0 {
        return s_n(state, settings, n);
    }
    if n == 0 {
        return Err(Error::domain("pair count n must be at least 1"));
    }
    let table = aggregate_table(state, settings, |pair| {
        let law = lossy_increment_law(pair, eta)?;
        convolve_increments(&vec![law; n])
    })?;
    Ok(bell_value_of(&table))
}

/// Critical efficiency for `n` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyResult {
    pub n: usize,
    pub eta_min: f64,
    /// Final bisection bracket; `S >= 1` at the low end, `S < 1` at the high end.
    pub bracket: (f64, f64),
    pub iterations: usize,
}

/// Largest root of `S_N(eta) = 1` below 1, by a downward scan in steps of
/// 0.01 followed by bisection to `tol`.
pub fn eta_min(
    state: &TwoQubitState,
    settings: &Settings,
    n: usize,
    tol: f64,
) -> Result<EfficiencyResult> {
    if tol.is_nan() || tol < MIN_TOLERANCE {
        return Err(Error::domain(format!("tolerance {tol} below {MIN_TOLERANCE}")));
    }
    let s = |eta: f64| s_n_eta(state, settings, n, eta).map(BellValue::value);
    let s_at_one = s(1.0)?;
    if s_at_one >= 1.0 {
        return Err(Error::NoThreshold { n, s_at_one });
    }

    let mut hi = 1.0;
    let mut lo = 0.0;
    for k in 1..=100 {
        let eta = (1.0 - SCAN_STEP * k as f64).max(0.0);
        if s(eta)? >= 1.0 {
            lo = eta;
            break;
        }
        hi = eta;
    }

    let mut iterations = 0;
    while hi - lo > tol && iterations < MAX_BISECTION_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if s(mid)? < 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(EfficiencyResult { n, eta_min: 0.5 * (lo + hi), bracket: (lo, hi), iterations })
}
