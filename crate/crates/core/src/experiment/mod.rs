//! Event-level Monte Carlo of a Bell test in which pairing information is
//! physically erased.
//!
//! A run emits `n` pairs at times `t0 + k tau`. Bob's photons reach his
//! detectors along a single path; each of Alice's photons takes one of several
//! paths whose delays are integer multiples of `tau`, chosen uniformly. Both
//! parties then report the majority-vote output of their two detectors.
//!
//! A run is kept when both parties registered all `n` photons (fair sampling)
//! and, if required, when Alice's arrival pattern is ambiguous: her arrival
//! times are pairwise distinct and admit at least two assignments to emission
//! slots consistent with the available delays.

mod matching;

pub use matching::count_perfect_matchings;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{
    pair_probabilities, PairDistribution, Settings, TwoQubitState, BELL_TERMS,
};

/// Largest matrix accepted by [`count_perfect_matchings`], and hence the
/// largest `n` per run.
pub const MAX_MATCHING_SIZE: usize = 15;

pub const DEFAULT_PATH_DELAYS: [u32; 5] = [6, 7, 8, 9, 10];

pub const DEFAULT_BOOTSTRAP: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Pairs per run.
    pub n: usize,
    pub v: f64,
    pub eta: f64,
    /// Pulse period.
    pub tau: f64,
    /// Alice's path delays, in units of `tau`.
    pub path_delays: Vec<u32>,
    pub runs: u64,
    pub seed: u64,
    pub settings: Settings,
    pub ambiguity_required: bool,
}

impl ExperimentConfig {
    /// Defaults: `tau = 1`, delays `{6, ..., 10}`, reference settings,
    /// ambiguity postselection on.
    pub fn new(n: usize, v: f64, eta: f64, runs: u64, seed: u64) -> Self {
        Self {
            n,
            v,
            eta,
            tau: 1.0,
            path_delays: DEFAULT_PATH_DELAYS.to_vec(),
            runs,
            seed,
            settings: Settings::paper(),
            ambiguity_required: true,
        }
    }

    pub fn with_ambiguity(mut self, required: bool) -> Self {
        self.ambiguity_required = required;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_MATCHING_SIZE {
            return Err(Error::domain(format!("n = {} outside 1..={MAX_MATCHING_SIZE}", self.n)));
        }
        if self.runs == 0 {
            return Err(Error::domain("runs must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.v) {
            return Err(Error::domain(format!("visibility {} outside [0, 1]", self.v)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::domain(format!("efficiency {} outside [0, 1]", self.eta)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::domain(format!("pulse period {} must be positive", self.tau)));
        }
        if self.path_delays.is_empty() {
            return Err(Error::domain("at least one path delay is required"));
        }
        let mut sorted = self.path_delays.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.path_delays.len() {
            return Err(Error::domain("path delays must be distinct"));
        }
        Ok(())
    }
}

/// Ground truth for one emitted pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEvent {
    pub a: u8,
    pub b: u8,
    pub alice_detected: bool,
    pub bob_detected: bool,
}

/// One registered photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    /// Emitting pair; not available to the parties.
    pub pair: usize,
    pub detector: u8,
    /// Arrival time in units of `tau` after `t0`.
    pub arrival: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: u64,
    /// 0-based setting indices.
    pub x: usize,
    pub y: usize,
    pub pairs: Vec<PairEvent>,
    pub alice_hits: Vec<Hit>,
    pub bob_hits: Vec<Hit>,
    pub kept: bool,
    pub outputs: (u8, u8),
}

impl RunRecord {
    pub fn log_line(&self, tau: f64) -> RunLogLine {
        let times = |hits: &[Hit]| hits.iter().map(|h| f64::from(h.arrival) * tau).collect();
        RunLogLine {
            run: self.index,
            x: self.x + 1,
            y: self.y + 1,
            outputs: [self.outputs.0, self.outputs.1],
            kept: self.kept,
            alice_arrivals: times(&self.alice_hits),
            bob_arrivals: times(&self.bob_hits),
        }
    }
}

/// Run-log schema, one JSON object per line. Settings are labelled 1 and 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogLine {
    pub run: u64,
    pub x: usize,
    pub y: usize,
    pub outputs: [u8; 2],
    pub kept: bool,
    pub alice_arrivals: Vec<f64>,
    pub bob_arrivals: Vec<f64>,
}

/// Independent stream for run `index`: ChaCha8 keyed by the master seed,
/// with the run index as stream id.
pub fn run_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Whether Alice's arrivals admit at least two slot assignments and are
/// pairwise distinct.
pub fn is_ambiguous(arrivals: &[u32], emissions: usize, delays: &[u32]) -> Result<bool> {
    let mut sorted = arrivals.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Ok(false);
    }
    let compat: Vec<Vec<bool>> = arrivals
        .iter()
        .map(|&t| {
            (0..emissions)
                .map(|k| t.checked_sub(k as u32).is_some_and(|d| delays.contains(&d)))
                .collect()
        })
        .collect();
    Ok(count_perfect_matchings(&compat)? >= 2)
}

fn majority(hits: &[Hit]) -> u8 {
    let zeros = hits.iter().filter(|h| h.detector == 0).count();
    let ones = hits.len() - zeros;
    u8::from(zeros <= ones)
}

/// A validated configuration with its outcome tables precomputed.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: ExperimentConfig,
    dist: [[PairDistribution; 2]; 2],
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let state = TwoQubitState::werner(cfg.v)?;
        let mut dist = [[PairDistribution::uniform(); 2]; 2];
        for (x, row) in dist.iter_mut().enumerate() {
            for (y, cell) in row.iter_mut().enumerate() {
                *cell = pair_probabilities(&state, &cfg.settings.alice[x], &cfg.settings.bob[y])?;
            }
        }
        Ok(Self { cfg, dist })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn simulate_run<R: Rng>(&self, index: u64, rng: &mut R) -> RunRecord {
        let cfg = &self.cfg;
        let x = rng.random_range(0..2usize);
        let y = rng.random_range(0..2usize);
        let dist = &self.dist[x][y];

        let mut pairs = Vec::with_capacity(cfg.n);
        let mut alice_hits = Vec::with_capacity(cfg.n);
        let mut bob_hits = Vec::with_capacity(cfg.n);
        for k in 0..cfg.n {
            let u: f64 = rng.random();
            let (a, b) = if u < dist.p(0, 0) {
                (0, 0)
            } else if u < dist.p(0, 0) + dist.p(0, 1) {
                (0, 1)
            } else if u < dist.p(0, 0) + dist.p(0, 1) + dist.p(1, 0) {
                (1, 0)
            } else {
                (1, 1)
            };
            let alice_detected = rng.random_bool(cfg.eta);
            let bob_detected = rng.random_bool(cfg.eta);
            if alice_detected {
                let delay = cfg.path_delays[rng.random_range(0..cfg.path_delays.len())];
                alice_hits.push(Hit { pair: k, detector: a, arrival: k as u32 + delay });
            }
            if bob_detected {
                bob_hits.push(Hit { pair: k, detector: b, arrival: k as u32 });
            }
            pairs.push(PairEvent { a, b, alice_detected, bob_detected });
        }
        alice_hits.sort_by_key(|h| (h.arrival, h.pair));

        let complete = alice_hits.len() == cfg.n && bob_hits.len() == cfg.n;
        let kept = complete
            && (!cfg.ambiguity_required || {
                let arrivals: Vec<u32> = alice_hits.iter().map(|h| h.arrival).collect();
                is_ambiguous(&arrivals, cfg.n, &cfg.path_delays)
                    .expect("n is validated against the matching size limit")
            });
        let outputs = (majority(&alice_hits), majority(&bob_hits));
        RunRecord { index, x, y, pairs, alice_hits, bob_hits, kept, outputs }
    }

    /// Runs `first..first + count` in index order.
    pub fn simulate_range(&self, first: u64, count: u64) -> Vec<RunRecord> {
        (first..first + count)
            .into_par_iter()
            .map(|i| self.simulate_run(i, &mut run_stream(self.cfg.seed, i)))
            .collect()
    }

    pub fn simulate(&self) -> Vec<RunRecord> {
        self.simulate_range(0, self.cfg.runs)
    }

    /// Kept-run counts of all runs without materializing the records.
    pub fn tally(&self) -> Tally {
        (0..self.cfg.runs)
            .into_par_iter()
            .fold(Tally::default, |mut tally, i| {
                tally.add(&self.simulate_run(i, &mut run_stream(self.cfg.seed, i)));
                tally
            })
            .reduce(Tally::default, |a, b| a.merge(&b))
    }
}

/// Counts of kept runs by `[x][y][a][b]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub counts: [[[[u64; 2]; 2]; 2]; 2],
    pub total_runs: u64,
    pub kept_runs: u64,
}

impl Tally {
    pub fn add(&mut self, record: &RunRecord) {
        self.total_runs += 1;
        if record.kept {
            self.kept_runs += 1;
            let (a, b) = record.outputs;
            self.counts[record.x][record.y][a as usize][b as usize] += 1;
        }
    }

    pub fn merge(mut self, other: &Tally) -> Tally {
        self.total_runs += other.total_runs;
        self.kept_runs += other.kept_runs;
        for (i, &c) in other.counts.iter().flatten().flatten().flatten().enumerate() {
            let (x, y, a, b) = (i >> 3, (i >> 2) & 1, (i >> 1) & 1, i & 1);
            self.counts[x][y][a][b] += c;
        }
        self
    }

    pub fn from_records(records: &[RunRecord]) -> Tally {
        let mut tally = Tally::default();
        for r in records {
            tally.add(r);
        }
        tally
    }

    pub fn cell_total(&self, x: usize, y: usize) -> u64 {
        self.counts[x][y].iter().flatten().sum()
    }

    /// Empirical `p_N(ab|xy)` over kept runs, if the cell is nonempty.
    pub fn probability(&self, x: usize, y: usize, a: usize, b: usize) -> Option<f64> {
        let total = self.cell_total(x, y);
        (total > 0).then(|| self.counts[x][y][a][b] as f64 / total as f64)
    }

    fn s_hat(&self) -> Option<f64> {
        BELL_TERMS.iter().map(|&(x, y, a, b)| self.probability(x, y, a, b)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEstimate {
    /// e.g. `p(01|22)`.
    pub term: String,
    pub probability: f64,
    /// Kept runs with this term's settings.
    pub runs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub s_hat: f64,
    pub stderr: f64,
    pub kept_runs: u64,
    pub total_runs: u64,
    pub postselection_rate: f64,
    pub bootstrap_resamples: usize,
    pub terms: Vec<TermEstimate>,
}

/// Plug-in estimate of `S_N` from kept runs with a seeded nonparametric
/// bootstrap standard error.
pub fn estimate_s(records: &[RunRecord], bootstrap_b: usize, seed: u64) -> Result<EstimateReport> {
    estimate_from_tally(&Tally::from_records(records), bootstrap_b, seed)
}

/// Same as [`estimate_s`] from counts. Resampling the kept runs with
/// replacement is a multinomial draw over the 16 `(x, y, a, b)` categories,
/// which is sampled directly as a chain of binomials.
pub fn estimate_from_tally(tally: &Tally, bootstrap_b: usize, seed: u64) -> Result<EstimateReport> {
    for &(x, y, _, _) in &BELL_TERMS {
        if tally.cell_total(x, y) == 0 {
            return Err(Error::InsufficientData(format!(
                "no kept runs with settings ({}, {})",
                x + 1,
                y + 1
            )));
        }
    }
    let s_hat = tally.s_hat().expect("all required cells are nonempty");
    let terms = BELL_TERMS
        .iter()
        .map(|&(x, y, a, b)| TermEstimate {
            term: format!("p({a}{b}|{}{})", x + 1, y + 1),
            probability: tally.probability(x, y, a, b).expect("nonempty cell"),
            runs: tally.cell_total(x, y),
        })
        .collect();

    let flat: Vec<u64> = tally.counts.iter().flatten().flatten().flatten().copied().collect();
    let kept = tally.kept_runs;
    let replicates: Vec<Option<f64>> = (0..bootstrap_b)
        .into_par_iter()
        .map(|r| {
            let mut rng = run_stream(seed, r as u64);
            let mut resampled = Tally { total_runs: kept, kept_runs: kept, ..Tally::default() };
            let mut remaining = kept;
            let mut remaining_weight = kept;
            for (i, &c) in flat.iter().enumerate() {
                let drawn = if remaining == 0 || c == 0 {
                    0
                } else if c == remaining_weight {
                    remaining
                } else {
                    let p = c as f64 / remaining_weight as f64;
                    Binomial::new(remaining, p).expect("valid binomial").sample(&mut rng)
                };
                resampled.counts[i >> 3][(i >> 2) & 1][(i >> 1) & 1][i & 1] = drawn;
                remaining -= drawn;
                remaining_weight -= c;
            }
            resampled.s_hat()
        })
        .collect();
    let values: Vec<f64> = replicates.into_iter().flatten().collect();
    let stderr = if values.len() < 2 {
        0.0
    } else {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
        var.sqrt()
    };

    Ok(EstimateReport {
        s_hat,
        stderr,
        kept_runs: tally.kept_runs,
        total_runs: tally.total_runs,
        postselection_rate: if tally.total_runs == 0 {
            0.0
        } else {
            tally.kept_runs as f64 / tally.total_runs as f64
        },
        bootstrap_resamples: bootstrap_b,
        terms,
    })
}
