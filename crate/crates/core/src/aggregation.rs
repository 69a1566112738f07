//! Majority-vote coarse graining of `n` i.i.d. pairs.
//!
//! Each party sees only the photon counts in its two detectors and outputs 0
//! iff the outcome-0 detector has strictly more counts, so the output depends
//! only on the sign of the count difference `D = N0 - N1`. The joint law of
//! `(D_A, D_B)` is an `n`-fold convolution of the per-pair increment law and is
//! built by iterating a 2-D table, `O(n^3)` work overall.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{
    bell_sum, pair_probabilities, BellValue, PairDistribution, Settings, TwoQubitState,
};

/// Largest `n` accepted by [`brute_force_p_n`] (`4^n` outcome strings).
pub const BRUTE_FORCE_MAX_N: usize = 8;

/// Tolerance on the total mass of convolved distributions.
pub const MASS_TOLERANCE: f64 = 1e-10;

/// Joint law of the count differences `(D_A, D_B)` after `n` pairs.
///
/// Without loss every pair moves each difference by +-1, so only the lattice
/// `d = n (mod 2)` carries mass and the table is stored with stride 2.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceDistribution {
    n: usize,
    stride: usize,
    side: usize,
    mass: Vec<f64>,
}

impl DifferenceDistribution {
    /// Stride-2 table indexed by outcome-0 counts `i, j in 0..=n`.
    pub(crate) fn from_counts(n: usize, mass: Vec<f64>) -> Self {
        debug_assert_eq!(mass.len(), (n + 1) * (n + 1));
        Self { n, stride: 2, side: n + 1, mass }
    }

    /// Stride-1 table indexed by `d + n` for `d in -n..=n`.
    pub(crate) fn from_differences(n: usize, mass: Vec<f64>) -> Self {
        debug_assert_eq!(mass.len(), (2 * n + 1) * (2 * n + 1));
        Self { n, stride: 1, side: 2 * n + 1, mass }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn index(&self, d: i64) -> Option<usize> {
        let n = self.n as i64;
        if d < -n || d > n || (d + n) % self.stride as i64 != 0 {
            return None;
        }
        Some(((d + n) / self.stride as i64) as usize)
    }

    fn difference(&self, index: usize) -> i64 {
        (index * self.stride) as i64 - self.n as i64
    }

    /// `P(D_A = d_a, D_B = d_b)`; zero off the support.
    pub fn prob(&self, d_a: i64, d_b: i64) -> f64 {
        match (self.index(d_a), self.index(d_b)) {
            (Some(i), Some(j)) => self.mass[i * self.side + j],
            _ => 0.0,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Law of `(+-D_A, +-D_B)`, negating the flagged coordinates; this is the
    /// table obtained by relabeling that party's outcomes.
    pub fn reflected(&self, flip_a: bool, flip_b: bool) -> Self {
        let last = self.side - 1;
        let mut mass = vec![0.0; self.mass.len()];
        for i in 0..self.side {
            let ri = if flip_a { last - i } else { i };
            for j in 0..self.side {
                let rj = if flip_b { last - j } else { j };
                mass[ri * self.side + rj] = self.mass[i * self.side + j];
            }
        }
        Self { mass, ..*self }
    }

    /// Nonzero-capable points `(d_a, d_b, probability)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (i64, i64, f64)> + '_ {
        self.mass.iter().enumerate().map(move |(k, &p)| {
            (self.difference(k / self.side), self.difference(k % self.side), p)
        })
    }
}

/// Majority-vote output probabilities `p_N(ab|xy)` for one setting pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatedDistribution {
    p: [[f64; 2]; 2],
}

impl AggregatedDistribution {
    pub fn p(&self, a: usize, b: usize) -> f64 {
        self.p[a][b]
    }

    pub fn table(&self) -> [[f64; 2]; 2] {
        self.p
    }

    pub fn total(&self) -> f64 {
        self.p.iter().flatten().sum()
    }
}

impl From<PairDistribution> for AggregatedDistribution {
    fn from(pair: PairDistribution) -> Self {
        Self { p: pair.table() }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("pair count n must be at least 1"));
    }
    Ok(())
}

/// `n`-fold convolution of the lossless increment law of `pair`.
///
/// State is the pair of outcome-0 counts `(i, j)`; a pair with outcomes
/// `(a, b)` increments `i` iff `a = 0` and `j` iff `b = 0`.
pub fn difference_distribution(pair: &PairDistribution, n: usize) -> Result<DifferenceDistribution> {
    check_n(n)?;
    let side = n + 1;
    let (p00, p01, p10, p11) = (pair.p(0, 0), pair.p(0, 1), pair.p(1, 0), pair.p(1, 1));
    let mut old = vec![0.0; side * side];
    let mut new = vec![0.0; side * side];
    old[0] = 1.0;
    for step in 0..n {
        // support grows from [0, step]^2 to [0, step + 1]^2
        let width = step + 2;
        let len = width - 1;
        for i in 0..width {
            let (head, tail) = old.split_at(i * side);
            let same = &tail[..width];
            let out = &mut new[i * side..i * side + width];
            out[0] = p11 * same[0];
            let (s0, s1) = (&same[..len], &same[1..]);
            if i == 0 {
                let o1 = &mut out[1..];
                for j in 0..len {
                    o1[j] = p11 * s1[j] + p10 * s0[j];
                }
            } else {
                let below = &head[(i - 1) * side..(i - 1) * side + width];
                out[0] += p01 * below[0];
                let (b0, b1) = (&below[..len], &below[1..]);
                let o1 = &mut out[1..];
                for j in 0..len {
                    o1[j] = (p11 * s1[j] + p10 * s0[j]) + (p01 * b1[j] + p00 * b0[j]);
                }
            }
        }
        std::mem::swap(&mut old, &mut new);
    }
    Ok(DifferenceDistribution::from_counts(n, old))
}

/// Output 0 iff `D > 0`; ties and negative differences output 1.
pub fn majority_probabilities(diff: &DifferenceDistribution) -> AggregatedDistribution {
    let mut p = [[0.0; 2]; 2];
    for (d_a, d_b, mass) in diff.iter() {
        let a = usize::from(d_a <= 0);
        let b = usize::from(d_b <= 0);
        p[a][b] += mass;
    }
    AggregatedDistribution { p }
}

/// Literal sum over all `4^n` outcome strings: a party outputs 0 iff fewer
/// than half of its outcomes are 1.
pub fn brute_force_p_n(pair: &PairDistribution, n: usize) -> Result<AggregatedDistribution> {
    if n == 0 || n > BRUTE_FORCE_MAX_N {
        return Err(Error::domain(format!(
            "brute force supports 1 <= n <= {BRUTE_FORCE_MAX_N}, got {n}"
        )));
    }
    let mut p = [[0.0; 2]; 2];
    for string in 0..(1usize << (2 * n)) {
        let mut weight = 1.0;
        let (mut ones_a, mut ones_b) = (0, 0);
        for k in 0..n {
            let a = (string >> (2 * k)) & 1;
            let b = (string >> (2 * k + 1)) & 1;
            weight *= pair.p(a, b);
            ones_a += a;
            ones_b += b;
        }
        let out_a = usize::from(2 * ones_a >= n);
        let out_b = usize::from(2 * ones_b >= n);
        p[out_a][out_b] += weight;
    }
    Ok(AggregatedDistribution { p })
}

/// Entries closer than this are treated as the same pair law when sharing
/// convolutions between setting pairs.
const SHARE_TOLERANCE: f64 = 1e-15;

fn relabeled(pair: &PairDistribution, flip_a: bool, flip_b: bool) -> [[f64; 2]; 2] {
    let mut p = [[0.0; 2]; 2];
    for (a, row) in p.iter_mut().enumerate() {
        for (b, value) in row.iter_mut().enumerate() {
            *value = pair.p(a ^ usize::from(flip_a), b ^ usize::from(flip_b));
        }
    }
    p
}

fn same_law(p: &[[f64; 2]; 2], q: &[[f64; 2]; 2]) -> bool {
    p.iter().flatten().zip(q.iter().flatten()).all(|(u, w)| (u - w).abs() <= SHARE_TOLERANCE)
}

/// Majority-vote distributions for all four setting pairs, `[x][y]`.
///
/// Pair laws that coincide with an earlier cell's law, possibly after
/// relabeling one or both parties' outcomes, reuse that cell's difference
/// table (mirrored as needed) instead of convolving again.
pub(crate) fn aggregate_table<F>(
    state: &TwoQubitState,
    settings: &Settings,
    convolve: F,
) -> Result<[[AggregatedDistribution; 2]; 2]>
where
    F: Fn(&PairDistribution) -> Result<DifferenceDistribution> + Sync,
{
    const CELLS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];
    let mut pairs = Vec::with_capacity(4);
    for &(x, y) in &CELLS {
        pairs.push(pair_probabilities(state, &settings.alice[x], &settings.bob[y])?);
    }

    // source[k] = (index of the convolved law, flip_a, flip_b)
    let mut distinct: Vec<usize> = Vec::new();
    let mut source = Vec::with_capacity(4);
    for (k, pair) in pairs.iter().enumerate() {
        let found = distinct.iter().enumerate().find_map(|(slot, &d)| {
            [(false, false), (false, true), (true, false), (true, true)]
                .into_iter()
                .find(|&(fa, fb)| same_law(&relabeled(&pairs[d], fa, fb), &pair.table()))
                .map(|(fa, fb)| (slot, fa, fb))
        });
        source.push(found.unwrap_or_else(|| {
            distinct.push(k);
            (distinct.len() - 1, false, false)
        }));
    }

    let convolved: Vec<Result<DifferenceDistribution>> =
        distinct.par_iter().map(|&k| convolve(&pairs[k])).collect();
    let convolved: Vec<DifferenceDistribution> = convolved.into_iter().collect::<Result<_>>()?;

    let mut table = [[AggregatedDistribution { p: [[0.0; 2]; 2] }; 2]; 2];
    for (&(x, y), &(slot, fa, fb)) in CELLS.iter().zip(&source) {
        let diff = &convolved[slot];
        table[x][y] = if fa || fb {
            majority_probabilities(&diff.reflected(fa, fb))
        } else {
            majority_probabilities(diff)
        };
    }
    Ok(table)
}

pub fn bell_value_of(table: &[[AggregatedDistribution; 2]; 2]) -> BellValue {
    bell_sum(|x, y, a, b| table[x][y].p(a, b))
}

/// `S_N` from the majority-vote distributions of `n` lossless pairs.
pub fn s_n(state: &TwoQubitState, settings: &Settings, n: usize) -> Result<BellValue> {
    check_n(n)?;
    let table = aggregate_table(state, settings, |pair| difference_distribution(pair, n))?;
    Ok(bell_value_of(&table))
}

/// `N -> infinity` limit by the central limit theorem: the normalized count
/// differences become a standard bivariate normal with correlation equal to
/// the per-pair correlator, whose quadrant probabilities follow the arcsine
/// law.
pub fn asymptotic_s(state: &TwoQubitState, settings: &Settings) -> Result<BellValue> {
    let mut table = [[AggregatedDistribution { p: [[0.0; 2]; 2] }; 2]; 2];
    for (x, row) in table.iter_mut().enumerate() {
        for (y, cell) in row.iter_mut().enumerate() {
            let pair = pair_probabilities(state, &settings.alice[x], &settings.bob[y])?;
            let bias = (pair.alice_marginal(0) - 0.5).abs().max((pair.bob_marginal(0) - 0.5).abs());
            if bias > 1e-9 {
                return Err(Error::UnsupportedRegime(format!(
                    "marginals at settings ({}, {}) deviate from 1/2 by {bias}",
                    x + 1,
                    y + 1
                )));
            }
            let rho = pair.correlator().clamp(-1.0, 1.0);
            let same = 0.25 + rho.asin() / (2.0 * std::f64::consts::PI);
            let differ = 0.5 - same;
            *cell = AggregatedDistribution { p: [[same, differ], [differ, same]] };
        }
    }
    Ok(bell_value_of(&table))
}
