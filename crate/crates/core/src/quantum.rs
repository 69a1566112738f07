//! Two-qubit states, projective qubit measurements, Born-rule pair
//! probabilities and the six-term Bell functional `S >= 1`.
//!
//! Outcomes are labelled 0 and 1. A [`MeasurementSetting`] stores the Bloch
//! vector `n` of the outcome-1 projector `(1 + n.sigma) / 2`. Setting and
//! outcome indices are 0-based throughout the library: `x = 0` is Alice's
//! first measurement, `x = 1` her second, and likewise `y` for Bob.

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

pub type DensityMatrix = Matrix4<Complex64>;
pub type QubitOperator = Matrix2<Complex64>;

/// Tolerance for every exact-arithmetic invariant on states, settings and
/// probability tables.
pub const TOLERANCE: f64 = 1e-12;

/// Local bound of the Bell functional.
pub const CLASSICAL_BOUND: f64 = 1.0;

/// The six `(x, y, a, b)` terms of the functional, 0-based:
/// `p(01|22) + p(10|12) + p(01|11) + p(11|21) + p(10|21) + p(00|21)`.
pub const BELL_TERMS: [(usize, usize, usize, usize); 6] = [
    (1, 1, 0, 1),
    (0, 1, 1, 0),
    (0, 0, 0, 1),
    (1, 0, 1, 1),
    (1, 0, 1, 0),
    (1, 0, 0, 0),
];

/// A validated 4x4 density matrix on Alice (first factor) and Bob.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    matrix: DensityMatrix,
}

impl TwoQubitState {
    pub fn new(matrix: DensityMatrix) -> Result<Self> {
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > TOLERANCE || trace.im.abs() > TOLERANCE {
            return Err(Error::domain(format!("density matrix trace is {trace}, expected 1")));
        }
        for i in 0..4 {
            for j in 0..4 {
                if (matrix[(i, j)] - matrix[(j, i)].conj()).norm() > TOLERANCE {
                    return Err(Error::domain(format!(
                        "density matrix is not Hermitian at ({i}, {j})"
                    )));
                }
            }
        }
        let min_eigenvalue = matrix
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eigenvalue < -TOLERANCE {
            return Err(Error::domain(format!(
                "density matrix is not positive semidefinite (eigenvalue {min_eigenvalue})"
            )));
        }
        Ok(Self { matrix })
    }

    /// `|phi+> = (|00> + |11>) / sqrt 2`.
    pub fn phi_plus() -> Self {
        Self::werner(1.0).expect("visibility 1 is in range")
    }

    /// `v |phi+><phi+| + (1 - v) 1/4`.
    pub fn werner(v: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("visibility {v} outside [0, 1]")));
        }
        let mut matrix = DensityMatrix::from_diagonal_element(Complex64::from((1.0 - v) / 4.0));
        for &i in &[0, 3] {
            for &j in &[0, 3] {
                matrix[(i, j)] += Complex64::from(v / 2.0);
            }
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DensityMatrix {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let mut values: Vec<f64> = self.matrix.symmetric_eigenvalues().iter().copied().collect();
        values.sort_by(|a, b| b.total_cmp(a));
        [values[0], values[1], values[2], values[3]]
    }
}

/// A projective qubit measurement, stored as the Bloch vector of its
/// outcome-1 projector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    bloch: [f64; 3],
}

impl MeasurementSetting {
    pub fn new(bloch: [f64; 3]) -> Result<Self> {
        let norm = bloch.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > TOLERANCE {
            return Err(Error::domain(format!("Bloch vector {bloch:?} has norm {norm}, expected 1")));
        }
        Ok(Self { bloch })
    }

    /// Spherical coordinates: polar angle `theta` from +z, azimuth `phi` from +x.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self { bloch: [st * cp, st * sp, ct] }
    }

    /// Inverse of [`from_angles`](Self::from_angles), with `phi` in `[0, 2 pi)`.
    pub fn angles(&self) -> (f64, f64) {
        let [x, y, z] = self.bloch;
        let theta = z.clamp(-1.0, 1.0).acos();
        let phi = y.atan2(x).rem_euclid(std::f64::consts::TAU);
        (theta, phi)
    }

    pub fn bloch(&self) -> [f64; 3] {
        self.bloch
    }

    /// Projector onto `outcome` (0 or 1).
    pub fn projector(&self, outcome: usize) -> QubitOperator {
        let [x, y, z] = self.bloch;
        let sign = if outcome == 1 { 0.5 } else { -0.5 };
        let c = |re: f64, im: f64| Complex64::new(re, im);
        // (1 + s n.sigma) / 2 with s = +1 for outcome 1, -1 for outcome 0
        QubitOperator::new(
            c(0.5 + sign * z, 0.0),
            c(sign * x, -sign * y),
            c(sign * x, sign * y),
            c(0.5 - sign * z, 0.0),
        )
    }
}

/// Alice's two settings followed by Bob's two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub alice: [MeasurementSetting; 2],
    pub bob: [MeasurementSetting; 2],
}

impl Settings {
    /// `(1 - sigma_x)/2`, `(1 - sigma_y)/2` for Alice and
    /// `(1 - (sigma_x +- sigma_y)/sqrt 2)/2` for Bob, as outcome-1 projectors.
    pub fn paper() -> Self {
        let s = FRAC_1_SQRT_2;
        Self {
            alice: [
                MeasurementSetting { bloch: [-1.0, 0.0, 0.0] },
                MeasurementSetting { bloch: [0.0, -1.0, 0.0] },
            ],
            bob: [
                MeasurementSetting { bloch: [-s, -s, 0.0] },
                MeasurementSetting { bloch: [-s, s, 0.0] },
            ],
        }
    }

    /// A1, A2, B1, B2.
    pub fn as_array(&self) -> [MeasurementSetting; 4] {
        [self.alice[0], self.alice[1], self.bob[0], self.bob[1]]
    }

    pub fn from_array(settings: [MeasurementSetting; 4]) -> Self {
        Self { alice: [settings[0], settings[1]], bob: [settings[2], settings[3]] }
    }
}

/// The four settings A1, A2, B1, B2 that reach `(3 - sqrt 2)/2` on `|phi+>`.
pub fn paper_settings() -> Settings {
    Settings::paper()
}

/// Joint outcome probabilities `p(ab|xy)` for one pair of settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDistribution {
    p: [[f64; 2]; 2],
}

impl PairDistribution {
    /// Validates entries and total mass; entries in `[-1e-12, 0)` clamp to 0.
    pub fn new(p00: f64, p01: f64, p10: f64, p11: f64) -> Result<Self> {
        Self::from_table([[p00, p01], [p10, p11]])
    }

    pub fn from_table(mut p: [[f64; 2]; 2]) -> Result<Self> {
        let mut total = 0.0;
        for row in p.iter_mut() {
            for value in row.iter_mut() {
                if !value.is_finite() || *value < -TOLERANCE || *value > 1.0 + TOLERANCE {
                    return Err(Error::domain(format!("probability {value} outside [0, 1]")));
                }
                *value = value.clamp(0.0, 1.0);
                total += *value;
            }
        }
        if (total - 1.0).abs() > TOLERANCE {
            return Err(Error::domain(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(Self { p })
    }

    pub fn uniform() -> Self {
        Self { p: [[0.25; 2]; 2] }
    }

    /// `p(ab)`.
    pub fn p(&self, a: usize, b: usize) -> f64 {
        self.p[a][b]
    }

    pub fn table(&self) -> [[f64; 2]; 2] {
        self.p
    }

    pub fn alice_marginal(&self, a: usize) -> f64 {
        self.p[a][0] + self.p[a][1]
    }

    pub fn bob_marginal(&self, b: usize) -> f64 {
        self.p[0][b] + self.p[1][b]
    }

    /// `p00 + p11 - p01 - p10`.
    pub fn correlator(&self) -> f64 {
        self.p[0][0] + self.p[1][1] - self.p[0][1] - self.p[1][0]
    }
}

/// Born rule `p(ab) = Tr[rho (P_a (x) P_b)]`.
pub fn pair_probabilities(
    state: &TwoQubitState,
    a_setting: &MeasurementSetting,
    b_setting: &MeasurementSetting,
) -> Result<PairDistribution> {
    let rho = state.matrix();
    let mut p = [[0.0; 2]; 2];
    for (a, row) in p.iter_mut().enumerate() {
        let pa = a_setting.projector(a);
        for (b, value) in row.iter_mut().enumerate() {
            let pb = b_setting.projector(b);
            let mut trace = Complex64::new(0.0, 0.0);
            for i in 0..4 {
                for j in 0..4 {
                    let op = pa[(j / 2, i / 2)] * pb[(j % 2, i % 2)];
                    trace += rho[(i, j)] * op;
                }
            }
            *value = trace.re;
        }
    }
    PairDistribution::from_table(p)
}

/// `dist[x][y]` for Alice setting `x` and Bob setting `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    dist: [[PairDistribution; 2]; 2],
}

impl CorrelationTable {
    /// Rejects tables whose marginals signal between the parties.
    #[allow(clippy::needless_range_loop)]
    pub fn new(dist: [[PairDistribution; 2]; 2]) -> Result<Self> {
        for party_setting in 0..2 {
            for outcome in 0..2 {
                let alice = |y: usize| dist[party_setting][y].alice_marginal(outcome);
                let bob = |x: usize| dist[x][party_setting].bob_marginal(outcome);
                if (alice(0) - alice(1)).abs() > TOLERANCE || (bob(0) - bob(1)).abs() > TOLERANCE {
                    return Err(Error::domain("correlation table violates no-signaling"));
                }
            }
        }
        Ok(Self { dist })
    }

    pub fn from_state(state: &TwoQubitState, settings: &Settings) -> Result<Self> {
        let mut dist = [[PairDistribution::uniform(); 2]; 2];
        for (x, row) in dist.iter_mut().enumerate() {
            for (y, cell) in row.iter_mut().enumerate() {
                *cell = pair_probabilities(state, &settings.alice[x], &settings.bob[y])?;
            }
        }
        Self::new(dist)
    }

    pub fn get(&self, x: usize, y: usize) -> &PairDistribution {
        &self.dist[x][y]
    }
}

/// A value of the Bell functional; local models satisfy `S >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BellValue(f64);

impl BellValue {
    pub fn new(s: f64) -> Self {
        Self(s)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `S < 1 - margin`.
    pub fn violates(self, margin: f64) -> bool {
        self.0 < CLASSICAL_BOUND - margin
    }
}

/// Sums the six terms in the fixed order of [`BELL_TERMS`].
pub(crate) fn bell_sum(prob: impl Fn(usize, usize, usize, usize) -> f64) -> BellValue {
    BellValue(BELL_TERMS.iter().map(|&(x, y, a, b)| prob(x, y, a, b)).sum())
}

pub fn bell_functional(table: &CorrelationTable) -> BellValue {
    bell_sum(|x, y, a, b| table.get(x, y).p(a, b))
}

/// `S` of the local deterministic strategy where Alice outputs `a1`/`a2` and
/// Bob `b1`/`b2` for settings 1/2. Bits other than 0 are read as 1.
pub fn deterministic_strategy_value(a1: u8, a2: u8, b1: u8, b2: u8) -> BellValue {
    let alice = [usize::from(a1 != 0), usize::from(a2 != 0)];
    let bob = [usize::from(b1 != 0), usize::from(b2 != 0)];
    bell_sum(|x, y, a, b| if alice[x] == a && bob[y] == b { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn werner_closed_form(v: f64, x: usize, y: usize, a: usize, b: usize) -> f64 {
        let k = if (x, y) == (1, 0) { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
        let sign = if a == b { 1.0 } else { -1.0 };
        0.25 * (1.0 + v * sign * k)
    }

    #[test]
    fn werner_limits() {
        let pure = TwoQubitState::werner(1.0).unwrap();
        let m = pure.matrix();
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            assert!((m[(i, j)].re - 0.5).abs() < 1e-15);
        }
        assert!((m[(1, 1)].re).abs() < 1e-15);

        let mixed = TwoQubitState::werner(0.0).unwrap();
        assert_eq!(*mixed.matrix(), DensityMatrix::identity() * Complex64::from(0.25));
    }

    #[test]
    fn werner_spectrum() {
        let v = 0.99;
        let ev = TwoQubitState::werner(v).unwrap().eigenvalues();
        let expected = [(1.0 + 3.0 * v) / 4.0, (1.0 - v) / 4.0, (1.0 - v) / 4.0, (1.0 - v) / 4.0];
        for (got, want) in ev.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!((ev[0] - 0.9925).abs() < 1e-12);
        assert!((ev[3] - 0.0025).abs() < 1e-12);
    }

    #[test]
    fn werner_rejects_bad_visibility() {
        assert!(matches!(TwoQubitState::werner(1.5), Err(Error::Domain(_))));
        assert!(TwoQubitState::werner(-0.1).is_err());
        assert!(TwoQubitState::werner(f64::NAN).is_err());
    }

    #[test]
    fn state_validation() {
        let mut not_psd = DensityMatrix::zeros();
        not_psd[(0, 0)] = Complex64::from(1.5);
        not_psd[(1, 1)] = Complex64::from(-0.5);
        assert!(TwoQubitState::new(not_psd).is_err());

        let mut not_hermitian = *TwoQubitState::werner(0.5).unwrap().matrix();
        not_hermitian[(0, 1)] = Complex64::new(0.0, 0.1);
        assert!(TwoQubitState::new(not_hermitian).is_err());

        let half = DensityMatrix::identity() * Complex64::from(0.5);
        assert!(TwoQubitState::new(half).is_err());
    }

    #[test]
    fn paper_settings_vectors() {
        let s = paper_settings();
        assert_eq!(s.alice[0].bloch(), [-1.0, 0.0, 0.0]);
        assert_eq!(s.alice[1].bloch(), [0.0, -1.0, 0.0]);
        assert_eq!(s.bob[0].bloch(), [-FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0]);
        assert_eq!(s.bob[1].bloch(), [-FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0]);
        for m in s.as_array() {
            assert!(MeasurementSetting::new(m.bloch()).is_ok());
        }
    }

    #[test]
    fn setting_rejects_non_unit_vector() {
        assert!(MeasurementSetting::new([1.0, 1.0, 0.0]).is_err());
        assert!(MeasurementSetting::new([0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn projectors_are_complementary() {
        let m = MeasurementSetting::from_angles(1.1, 2.3);
        let sum = m.projector(0) + m.projector(1);
        assert!((sum - QubitOperator::identity()).norm() < 1e-15);
        let p1 = m.projector(1);
        assert!((p1 * p1 - p1).norm() < 1e-15);
    }

    #[test]
    fn born_rule_werner_examples() {
        let s = paper_settings();
        let pure = TwoQubitState::werner(1.0).unwrap();
        let d21 = pair_probabilities(&pure, &s.alice[1], &s.bob[0]).unwrap();
        let lo = (1.0 - FRAC_1_SQRT_2) / 4.0;
        let hi = (1.0 + FRAC_1_SQRT_2) / 4.0;
        assert!((d21.p(0, 0) - lo).abs() < 1e-12);
        assert!((d21.p(1, 1) - lo).abs() < 1e-12);
        assert!((d21.p(0, 1) - hi).abs() < 1e-12);
        assert!((d21.p(1, 0) - hi).abs() < 1e-12);
        assert!((d21.p(0, 0) - 0.0732233).abs() < 1e-7);

        let d11 = pair_probabilities(&pure, &s.alice[0], &s.bob[0]).unwrap();
        assert!((d11.p(0, 1) - lo).abs() < 1e-12);

        let mixed = TwoQubitState::werner(0.0).unwrap();
        let m = MeasurementSetting::from_angles(0.4, 5.0);
        let d = pair_probabilities(&mixed, &m, &s.bob[1]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((d.p(a, b) - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn born_rule_matches_closed_form() {
        let s = paper_settings();
        for v in [0.0, 0.5, 0.95, 1.0] {
            let state = TwoQubitState::werner(v).unwrap();
            let table = CorrelationTable::from_state(&state, &s).unwrap();
            for x in 0..2 {
                for y in 0..2 {
                    for a in 0..2 {
                        for b in 0..2 {
                            let want = werner_closed_form(v, x, y, a, b);
                            assert!((table.get(x, y).p(a, b) - want).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn bell_functional_values() {
        let table =
            CorrelationTable::from_state(&TwoQubitState::phi_plus(), &paper_settings()).unwrap();
        let s = bell_functional(&table).value();
        assert!((s - (3.0 - 2f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((s - 0.79289).abs() < 1e-5);

        let uniform = CorrelationTable::new([[PairDistribution::uniform(); 2]; 2]).unwrap();
        assert_eq!(bell_functional(&uniform).value(), 1.5);

        let ones = PairDistribution::new(0.0, 0.0, 0.0, 1.0).unwrap();
        let deterministic = CorrelationTable::new([[ones; 2]; 2]).unwrap();
        assert_eq!(bell_functional(&deterministic).value(), 1.0);
    }

    #[test]
    fn deterministic_strategies() {
        assert_eq!(deterministic_strategy_value(1, 1, 1, 1).value(), 1.0);
        assert_eq!(deterministic_strategy_value(0, 0, 0, 0).value(), 1.0);
        let min = (0..16u8)
            .map(|bits| {
                deterministic_strategy_value(bits & 1, (bits >> 1) & 1, (bits >> 2) & 1, bits >> 3)
                    .value()
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min, 1.0);
    }

    #[test]
    fn signaling_table_rejected() {
        let a = PairDistribution::new(0.5, 0.0, 0.0, 0.5).unwrap();
        let b = PairDistribution::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert!(CorrelationTable::new([[a, b], [a, a]]).is_err());
    }

    #[test]
    fn pair_distribution_clamps_tiny_negatives() {
        let d = PairDistribution::new(-5e-13, 0.5, 0.5, 5e-13).unwrap();
        assert_eq!(d.p(0, 0), 0.0);
        assert!(PairDistribution::new(-1e-6, 0.5, 0.5, 1e-6).is_err());
        assert!(PairDistribution::new(0.3, 0.3, 0.3, 0.3).is_err());
    }

    #[test]
    fn angles_round_trip() {
        for m in paper_settings().as_array() {
            let (theta, phi) = m.angles();
            let back = MeasurementSetting::from_angles(theta, phi).bloch();
            for (u, w) in back.iter().zip(m.bloch()) {
                assert!((u - w).abs() < 1e-12);
            }
        }
    }
}
