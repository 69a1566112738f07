//! Bell violations detectable when each party records only the aggregate
//! intensities produced by `N` entangled pairs.
//!
//! * [`quantum`]: two-qubit states, measurements and the Bell functional
//!   `S = p(01|22) + p(10|12) + p(01|11) + p(11|21) + p(10|21) + p(00|21) >= 1`.
//! * [`aggregation`]: exact majority-vote probabilities `p_N(ab|xy)` and `S_N`.
//! * [`loss`]: the same with detection efficiency `eta` and the critical `eta_min`.
//! * [`optimizer`]: multi-start minimization of `S_N` over measurement settings.
//! * [`experiment`]: event-level Monte Carlo of a pairing-erasure Bell test.

pub mod aggregation;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod optimizer;
pub mod quantum;

pub use error::{Error, Result};
