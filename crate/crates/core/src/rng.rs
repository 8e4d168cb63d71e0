//! Seeded random streams.
//!
//! Every run draws from ChaCha8 keyed by the run seed (expanded with
//! `SeedableRng::seed_from_u64`), with a distinct ChaCha stream id per
//! purpose. ChaCha is counter based and the expansion is specified, so a
//! `(seed, purpose)` pair yields the same bits on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Context draws for i.i.d. schedules.
    Context = 1,
    /// Initial states and transitions.
    Environment = 2,
    /// Learner-internal randomness (the uniform baseline).
    Learner = 3,
    /// Pre-stage action-set draws.
    ActionSets = 4,
    /// Instance generation.
    Instance = 5,
}

pub fn stream(seed: u64, purpose: Purpose) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// Inverse-CDF draw from a probability vector with a uniform `u` in `[0, 1)`.
/// Rounding slack past the last cumulative sum lands on the last state with
/// positive mass.
#[inline]
pub fn sample_index(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}
