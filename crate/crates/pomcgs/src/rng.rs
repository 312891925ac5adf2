//! Deterministic random-number streams.
//!
//! One master seed drives the whole run. Every simulation trajectory gets an
//! independent child stream derived from `(master, phase, index)`, so that
//! parallel evaluation reduces to the same result as a serial run.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The rng type used throughout the crate.
pub type Rng = ChaCha12Rng;

/// Stream phases. Each solver stage draws from its own family of streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Initial-belief particle sampling.
    RootBelief,
    /// Q-learning on the underlying MDP.
    Vmdp,
    /// FSC improvement trajectories (index encodes pass and trajectory).
    Improve,
    /// FSC evaluation trajectories (index is the trajectory number, shared
    /// across evaluation rounds for common random numbers).
    Evaluate,
    /// Policy execution episodes.
    Execute,
    /// Worst-case reward estimation.
    WorstCase,
}

impl Phase {
    fn tag(self) -> u64 {
        match self {
            Phase::RootBelief => 1,
            Phase::Vmdp => 2,
            Phase::Improve => 3,
            Phase::Evaluate => 4,
            Phase::Execute => 5,
            Phase::WorstCase => 6,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the child stream for `(master, phase, index)`.
pub fn child_rng(master: u64, phase: Phase, index: u64) -> Rng {
    let mut state = master ^ phase.tag().rotate_left(17) ^ index.rotate_left(41);
    // burn one output so nearby (phase, index) pairs decorrelate
    let _ = splitmix64(&mut state);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    Rng::from_seed(seed)
}

/// Compose a two-level stream index (e.g. improvement pass and trajectory).
pub fn stream_index(outer: u64, inner: u64) -> u64 {
    outer.wrapping_shl(32) ^ inner
}
