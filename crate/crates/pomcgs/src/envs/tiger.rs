//! The Tiger problem, used as a verification oracle: two states, three
//! actions, explicit transition/observation/reward tables alongside the
//! generative sampler, and a belief-grid value iteration giving the exact
//! optimal value at the uniform initial belief.

use crate::pomdp::{
    ActionSpace, ActionSpec, BinKey, GenerativeModel, ModelError, ObservationKind, ObservationSample,
    ProblemMetadata, WorstCaseSource,
};
use crate::rng::Rng;
use rand::Rng as _;

/// States: 0 = tiger behind the left door, 1 = tiger behind the right door.
pub const TIGER_LEFT: u8 = 0;
pub const TIGER_RIGHT: u8 = 1;
/// Actions: 0 = listen, 1 = open left, 2 = open right.
pub const LISTEN: usize = 0;
pub const OPEN_LEFT: usize = 1;
pub const OPEN_RIGHT: usize = 2;
/// Observations: 0 = hear left, 1 = hear right.
pub const HEAR_LEFT: usize = 0;

pub const LISTEN_ACCURACY: f64 = 0.85;

pub struct TigerModel {
    meta: ProblemMetadata,
}

impl Default for TigerModel {
    fn default() -> Self {
        Self::new()
    }
}

impl TigerModel {
    pub fn new() -> Self {
        TigerModel {
            meta: ProblemMetadata {
                gamma: 0.95,
                r_min: -100.0,
                r_max: 10.0,
                action_space: ActionSpace::Discrete { count: 3 },
                observation_kind: ObservationKind::Discrete { count: 2 },
                worst_case_rewards: Some(vec![-1.0, -100.0, -100.0]),
                worst_case_source: WorstCaseSource::Declared,
            },
        }
    }

    /// Explicit reward table r(s, a).
    pub fn reward(s: u8, a: usize) -> f64 {
        match a {
            LISTEN => -1.0,
            OPEN_LEFT => {
                if s == TIGER_LEFT {
                    -100.0
                } else {
                    10.0
                }
            }
            OPEN_RIGHT => {
                if s == TIGER_RIGHT {
                    -100.0
                } else {
                    10.0
                }
            }
            _ => unreachable!(),
        }
    }

    /// Explicit transition probability T(s, a, s').
    pub fn transition(s: u8, a: usize, s2: u8) -> f64 {
        if a == LISTEN {
            if s == s2 {
                1.0
            } else {
                0.0
            }
        } else {
            // opening a door resets the tiger uniformly
            let _ = s2;
            0.5
        }
    }

    /// Explicit observation probability O(o, a, s').
    pub fn observation(o: usize, a: usize, s2: u8) -> f64 {
        if a == LISTEN {
            let correct = (s2 == TIGER_LEFT && o == HEAR_LEFT) || (s2 == TIGER_RIGHT && o != HEAR_LEFT);
            if correct {
                LISTEN_ACCURACY
            } else {
                1.0 - LISTEN_ACCURACY
            }
        } else {
            0.5
        }
    }
}

impl GenerativeModel for TigerModel {
    type State = u8;

    fn step(&self, s: &u8, a: &ActionSpec, rng: &mut Rng) -> Result<(u8, ObservationSample, f64), ModelError> {
        let a = a
            .as_discrete()
            .filter(|&a| a < 3)
            .ok_or_else(|| ModelError::InvalidAction(format!("{a:?} is not a tiger action")))?;
        let r = Self::reward(*s, a);
        let s2 = if a == LISTEN {
            *s
        } else {
            rng.random_range(0..2) as u8
        };
        let o = if a == LISTEN {
            let correct = rng.random::<f64>() < LISTEN_ACCURACY;
            match (*s, correct) {
                (TIGER_LEFT, true) | (TIGER_RIGHT, false) => 0,
                _ => 1,
            }
        } else {
            rng.random_range(0..2)
        };
        Ok((s2, ObservationSample::Discrete(o), r))
    }

    fn sample_initial(&self, rng: &mut Rng) -> u8 {
        rng.random_range(0..2) as u8
    }

    fn metadata(&self) -> &ProblemMetadata {
        &self.meta
    }

    fn discretize(&self, s: &u8) -> BinKey {
        vec![*s as i64]
    }

    fn fingerprint(&self) -> String {
        "tiger:g0.95:acc0.85".into()
    }
}

/// Epsilon-optimal V*(b0) by value iteration on a regular grid over the
/// belief simplex (probability of tiger-left), with linear interpolation for
/// off-grid updated beliefs. Deterministic; serves as the acceptance oracle.
pub fn exact_tiger_value(gamma: f64, epsilon: f64) -> f64 {
    exact_tiger_value_with_step(gamma, epsilon, 0.001)
}

pub fn exact_tiger_value_with_step(gamma: f64, epsilon: f64, step: f64) -> f64 {
    let n = (1.0 / step).round() as usize; // grid points 0..=n
    let mut v = vec![0.0f64; n + 1];
    let interp = |v: &[f64], b: f64| -> f64 {
        let x = (b.clamp(0.0, 1.0)) * n as f64;
        let i = (x.floor() as usize).min(n - 1);
        let frac = x - i as f64;
        v[i] * (1.0 - frac) + v[i + 1] * frac
    };
    // stop when the residual cannot move the value by more than epsilon/2
    let tol = epsilon * (1.0 - gamma) / (2.0 * gamma.max(1e-12));
    for _ in 0..1_000_000 {
        let v_b0 = interp(&v, 0.5);
        let mut next = vec![0.0f64; n + 1];
        let mut delta: f64 = 0.0;
        for i in 0..=n {
            let b = i as f64 / n as f64; // P(tiger-left)
            // listen
            let p_hl = LISTEN_ACCURACY * b + (1.0 - LISTEN_ACCURACY) * (1.0 - b);
            let b_hl = if p_hl > 0.0 { LISTEN_ACCURACY * b / p_hl } else { b };
            let p_hr = 1.0 - p_hl;
            let b_hr = if p_hr > 0.0 { (1.0 - LISTEN_ACCURACY) * b / p_hr } else { b };
            let q_listen = -1.0 + gamma * (p_hl * interp(&v, b_hl) + p_hr * interp(&v, b_hr));
            // opening resets the belief to b0
            let q_open_left = -100.0 * b + 10.0 * (1.0 - b) + gamma * v_b0;
            let q_open_right = 10.0 * b - 100.0 * (1.0 - b) + gamma * v_b0;
            next[i] = q_listen.max(q_open_left).max(q_open_right);
            delta = delta.max((next[i] - v[i]).abs());
        }
        v = next;
        if delta < tol {
            break;
        }
    }
    interp(&v, 0.5)
}
