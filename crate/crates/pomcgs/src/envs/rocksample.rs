//! RockSample(n, k): an n-by-n grid with k rocks of unknown quality. The
//! robot knows its own position, senses rocks with a distance-dependent
//! noisy check, and exits on the east boundary for a terminal bonus.

use crate::pomdp::{
    ActionSpace, ActionSpec, BinKey, GenerativeModel, ModelError, ObservationKind, ObservationSample,
    ProblemMetadata, WorstCaseSource,
};
use crate::rng::{child_rng, Phase, Rng};
use rand::Rng as _;

/// Observations: 0 = none, 1 = good, 2 = bad.
pub const OBS_NONE: usize = 0;
pub const OBS_GOOD: usize = 1;
pub const OBS_BAD: usize = 2;

/// Sensor half-efficiency distance.
pub const SENSOR_RANGE: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RockState {
    pub x: i32,
    pub y: i32,
    /// Bit i set iff rock i is good.
    pub good: u32,
    pub done: bool,
}

pub struct RockSampleModel {
    pub n: usize,
    pub k: usize,
    pub layout_seed: u64,
    rocks: Vec<(i32, i32)>,
    start: (i32, i32),
    meta: ProblemMetadata,
}

impl RockSampleModel {
    pub fn new(n: usize, k: usize, layout_seed: u64) -> Self {
        assert!(n >= 2 && k >= 1 && k <= 25 && (k as usize) <= n * n);
        // deterministic rock layout from the seed: distinct cells
        let mut rng = child_rng(layout_seed, Phase::RootBelief, u64::MAX);
        let mut rocks = Vec::with_capacity(k);
        while rocks.len() < k {
            let cell = (rng.random_range(0..n as i32), rng.random_range(0..n as i32));
            if !rocks.contains(&cell) {
                rocks.push(cell);
            }
        }
        let mut worst = vec![0.0; 4]; // moves never pay less than 0
        worst.push(-10.0); // sample
        worst.extend(std::iter::repeat(0.0).take(k)); // checks
        RockSampleModel {
            n,
            k,
            layout_seed,
            rocks,
            start: (0, n as i32 / 2),
            meta: ProblemMetadata {
                gamma: 0.95,
                r_min: -10.0,
                r_max: 10.0,
                action_space: ActionSpace::Discrete { count: 5 + k },
                observation_kind: ObservationKind::Discrete { count: 3 },
                worst_case_rewards: Some(worst),
                worst_case_source: WorstCaseSource::Declared,
            },
        }
    }

    /// |S| = n^2 * 2^k (the absorbing exit state not counted).
    pub fn state_count(&self) -> u64 {
        (self.n as u64).pow(2) * (1u64 << self.k)
    }

    pub fn rocks(&self) -> &[(i32, i32)] {
        &self.rocks
    }

    /// Probability that a check of a rock at distance `d` reads correctly.
    pub fn check_accuracy(d: f64) -> f64 {
        0.5 + 0.5 * (-d / SENSOR_RANGE).exp2()
    }

    fn rock_at(&self, x: i32, y: i32) -> Option<usize> {
        self.rocks.iter().position(|&(rx, ry)| rx == x && ry == y)
    }
}

impl GenerativeModel for RockSampleModel {
    type State = RockState;

    fn step(
        &self,
        s: &RockState,
        a: &ActionSpec,
        rng: &mut Rng,
    ) -> Result<(RockState, ObservationSample, f64), ModelError> {
        let count = 5 + self.k;
        let a = a
            .as_discrete()
            .filter(|&a| a < count)
            .ok_or_else(|| ModelError::InvalidAction(format!("{a:?} is not a rocksample action")))?;
        if s.done {
            return Ok((s.clone(), ObservationSample::Discrete(OBS_NONE), 0.0));
        }
        let mut next = s.clone();
        let mut reward = 0.0;
        let mut obs = OBS_NONE;
        match a {
            0..=3 => {
                // 0 north, 1 south, 2 east, 3 west
                let (dx, dy) = [(0, 1), (0, -1), (1, 0), (-1, 0)][a];
                let nx = s.x + dx;
                let ny = s.y + dy;
                if nx >= self.n as i32 {
                    next.done = true;
                    reward = 10.0;
                } else if nx >= 0 && ny >= 0 && ny < self.n as i32 {
                    next.x = nx;
                    next.y = ny;
                }
            }
            4 => {
                // sample the rock under the robot, if any
                match self.rock_at(s.x, s.y) {
                    Some(i) if s.good & (1 << i) != 0 => {
                        next.good &= !(1 << i);
                        reward = 10.0;
                    }
                    _ => reward = -10.0,
                }
            }
            check => {
                let i = check - 5;
                let (rx, ry) = self.rocks[i];
                let d = (((s.x - rx).pow(2) + (s.y - ry).pow(2)) as f64).sqrt();
                let correct = rng.random::<f64>() < Self::check_accuracy(d);
                let is_good = s.good & (1 << i) != 0;
                obs = if is_good == correct { OBS_GOOD } else { OBS_BAD };
            }
        }
        Ok((next, ObservationSample::Discrete(obs), reward))
    }

    fn sample_initial(&self, rng: &mut Rng) -> RockState {
        RockState {
            x: self.start.0,
            y: self.start.1,
            good: rng.random_range(0..(1u32 << self.k)),
            done: false,
        }
    }

    fn metadata(&self) -> &ProblemMetadata {
        &self.meta
    }

    fn discretize(&self, s: &RockState) -> BinKey {
        if s.done {
            vec![self.state_count() as i64]
        } else {
            let cell = s.x as i64 * self.n as i64 + s.y as i64;
            vec![(cell << self.k) | s.good as i64]
        }
    }

    fn is_terminal(&self, s: &RockState) -> bool {
        s.done
    }

    fn fingerprint(&self) -> String {
        format!("rocksample:n{}:k{}:layout{}", self.n, self.k, self.layout_seed)
    }
}
