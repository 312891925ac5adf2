//! One-dimensional Light Dark: the agent moves on the real line and only
//! receives accurate position readings near the light region at y = 10. It
//! must declare when it believes it is inside the target region |y| <= 1.

use crate::pomdp::{
    ActionSpace, ActionSpec, BinKey, GenerativeModel, ModelError, ObservationKind, ObservationSample,
    ProblemMetadata, WorstCaseSource,
};
use crate::rng::Rng;
use rand_distr::{Distribution, Normal};

/// Actions: 0 = move -1, 1 = declare (terminate), 2 = move +1.
pub const MOVE_DOWN: usize = 0;
pub const DECLARE: usize = 1;
pub const MOVE_UP: usize = 2;

pub const LIGHT_POSITION: f64 = 10.0;
pub const DOMAIN: (f64, f64) = (-10.0, 20.0);
pub const BIN_WIDTH: f64 = 0.5;
pub const MOTION_NOISE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LightDarkState {
    pub y: f64,
    pub done: bool,
}

pub struct LightDarkModel {
    meta: ProblemMetadata,
}

impl Default for LightDarkModel {
    fn default() -> Self {
        Self::new()
    }
}

impl LightDarkModel {
    pub fn new() -> Self {
        LightDarkModel {
            meta: ProblemMetadata {
                gamma: 0.95,
                r_min: -100.0,
                r_max: 100.0,
                action_space: ActionSpace::Discrete { count: 3 },
                observation_kind: ObservationKind::Continuous { dim: 1 },
                worst_case_rewards: Some(vec![0.0, -100.0, 0.0]),
                worst_case_source: WorstCaseSource::Declared,
            },
        }
    }

    /// Observation noise standard deviation at position `y`.
    pub fn obs_sigma(y: f64) -> f64 {
        (y - LIGHT_POSITION).abs() / std::f64::consts::SQRT_2 + 0.01
    }
}

impl GenerativeModel for LightDarkModel {
    type State = LightDarkState;

    fn step(
        &self,
        s: &LightDarkState,
        a: &ActionSpec,
        rng: &mut Rng,
    ) -> Result<(LightDarkState, ObservationSample, f64), ModelError> {
        let a = a
            .as_discrete()
            .filter(|&a| a < 3)
            .ok_or_else(|| ModelError::InvalidAction(format!("{a:?} is not a lightdark action")))?;
        if s.done {
            return Ok((s.clone(), ObservationSample::Continuous(vec![0.0]), 0.0));
        }
        if a == DECLARE {
            let reward = if s.y.abs() <= 1.0 { 100.0 } else { -100.0 };
            let next = LightDarkState { y: s.y, done: true };
            return Ok((next, ObservationSample::Continuous(vec![0.0]), reward));
        }
        let dir = if a == MOVE_DOWN { -1.0 } else { 1.0 };
        let motion = Normal::new(0.0, MOTION_NOISE).unwrap();
        let y2 = (s.y + dir + motion.sample(rng)).clamp(DOMAIN.0, DOMAIN.1);
        let obs_noise = Normal::new(0.0, Self::obs_sigma(y2)).unwrap();
        let o = y2 + obs_noise.sample(rng);
        Ok((LightDarkState { y: y2, done: false }, ObservationSample::Continuous(vec![o]), 0.0))
    }

    fn sample_initial(&self, rng: &mut Rng) -> LightDarkState {
        // Normal(2, 2^2) truncated to the domain
        let dist = Normal::new(2.0, 2.0).unwrap();
        loop {
            let y = dist.sample(rng);
            if (DOMAIN.0..=DOMAIN.1).contains(&y) {
                return LightDarkState { y, done: false };
            }
        }
    }

    fn metadata(&self) -> &ProblemMetadata {
        &self.meta
    }

    fn discretize(&self, s: &LightDarkState) -> BinKey {
        if s.done {
            return vec![i64::MAX];
        }
        let clamped = s.y.clamp(DOMAIN.0, DOMAIN.1);
        let bin = ((clamped - DOMAIN.0) / BIN_WIDTH).floor() as i64;
        let max_bin = ((DOMAIN.1 - DOMAIN.0) / BIN_WIDTH) as i64 - 1;
        vec![bin.clamp(0, max_bin)]
    }

    fn is_terminal(&self, s: &LightDarkState) -> bool {
        s.done
    }

    fn fingerprint(&self) -> String {
        "lightdark:g0.95:light10:bin0.5".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{child_rng, Phase};

    #[test]
    fn declare_rewards_depend_on_position() {
        let model = LightDarkModel::new();
        let mut rng = child_rng(0, Phase::Execute, 0);
        let inside = LightDarkState { y: 0.5, done: false };
        let (s2, _, r) = model.step(&inside, &ActionSpec::Discrete(DECLARE), &mut rng).unwrap();
        assert_eq!(r, 100.0);
        assert!(s2.done);
        let outside = LightDarkState { y: 3.0, done: false };
        let (_, _, r2) = model.step(&outside, &ActionSpec::Discrete(DECLARE), &mut rng).unwrap();
        assert_eq!(r2, -100.0);
    }

    #[test]
    fn observation_noise_is_minimal_in_the_light() {
        let model = LightDarkModel::new();
        assert!(LightDarkModel::obs_sigma(LIGHT_POSITION) <= 0.02);
        // sampled sd of observations from y ~= 10 stays tiny
        let mut rng = child_rng(1, Phase::Execute, 0);
        let s = LightDarkState { y: LIGHT_POSITION - 1.0, done: false };
        let mut obs = Vec::new();
        for _ in 0..100_000 {
            // move +1 lands near the light
            let (s2, o, _) = model.step(&s, &ActionSpec::Discrete(MOVE_UP), &mut rng).unwrap();
            if let ObservationSample::Continuous(v) = o {
                obs.push(v[0] - s2.y);
            }
        }
        let mean: f64 = obs.iter().sum::<f64>() / obs.len() as f64;
        let var: f64 = obs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / obs.len() as f64;
        // sigma(y) near the light is at most sigma(10 +- ~0.35)
        assert!(var.sqrt() <= 0.3, "sd {}", var.sqrt());
    }

    #[test]
    fn initial_states_respect_truncation() {
        let model = LightDarkModel::new();
        let mut rng = child_rng(2, Phase::RootBelief, 0);
        let mut sum = 0.0;
        let n = 20_000;
        for _ in 0..n {
            let s = model.sample_initial(&mut rng);
            assert!((DOMAIN.0..=DOMAIN.1).contains(&s.y));
            sum += s.y;
        }
        assert!((sum / n as f64 - 2.0).abs() < 0.1);
    }

    #[test]
    fn bins_are_stable_and_clamped() {
        let model = LightDarkModel::new();
        let s = LightDarkState { y: 0.3, done: false };
        assert_eq!(model.discretize(&s), model.discretize(&s.clone()));
        assert_eq!(model.discretize(&LightDarkState { y: -10.0, done: false }), vec![0]);
        assert_eq!(model.discretize(&LightDarkState { y: 20.0, done: false }), vec![59]);
    }

    #[test]
    fn rewards_stay_in_bounds() {
        let model = LightDarkModel::new();
        let meta = model.metadata();
        let mut rng = child_rng(3, Phase::Execute, 0);
        let mut s = model.sample_initial(&mut rng);
        for i in 0..10_000u64 {
            let a = ActionSpec::Discrete((i % 3) as usize);
            let (s2, _, r) = model.step(&s, &a, &mut rng).unwrap();
            assert!(r >= meta.r_min && r <= meta.r_max);
            s = if s2.done { model.sample_initial(&mut rng) } else { s2 };
        }
    }
}
