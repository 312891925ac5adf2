//! Built-in benchmark generative models and the name-based factory used by
//! the CLI.

pub mod lightdark;
pub mod rocksample;
pub mod tiger;

pub use lightdark::{LightDarkModel, LightDarkState};
pub use rocksample::{RockSampleModel, RockState};
pub use tiger::{exact_tiger_value, TigerModel};

use crate::pomdp::{ActionSpec, BinKey, GenerativeModel, ModelError, ObservationSample, ProblemMetadata};
use crate::rng::Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown environment '{0}' (expected tiger, rocksample or lightdark)")]
    UnknownName(String),
    #[error("invalid environment parameter {field}: {message}")]
    InvalidParam { field: String, message: String },
}

/// Unified state for the built-in environments, so the CLI can drive any of
/// them through one concrete model type.
#[derive(Debug, Clone)]
pub enum EnvState {
    Tiger(u8),
    Rock(RockState),
    Light(LightDarkState),
}

pub enum Env {
    Tiger(TigerModel),
    Rock(RockSampleModel),
    Light(LightDarkModel),
}

impl Env {
    pub fn name(&self) -> &'static str {
        match self {
            Env::Tiger(_) => "tiger",
            Env::Rock(_) => "rocksample",
            Env::Light(_) => "lightdark",
        }
    }
}

impl GenerativeModel for Env {
    type State = EnvState;

    fn step(
        &self,
        s: &EnvState,
        a: &ActionSpec,
        rng: &mut Rng,
    ) -> Result<(EnvState, ObservationSample, f64), ModelError> {
        match (self, s) {
            (Env::Tiger(m), EnvState::Tiger(s)) => {
                m.step(s, a, rng).map(|(s2, o, r)| (EnvState::Tiger(s2), o, r))
            }
            (Env::Rock(m), EnvState::Rock(s)) => {
                m.step(s, a, rng).map(|(s2, o, r)| (EnvState::Rock(s2), o, r))
            }
            (Env::Light(m), EnvState::Light(s)) => {
                m.step(s, a, rng).map(|(s2, o, r)| (EnvState::Light(s2), o, r))
            }
            _ => Err(ModelError::StateMismatch("state does not belong to this environment".into())),
        }
    }

    fn sample_initial(&self, rng: &mut Rng) -> EnvState {
        match self {
            Env::Tiger(m) => EnvState::Tiger(m.sample_initial(rng)),
            Env::Rock(m) => EnvState::Rock(m.sample_initial(rng)),
            Env::Light(m) => EnvState::Light(m.sample_initial(rng)),
        }
    }

    fn metadata(&self) -> &ProblemMetadata {
        match self {
            Env::Tiger(m) => m.metadata(),
            Env::Rock(m) => m.metadata(),
            Env::Light(m) => m.metadata(),
        }
    }

    fn discretize(&self, s: &EnvState) -> BinKey {
        let mismatch = || panic!("state does not belong to this environment");
        match (self, s) {
            (Env::Tiger(m), EnvState::Tiger(s)) => m.discretize(s),
            (Env::Rock(m), EnvState::Rock(s)) => m.discretize(s),
            (Env::Light(m), EnvState::Light(s)) => m.discretize(s),
            _ => mismatch(),
        }
    }

    fn is_terminal(&self, s: &EnvState) -> bool {
        match (self, s) {
            (Env::Tiger(m), EnvState::Tiger(s)) => m.is_terminal(s),
            (Env::Rock(m), EnvState::Rock(s)) => m.is_terminal(s),
            (Env::Light(m), EnvState::Light(s)) => m.is_terminal(s),
            _ => panic!("state does not belong to this environment"),
        }
    }

    fn fingerprint(&self) -> String {
        match self {
            Env::Tiger(m) => m.fingerprint(),
            Env::Rock(m) => m.fingerprint(),
            Env::Light(m) => m.fingerprint(),
        }
    }
}

fn parse_param<T: std::str::FromStr>(
    params: &BTreeMap<String, String>,
    field: &str,
    default: Option<T>,
) -> Result<T, EnvError> {
    match params.get(field) {
        Some(text) => text.parse().map_err(|_| EnvError::InvalidParam {
            field: field.to_string(),
            message: format!("cannot parse '{text}'"),
        }),
        None => default.ok_or_else(|| EnvError::InvalidParam {
            field: field.to_string(),
            message: "missing required parameter".to_string(),
        }),
    }
}

/// Construct a built-in environment by name. RockSample takes `n`, `k` and
/// an optional `layout_seed` (default 1).
pub fn make_env(name: &str, params: &BTreeMap<String, String>) -> Result<Env, EnvError> {
    match name {
        "tiger" => Ok(Env::Tiger(TigerModel::new())),
        "rocksample" => {
            let n: usize = parse_param(params, "n", None)?;
            let k: usize = parse_param(params, "k", None)?;
            let layout_seed: u64 = parse_param(params, "layout_seed", Some(1))?;
            if n < 2 || n > 64 {
                return Err(EnvError::InvalidParam {
                    field: "n".into(),
                    message: format!("grid size {n} outside 2..=64"),
                });
            }
            if k < 1 || k > 25 || k > n * n {
                return Err(EnvError::InvalidParam {
                    field: "k".into(),
                    message: format!("rock count {k} invalid for an {n}x{n} grid"),
                });
            }
            Ok(Env::Rock(RockSampleModel::new(n, k, layout_seed)))
        }
        "lightdark" => Ok(Env::Light(LightDarkModel::new())),
        other => Err(EnvError::UnknownName(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(entries: &[(&str, &str)]) -> BTreeMap<String, String> {
        entries.iter().map(|&(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn factory_builds_each_model() {
        let tiger = make_env("tiger", &params(&[])).unwrap();
        assert_eq!(tiger.metadata().action_space.discrete_count(), 3);
        let rs = make_env("rocksample", &params(&[("n", "7"), ("k", "8")])).unwrap();
        match rs {
            Env::Rock(m) => assert_eq!(m.state_count(), 12_544),
            _ => panic!("expected rocksample"),
        }
        assert!(make_env("lightdark", &params(&[])).is_ok());
    }

    #[test]
    fn factory_rejects_bad_input() {
        assert!(make_env("laser-tag", &params(&[])).is_err());
        assert!(make_env("rocksample", &params(&[("n", "7")])).is_err());
        assert!(make_env("rocksample", &params(&[("n", "1"), ("k", "1")])).is_err());
        assert!(make_env("rocksample", &params(&[("n", "4"), ("k", "30")])).is_err());
    }

    #[test]
    fn dispatch_rejects_foreign_states() {
        let tiger = make_env("tiger", &params(&[])).unwrap();
        let light = EnvState::Light(LightDarkState { y: 0.0, done: false });
        let mut rng = crate::rng::child_rng(0, crate::rng::Phase::Execute, 0);
        assert!(tiger.step(&light, &ActionSpec::Discrete(0), &mut rng).is_err());
    }
}
