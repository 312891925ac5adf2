//! Upper-bound heuristic from Q-learning on the underlying MDP, its
//! belief-weighted evaluation, and the closed-form blind lower bound.

use crate::belief::ParticleBelief;
use crate::fsc::blind_fallback_action;
use crate::pomdp::{ActionSpec, ActionSpace, BinKey, GenerativeModel, ProblemMetadata};
use crate::rng::Rng;
use rand::Rng as _;
use std::collections::HashMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("blind bound needs a worst-case reward table: {0}")]
    MissingTable(String),
    #[error("vtable cache load error at line {line}: {message}")]
    CacheLoad { line: usize, message: String },
    #[error("vtable cache fingerprint mismatch: cache has '{cached}', model is '{model}'")]
    CacheMismatch { cached: String, model: String },
}

/// State-value table over discretization bins. Unseen bins default to the
/// optimistic maximum `r_max / (1 - gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VTable {
    values: HashMap<BinKey, f64>,
    pub default: f64,
}

impl VTable {
    pub fn get(&self, key: &BinKey) -> f64 {
        self.values.get(key).copied().unwrap_or(self.default)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BinKey, &f64)> {
        self.values.iter()
    }
}

#[derive(Debug, Clone)]
pub struct QLearningConfig {
    pub episodes: u64,
    pub max_steps: u32,
    pub learning_rate: f64,
    pub exploration_start: f64,
    pub exploration_end: f64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        QLearningConfig {
            episodes: 100_000,
            max_steps: 500,
            learning_rate: 0.1,
            exploration_start: 1.0,
            exploration_end: 0.05,
        }
    }
}

/// Candidate actions for MDP training: the full set for discrete spaces, a
/// uniform grid of 11 points per dimension for continuous ones.
pub fn mdp_candidate_actions(meta: &ProblemMetadata) -> Vec<ActionSpec> {
    match &meta.action_space {
        ActionSpace::Discrete { count } => (0..*count).map(ActionSpec::Discrete).collect(),
        ActionSpace::Continuous { bounds } => {
            const POINTS: usize = 11;
            let mut actions = vec![Vec::new()];
            for &(lo, hi) in bounds {
                let mut next = Vec::with_capacity(actions.len() * POINTS);
                for prefix in &actions {
                    for i in 0..POINTS {
                        let x = lo + (hi - lo) * i as f64 / (POINTS - 1) as f64;
                        let mut v = prefix.clone();
                        v.push(x);
                        next.push(v);
                    }
                }
                actions = next;
            }
            actions.into_iter().map(ActionSpec::Continuous).collect()
        }
    }
}

/// Tabular Q-learning on the underlying (fully observable) MDP, over the
/// model's discretization bins. Deterministic under a fixed rng stream.
pub fn train_vmdp<M: GenerativeModel>(model: &M, cfg: &QLearningConfig, rng: &mut Rng) -> VTable {
    let meta = model.metadata();
    let default = meta.r_max / (1.0 - meta.gamma);
    let actions = mdp_candidate_actions(meta);
    let mut q: HashMap<BinKey, Vec<f64>> = HashMap::new();

    for episode in 0..cfg.episodes {
        let frac = if cfg.episodes <= 1 { 1.0 } else { episode as f64 / (cfg.episodes - 1) as f64 };
        let explore = cfg.exploration_start + (cfg.exploration_end - cfg.exploration_start) * frac;
        let mut s = model.sample_initial(rng);
        for _ in 0..cfg.max_steps {
            if model.is_terminal(&s) {
                break;
            }
            let key = model.discretize(&s);
            let a_idx = if rng.random::<f64>() < explore {
                rng.random_range(0..actions.len())
            } else {
                let row = q.entry(key.clone()).or_insert_with(|| vec![default; actions.len()]);
                argmax(row)
            };
            let (s2, _o, r) = model
                .step(&s, &actions[a_idx], rng)
                .expect("MDP training used an invalid candidate action");
            let target = if model.is_terminal(&s2) {
                // terminal bins have value 0 by definition; pin them so they
                // never fall back to the optimistic default
                q.entry(model.discretize(&s2)).or_insert_with(|| vec![0.0; actions.len()]);
                r
            } else {
                let next_row = q.entry(model.discretize(&s2)).or_insert_with(|| vec![default; actions.len()]);
                r + meta.gamma * next_row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            let row = q.entry(key).or_insert_with(|| vec![default; actions.len()]);
            row[a_idx] += cfg.learning_rate * (target - row[a_idx]);
            s = s2;
        }
    }

    let values = q
        .into_iter()
        .map(|(k, row)| (k, row.into_iter().fold(f64::NEG_INFINITY, f64::max)))
        .collect();
    VTable { values, default }
}

/// Mean over particles of the V_MDP value of their bins.
pub fn belief_vmdp<M: GenerativeModel>(b: &ParticleBelief<M::State>, vtab: &VTable, model: &M) -> f64 {
    debug_assert!(b.count() > 0);
    let sum: f64 = b.particles.iter().map(|s| vtab.get(&model.discretize(s))).sum();
    sum / b.count() as f64
}

/// `(1 / (1 - gamma)) * max_a min_s r(s, a)`: the stationary blind policy's
/// value bound.
pub fn blind_value(meta: &ProblemMetadata) -> Result<f64, HeuristicError> {
    let action = blind_fallback_action(meta).map_err(|e| HeuristicError::MissingTable(e.to_string()))?;
    let table = meta.worst_case_rewards.as_ref().expect("blind action implies a table");
    let idx = action.as_discrete().expect("blind action is discrete");
    Ok(table[idx] / (1.0 - meta.gamma))
}

/// Estimate `min_s r(s, a)` per action by sampling rewards along random
/// walks from `b0`. Used when the model declares no explicit table.
pub fn estimate_worst_case_rewards<M: GenerativeModel>(
    model: &M,
    samples_per_action: u64,
    rng: &mut Rng,
) -> Vec<f64> {
    let meta = model.metadata();
    let actions = mdp_candidate_actions(meta);
    let mut mins = vec![f64::INFINITY; actions.len()];
    let walk_len = 16;
    let mut remaining = samples_per_action;
    while remaining > 0 {
        let mut s = model.sample_initial(rng);
        for _ in 0..walk_len.min(remaining) {
            for (i, a) in actions.iter().enumerate() {
                let (_, _, r) = model.step(&s, a, rng).expect("candidate action rejected");
                if r < mins[i] {
                    mins[i] = r;
                }
            }
            let a = rng.random_range(0..actions.len());
            let (s2, _, _) = model.step(&s, &actions[a], rng).expect("candidate action rejected");
            if model.is_terminal(&s2) {
                break;
            }
            s = s2;
            remaining = remaining.saturating_sub(1);
            if remaining == 0 {
                break;
            }
        }
        remaining = remaining.saturating_sub(1);
    }
    mins
}

// ---------------------------------------------------------------------------
// VTable cache file
// ---------------------------------------------------------------------------

pub fn serialize_vtable(vtab: &VTable, fingerprint: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "pomcgs-vtable v1");
    let _ = writeln!(out, "fingerprint {fingerprint}");
    let _ = writeln!(out, "default {:.16e}", vtab.default);
    let mut rows: Vec<(&BinKey, &f64)> = vtab.values.iter().collect();
    rows.sort_by(|a, b| a.0.cmp(b.0));
    for (key, value) in rows {
        let ks: Vec<String> = key.iter().map(|k| k.to_string()).collect();
        let _ = writeln!(out, "v {} {:.16e}", ks.join(","), value);
    }
    out.push_str("end\n");
    out
}

pub fn deserialize_vtable(text: &str, expect_fingerprint: &str) -> Result<VTable, HeuristicError> {
    let err = |line: usize, message: &str| HeuristicError::CacheLoad { line, message: message.to_string() };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == "pomcgs-vtable v1" => {}
        _ => return Err(err(1, "not a pomcgs vtable cache")),
    }
    let mut vtab = VTable { values: HashMap::new(), default: 0.0 };
    let mut saw_end = false;
    for (i, raw) in lines {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next().unwrap() {
            "fingerprint" => {
                let cached = parts.collect::<Vec<_>>().join(" ");
                if cached != expect_fingerprint {
                    return Err(HeuristicError::CacheMismatch {
                        cached,
                        model: expect_fingerprint.to_string(),
                    });
                }
            }
            "default" => {
                vtab.default = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err(lineno, "bad default value"))?;
            }
            "v" => {
                let key_txt = parts.next().ok_or_else(|| err(lineno, "missing bin key"))?;
                let key: Result<BinKey, _> = key_txt.split(',').map(|t| t.parse()).collect();
                let key = key.map_err(|_| err(lineno, "bad bin key"))?;
                let value = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err(lineno, "bad value"))?;
                vtab.values.insert(key, value);
            }
            "end" => {
                saw_end = true;
                break;
            }
            other => return Err(err(lineno, &format!("unknown record '{other}'"))),
        }
    }
    if !saw_end {
        return Err(err(text.lines().count(), "truncated vtable cache"));
    }
    Ok(vtab)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, &v) in row.iter().enumerate() {
        if v > best.0 {
            best = (v, i);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::tiger::TigerModel;
    use crate::pomdp::{ModelError, ObservationKind, ObservationSample, WorstCaseSource};
    use crate::rng::{child_rng, Phase};

    /// Two-state chain: state 0 (start) and 1 (absorbing goal). Action 0
    /// stays for 0 reward; action 1 advances, paying 1 when leaving start.
    struct ChainMdp {
        meta: ProblemMetadata,
    }

    impl ChainMdp {
        fn new(gamma: f64) -> Self {
            ChainMdp {
                meta: ProblemMetadata {
                    gamma,
                    r_min: 0.0,
                    r_max: 1.0,
                    action_space: ActionSpace::Discrete { count: 2 },
                    observation_kind: ObservationKind::Discrete { count: 1 },
                    worst_case_rewards: Some(vec![0.0, 0.0]),
                    worst_case_source: WorstCaseSource::Declared,
                },
            }
        }
    }

    impl GenerativeModel for ChainMdp {
        type State = u8;
        fn step(&self, s: &u8, a: &ActionSpec, _rng: &mut Rng) -> Result<(u8, ObservationSample, f64), ModelError> {
            let a = a.as_discrete().ok_or_else(|| ModelError::InvalidAction("continuous".into()))?;
            let (s2, r) = match (*s, a) {
                (0, 1) => (1, 1.0),
                (s, _) => (s, 0.0),
            };
            Ok((s2, ObservationSample::Discrete(0), r))
        }
        fn sample_initial(&self, _rng: &mut Rng) -> u8 {
            0
        }
        fn metadata(&self) -> &ProblemMetadata {
            &self.meta
        }
        fn discretize(&self, s: &u8) -> BinKey {
            vec![*s as i64]
        }
        fn is_terminal(&self, s: &u8) -> bool {
            *s == 1
        }
        fn fingerprint(&self) -> String {
            "chain".into()
        }
    }

    /// Exact value iteration on the two-state chain, the training oracle.
    fn chain_value_iteration(gamma: f64) -> (f64, f64) {
        let mut v = [0.0f64, 0.0];
        for _ in 0..10_000 {
            let v0 = (0.0 + gamma * v[0]).max(1.0); // goal is absorbing with 0 reward
            let new = [v0, 0.0];
            if (new[0] - v[0]).abs() < 1e-12 {
                break;
            }
            v = new;
        }
        (v[0], v[1])
    }

    fn quick_cfg(episodes: u64) -> QLearningConfig {
        QLearningConfig { episodes, max_steps: 50, ..QLearningConfig::default() }
    }

    #[test]
    fn chain_mdp_matches_value_iteration() {
        let model = ChainMdp::new(0.5);
        let (v_start, v_goal) = chain_value_iteration(0.5);
        assert!((v_start - 1.0).abs() < 1e-9);
        let mut rng = child_rng(0, Phase::Vmdp, 0);
        let vtab = train_vmdp(&model, &quick_cfg(3_000), &mut rng);
        assert!((vtab.get(&vec![0]) - v_start).abs() < 0.05);
        assert!((vtab.get(&vec![1]) - v_goal).abs() < 0.05);
    }

    #[test]
    fn zero_reward_model_trains_to_zero() {
        struct Zero(ProblemMetadata);
        impl GenerativeModel for Zero {
            type State = u8;
            fn step(&self, s: &u8, _a: &ActionSpec, _r: &mut Rng) -> Result<(u8, ObservationSample, f64), ModelError> {
                Ok((*s, ObservationSample::Discrete(0), 0.0))
            }
            fn sample_initial(&self, _r: &mut Rng) -> u8 {
                0
            }
            fn metadata(&self) -> &ProblemMetadata {
                &self.0
            }
            fn discretize(&self, s: &u8) -> BinKey {
                vec![*s as i64]
            }
            fn fingerprint(&self) -> String {
                "zero".into()
            }
        }
        let model = Zero(ProblemMetadata {
            gamma: 0.9,
            r_min: 0.0,
            r_max: 0.0,
            action_space: ActionSpace::Discrete { count: 2 },
            observation_kind: ObservationKind::Discrete { count: 1 },
            worst_case_rewards: Some(vec![0.0, 0.0]),
            worst_case_source: WorstCaseSource::Declared,
        });
        let mut rng = child_rng(1, Phase::Vmdp, 0);
        let vtab = train_vmdp(&model, &quick_cfg(500), &mut rng);
        for (_, &v) in vtab.iter() {
            assert!(v.abs() < 1e-6);
        }
    }

    #[test]
    fn tiger_underlying_mdp_dominates_blind() {
        // oracle: with the tiger location known, opening the right door pays
        // 10 + gamma * V, so V = 10 / (1 - gamma) = 200
        let model = TigerModel::new();
        let mut rng = child_rng(2, Phase::Vmdp, 0);
        let vtab = train_vmdp(&model, &quick_cfg(4_000), &mut rng);
        for s in [0i64, 1] {
            assert!(vtab.get(&vec![s]) >= 10.0, "V({s}) = {}", vtab.get(&vec![s]));
        }
        let blind = blind_value(model.metadata()).unwrap();
        assert!((blind + 20.0).abs() < 1e-12);
        for (k, &v) in vtab.iter() {
            assert!(v >= blind - 0.05 * blind.abs(), "dominance broken at {k:?}: {v} < {blind}");
        }
    }

    #[test]
    fn chain_dominance() {
        let model = ChainMdp::new(0.95);
        let mut rng = child_rng(7, Phase::Vmdp, 0);
        let vtab = train_vmdp(&model, &quick_cfg(2_000), &mut rng);
        let blind = blind_value(model.metadata()).unwrap();
        assert_eq!(blind, 0.0);
        for (k, &v) in vtab.iter() {
            assert!(v >= blind - 0.05 * blind.abs(), "dominance broken at {k:?}");
        }
    }

    #[test]
    fn training_is_reproducible() {
        let model = TigerModel::new();
        let a = train_vmdp(&model, &quick_cfg(500), &mut child_rng(5, Phase::Vmdp, 0));
        let b = train_vmdp(&model, &quick_cfg(500), &mut child_rng(5, Phase::Vmdp, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn values_stay_within_discounted_reward_bounds() {
        let model = TigerModel::new();
        let meta = model.metadata();
        let mut rng = child_rng(6, Phase::Vmdp, 0);
        let vtab = train_vmdp(&model, &quick_cfg(2_000), &mut rng);
        let lo = meta.r_min / (1.0 - meta.gamma);
        let hi = meta.r_max / (1.0 - meta.gamma);
        for (_, &v) in vtab.iter() {
            assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }

    #[test]
    fn belief_vmdp_mixes_linearly() {
        let model = TigerModel::new();
        let vtab = {
            let mut values = HashMap::new();
            values.insert(vec![0], 0.0);
            values.insert(vec![1], 10.0);
            VTable { values, default: 200.0 }
        };
        let pure0 = ParticleBelief::new(vec![0u8; 10]);
        let pure1 = ParticleBelief::new(vec![1u8; 10]);
        let mix = ParticleBelief::new([vec![0u8; 5], vec![1u8; 5]].concat());
        let v0 = belief_vmdp(&pure0, &vtab, &model);
        let v1 = belief_vmdp(&pure1, &vtab, &model);
        let vm = belief_vmdp(&mix, &vtab, &model);
        assert_eq!(v0, 0.0);
        assert_eq!(v1, 10.0);
        assert_eq!(vm, (v0 + v1) / 2.0);
    }

    #[test]
    fn unseen_bin_uses_optimistic_default() {
        let model = TigerModel::new();
        let vtab = VTable { values: HashMap::new(), default: 200.0 };
        let b = ParticleBelief::new(vec![0u8]);
        assert_eq!(belief_vmdp(&b, &vtab, &model), 200.0);
    }

    #[test]
    fn blind_value_closed_forms() {
        let mut meta = TigerModel::new().metadata().clone();
        assert!((blind_value(&meta).unwrap() + 20.0).abs() < 1e-12);
        meta.gamma = 0.5;
        meta.r_min = 2.0;
        meta.r_max = 2.0;
        meta.worst_case_rewards = Some(vec![2.0, 2.0, 2.0]);
        assert!((blind_value(&meta).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn vtable_cache_round_trip() {
        let model = ChainMdp::new(0.5);
        let mut rng = child_rng(3, Phase::Vmdp, 0);
        let vtab = train_vmdp(&model, &quick_cfg(200), &mut rng);
        let text = serialize_vtable(&vtab, "chain");
        let loaded = deserialize_vtable(&text, "chain").unwrap();
        assert_eq!(vtab, loaded);
        assert!(matches!(
            deserialize_vtable(&text, "other"),
            Err(HeuristicError::CacheMismatch { .. })
        ));
    }

    #[test]
    fn sampled_worst_case_covers_tiger_table() {
        let model = TigerModel::new();
        let mut rng = child_rng(8, Phase::WorstCase, 0);
        let mins = estimate_worst_case_rewards(&model, 2_000, &mut rng);
        assert_eq!(mins, vec![-1.0, -100.0, -100.0]);
    }
}
