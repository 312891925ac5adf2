//! Standalone policy execution: run episodes of a loaded policy against a
//! generative model, with the blind fallback once the controller runs off
//! its edges.

use crate::fsc::{FscError, PolicyFile, StepOutcome};
use crate::pomdp::{horizon_exceeded, GenerativeModel};
use crate::rng::{child_rng, Phase, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub discounted_return: f64,
    pub steps: u32,
    pub hit_open_leaf: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub episodes: u64,
    pub mean_return: f64,
    pub std_error: f64,
    pub open_leaf_rate: f64,
    pub mean_length: f64,
}

/// One episode under the policy, cut off once the discounted tail cannot
/// exceed `epsilon`.
pub fn run_episode<M: GenerativeModel>(
    model: &M,
    policy: &PolicyFile,
    epsilon: f64,
    rng: &mut Rng,
) -> Result<EpisodeStats, FscError> {
    let meta = model.metadata();
    let mut s = model.sample_initial(rng);
    let mut node = Some(policy.n0);
    let mut delta: u32 = 0;
    let mut disc = 1.0;
    let mut ret = 0.0;
    let mut hit_open_leaf = false;
    while !horizon_exceeded(delta, meta, epsilon) && !model.is_terminal(&s) {
        let action = match node {
            Some(id) => match policy.action_of(id)? {
                Some(a) => a.clone(),
                None => {
                    hit_open_leaf = true;
                    node = None;
                    continue;
                }
            },
            None => match &policy.blind_action {
                Some(a) => a.clone(),
                None => break,
            },
        };
        let (s2, o, r) = model
            .step(&s, &action, rng)
            .map_err(|e| FscError::Load { line: 0, message: e.to_string() })?;
        ret += disc * r;
        if let Some(id) = node {
            match policy.execute_policy_step(id, &o)? {
                StepOutcome::Next(next) => node = Some(next),
                StepOutcome::OpenLeaf => {
                    hit_open_leaf = true;
                    node = None;
                }
            }
        }
        s = s2;
        delta += 1;
        disc *= meta.gamma;
    }
    Ok(EpisodeStats { discounted_return: ret, steps: delta, hit_open_leaf })
}

/// Mean discounted return with its standard error over seeded episodes.
pub fn evaluate_policy<M: GenerativeModel>(
    model: &M,
    policy: &PolicyFile,
    episodes: u64,
    seed: u64,
    epsilon: f64,
) -> Result<EvalSummary, FscError> {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut open = 0u64;
    let mut length = 0u64;
    for i in 0..episodes {
        let mut rng = child_rng(seed, Phase::Execute, i);
        let ep = run_episode(model, policy, epsilon, &mut rng)?;
        sum += ep.discounted_return;
        sum_sq += ep.discounted_return * ep.discounted_return;
        open += ep.hit_open_leaf as u64;
        length += ep.steps as u64;
    }
    let n = episodes as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let std_error = if episodes > 1 { (var / (n - 1.0)).sqrt() } else { 0.0 };
    Ok(EvalSummary {
        episodes,
        mean_return: mean,
        std_error,
        open_leaf_rate: open as f64 / n,
        mean_length: length as f64 / n,
    })
}
