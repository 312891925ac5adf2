//! The graph-search engine: the main solve loop, the FSC improvement
//! procedure (Simulate / ProcessAction), the bound-estimating evaluation
//! procedure, action progressive widening, and k-means observation
//! clustering for continuous observation spaces.

use crate::belief::{build_beliefs, BeliefHistogram, ParticleBelief};
use crate::fsc::{ActionKey, ActionStat, Fsc, FscMeta, FscNode, NodeId};
use crate::heuristics::{belief_vmdp, blind_value, estimate_worst_case_rewards, VTable};
use crate::index::BeliefIndex;
use crate::pomdp::{
    horizon_exceeded, ActionSpace, ActionSpec, GenerativeModel, ObservationKind, ObservationSample,
    ProblemMetadata, WorstCaseSource,
};
use crate::rng::{child_rng, stream_index, Phase, Rng};
use rand::Rng as _;
use rayon::prelude::*;
use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: field {field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("model metadata rejected: {0}")]
    BadMetadata(String),
    #[error(transparent)]
    Model(#[from] crate::pomdp::ModelError),
    #[error(transparent)]
    Fsc(#[from] crate::fsc::FscError),
    #[error(transparent)]
    Heuristic(#[from] crate::heuristics::HeuristicError),
}

/// All solver tunables.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Convergence threshold and horizon cutoff.
    pub epsilon: f64,
    /// Belief merge threshold (norm-1).
    pub xi: f64,
    /// Particles per node belief.
    pub nb_particles: usize,
    /// Improvement trajectories per pass.
    pub nb_sim: u64,
    /// Evaluation trajectories per bound estimate.
    pub nb_eval: u64,
    /// Visit count above which a node is treated as finalized.
    pub n_star: u64,
    /// UCB exploration constant.
    pub ucb_c: f64,
    /// Progressive widening coefficient.
    pub k_a: f64,
    /// Progressive widening exponent, in (0, 1].
    pub alpha_a: f64,
    /// FSC size cap.
    pub n_max_fsc: usize,
    /// Observation clusters for continuous observation spaces.
    pub k_obs: usize,
    pub kmeans_iters: usize,
    pub seed: u64,
    /// Wall-clock budget; None = unbounded.
    pub budget: Option<Duration>,
    /// Improvement/evaluation iteration cap; None = until convergence.
    pub max_iterations: Option<u64>,
    /// Record per-update audit data (Q samples, merge distances).
    pub audit: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 0.01,
            xi: 0.1,
            nb_particles: 5_000,
            nb_sim: 1_000,
            nb_eval: 100_000,
            n_star: 50,
            ucb_c: 1.0,
            k_a: 1.0,
            alpha_a: 0.5,
            n_max_fsc: 100_000,
            k_obs: 10,
            kmeans_iters: 50,
            seed: 0,
            budget: None,
            max_iterations: None,
            audit: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |field: &'static str, message: String| Err(SolverError::InvalidConfig { field, message });
        if !(self.epsilon > 0.0) {
            return bad("epsilon", format!("must be positive, got {}", self.epsilon));
        }
        if !(self.xi > 0.0) {
            return bad("xi", format!("must be positive, got {}", self.xi));
        }
        if self.nb_particles == 0 {
            return bad("nb_particles", "must be at least 1".into());
        }
        if self.nb_eval == 0 {
            return bad("nb_eval", "must be at least 1".into());
        }
        if self.n_star == 0 {
            return bad("n_star", "must be at least 1".into());
        }
        if self.n_max_fsc == 0 {
            return bad("n_max_fsc", "must be at least 1".into());
        }
        if self.k_obs == 0 {
            return bad("k_obs", "must be at least 1".into());
        }
        if !(self.k_a > 0.0) {
            return bad("k_a", format!("must be positive, got {}", self.k_a));
        }
        if !(self.alpha_a > 0.0 && self.alpha_a <= 1.0) {
            return bad("alpha_a", format!("must lie in (0,1], got {}", self.alpha_a));
        }
        Ok(())
    }

    /// Key/value snapshot recorded in policy file headers.
    pub fn snapshot(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("epsilon".into(), self.epsilon.to_string()),
            ("xi".into(), self.xi.to_string()),
            ("nb_particles".into(), self.nb_particles.to_string()),
            ("nb_sim".into(), self.nb_sim.to_string()),
            ("nb_eval".into(), self.nb_eval.to_string()),
            ("n_star".into(), self.n_star.to_string()),
            ("ucb_c".into(), self.ucb_c.to_string()),
            ("k_a".into(), self.k_a.to_string()),
            ("alpha_a".into(), self.alpha_a.to_string()),
            ("n_max_fsc".into(), self.n_max_fsc.to_string()),
            ("k_obs".into(), self.k_obs.to_string()),
            ("seed".into(), self.seed.to_string()),
        ];
        if let Some(m) = self.max_iterations {
            out.push(("max_iterations".into(), m.to_string()));
        }
        out
    }
}

/// One recorded upper/lower bound estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPair {
    pub iteration: u64,
    pub upper: f64,
    pub lower: f64,
    pub nodes: usize,
    pub wall_secs: f64,
}

/// Optional per-run audit trail used by the property suite.
#[derive(Debug, Default, Clone)]
pub struct SolverAudit {
    /// Return samples folded into each Q(n, a): the ProcessAction estimate
    /// followed by the trajectory returns.
    pub q_samples: HashMap<(NodeId, ActionKey), Vec<f64>>,
    /// Distance to the nearest pre-existing entry at each node insertion.
    pub insertion_distances: Vec<f64>,
}

pub struct SolveOutput<S> {
    pub fsc: Fsc<S>,
    pub bounds: Vec<BoundPair>,
    pub audit: SolverAudit,
}

/// UCB1 score: `q + c * sqrt(ln(n_total) / n_action)`.
pub fn ucb_score(q: f64, c: f64, n_total: f64, n_action: f64) -> f64 {
    q + c * (n_total.ln() / n_action).sqrt()
}

pub struct Solver<'a, M: GenerativeModel> {
    model: &'a M,
    cfg: SolverConfig,
    vtable: &'a VTable,
    /// Model metadata with the worst-case table guaranteed present.
    meta: ProblemMetadata,
    blind: f64,
    fsc: Fsc<M::State>,
    index: BeliefIndex,
    pass: u64,
    audit: SolverAudit,
}

impl<'a, M: GenerativeModel> Solver<'a, M> {
    pub fn new(model: &'a M, cfg: SolverConfig, vtable: &'a VTable) -> Result<Self, SolverError> {
        cfg.validate()?;
        let mut meta = model.metadata().clone();
        meta.validate().map_err(SolverError::BadMetadata)?;
        if meta.worst_case_rewards.is_none() {
            if let ActionSpace::Discrete { .. } = meta.action_space {
                let mut rng = child_rng(cfg.seed, Phase::WorstCase, 0);
                let mins = estimate_worst_case_rewards(model, 100_000, &mut rng);
                meta.worst_case_rewards = Some(mins);
                meta.worst_case_source = WorstCaseSource::Sampled;
            }
        }
        let blind = blind_value(&meta)?;
        let blind_action = crate::fsc::blind_fallback_action(&meta)?;

        // root node from nb_particles initial-state samples
        let mut rng = child_rng(cfg.seed, Phase::RootBelief, 0);
        let particles: Vec<M::State> =
            (0..cfg.nb_particles).map(|_| model.sample_initial(&mut rng)).collect();
        let belief = ParticleBelief::new(particles);
        let hist = BeliefHistogram::from_particles(&belief, model)
            .expect("nb_particles >= 1 was validated");
        let vmdp = belief_vmdp(&belief, vtable, model);
        let root = FscNode {
            id: 0,
            belief,
            hist: hist.clone(),
            visits: 0,
            actions: default_actions(&meta),
            stats: vec![ActionStat::default(); meta.action_space.discrete_count()],
            eta: Default::default(),
            psi: None,
            value: vmdp,
            vmdp_value: vmdp,
            centroids: Default::default(),
        };
        let fsc_meta = FscMeta {
            fingerprint: model.fingerprint(),
            gamma: meta.gamma,
            blind_action: Some(blind_action.clone()),
            worst_case_source: meta.worst_case_source.as_str().to_string(),
            bounds: Vec::new(),
            params: cfg.snapshot(),
        };
        let fsc = Fsc::new(root, fsc_meta);
        let mut index = BeliefIndex::new();
        index.insert(hist, 0);
        Ok(Solver {
            model,
            cfg,
            vtable,
            meta,
            blind,
            fsc,
            index,
            pass: 0,
            audit: SolverAudit::default(),
        })
    }

    pub fn fsc(&self) -> &Fsc<M::State> {
        &self.fsc
    }

    pub fn blind(&self) -> f64 {
        self.blind
    }

    pub fn audit(&self) -> &SolverAudit {
        &self.audit
    }

    /// One improvement pass: nb_sim trajectories from fresh b0 samples.
    pub fn update_fsc(&mut self) {
        self.pass += 1;
        for i in 0..self.cfg.nb_sim {
            let mut rng = child_rng(self.cfg.seed, Phase::Improve, stream_index(self.pass, i));
            let s = self.model.sample_initial(&mut rng);
            self.simulate(&s, self.fsc.n0, 0, &mut rng);
        }
    }

    /// One recursive improvement trajectory; returns the estimated return.
    pub fn simulate(&mut self, s: &M::State, node_id: NodeId, delta: u32, rng: &mut Rng) -> f64 {
        if horizon_exceeded(delta, &self.meta, self.cfg.epsilon) {
            return 0.0;
        }
        if self.model.is_terminal(s) {
            return 0.0;
        }
        let a = self.select_action(node_id, rng);
        {
            // visit counts move before the recursion so that a node visited
            // twice along one trajectory does not repeat the same decision
            let node = self.fsc.node_mut(node_id).expect("live node");
            node.visits += 1;
            node.stats[a].visits += 1;
        }
        let first_try = self.fsc.node(node_id).expect("live node").stats[a].visits == 1;
        if first_try {
            let q = self.process_action(node_id, a, rng);
            if self.cfg.audit {
                self.audit.q_samples.entry((node_id, a)).or_default().push(q);
            }
            return q;
        }
        let (action, mean_reward) = {
            let node = self.fsc.node(node_id).expect("live node");
            (node.actions[a].clone(), node.stats[a].mean_reward)
        };
        let (s2, o, _r) = self
            .model
            .step(s, &action, rng)
            .expect("model rejected one of its own actions");
        let target = {
            let node = self.fsc.node(node_id).expect("live node");
            let label = match &o {
                ObservationSample::Discrete(i) => *i,
                ObservationSample::Continuous(v) => {
                    let cents = node.centroids.get(&a).expect("tried action has centroids");
                    crate::fsc::nearest_centroid(cents, v)
                }
            };
            node.eta.get(&(a, label)).copied()
        };
        let ret = match target {
            Some(next) => mean_reward + self.meta.gamma * self.simulate(&s2, next, delta + 1, rng),
            // unseen discrete observation at a visited action: end the
            // trajectory with the blind tail, mirroring execution
            None => mean_reward + self.meta.gamma * self.blind,
        };
        let node = self.fsc.node_mut(node_id).expect("live node");
        let stat = &mut node.stats[a];
        stat.samples += 1;
        stat.q += (ret - stat.q) / stat.samples as f64;
        node.psi = node.best_tried_action();
        if let Some(p) = node.psi {
            node.value = node.stats[p].q;
        }
        if self.cfg.audit {
            self.audit.q_samples.entry((node_id, a)).or_default().push(ret);
        }
        ret
    }

    /// Action selection: UCB over the candidate set, with untried discrete
    /// actions taking priority in declared order, and progressive widening
    /// for continuous action spaces.
    pub fn select_action(&mut self, node_id: NodeId, rng: &mut Rng) -> ActionKey {
        match self.meta.action_space.clone() {
            ActionSpace::Discrete { .. } => {
                let node = self.fsc.node(node_id).expect("live node");
                if let Some(k) = node.stats.iter().position(|st| st.visits == 0) {
                    return k;
                }
                ucb_argmax(&node.stats, self.cfg.ucb_c, node.visits)
            }
            ActionSpace::Continuous { bounds } => {
                let (candidates, visits) = {
                    let node = self.fsc.node(node_id).expect("live node");
                    (node.actions.len(), node.visits)
                };
                let widen = (candidates as f64) <= self.cfg.k_a * (visits as f64).powf(self.cfg.alpha_a)
                    && visits < self.cfg.n_star;
                if widen {
                    let coords: Vec<f64> =
                        bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect();
                    let node = self.fsc.node_mut(node_id).expect("live node");
                    node.actions.push(ActionSpec::Continuous(coords));
                    node.stats.push(ActionStat::default());
                    node.actions.len() - 1
                } else {
                    let node = self.fsc.node(node_id).expect("live node");
                    if let Some(k) = node.stats.iter().position(|st| st.visits == 0) {
                        return k;
                    }
                    ucb_argmax(&node.stats, self.cfg.ucb_c, node.visits)
                }
            }
        }
    }

    /// First execution of `a` at a node: estimate the instant reward, build
    /// per-observation successor beliefs, wire the outgoing edges, and
    /// return the initial Q estimate.
    pub fn process_action(&mut self, node_id: NodeId, a: ActionKey, rng: &mut Rng) -> f64 {
        let (pairs, mean_reward) = {
            let node = self.fsc.node(node_id).expect("live node");
            let action = node.actions[a].clone();
            let mut pairs = Vec::with_capacity(self.cfg.nb_particles);
            let mut sum = 0.0;
            while pairs.len() < self.cfg.nb_particles {
                let s = node.belief.sample(rng).clone();
                let (s2, o, r) = self
                    .model
                    .step(&s, &action, rng)
                    .expect("model rejected one of its own actions");
                sum += r;
                pairs.push((s2, o));
            }
            (pairs, sum / self.cfg.nb_particles as f64)
        };

        // observation labels: discrete index, or k-means cluster
        let mut centroids_for_action: Option<Vec<Vec<f64>>> = None;
        let labeled: Vec<(M::State, usize)> = match self.meta.observation_kind {
            ObservationKind::Discrete { .. } => pairs
                .into_iter()
                .map(|(s2, o)| match o {
                    ObservationSample::Discrete(i) => (s2, i),
                    ObservationSample::Continuous(_) => {
                        panic!("discrete-observation model emitted a continuous observation")
                    }
                })
                .collect(),
            ObservationKind::Continuous { .. } => {
                let points: Vec<Vec<f64>> = pairs
                    .iter()
                    .map(|(_, o)| match o {
                        ObservationSample::Continuous(v) => v.clone(),
                        ObservationSample::Discrete(_) => {
                            panic!("continuous-observation model emitted a discrete observation")
                        }
                    })
                    .collect();
                let (labels, centroids) = kmeans(&points, self.cfg.k_obs, self.cfg.kmeans_iters, rng);
                centroids_for_action = Some(centroids);
                pairs.into_iter().zip(labels).map(|((s2, _), l)| (s2, l)).collect()
            }
        };
        let labels: Vec<usize> = labeled.iter().map(|(_, l)| *l).collect::<BTreeSet<_>>().into_iter().collect();
        let beliefs = build_beliefs(labeled, &labels).expect("every label has at least one pair");

        let mut future = 0.0;
        let mut edges = Vec::with_capacity(beliefs.len());
        for (label, (belief, weight)) in beliefs {
            let hist = BeliefHistogram::from_particles(&belief, self.model).expect("non-empty belief");
            let at_cap = self.fsc.len() >= self.cfg.n_max_fsc;
            let target = if at_cap {
                self.index.search_nearest(&hist).expect("index holds the root").0
            } else {
                match self.index.search_nearest(&hist) {
                    Ok((id, d)) if d <= self.cfg.xi => id,
                    nearest => {
                        if self.cfg.audit {
                            let d = nearest.map(|(_, d)| d).unwrap_or(f64::INFINITY);
                            self.audit.insertion_distances.push(d);
                        }
                        self.create_node(belief, hist)
                    }
                }
            };
            future += weight * self.fsc.node(target).expect("live node").value;
            edges.push((label, target));
        }
        let q = mean_reward + self.meta.gamma * future;

        let node = self.fsc.node_mut(node_id).expect("live node");
        node.stats[a].mean_reward = mean_reward;
        node.stats[a].q = q;
        node.stats[a].samples = 1;
        for (label, target) in edges {
            node.eta.insert((a, label), target);
        }
        if let Some(cents) = centroids_for_action {
            node.centroids.insert(a, cents);
        }
        node.psi = node.best_tried_action();
        if let Some(p) = node.psi {
            node.value = node.stats[p].q;
        }
        q
    }

    fn create_node(&mut self, belief: ParticleBelief<M::State>, hist: BeliefHistogram) -> NodeId {
        let id = self.fsc.fresh_id();
        let vmdp = belief_vmdp(&belief, self.vtable, self.model);
        let node = FscNode {
            id,
            belief,
            hist: hist.clone(),
            visits: 0,
            actions: default_actions(&self.meta),
            stats: vec![ActionStat::default(); self.meta.action_space.discrete_count()],
            eta: Default::default(),
            psi: None,
            value: vmdp,
            vmdp_value: vmdp,
            centroids: Default::default(),
        };
        self.fsc.add_node(node);
        self.index.insert(hist, id);
        id
    }

    /// Estimate upper and lower bounds on the FSC's value at b0 by
    /// Monte-Carlo execution. Both bounds share each trajectory's
    /// randomness; the reduction order is fixed, so results are
    /// deterministic under any parallelism.
    pub fn evaluate_fsc(&self) -> BoundPair {
        let contributions = self.evaluate_trajectories();
        let n = contributions.len() as f64;
        let (mut upper, mut lower) = (0.0, 0.0);
        for &(u, l) in &contributions {
            upper += u;
            lower += l;
        }
        BoundPair {
            iteration: self.pass,
            upper: upper / n,
            lower: lower / n,
            nodes: self.fsc.len(),
            wall_secs: 0.0,
        }
    }

    /// Per-trajectory (upper, lower) contributions, in trajectory order.
    pub fn evaluate_trajectories(&self) -> Vec<(f64, f64)> {
        (0..self.cfg.nb_eval)
            .into_par_iter()
            .map(|i| self.eval_trajectory(i))
            .collect()
    }

    fn eval_trajectory(&self, i: u64) -> (f64, f64) {
        let mut rng = child_rng(self.cfg.seed, Phase::Evaluate, i);
        let mut s = self.model.sample_initial(&mut rng);
        let mut node_id = self.fsc.n0;
        let mut delta: u32 = 0;
        let mut disc = 1.0;
        let (mut upper, mut lower) = (0.0, 0.0);
        while !horizon_exceeded(delta, &self.meta, self.cfg.epsilon) {
            if self.model.is_terminal(&s) {
                break;
            }
            let node = self.fsc.node(node_id).expect("live node");
            let finalized = node.visits > self.cfg.n_star && node.psi.is_some();
            if !finalized {
                upper += disc * node.vmdp_value;
                lower += disc * self.blind;
                break;
            }
            let psi = node.psi.unwrap();
            let action = &node.actions[psi];
            let (s2, o, r) = self
                .model
                .step(&s, action, &mut rng)
                .expect("model rejected one of its own actions");
            upper += disc * r;
            lower += disc * r;
            let label = match &o {
                ObservationSample::Discrete(idx) => Some(*idx),
                ObservationSample::Continuous(v) => node
                    .centroids
                    .get(&psi)
                    .filter(|c| !c.is_empty())
                    .map(|c| crate::fsc::nearest_centroid(c, v)),
            };
            let next = label.and_then(|l| node.eta.get(&(psi, l)).copied());
            match next {
                Some(n2) => {
                    node_id = n2;
                    s = s2;
                }
                None => {
                    // edge never observed during construction: execution
                    // switches to the blind policy from here, whose MDP
                    // relaxation bounds it above
                    let tail_disc = disc * self.meta.gamma;
                    upper += tail_disc * self.vtable.get(&self.model.discretize(&s2));
                    lower += tail_disc * self.blind;
                    break;
                }
            }
            delta += 1;
            disc *= self.meta.gamma;
        }
        (upper, lower)
    }

    /// Run the full solve loop and return the pruned FSC with its bound
    /// history attached.
    pub fn solve(mut self) -> SolveOutput<M::State> {
        let start = Instant::now();
        let root_vmdp = self.fsc.node(self.fsc.n0).expect("root").vmdp_value;
        let mut bounds = vec![BoundPair {
            iteration: 0,
            upper: root_vmdp,
            lower: self.blind,
            nodes: self.fsc.len(),
            wall_secs: 0.0,
        }];
        let mut iter = 0u64;
        loop {
            if let Some(max) = self.cfg.max_iterations {
                if iter >= max {
                    break;
                }
            }
            if let Some(budget) = self.cfg.budget {
                if start.elapsed() >= budget {
                    break;
                }
            }
            iter += 1;
            self.update_fsc();
            let mut pair = self.evaluate_fsc();
            pair.iteration = iter;
            pair.wall_secs = start.elapsed().as_secs_f64();
            bounds.push(pair);
            if pair.upper - pair.lower <= self.cfg.epsilon {
                break;
            }
        }
        self.fsc.meta.bounds = bounds.iter().map(|b| (b.iteration, b.upper, b.lower)).collect();
        let pruned = self.fsc.prune();
        SolveOutput { fsc: pruned, bounds, audit: self.audit }
    }
}

fn default_actions(meta: &ProblemMetadata) -> Vec<ActionSpec> {
    match &meta.action_space {
        ActionSpace::Discrete { count } => (0..*count).map(ActionSpec::Discrete).collect(),
        ActionSpace::Continuous { .. } => Vec::new(),
    }
}

/// UCB argmax over tried actions, ties to the lowest key.
pub fn ucb_argmax(stats: &[ActionStat], c: f64, n_total: u64) -> ActionKey {
    let mut best: Option<(f64, ActionKey)> = None;
    for (k, st) in stats.iter().enumerate() {
        if st.visits == 0 {
            continue;
        }
        let score = ucb_score(st.q, c, n_total as f64, st.visits as f64);
        if best.map_or(true, |(bs, _)| score > bs) {
            best = Some((score, k));
        }
    }
    best.expect("ucb_argmax requires at least one tried action").1
}

/// Convenience driver: build a solver and run it.
pub fn solve<M: GenerativeModel>(
    model: &M,
    cfg: &SolverConfig,
    vtable: &VTable,
) -> Result<SolveOutput<M::State>, SolverError> {
    Ok(Solver::new(model, cfg.clone(), vtable)?.solve())
}

// ---------------------------------------------------------------------------
// K-means observation clustering
// ---------------------------------------------------------------------------

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest-centroid assignment (Euclidean, ties to the lowest index).
pub fn assign_points(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = (f64::INFINITY, 0);
            for (i, c) in centroids.iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best.0 {
                    best = (d, i);
                }
            }
            best.1
        })
        .collect()
}

/// Within-cluster sum of squares.
pub fn kmeans_cost(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum()
}

pub struct KmeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// WCSS after seeding and after each Lloyd iteration.
    pub costs: Vec<f64>,
}

/// Lloyd iterations from k-means++ seeding until an assignment fixpoint or
/// `max_iters`. The effective cluster count is at most the number of
/// distinct points; empty clusters are reseeded on the farthest point.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    rng: &mut Rng,
) -> (Vec<usize>, Vec<Vec<f64>>) {
    let r = kmeans_trace(points, k, max_iters, rng);
    (r.labels, r.centroids)
}

pub fn kmeans_trace(points: &[Vec<f64>], k: usize, max_iters: usize, rng: &mut Rng) -> KmeansResult {
    assert!(!points.is_empty() && k >= 1);
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.iter().any(|q| *q == p) {
            distinct.push(p);
            if distinct.len() > k {
                break;
            }
        }
    }
    let k = k.min(distinct.len());

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut chosen = points.len() - 1;
        for (i, &w) in d2.iter().enumerate() {
            target -= w;
            if target <= 0.0 {
                chosen = i;
                break;
            }
        }
        centroids.push(points[chosen].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.last().unwrap()));
        }
    }

    let dim = points[0].len();
    let mut labels = assign_points(points, &centroids);
    let mut costs = vec![kmeans_cost(points, &labels, &centroids)];
    for _ in 0..max_iters {
        // update step
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &l) in points.iter().zip(&labels) {
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
            counts[l] += 1;
        }
        for (c, (sum, count)) in centroids.iter_mut().zip(sums.iter().zip(&counts)) {
            if *count > 0 {
                *c = sum.iter().map(|s| s / *count as f64).collect();
            }
        }
        let new_labels = assign_points(points, &centroids);
        let mut counts_after = vec![0usize; centroids.len()];
        for &l in &new_labels {
            counts_after[l] += 1;
        }
        // reseed any cluster that ended empty on the point farthest from
        // its assigned centroid, then reassign once
        if counts_after.iter().any(|&c| c == 0) {
            let far = points
                .iter()
                .enumerate()
                .max_by(|(i, p), (j, q)| {
                    let dp = sq_dist(p, &centroids[new_labels[*i]]);
                    let dq = sq_dist(q, &centroids[new_labels[*j]]);
                    dp.partial_cmp(&dq).unwrap()
                })
                .map(|(i, _)| i)
                .unwrap();
            for ci in 0..centroids.len() {
                if counts_after[ci] == 0 {
                    centroids[ci] = points[far].clone();
                    break;
                }
            }
            labels = assign_points(points, &centroids);
            costs.push(kmeans_cost(points, &labels, &centroids));
            continue;
        }
        costs.push(kmeans_cost(points, &new_labels, &centroids));
        if new_labels == labels {
            break;
        }
        labels = new_labels;
    }

    // drop clusters that ended empty so every returned label is populated
    let mut used = vec![false; centroids.len()];
    for &l in &labels {
        used[l] = true;
    }
    if used.iter().any(|u| !u) {
        let mut remap = vec![usize::MAX; centroids.len()];
        let mut kept = Vec::new();
        for (i, c) in centroids.into_iter().enumerate() {
            if used[i] {
                remap[i] = kept.len();
                kept.push(c);
            }
        }
        let labels = labels.into_iter().map(|l| remap[l]).collect();
        KmeansResult { labels, centroids: kept, costs }
    } else {
        KmeansResult { labels, centroids, costs }
    }
}
