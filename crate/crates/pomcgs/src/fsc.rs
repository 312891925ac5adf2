//! The finite-state controller: nodes, observation-indexed transitions,
//! action labels, execution semantics with the blind fallback, pruning, and
//! the serialized policy file format.

use crate::belief::{BeliefHistogram, ParticleBelief};
use crate::pomdp::{ActionSpec, ObservationSample, ProblemMetadata};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use thiserror::Error;

pub type NodeId = usize;
/// Observation label: a discrete observation index, or the index of a
/// k-means centroid for continuous observations.
pub type ObsLabel = usize;
/// Index into a node's tried/candidate action list `C(n)`.
pub type ActionKey = usize;

pub const POLICY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FscError {
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("refusing to serialize an FSC with no nodes")]
    EmptyFsc,
    #[error("blind fallback needs a worst-case reward table")]
    MissingWorstCaseTable,
    #[error("blind fallback undefined for a continuous action space with no candidate set")]
    ContinuousBlindAction,
    #[error("policy load error at line {line}: {message}")]
    Load { line: usize, message: String },
}

/// Per-action statistics of a node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActionStat {
    /// N(n, a)
    pub visits: u64,
    /// Q(n, a)
    pub q: f64,
    /// Returns folded into q so far. Visits are counted on the way down a
    /// trajectory but returns fold on the way back up, so this lags visits
    /// mid-trajectory and equals them at rest.
    pub samples: u64,
    /// r(n, a): mean sampled instant reward
    pub mean_reward: f64,
}

#[derive(Debug, Clone)]
pub struct FscNode<S> {
    pub id: NodeId,
    pub belief: ParticleBelief<S>,
    pub hist: BeliefHistogram,
    /// N(n)
    pub visits: u64,
    /// C(n): candidate actions in creation order; keys are indices here.
    pub actions: Vec<ActionSpec>,
    pub stats: Vec<ActionStat>,
    /// (action key, observation label) -> successor node.
    pub eta: BTreeMap<(ActionKey, ObsLabel), NodeId>,
    pub psi: Option<ActionKey>,
    /// V(n): optimistic initialization, then max_a Q(n, a).
    pub value: f64,
    /// Cached belief-weighted V_MDP of this node's belief.
    pub vmdp_value: f64,
    /// Per-action observation centroids (continuous-observation models).
    pub centroids: BTreeMap<ActionKey, Vec<Vec<f64>>>,
}

impl<S> FscNode<S> {
    /// Tried-action keys (N(n, a) >= 1).
    pub fn tried(&self) -> impl Iterator<Item = ActionKey> + '_ {
        self.stats
            .iter()
            .enumerate()
            .filter(|(_, st)| st.visits > 0)
            .map(|(k, _)| k)
    }

    /// argmax over tried actions of Q(n, .), ties to the lowest key.
    pub fn best_tried_action(&self) -> Option<ActionKey> {
        let mut best: Option<(f64, ActionKey)> = None;
        for k in self.tried() {
            let q = self.stats[k].q;
            if best.map_or(true, |(bq, _)| q > bq) {
                best = Some((q, k));
            }
        }
        best.map(|(_, k)| k)
    }
}

#[derive(Debug, Clone, Default)]
pub struct FscMeta {
    pub fingerprint: String,
    pub gamma: f64,
    pub blind_action: Option<ActionSpec>,
    pub worst_case_source: String,
    /// (iteration, upper, lower) bound history.
    pub bounds: Vec<(u64, f64, f64)>,
    /// Solver config snapshot, recorded as key/value pairs.
    pub params: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct Fsc<S> {
    nodes: BTreeMap<NodeId, FscNode<S>>,
    pub n0: NodeId,
    next_id: NodeId,
    pub meta: FscMeta,
}

/// Result of following the controller for one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Next(NodeId),
    /// No usable edge: execution switches to the blind policy.
    OpenLeaf,
}

impl<S: Clone> Fsc<S> {
    pub fn new(root: FscNode<S>, meta: FscMeta) -> Self {
        let n0 = root.id;
        let mut nodes = BTreeMap::new();
        let next_id = n0 + 1;
        nodes.insert(n0, root);
        Fsc { nodes, n0, next_id, meta }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Result<&FscNode<S>, FscError> {
        self.nodes.get(&id).ok_or(FscError::UnknownNode(id))
    }

    pub fn node_mut(&mut self, id: NodeId) -> Result<&mut FscNode<S>, FscError> {
        self.nodes.get_mut(&id).ok_or(FscError::UnknownNode(id))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &FscNode<S>> {
        self.nodes.values()
    }

    pub fn fresh_id(&mut self) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn add_node(&mut self, node: FscNode<S>) {
        debug_assert!(!self.nodes.contains_key(&node.id));
        self.nodes.insert(node.id, node);
    }

    /// Follow the controller from `node_id` under observation `o`, using the
    /// node's committed action psi. Missing edges and unset psi yield
    /// [`StepOutcome::OpenLeaf`].
    pub fn execute_policy_step(&self, node_id: NodeId, o: &ObservationSample) -> Result<StepOutcome, FscError> {
        let node = self.node(node_id)?;
        let Some(psi) = node.psi else {
            return Ok(StepOutcome::OpenLeaf);
        };
        Ok(route_observation(psi, &node.eta, &node.centroids, o))
    }

    /// Retain exactly the nodes reachable from n0 along psi-labeled edges.
    /// Node ids are preserved, so execution traces are unaffected.
    pub fn prune(&self) -> Fsc<S> {
        let mut keep: BTreeSet<NodeId> = BTreeSet::new();
        let mut queue = VecDeque::from([self.n0]);
        keep.insert(self.n0);
        while let Some(id) = queue.pop_front() {
            let node = &self.nodes[&id];
            if let Some(psi) = node.psi {
                for (&(a, _o), &target) in &node.eta {
                    if a == psi && keep.insert(target) {
                        queue.push_back(target);
                    }
                }
            }
        }
        Fsc {
            nodes: self
                .nodes
                .iter()
                .filter(|(id, _)| keep.contains(id))
                .map(|(id, n)| {
                    // edges under non-psi actions may point at dropped nodes
                    // and are never followed at execution time
                    let mut n = n.clone();
                    let psi = n.psi;
                    n.eta.retain(|&(a, _), _| Some(a) == psi);
                    n.centroids.retain(|a, _| Some(*a) == psi);
                    (*id, n)
                })
                .collect(),
            n0: self.n0,
            next_id: self.next_id,
            meta: self.meta.clone(),
        }
    }

    /// Strip beliefs and produce the serializable policy.
    pub fn to_policy(&self) -> PolicyFile {
        PolicyFile {
            version: POLICY_FORMAT_VERSION,
            fingerprint: self.meta.fingerprint.clone(),
            gamma: self.meta.gamma,
            blind_action: self.meta.blind_action.clone(),
            worst_case_source: self.meta.worst_case_source.clone(),
            bounds: self.meta.bounds.clone(),
            params: self.meta.params.clone(),
            n0: self.n0,
            nodes: self
                .nodes
                .iter()
                .map(|(&id, n)| {
                    (
                        id,
                        PolicyNode {
                            actions: n.actions.clone(),
                            psi: n.psi,
                            visits: n.visits,
                            value: n.value,
                            eta: n.eta.clone(),
                            centroids: n.centroids.clone(),
                        },
                    )
                })
                .collect(),
        }
    }
}

fn route_observation(
    psi: ActionKey,
    eta: &BTreeMap<(ActionKey, ObsLabel), NodeId>,
    centroids: &BTreeMap<ActionKey, Vec<Vec<f64>>>,
    o: &ObservationSample,
) -> StepOutcome {
    let label = match o {
        ObservationSample::Discrete(i) => *i,
        ObservationSample::Continuous(v) => match centroids.get(&psi) {
            Some(cents) if !cents.is_empty() => nearest_centroid(cents, v),
            _ => return StepOutcome::OpenLeaf,
        },
    };
    match eta.get(&(psi, label)) {
        Some(&next) => StepOutcome::Next(next),
        None => StepOutcome::OpenLeaf,
    }
}

/// Index of the centroid closest to `v` in Euclidean distance, ties to the
/// lowest index.
pub fn nearest_centroid(centroids: &[Vec<f64>], v: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, c) in centroids.iter().enumerate() {
        let d: f64 = c.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Stationary fallback action: argmax over actions of the worst-case instant
/// reward, ties to the lowest action index.
pub fn blind_fallback_action(meta: &ProblemMetadata) -> Result<ActionSpec, FscError> {
    match &meta.action_space {
        crate::pomdp::ActionSpace::Continuous { .. } => Err(FscError::ContinuousBlindAction),
        crate::pomdp::ActionSpace::Discrete { .. } => {
            let table = meta.worst_case_rewards.as_ref().ok_or(FscError::MissingWorstCaseTable)?;
            let mut best = (f64::NEG_INFINITY, 0);
            for (a, &r) in table.iter().enumerate() {
                if r > best.0 {
                    best = (r, a);
                }
            }
            Ok(ActionSpec::Discrete(best.1))
        }
    }
}

// ---------------------------------------------------------------------------
// Policy file
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNode {
    pub actions: Vec<ActionSpec>,
    pub psi: Option<ActionKey>,
    pub visits: u64,
    pub value: f64,
    pub eta: BTreeMap<(ActionKey, ObsLabel), NodeId>,
    pub centroids: BTreeMap<ActionKey, Vec<Vec<f64>>>,
}

/// Parsed, executable policy. Line-oriented UTF-8 text on disk; floats use
/// 17 significant digits for exact round-trips.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFile {
    pub version: u32,
    pub fingerprint: String,
    pub gamma: f64,
    pub blind_action: Option<ActionSpec>,
    pub worst_case_source: String,
    pub bounds: Vec<(u64, f64, f64)>,
    pub params: Vec<(String, String)>,
    pub n0: NodeId,
    pub nodes: BTreeMap<NodeId, PolicyNode>,
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_action(a: &ActionSpec) -> String {
    match a {
        ActionSpec::Discrete(i) => format!("d{i}"),
        ActionSpec::Continuous(v) => {
            let coords: Vec<String> = v.iter().map(|&x| fmt_f64(x)).collect();
            format!("c{}", coords.join(","))
        }
    }
}

fn parse_action(text: &str) -> Option<ActionSpec> {
    if let Some(rest) = text.strip_prefix('d') {
        rest.parse().ok().map(ActionSpec::Discrete)
    } else if let Some(rest) = text.strip_prefix('c') {
        let coords: Option<Vec<f64>> = rest.split(',').map(|t| t.parse().ok()).collect();
        coords.map(ActionSpec::Continuous)
    } else {
        None
    }
}

impl PolicyFile {
    pub fn serialize(&self) -> Result<String, FscError> {
        if self.nodes.is_empty() {
            return Err(FscError::EmptyFsc);
        }
        let mut out = String::new();
        let _ = writeln!(out, "pomcgs-policy v{}", self.version);
        let _ = writeln!(out, "fingerprint {}", self.fingerprint);
        let _ = writeln!(out, "gamma {}", fmt_f64(self.gamma));
        if let Some(a) = &self.blind_action {
            let _ = writeln!(out, "blind {}", fmt_action(a));
        }
        let _ = writeln!(out, "worstcase {}", self.worst_case_source);
        for (k, v) in &self.params {
            let _ = writeln!(out, "param {k} {v}");
        }
        for &(iter, upper, lower) in &self.bounds {
            let _ = writeln!(out, "bound {iter} {} {}", fmt_f64(upper), fmt_f64(lower));
        }
        let _ = writeln!(out, "n0 {}", self.n0);
        for (&id, node) in &self.nodes {
            let psi = node.psi.map_or_else(|| "-".to_string(), |k| k.to_string());
            let _ = writeln!(out, "node {id} psi={psi} N={} V={}", node.visits, fmt_f64(node.value));
            for (k, a) in node.actions.iter().enumerate() {
                let _ = writeln!(out, "action {id} {k} {}", fmt_action(a));
            }
            for (&(a, o), &target) in &node.eta {
                let _ = writeln!(out, "edge {id} {a} {o} -> {target}");
            }
            for (&a, cents) in &node.centroids {
                for (label, c) in cents.iter().enumerate() {
                    let coords: Vec<String> = c.iter().map(|&x| fmt_f64(x)).collect();
                    let _ = writeln!(out, "centroid {id} {a} {label} {}", coords.join(" "));
                }
            }
        }
        out.push_str("end\n");
        Ok(out)
    }

    pub fn deserialize(text: &str) -> Result<PolicyFile, FscError> {
        let err = |line: usize, message: &str| FscError::Load { line, message: message.to_string() };
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| err(1, "empty policy file"))?;
        let version: u32 = first
            .strip_prefix("pomcgs-policy v")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(1, "not a pomcgs policy file"))?;
        if version != POLICY_FORMAT_VERSION {
            return Err(err(1, &format!("unsupported policy format version {version}")));
        }
        let mut policy = PolicyFile {
            version,
            fingerprint: String::new(),
            gamma: 0.0,
            blind_action: None,
            worst_case_source: String::new(),
            bounds: Vec::new(),
            params: Vec::new(),
            n0: 0,
            nodes: BTreeMap::new(),
        };
        let mut saw_end = false;
        for (i, raw) in lines {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let tag = parts.next().unwrap();
            let rest: Vec<&str> = parts.collect();
            match tag {
                "fingerprint" => policy.fingerprint = rest.join(" "),
                "gamma" => {
                    policy.gamma =
                        rest.first().and_then(|t| t.parse().ok()).ok_or_else(|| err(lineno, "bad gamma"))?
                }
                "blind" => {
                    policy.blind_action =
                        Some(rest.first().and_then(|t| parse_action(t)).ok_or_else(|| err(lineno, "bad blind action"))?)
                }
                "worstcase" => policy.worst_case_source = rest.join(" "),
                "param" => {
                    if rest.len() < 2 {
                        return Err(err(lineno, "bad param record"));
                    }
                    policy.params.push((rest[0].to_string(), rest[1..].join(" ")));
                }
                "bound" => {
                    if rest.len() != 3 {
                        return Err(err(lineno, "bad bound record"));
                    }
                    let iter = rest[0].parse().map_err(|_| err(lineno, "bad bound iteration"))?;
                    let upper = rest[1].parse().map_err(|_| err(lineno, "bad upper bound"))?;
                    let lower = rest[2].parse().map_err(|_| err(lineno, "bad lower bound"))?;
                    policy.bounds.push((iter, upper, lower));
                }
                "n0" => {
                    policy.n0 =
                        rest.first().and_then(|t| t.parse().ok()).ok_or_else(|| err(lineno, "bad n0"))?
                }
                "node" => {
                    if rest.len() != 4 {
                        return Err(err(lineno, "bad node record"));
                    }
                    let id: NodeId = rest[0].parse().map_err(|_| err(lineno, "bad node id"))?;
                    let psi_txt =
                        rest[1].strip_prefix("psi=").ok_or_else(|| err(lineno, "missing psi field"))?;
                    let psi = if psi_txt == "-" {
                        None
                    } else {
                        Some(psi_txt.parse().map_err(|_| err(lineno, "bad psi"))?)
                    };
                    let visits = rest[2]
                        .strip_prefix("N=")
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err(lineno, "bad visit count"))?;
                    let value = rest[3]
                        .strip_prefix("V=")
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err(lineno, "bad value"))?;
                    policy.nodes.insert(
                        id,
                        PolicyNode {
                            actions: Vec::new(),
                            psi,
                            visits,
                            value,
                            eta: BTreeMap::new(),
                            centroids: BTreeMap::new(),
                        },
                    );
                }
                "action" => {
                    if rest.len() != 3 {
                        return Err(err(lineno, "bad action record"));
                    }
                    let id: NodeId = rest[0].parse().map_err(|_| err(lineno, "bad node id"))?;
                    let key: usize = rest[1].parse().map_err(|_| err(lineno, "bad action key"))?;
                    let action = parse_action(rest[2]).ok_or_else(|| err(lineno, "bad action spec"))?;
                    let node =
                        policy.nodes.get_mut(&id).ok_or_else(|| err(lineno, "action for unknown node"))?;
                    if key != node.actions.len() {
                        return Err(err(lineno, "action keys out of order"));
                    }
                    node.actions.push(action);
                }
                "edge" => {
                    if rest.len() != 5 || rest[3] != "->" {
                        return Err(err(lineno, "bad edge record"));
                    }
                    let id: NodeId = rest[0].parse().map_err(|_| err(lineno, "bad node id"))?;
                    let a: ActionKey = rest[1].parse().map_err(|_| err(lineno, "bad action key"))?;
                    let o: ObsLabel = rest[2].parse().map_err(|_| err(lineno, "bad obs label"))?;
                    let target: NodeId = rest[4].parse().map_err(|_| err(lineno, "bad edge target"))?;
                    let node =
                        policy.nodes.get_mut(&id).ok_or_else(|| err(lineno, "edge for unknown node"))?;
                    node.eta.insert((a, o), target);
                }
                "centroid" => {
                    if rest.len() < 4 {
                        return Err(err(lineno, "bad centroid record"));
                    }
                    let id: NodeId = rest[0].parse().map_err(|_| err(lineno, "bad node id"))?;
                    let a: ActionKey = rest[1].parse().map_err(|_| err(lineno, "bad action key"))?;
                    let label: usize = rest[2].parse().map_err(|_| err(lineno, "bad centroid label"))?;
                    let coords: Result<Vec<f64>, _> = rest[3..].iter().map(|t| t.parse()).collect();
                    let coords = coords.map_err(|_| err(lineno, "bad centroid coordinates"))?;
                    let node = policy
                        .nodes
                        .get_mut(&id)
                        .ok_or_else(|| err(lineno, "centroid for unknown node"))?;
                    let cents = node.centroids.entry(a).or_default();
                    if label != cents.len() {
                        return Err(err(lineno, "centroid labels out of order"));
                    }
                    cents.push(coords);
                }
                "end" => {
                    saw_end = true;
                    break;
                }
                other => return Err(err(lineno, &format!("unknown record '{other}'"))),
            }
        }
        if !saw_end {
            return Err(err(text.lines().count(), "truncated policy file (missing 'end')"));
        }
        if policy.nodes.is_empty() {
            return Err(err(1, "policy file contains no nodes"));
        }
        if !policy.nodes.contains_key(&policy.n0) {
            return Err(err(1, "start node missing from node set"));
        }
        for (&id, node) in &policy.nodes {
            for &target in node.eta.values() {
                if !policy.nodes.contains_key(&target) {
                    return Err(err(1, &format!("dangling edge target {target} from node {id}")));
                }
            }
        }
        Ok(policy)
    }

    /// One controller step; same semantics as [`Fsc::execute_policy_step`].
    pub fn execute_policy_step(&self, node_id: NodeId, o: &ObservationSample) -> Result<StepOutcome, FscError> {
        let node = self.nodes.get(&node_id).ok_or(FscError::UnknownNode(node_id))?;
        let Some(psi) = node.psi else {
            return Ok(StepOutcome::OpenLeaf);
        };
        Ok(route_observation(psi, &node.eta, &node.centroids, o))
    }

    /// Committed action of a node, if any.
    pub fn action_of(&self, node_id: NodeId) -> Result<Option<&ActionSpec>, FscError> {
        let node = self.nodes.get(&node_id).ok_or(FscError::UnknownNode(node_id))?;
        Ok(node.psi.map(|k| &node.actions[k]))
    }

    /// Deterministic DOT rendering: one vertex per node labeled "id/psi/N",
    /// one edge per (psi, obs-label).
    pub fn export_dot(&self) -> String {
        let mut out = String::from("digraph fsc {\n");
        let _ = writeln!(out, "  rankdir=LR;");
        for (&id, node) in &self.nodes {
            let psi = node.psi.map_or_else(|| "-".to_string(), |k| fmt_action(&node.actions[k]));
            let shape = if id == self.n0 { " shape=doublecircle" } else { "" };
            let _ = writeln!(out, "  n{id} [label=\"{id}/{psi}/{}\"{shape}];", node.visits);
        }
        for (&id, node) in &self.nodes {
            if let Some(psi) = node.psi {
                for (&(a, o), &target) in &node.eta {
                    if a == psi {
                        let _ = writeln!(out, "  n{id} -> n{target} [label=\"o{o}\"];");
                    }
                }
            }
        }
        out.push_str("}\n");
        out
    }
}
