//! Particle-set beliefs, discretized histograms, norm-1 distance, and
//! per-observation belief construction.

use crate::pomdp::{BinKey, GenerativeModel};
use crate::rng::Rng;
use rand::Rng as _;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BeliefError {
    #[error("empty particle set")]
    EmptyParticleSet,
    #[error("observation label {0} has no particles")]
    EmptyLabel(usize),
}

/// Uniform-weight particle set over states.
#[derive(Debug, Clone)]
pub struct ParticleBelief<S> {
    pub particles: Vec<S>,
}

impl<S: Clone> ParticleBelief<S> {
    pub fn new(particles: Vec<S>) -> Self {
        ParticleBelief { particles }
    }

    pub fn count(&self) -> usize {
        self.particles.len()
    }

    /// Sample a particle uniformly.
    pub fn sample(&self, rng: &mut Rng) -> &S {
        &self.particles[rng.random_range(0..self.particles.len())]
    }
}

/// Sparse normalized histogram over discretization bins. Only nonzero bins
/// are stored; masses sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefHistogram {
    pub bins: BTreeMap<BinKey, f64>,
}

impl BeliefHistogram {
    /// Mass of bin `k` equals (#particles in `k`) / count.
    pub fn from_particles<M: GenerativeModel>(
        belief: &ParticleBelief<M::State>,
        model: &M,
    ) -> Result<BeliefHistogram, BeliefError> {
        if belief.particles.is_empty() {
            return Err(BeliefError::EmptyParticleSet);
        }
        let mut counts: BTreeMap<BinKey, usize> = BTreeMap::new();
        for s in &belief.particles {
            *counts.entry(model.discretize(s)).or_insert(0) += 1;
        }
        let total = belief.particles.len() as f64;
        let bins = counts.into_iter().map(|(k, c)| (k, c as f64 / total)).collect();
        Ok(BeliefHistogram { bins })
    }

    pub fn total_mass(&self) -> f64 {
        self.bins.values().sum()
    }
}

/// Norm-1 distance over the union of keys. A metric bounded by 2.
pub fn l1_distance(h1: &BeliefHistogram, h2: &BeliefHistogram) -> f64 {
    let mut dist = 0.0;
    let mut it1 = h1.bins.iter().peekable();
    let mut it2 = h2.bins.iter().peekable();
    loop {
        match (it1.peek(), it2.peek()) {
            (Some((k1, v1)), Some((k2, v2))) => match k1.cmp(k2) {
                std::cmp::Ordering::Less => {
                    dist += v1.abs();
                    it1.next();
                }
                std::cmp::Ordering::Greater => {
                    dist += v2.abs();
                    it2.next();
                }
                std::cmp::Ordering::Equal => {
                    dist += (*v1 - *v2).abs();
                    it1.next();
                    it2.next();
                }
            },
            (Some((_, v1)), None) => {
                dist += v1.abs();
                it1.next();
            }
            (None, Some((_, v2))) => {
                dist += v2.abs();
                it2.next();
            }
            (None, None) => break,
        }
    }
    dist
}

/// Partition `(s', label)` pairs into per-label beliefs with their empirical
/// weights. Weights are ratios of particle counts, so they sum to 1 exactly
/// in counting arithmetic.
pub fn build_beliefs<S: Clone>(
    pairs: Vec<(S, usize)>,
    labels: &[usize],
) -> Result<BTreeMap<usize, (ParticleBelief<S>, f64)>, BeliefError> {
    let total = pairs.len();
    if total == 0 {
        return Err(BeliefError::EmptyParticleSet);
    }
    let mut buckets: BTreeMap<usize, Vec<S>> = labels.iter().map(|&l| (l, Vec::new())).collect();
    for (s, label) in pairs {
        buckets
            .get_mut(&label)
            .expect("pair label outside declared label set")
            .push(s);
    }
    let mut out = BTreeMap::new();
    for (label, particles) in buckets {
        if particles.is_empty() {
            return Err(BeliefError::EmptyLabel(label));
        }
        let weight = particles.len() as f64 / total as f64;
        out.insert(label, (ParticleBelief::new(particles), weight));
    }
    Ok(out)
}
