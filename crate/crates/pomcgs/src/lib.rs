//! Offline POMDP solving via partially observable Monte-Carlo graph search.
//!
//! The solver folds a Monte-Carlo search tree into a finite-state controller
//! (FSC) by merging nodes whose particle beliefs are close in norm-1 distance.
//! The resulting policy graph is serialized to a standalone text file and can
//! be executed without any further planning.
//!
//! Crate layout:
//! - [`pomdp`]: the generative-model contract shared by all algorithms
//! - [`belief`]: particle beliefs, discretized histograms, norm-1 distance
//! - [`index`]: cover-tree metric index over node histograms
//! - [`fsc`]: the policy graph, execution semantics, pruning, policy files
//! - [`heuristics`]: Q-learning upper bound and the blind lower bound
//! - [`solver`]: the graph-search engine (improvement, evaluation, widening,
//!   observation clustering)
//! - [`exec`]: standalone execution of serialized policies
//! - [`envs`]: built-in benchmark models (Tiger, RockSample, LightDark)
//! - [`config`]: run configuration files for the CLI

pub mod belief;
pub mod config;
pub mod envs;
pub mod exec;
pub mod fsc;
pub mod heuristics;
pub mod index;
pub mod pomdp;
pub mod rng;
pub mod solver;
