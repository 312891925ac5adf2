//! Run configuration: a flat sectioned key=value text format, the merged
//! RunConfig consumed by the CLI, and a stable hash embedded in artifacts.

use crate::heuristics::QLearningConfig;
use crate::solver::SolverConfig;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("section [{section}], key {key}: {message}")]
    BadValue { section: String, key: String, message: String },
}

/// Everything a solve run needs, read from one config file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub env_name: String,
    pub env_params: BTreeMap<String, String>,
    pub solver: SolverConfig,
    pub qlearning: QLearningConfig,
    pub out_dir: PathBuf,
    pub policy_path: PathBuf,
    pub vtable_path: PathBuf,
    pub bounds_path: PathBuf,
    pub reuse_vtable: bool,
    /// Stable hash of the parsed content, embedded in artifacts.
    pub hash: u64,
}

fn parse_sections(
    text: &str,
) -> Result<BTreeMap<String, BTreeMap<String, (usize, String)>>, ConfigError> {
    let mut sections: BTreeMap<String, BTreeMap<String, (usize, String)>> = BTreeMap::new();
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current.is_empty() {
                return Err(ConfigError::Parse { line: lineno, message: "empty section name".into() });
            }
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: lineno,
            message: format!("expected key=value, got '{line}'"),
        })?;
        if current.is_empty() {
            return Err(ConfigError::Parse {
                line: lineno,
                message: "key=value before any [section] header".into(),
            });
        }
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::Parse { line: lineno, message: "empty key".into() });
        }
        let prev = sections
            .get_mut(&current)
            .unwrap()
            .insert(key.clone(), (lineno, value.trim().to_string()));
        if prev.is_some() {
            return Err(ConfigError::Parse {
                line: lineno,
                message: format!("duplicate key '{key}' in section [{current}]"),
            });
        }
    }
    Ok(sections)
}

fn take<T: std::str::FromStr>(
    section: &mut BTreeMap<String, (usize, String)>,
    key: &str,
    default: T,
) -> Result<T, ConfigError> {
    match section.remove(key) {
        None => Ok(default),
        Some((line, text)) => text.parse().map_err(|_| ConfigError::Parse {
            line,
            message: format!("cannot parse '{text}' for key {key}"),
        }),
    }
}

/// FNV-1a over the normalized section/key/value content, so formatting and
/// comments do not change the hash.
fn content_hash(sections: &BTreeMap<String, BTreeMap<String, (usize, String)>>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for (name, entries) in sections {
        eat(name.as_bytes());
        eat(b"\x1f");
        for (key, (_, value)) in entries {
            eat(key.as_bytes());
            eat(b"=");
            eat(value.as_bytes());
            eat(b"\x1f");
        }
    }
    h
}

pub fn parse_run_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut sections = parse_sections(text)?;
    let hash = content_hash(&sections);

    let mut env = sections.remove("env").unwrap_or_default();
    let env_name = match env.remove("name") {
        Some((_, name)) => name,
        None => "tiger".to_string(),
    };
    let env_params: BTreeMap<String, String> =
        env.into_iter().map(|(k, (_, v))| (k, v)).collect();

    let mut s = sections.remove("solver").unwrap_or_default();
    let d = SolverConfig::default();
    let budget_secs: f64 = take(&mut s, "budget_secs", -1.0)?;
    let max_iterations: i64 = take(&mut s, "max_iterations", -1)?;
    let solver = SolverConfig {
        epsilon: take(&mut s, "epsilon", d.epsilon)?,
        xi: take(&mut s, "xi", d.xi)?,
        nb_particles: take(&mut s, "nb_particles", d.nb_particles)?,
        nb_sim: take(&mut s, "nb_sim", d.nb_sim)?,
        nb_eval: take(&mut s, "nb_eval", d.nb_eval)?,
        n_star: take(&mut s, "n_star", d.n_star)?,
        ucb_c: take(&mut s, "ucb_c", d.ucb_c)?,
        k_a: take(&mut s, "k_a", d.k_a)?,
        alpha_a: take(&mut s, "alpha_a", d.alpha_a)?,
        n_max_fsc: take(&mut s, "n_max_fsc", d.n_max_fsc)?,
        k_obs: take(&mut s, "k_obs", d.k_obs)?,
        kmeans_iters: take(&mut s, "kmeans_iters", d.kmeans_iters)?,
        seed: take(&mut s, "seed", d.seed)?,
        budget: (budget_secs >= 0.0).then(|| Duration::from_secs_f64(budget_secs)),
        max_iterations: (max_iterations >= 0).then(|| max_iterations as u64),
        audit: false,
    };
    reject_unknown("solver", &s)?;

    let mut q = sections.remove("qlearning").unwrap_or_default();
    let dq = QLearningConfig::default();
    let qlearning = QLearningConfig {
        episodes: take(&mut q, "episodes", dq.episodes)?,
        max_steps: take(&mut q, "max_steps", dq.max_steps)?,
        learning_rate: take(&mut q, "learning_rate", dq.learning_rate)?,
        exploration_start: take(&mut q, "exploration_start", dq.exploration_start)?,
        exploration_end: take(&mut q, "exploration_end", dq.exploration_end)?,
    };
    reject_unknown("qlearning", &q)?;

    let mut o = sections.remove("output").unwrap_or_default();
    let out_dir: PathBuf = take(&mut o, "dir", PathBuf::from("out"))?;
    let policy_path = out_dir.join(take(&mut o, "policy", String::from("policy.txt"))?);
    let vtable_path = out_dir.join(take(&mut o, "vtable", String::from("vtable.txt"))?);
    let bounds_path = out_dir.join(take(&mut o, "bounds", String::from("bounds.csv"))?);
    let reuse_vtable: bool = take(&mut o, "reuse_vtable", true)?;
    reject_unknown("output", &o)?;

    if let Some(name) = sections.keys().next() {
        return Err(ConfigError::Parse {
            line: 0,
            message: format!("unknown section [{name}]"),
        });
    }

    Ok(RunConfig {
        env_name,
        env_params,
        solver,
        qlearning,
        out_dir,
        policy_path,
        vtable_path,
        bounds_path,
        reuse_vtable,
        hash,
    })
}

fn reject_unknown(
    name: &str,
    leftover: &BTreeMap<String, (usize, String)>,
) -> Result<(), ConfigError> {
    if let Some((key, (line, _))) = leftover.iter().next() {
        return Err(ConfigError::Parse {
            line: *line,
            message: format!("unknown key '{key}' in section [{name}]"),
        });
    }
    Ok(())
}
