//! Command-line front end: solve a configured problem, evaluate or inspect a
//! saved policy, and export it as a graph.

use clap::{Parser, Subcommand};
use pomcgs::config::{parse_run_config, RunConfig};
use pomcgs::envs::make_env;
use pomcgs::exec::evaluate_policy;
use pomcgs::fsc::PolicyFile;
use pomcgs::heuristics::{deserialize_vtable, serialize_vtable, train_vmdp, HeuristicError};
use pomcgs::rng::{child_rng, Phase};
use pomcgs::solver::solve;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_FINGERPRINT: u8 = 3;

#[derive(Parser)]
#[command(name = "pomcgs", about = "Offline POMDP solver producing standalone policy graphs")]
struct Cli {
    /// Evaluation thread count (also POMCGS_THREADS); defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem described by a config file and write artifacts.
    Solve {
        config: PathBuf,
        /// Retrain the MDP value table even if a cache is present.
        #[arg(long)]
        no_vtable_cache: bool,
    },
    /// Execute a saved policy and report its empirical return.
    Eval {
        policy: PathBuf,
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run even if the policy was built for a different model.
        #[arg(long)]
        allow_mismatch: bool,
    },
    /// Export a saved policy; currently only GraphViz dot.
    Export {
        policy: PathBuf,
        #[arg(long, default_value = "dot")]
        format: String,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Print a saved policy's header and size.
    Inspect { policy: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_CONFIG, message: message.into() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var("POMCGS_THREADS").ok().and_then(|t| t.parse().ok()));
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let result = match cli.command {
        Command::Solve { config, no_vtable_cache } => cmd_solve(&config, no_vtable_cache),
        Command::Eval { policy, config, episodes, seed, allow_mismatch } => {
            cmd_eval(&policy, &config, episodes, seed, allow_mismatch)
        }
        Command::Export { policy, format, out } => cmd_export(&policy, &format, out.as_deref()),
        Command::Inspect { policy } => cmd_inspect(&policy),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_run_config(&text).map_err(|e| Failure::config(e.to_string()))?;
    if let Ok(dir) = std::env::var("POMCGS_OUT_DIR") {
        let dir = PathBuf::from(dir);
        for p in [&mut cfg.policy_path, &mut cfg.vtable_path, &mut cfg.bounds_path] {
            let name = p.file_name().expect("artifact paths have file names").to_owned();
            *p = dir.join(name);
        }
        cfg.out_dir = dir;
    }
    cfg.solver.validate().map_err(|e| Failure::config(e.to_string()))?;
    Ok(cfg)
}

fn load_policy(path: &Path) -> Result<PolicyFile, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    PolicyFile::deserialize(&text).map_err(|e| Failure::config(e.to_string()))
}

fn cmd_solve(config_path: &Path, no_vtable_cache: bool) -> Result<(), Failure> {
    let cfg = load_config(config_path)?;
    let env = make_env(&cfg.env_name, &cfg.env_params).map_err(|e| Failure::config(e.to_string()))?;
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Failure::config(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    use pomcgs::pomdp::GenerativeModel;
    let fingerprint = env.fingerprint();

    let vtable = match (!no_vtable_cache && cfg.reuse_vtable)
        .then(|| std::fs::read_to_string(&cfg.vtable_path).ok())
        .flatten()
        .map(|text| deserialize_vtable(&text, &fingerprint))
    {
        Some(Ok(vtab)) => {
            eprintln!("reusing value table cache {}", cfg.vtable_path.display());
            vtab
        }
        other => {
            if let Some(Err(HeuristicError::CacheMismatch { cached, .. })) = other {
                eprintln!("warning: ignoring vtable cache built for '{cached}', retraining");
            }
            let mut rng = child_rng(cfg.solver.seed, Phase::Vmdp, 0);
            let vtab = train_vmdp(&env, &cfg.qlearning, &mut rng);
            std::fs::write(&cfg.vtable_path, serialize_vtable(&vtab, &fingerprint))
                .map_err(|e| Failure::config(format!("cannot write vtable cache: {e}")))?;
            vtab
        }
    };

    let started = std::time::Instant::now();
    let mut out = solve(&env, &cfg.solver, &vtable).map_err(|e| Failure::config(e.to_string()))?;
    out.fsc.meta.params.push(("config_hash".into(), format!("{:016x}", cfg.hash)));
    let policy_text = out
        .fsc
        .to_policy()
        .serialize()
        .map_err(|e| Failure::config(e.to_string()))?;
    std::fs::write(&cfg.policy_path, policy_text)
        .map_err(|e| Failure::config(format!("cannot write policy: {e}")))?;

    let mut csv = format!("# config_hash={:016x} seed={}\n", cfg.hash, cfg.solver.seed);
    csv.push_str("iter,upper,lower,nodes,seconds\n");
    for b in &out.bounds {
        let _ = writeln!(csv, "{},{:.6},{:.6},{},{:.3}", b.iteration, b.upper, b.lower, b.nodes, b.wall_secs);
    }
    std::fs::write(&cfg.bounds_path, csv)
        .map_err(|e| Failure::config(format!("cannot write bounds CSV: {e}")))?;

    let last = out.bounds.last().expect("bound history is never empty");
    if out.bounds.len() == 1 {
        eprintln!("warning: budget exhausted before the first evaluation; artifacts hold heuristic bounds only");
    }
    println!("config_hash {:016x} seed {}", cfg.hash, cfg.solver.seed);
    println!(
        "iterations {} nodes {} upper {:.4} lower {:.4} gap {:.4} wall {:.1}s",
        last.iteration,
        out.fsc.len(),
        last.upper,
        last.lower,
        last.upper - last.lower,
        started.elapsed().as_secs_f64()
    );
    println!("policy {}", cfg.policy_path.display());
    println!("bounds {}", cfg.bounds_path.display());
    Ok(())
}

fn cmd_eval(
    policy_path: &Path,
    config_path: &Path,
    episodes: u64,
    seed: u64,
    allow_mismatch: bool,
) -> Result<(), Failure> {
    if episodes == 0 {
        return Err(Failure::config("--episodes must be at least 1"));
    }
    let cfg = load_config(config_path)?;
    let policy = load_policy(policy_path)?;
    let env = make_env(&cfg.env_name, &cfg.env_params).map_err(|e| Failure::config(e.to_string()))?;
    use pomcgs::pomdp::GenerativeModel;
    let fingerprint = env.fingerprint();
    if policy.fingerprint != fingerprint {
        if !allow_mismatch {
            return Err(Failure {
                code: EXIT_FINGERPRINT,
                message: format!(
                    "policy was built for '{}' but the config describes '{fingerprint}' (use --allow-mismatch to force)",
                    policy.fingerprint
                ),
            });
        }
        eprintln!("warning: fingerprint mismatch, evaluating anyway");
    }
    let summary = evaluate_policy(&env, &policy, episodes, seed, cfg.solver.epsilon)
        .map_err(|e| Failure::config(e.to_string()))?;
    println!(
        "episodes {} mean {:.4} se {:.4} open_leaf_rate {:.4} mean_length {:.2}",
        summary.episodes,
        summary.mean_return,
        summary.std_error,
        summary.open_leaf_rate,
        summary.mean_length
    );
    Ok(())
}

fn cmd_export(policy_path: &Path, format: &str, out: Option<&Path>) -> Result<(), Failure> {
    if format != "dot" {
        return Err(Failure::config(format!("unknown export format '{format}' (supported: dot)")));
    }
    let policy = load_policy(policy_path)?;
    let dot = policy.export_dot();
    match out {
        Some(path) => std::fs::write(path, dot)
            .map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{dot}"),
    }
    Ok(())
}

fn cmd_inspect(policy_path: &Path) -> Result<(), Failure> {
    let policy = load_policy(policy_path)?;
    println!("fingerprint {}", policy.fingerprint);
    println!("gamma {}", policy.gamma);
    println!("nodes {} n0 {}", policy.nodes.len(), policy.n0);
    println!("worst_case {}", policy.worst_case_source);
    for (k, v) in &policy.params {
        println!("param {k} {v}");
    }
    if let Some(&(iter, upper, lower)) = policy.bounds.last() {
        println!("final_bounds iter {iter} upper {upper:.4} lower {lower:.4}");
    }
    Ok(())
}
