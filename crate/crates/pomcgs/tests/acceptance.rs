//! Acceptance gate: one test per shipped claim. Every test prints a single
//! `criterion N ... PASS/FAIL` line with the measured numbers before
//! asserting, so the full scorecard survives in the test log.

use pomcgs::belief::{l1_distance, BeliefHistogram};
use pomcgs::envs::{make_env, tiger::exact_tiger_value, Env, RockSampleModel};
use pomcgs::exec::run_episode;
use pomcgs::fsc::PolicyFile;
use pomcgs::heuristics::{train_vmdp, QLearningConfig, VTable};
use pomcgs::index::{linear_scan_nearest, BeliefIndex};
use pomcgs::rng::{child_rng, Phase};
use pomcgs::solver::{assign_points, kmeans_trace, solve, Solver, SolverConfig};
use rand::Rng as _;
use std::collections::BTreeMap;
use std::time::Duration;

// Tolerances and bars, pinned here so a change is a visible diff.
const TIGER_LOWER_TOLERANCE: f64 = 0.5;
const ROCK_BLIND_MARGIN: f64 = 5.0;
const ROCK_SEEDS_REQUIRED: usize = 8;
const LIGHTDARK_BLIND_MARGIN: f64 = 50.0;
const TREND_SEEDS_REQUIRED: usize = 4;
const GAP_TARGET: f64 = 1.0;
const SANDWICH_SLACK: f64 = 1e-9;
const MEAN_EQUALITY_TOLERANCE: f64 = 1e-9;

fn env(name: &str, params: &[(&str, &str)]) -> Env {
    let map: BTreeMap<String, String> =
        params.iter().map(|&(k, v)| (k.to_string(), v.to_string())).collect();
    make_env(name, &map).expect("valid environment parameters")
}

fn vtable_for(model: &Env) -> VTable {
    let mut rng = child_rng(0, Phase::Vmdp, 0);
    train_vmdp(model, &QLearningConfig::default(), &mut rng)
}

fn rock44_config(seed: u64) -> SolverConfig {
    SolverConfig {
        xi: 0.1,
        nb_particles: 5000,
        nb_sim: 1000,
        nb_eval: 10_000,
        ucb_c: 2.0,
        seed,
        budget: Some(Duration::from_secs(120)),
        ..Default::default()
    }
}

#[test]
fn criterion_1_tiger_matches_the_exact_value() {
    let model = env("tiger", &[]);
    let vtab = vtable_for(&model);
    let cfg = SolverConfig {
        xi: 0.05,
        nb_particles: 5000,
        nb_sim: 1000,
        nb_eval: 100_000,
        ucb_c: 180.0,
        n_star: 200_000,
        seed: 1,
        budget: Some(Duration::from_secs(300)),
        ..Default::default()
    };
    let out = solve(&model, &cfg, &vtab).unwrap();
    let last = out.bounds.last().unwrap();
    let exact = exact_tiger_value(0.95, 0.01);
    let sandwich = last.upper >= last.lower;
    let close = (last.lower - exact).abs() <= TIGER_LOWER_TOLERANCE;
    let ok = sandwich && close;
    println!(
        "criterion 1 (tiger oracle optimality): {} lower={:.4} exact={:.4} tol={} upper={:.4}",
        verdict(ok),
        last.lower,
        exact,
        TIGER_LOWER_TOLERANCE,
        last.upper
    );
    assert!(ok, "lower {} vs exact {} (tol {}), upper {}", last.lower, exact, TIGER_LOWER_TOLERANCE, last.upper);
}

#[test]
fn criterion_2_rocksample_4_4_converges_across_seeds() {
    let model = env("rocksample", &[("n", "4"), ("k", "4")]);
    let vtab = vtable_for(&model);
    let mut passing = 0usize;
    let mut detail = Vec::new();
    for seed in 0..10u64 {
        let out = solve(&model, &rock44_config(seed), &vtab).unwrap();
        let blind = out.bounds[0].lower;
        let last = out.bounds.last().unwrap();
        let gaps: Vec<f64> = out.bounds.iter().map(|b| b.upper - b.lower).collect();
        let n = gaps.len();
        let shrinking = n >= 3
            && gaps[n - 3] >= gaps[n - 2]
            && gaps[n - 2] >= gaps[n - 1]
            && gaps[n - 3] > gaps[n - 1];
        let above_blind = last.lower > blind + ROCK_BLIND_MARGIN;
        if above_blind && shrinking {
            passing += 1;
        }
        detail.push(format!("s{seed}:{:.2}{}", last.lower, if above_blind && shrinking { "" } else { "!" }));
    }
    let ok = passing >= ROCK_SEEDS_REQUIRED;
    println!(
        "criterion 2 (rocksample 4x4 convergence): {} {passing}/10 seeds ok (need {ROCK_SEEDS_REQUIRED}) [{}]",
        verdict(ok),
        detail.join(" ")
    );
    assert!(ok, "{passing}/10 seeds satisfied the bound and gap conditions");
}

#[test]
fn criterion_3_lightdark_converged_lower_bound() {
    let model = env("lightdark", &[]);
    let vtab = vtable_for(&model);
    let cfg = SolverConfig {
        xi: 0.1,
        k_obs: 10,
        nb_particles: 5000,
        nb_sim: 1000,
        nb_eval: 10_000,
        ucb_c: 2.0,
        n_max_fsc: 1500,
        seed: 1,
        budget: Some(Duration::from_secs(240)),
        ..Default::default()
    };
    let out = solve(&model, &cfg, &vtab).unwrap();
    let blind = out.bounds[0].lower;
    let last = out.bounds.last().unwrap();
    let converged = last.upper - last.lower <= cfg.epsilon;
    let positive = last.lower > 0.0;
    let above_bar = last.lower >= blind + LIGHTDARK_BLIND_MARGIN;
    let ok = converged && positive && above_bar;
    println!(
        "criterion 3 (light-dark converged lower bound): {} lower={:.4} blind={:.4} bar={:.1} converged={} positive={}",
        verdict(ok),
        last.lower,
        blind,
        blind + LIGHTDARK_BLIND_MARGIN,
        converged,
        positive
    );
    // The declare-at-target reward of +100 discounted over the ~18 steps
    // needed to reach the light region and walk back caps the achievable
    // value near 100 * 0.95^18, which is well below blind + 50. The bar is
    // kept as stated and this assertion records the shortfall honestly.
    assert!(
        ok,
        "lower {} (blind {}, bar {}); converged={} positive={}",
        last.lower,
        blind,
        blind + LIGHTDARK_BLIND_MARGIN,
        converged,
        positive
    );
}

#[test]
fn criterion_4_particle_count_and_merge_threshold_trends() {
    let model = env("rocksample", &[("n", "4"), ("k", "4")]);
    let vtab = vtable_for(&model);

    // more particles must not hurt the achieved lower bound
    let mean_lower = |particles: usize| -> f64 {
        let mut sum = 0.0;
        for seed in 0..5u64 {
            let cfg = SolverConfig {
                nb_particles: particles,
                nb_eval: 5000,
                budget: Some(Duration::from_secs(90)),
                ..rock44_config(seed)
            };
            let out = solve(&model, &cfg, &vtab).unwrap();
            sum += out.bounds.last().unwrap().lower;
        }
        sum / 5.0
    };
    let lower_rich = mean_lower(10_000);
    let lower_poor = mean_lower(100);
    let particles_ok = lower_rich >= lower_poor;

    // a coarser merge threshold must not converge in more iterations
    let iters_to_gap = |xi: f64, seed: u64| -> u64 {
        let cfg = SolverConfig { xi, nb_eval: 5000, ..rock44_config(seed) };
        let out = solve(&model, &cfg, &vtab).unwrap();
        out.bounds
            .iter()
            .find(|b| b.upper - b.lower < GAP_TARGET)
            .map(|b| b.iteration)
            .unwrap_or(u64::MAX)
    };
    let mut coarse_no_slower = 0usize;
    for seed in 0..5u64 {
        if iters_to_gap(0.3, seed) <= iters_to_gap(0.1, seed) {
            coarse_no_slower += 1;
        }
    }
    let xi_ok = coarse_no_slower >= TREND_SEEDS_REQUIRED;

    let ok = particles_ok && xi_ok;
    println!(
        "criterion 4 (parameter trends): {} mean_lower 1e4={lower_rich:.3} vs 1e2={lower_poor:.3}; coarse xi faster in {coarse_no_slower}/5 seeds (need {TREND_SEEDS_REQUIRED})",
        verdict(ok)
    );
    assert!(ok, "particles_ok={particles_ok} xi_ok={xi_ok}");
}

#[test]
fn criterion_5_property_suites() {
    let mut rng = child_rng(42, Phase::Evaluate, 0);

    // distance is a metric bounded by 2
    let random_hist = |rng: &mut pomcgs::rng::Rng| -> BeliefHistogram {
        let k = rng.random_range(1..8usize);
        let mut bins = BTreeMap::new();
        let mut total = 0.0;
        for _ in 0..k {
            let key = vec![rng.random_range(-20..40i64)];
            let w: f64 = rng.random_range(0.01..1.0);
            *bins.entry(key).or_insert(0.0) += w;
            total += w;
        }
        for v in bins.values_mut() {
            *v /= total;
        }
        BeliefHistogram { bins }
    };
    for _ in 0..1000 {
        let (a, b, c) = (random_hist(&mut rng), random_hist(&mut rng), random_hist(&mut rng));
        let (dab, dba) = (l1_distance(&a, &b), l1_distance(&b, &a));
        assert!(l1_distance(&a, &a) == 0.0);
        assert!((dab - dba).abs() < 1e-12);
        assert!((0.0..=2.0 + 1e-12).contains(&dab));
        assert!(dab <= l1_distance(&a, &c) + l1_distance(&c, &b) + 1e-12);
    }

    // nearest-neighbour index agrees with a brute-force scan
    for seq in 0..100u64 {
        let mut rng = child_rng(seq, Phase::Evaluate, 7);
        let mut index = BeliefIndex::new();
        for id in 0..rng.random_range(1..40usize) {
            index.insert(random_hist(&mut rng), id);
        }
        for _ in 0..5 {
            let q = random_hist(&mut rng);
            let got = index.search_nearest(&q).unwrap();
            let want = linear_scan_nearest(index.entries(), &q).unwrap();
            assert_eq!(got.0, want.0);
            assert!((got.1 - want.1).abs() < 1e-12);
        }
    }

    // per-trajectory upper contribution dominates the lower one on a
    // half-built controller
    let tiger = env("tiger", &[]);
    let vtab = vtable_for(&tiger);
    let cfg = SolverConfig {
        xi: 0.05,
        nb_particles: 2000,
        nb_sim: 1000,
        nb_eval: 1000,
        seed: 5,
        audit: true,
        ..Default::default()
    };
    let mut half = Solver::new(&tiger, cfg, &vtab).unwrap();
    half.update_fsc();
    for (u, l) in half.evaluate_trajectories() {
        assert!(u >= l - SANDWICH_SLACK, "trajectory bounds inverted: {u} < {l}");
    }

    // recorded per-sample returns reproduce every Q as a batch mean
    for ((node, action), samples) in &half.audit().q_samples {
        let q = half.fsc().node(*node).unwrap().stats[*action].q;
        let batch = samples.iter().sum::<f64>() / samples.len() as f64;
        assert!(
            (q - batch).abs() <= MEAN_EQUALITY_TOLERANCE,
            "node {node} action {action}: incremental {q} vs batch {batch}"
        );
    }

    // pruning never changes an executed trace
    half.update_fsc();
    let full_policy = half.fsc().to_policy();
    let pruned_policy = half.fsc().prune().to_policy();
    for i in 0..100u64 {
        let mut r1 = child_rng(11, Phase::Execute, i);
        let mut r2 = child_rng(11, Phase::Execute, i);
        let a = run_episode(&tiger, &full_policy, 0.01, &mut r1).unwrap();
        let b = run_episode(&tiger, &pruned_policy, 0.01, &mut r2).unwrap();
        assert_eq!(a, b, "episode {i} diverged after pruning");
    }

    // clustering objective is monotone and the assignment is a fixpoint
    for set in 0..100u64 {
        let mut rng = child_rng(set, Phase::Evaluate, 13);
        let dim = rng.random_range(1..4usize);
        let points: Vec<Vec<f64>> = (0..rng.random_range(5..60usize))
            .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let k = rng.random_range(1..6usize);
        let result = kmeans_trace(&points, k, 50, &mut rng);
        for w in result.costs.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "clustering cost increased: {:?}", result.costs);
        }
        assert_eq!(assign_points(&points, &result.centroids), result.labels);
    }

    // policy files survive a serialize/deserialize round trip, and equal
    // seeds give byte-identical policies
    let small = SolverConfig {
        xi: 0.05,
        nb_particles: 500,
        nb_sim: 300,
        nb_eval: 1000,
        seed: 9,
        max_iterations: Some(2),
        ..Default::default()
    };
    let text_a = solve(&tiger, &small, &vtab).unwrap().fsc.to_policy().serialize().unwrap();
    let text_b = solve(&tiger, &small, &vtab).unwrap().fsc.to_policy().serialize().unwrap();
    assert_eq!(text_a, text_b, "equal seeds must produce identical policies");
    let parsed = PolicyFile::deserialize(&text_a).unwrap();
    assert_eq!(parsed.serialize().unwrap(), text_a);

    println!("criterion 5 (property suites): PASS");
}

#[test]
fn criterion_6_rocksample_state_counts() {
    let cases = [(7usize, 8usize, 12_544u64), (11, 11, 247_808), (15, 15, 7_372_800)];
    let mut ok = true;
    let mut detail = Vec::new();
    for &(n, k, want) in &cases {
        let got = RockSampleModel::new(n, k, 1).state_count();
        ok &= got == want;
        detail.push(format!("{n}x{n}/{k}:{got}"));
    }
    println!("criterion 6 (state-space sizes): {} [{}]", verdict(ok), detail.join(" "));
    assert!(ok, "{detail:?}");
}

/// Hour-scale reproduction run; not part of the default gate.
#[test]
#[ignore]
fn criterion_2_long_rocksample_7_8_mean_return() {
    let model = env("rocksample", &[("n", "7"), ("k", "8")]);
    let vtab = vtable_for(&model);
    let mut means = Vec::new();
    for seed in 0..10u64 {
        let cfg = SolverConfig {
            xi: 0.1,
            nb_particles: 5000,
            nb_sim: 1000,
            nb_eval: 10_000,
            ucb_c: 2.0,
            seed,
            budget: Some(Duration::from_secs(3600)),
            ..Default::default()
        };
        let out = solve(&model, &cfg, &vtab).unwrap();
        let policy = out.fsc.to_policy();
        let summary =
            pomcgs::exec::evaluate_policy(&model, &policy, 10_000, seed, 0.01).unwrap();
        means.push(summary.mean_return);
    }
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    let ok = (mean - 21.13).abs() <= 2.2;
    println!(
        "criterion 2 long (rocksample 7x8 mean return): {} mean={mean:.3} target=21.13 +/- 2.2",
        verdict(ok)
    );
    assert!(ok, "mean return {mean}");
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}
