//! Acceptance suite: end-to-end checks of the solver, the training loop,
//! the pruning pipeline, and the emitted metrics, each printing one
//! PASS/FAIL line (`cargo test --test acceptance -- --nocapture` to see
//! them all).

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;

use fedprune::config::ExperimentConfig;
use fedprune::contribution::ParamVector;
use fedprune::data::split_holdout;
use fedprune::federation::{aggregate, compute_weights, ClientState};
use fedprune::gsm::{
    denoise_scores, estimate_noise_variance, solve_theta_scalar, GsmConfig, ScoreVector,
    SigmaEstimation,
};
use fedprune::harness::{build_partition, emit_metrics, run_experiment, RoundMetrics};
use fedprune::models::{batch_gradient, per_sample_loss, ModelKind, ModelSpec, Sample};
use fedprune::oracle;
use fedprune::pruning::{update_active_set, ActiveSet, PruneSchedule};
use fedprune::seeding::seeded_rng;
use fedprune::ClientId;

const EPSILON: f64 = 1e-6;

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// The reference desk-scale setup: 4-class blobs (2,000 samples, 8 dims),
/// 20 clients under the label-skewed shard partition, linear softmax,
/// 60 rounds with a 20-round warm-up. These are the library defaults.
fn desk_config(fedprox: bool, target_ratio: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    assert_eq!(cfg.num_clients, 20);
    assert_eq!(cfg.rounds, 60);
    assert_eq!(cfg.warmup_rounds, 20);
    cfg.target_ratio = target_ratio;
    cfg.use_fedprox = fedprox;
    cfg.prox_mu = if fedprox { 0.01 } else { 0.0 };
    cfg
}

struct DeskRuns {
    fedavg_pruned: Vec<RoundMetrics>,
    fedavg_baseline: Vec<RoundMetrics>,
    fedprox_pruned: Vec<RoundMetrics>,
    fedprox_baseline: Vec<RoundMetrics>,
    elapsed: Duration,
}

fn desk_runs() -> &'static DeskRuns {
    static RUNS: OnceLock<DeskRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let fedavg_pruned = run_experiment(&desk_config(false, 0.3)).expect("fedavg pruned run");
        let fedavg_baseline = run_experiment(&desk_config(false, 0.0)).expect("fedavg baseline");
        let fedprox_pruned = run_experiment(&desk_config(true, 0.3)).expect("fedprox pruned run");
        let fedprox_baseline = run_experiment(&desk_config(true, 0.0)).expect("fedprox baseline");
        DeskRuns {
            fedavg_pruned,
            fedavg_baseline,
            fedprox_pruned,
            fedprox_baseline,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn scalar_minimizer_beats_dense_grid() {
    let start = Instant::now();
    let mut rng = seeded_rng(13);
    let mut max_excess = 0.0f64;
    for _ in 0..1000 {
        let a: f64 = rng.random_range(0.0..10.0);
        let b: f64 = rng.random_range(-10.0..10.0);
        let c: f64 = 10.0 - rng.random_range(0.0..10.0);
        let theta = solve_theta_scalar(a, b, c, EPSILON).expect("valid constants");
        let value = oracle::scalar_objective(a, b, c, EPSILON, theta);
        let (_, grid) = oracle::scalar_grid_min(a, b, c, EPSILON, 20.0, 1e-4);
        max_excess = max_excess.max(value - grid);
    }
    let elapsed = start.elapsed();
    let pass = max_excess <= 1e-6 && elapsed < Duration::from_secs(10);
    println!(
        "acceptance 1 (scalar minimizer vs dense grid): {} — 1000 draws, max excess {:.3e}, {:.2?}",
        verdict(pass),
        max_excess,
        elapsed,
    );
    assert!(
        max_excess <= 1e-6,
        "solver objective exceeds grid minimum by {max_excess:.3e}"
    );
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:.2?}");
}

#[test]
fn alternating_descent_is_monotone_and_coordinatewise_optimal() {
    let mut rng = seeded_rng(29);
    let mut worst_rise = f64::NEG_INFINITY;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_joint_gap = 0.0f64;
    for v in 0..100 {
        let values: Vec<f64> = (0..20)
            .map(|_| {
                let base: f64 = rng.random_range(0.5..30.0);
                if rng.random::<f64>() < 0.25 {
                    base * 1e-3
                } else {
                    base
                }
            })
            .collect();
        let ids: Vec<ClientId> = (0..20).map(ClientId).collect();
        let scores = ScoreVector::new(ids, values).expect("valid scores");
        // Tight budget: the bilinear term makes alternation slow when a
        // score is much larger than the noise scale, and the coordinate
        // checks below need a genuine fixed point.
        let cfg = GsmConfig {
            sigma_w_sq: 1.0,
            epsilon: EPSILON,
            max_iters: 20_000,
            rel_tol: 1e-14,
            sigma_estimation: if v % 2 == 0 {
                SigmaEstimation::Fixed
            } else {
                SigmaEstimation::RobustMad
            },
        };
        let (_, state) = denoise_scores(&scores, &cfg).expect("denoise");

        for pair in state.objective_trace.windows(2) {
            worst_rise = worst_rise.max(pair[1] - pair[0]);
        }

        let sigma_sq = estimate_noise_variance(&scores, &cfg).expect("noise estimate");
        let joint = oracle::joint_objective(
            scores.values(),
            &state.theta,
            &state.alpha,
            sigma_sq,
            EPSILON,
        );
        worst_joint_gap =
            worst_joint_gap.max((joint - state.objective).abs() / state.objective.abs().max(1.0));

        for j in 0..20 {
            let s_j = scores.values()[j];
            let (t_j, a_j) = (state.theta[j], state.alpha[j]);

            let f_solver = oracle::theta_coordinate_term(s_j, a_j, sigma_sq, EPSILON, t_j);
            let hi = (2.0 * t_j + 1.0).max(20.0);
            let (_, coarse) =
                oracle::theta_coordinate_grid_min(s_j, a_j, sigma_sq, EPSILON, 0.0, hi, 1e-3);
            let (_, fine) = oracle::theta_coordinate_grid_min(
                s_j,
                a_j,
                sigma_sq,
                EPSILON,
                t_j - 0.05,
                t_j + 0.05,
                1e-5,
            );
            worst_excess = worst_excess.max(f_solver - coarse).max(f_solver - fine);
            assert!(
                f_solver <= coarse + 1e-4 && f_solver <= fine + 1e-9,
                "theta coordinate {j} beaten by grid: solver {f_solver}, \
                 coarse {coarse}, fine {fine}"
            );

            let g_solver = oracle::alpha_coordinate_term(s_j, t_j, sigma_sq, a_j);
            let bound = (2.0 * a_j.abs() + 1.0).max(20.0);
            let (_, g_coarse) =
                oracle::alpha_coordinate_grid_min(s_j, t_j, sigma_sq, -bound, bound, 1e-3);
            let (_, g_fine) =
                oracle::alpha_coordinate_grid_min(s_j, t_j, sigma_sq, a_j - 0.05, a_j + 0.05, 1e-5);
            worst_excess = worst_excess.max(g_solver - g_coarse).max(g_solver - g_fine);
            assert!(
                g_solver <= g_coarse + 1e-4 && g_solver <= g_fine + 1e-9,
                "alpha coordinate {j} beaten by grid: solver {g_solver}, \
                 coarse {g_coarse}, fine {g_fine}"
            );
        }
    }
    let pass = worst_rise <= 1e-9 && worst_excess <= 1e-4 && worst_joint_gap <= 1e-9;
    println!(
        "acceptance 2 (alternating descent monotone + coordinate-optimal): {} — \
         100 vectors, worst objective rise {:.3e}, worst coordinate excess {:.3e}, \
         worst objective mismatch {:.3e}",
        verdict(pass),
        worst_rise,
        worst_excess,
        worst_joint_gap,
    );
    assert!(worst_rise <= 1e-9, "objective rose by {worst_rise:.3e}");
    assert!(
        worst_joint_gap <= 1e-9,
        "reported objective off by relative {worst_joint_gap:.3e}"
    );
}

#[test]
fn batch_gradients_match_finite_differences() {
    let mut rng = seeded_rng(41);
    let mut worst_err = 0.0f64;
    for trial in 0..100 {
        let input_dim = rng.random_range(2..6);
        let num_classes = rng.random_range(2..5);
        let kind = if trial % 2 == 0 {
            ModelKind::LinearSoftmax
        } else {
            ModelKind::MlpOneHidden {
                hidden_dim: rng.random_range(2..6),
            }
        };
        let spec = ModelSpec {
            kind,
            input_dim,
            num_classes,
        };
        let params = ParamVector::new(
            (0..spec.param_count())
                .map(|_| rng.sample::<f64, _>(StandardNormal) * 0.5)
                .collect(),
        );
        let batch: Vec<Sample> = (0..rng.random_range(1..6))
            .map(|_| Sample {
                features: (0..input_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect(),
                label: rng.random_range(0..num_classes),
            })
            .collect();
        let grad = batch_gradient(&spec, &params, &batch).expect("gradient");

        let mean_loss = |p: &ParamVector| -> f64 {
            batch
                .iter()
                .map(|s| per_sample_loss(&spec, p, s).expect("loss"))
                .sum::<f64>()
                / batch.len() as f64
        };
        let h = 1e-5;
        for k in 0..params.len() {
            let mut plus = params.clone();
            plus.as_mut_slice()[k] += h;
            let mut minus = params.clone();
            minus.as_mut_slice()[k] -= h;
            let fd = (mean_loss(&plus) - mean_loss(&minus)) / (2.0 * h);
            let g = grad.as_slice()[k];
            let tol = 1e-6f64.max(1e-4 * g.abs().max(fd.abs()));
            let err = (g - fd).abs();
            worst_err = worst_err.max(err - tol);
            assert!(
                err <= tol,
                "trial {trial} component {k}: analytic {g}, finite-difference {fd}"
            );
        }
    }
    println!(
        "acceptance 3 (batch gradient vs central differences): {} — \
         100 model/batch draws, worst tolerance margin {:.3e}",
        verdict(worst_err <= 0.0),
        worst_err,
    );
}

#[test]
fn aggregation_matches_scalar_oracle_and_weights_renormalize() {
    // Part 1: weighted aggregation of five random vectors against a plain
    // scalar loop.
    let mut rng = seeded_rng(47);
    let sizes: Vec<usize> = (0..5).map(|_| rng.random_range(1..50)).collect();
    let total: usize = sizes.iter().sum();
    let states: Vec<ClientState> = sizes
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let samples = vec![
                Sample {
                    features: vec![],
                    label: 0,
                };
                n
            ];
            ClientState::new(ClientId(k), samples, ParamVector::zeros(1))
        })
        .collect();
    let refs: Vec<&ClientState> = states.iter().collect();
    let weights = compute_weights(&refs).expect("weights");
    let updates: std::collections::BTreeMap<ClientId, ParamVector> = (0..5)
        .map(|k| {
            let v: Vec<f64> = (0..40).map(|_| rng.random_range(-2.0..2.0)).collect();
            (ClientId(k), ParamVector::new(v))
        })
        .collect();
    let combined = aggregate(&updates, &weights).expect("aggregate");
    let mut max_err = 0.0f64;
    for i in 0..40 {
        let mut expected = 0.0;
        for k in 0..5 {
            expected += (sizes[k] as f64 / total as f64) * updates[&ClientId(k)].as_slice()[i];
        }
        max_err = max_err.max((combined.as_slice()[i] - expected).abs());
    }
    assert!(max_err <= 1e-12, "aggregation off by {max_err:.3e}");

    // Part 2: across the full pruned run, the participant weights
    // renormalize to exactly one after every pruning event.
    let cfg = desk_config(false, 0.3);
    let (_, partition) = build_partition(&cfg).expect("partition");
    let train_sizes: std::collections::BTreeMap<ClientId, usize> = partition
        .assignments()
        .iter()
        .map(|(&id, indices)| (id, split_holdout(indices).0.len()))
        .collect();
    let series = &desk_runs().fedavg_pruned;
    let mut max_sum_err = 0.0f64;
    let mut prune_events = 0;
    for m in series {
        let states: Vec<ClientState> = m
            .scores
            .iter()
            .map(|rec| {
                let samples = vec![
                    Sample {
                        features: vec![],
                        label: 0,
                    };
                    train_sizes[&rec.client_id]
                ];
                ClientState::new(rec.client_id, samples, ParamVector::zeros(1))
            })
            .collect();
        let refs: Vec<&ClientState> = states.iter().collect();
        let weights = compute_weights(&refs).expect("round weights");
        let sum: f64 = weights.weights().values().sum();
        max_sum_err = max_sum_err.max((sum - 1.0).abs());
        prune_events += usize::from(!m.pruned_this_round.is_empty());
    }
    assert!(
        prune_events > 0,
        "run never pruned; renormalization untested"
    );
    let pass = max_err <= 1e-12 && max_sum_err <= 1e-12;
    println!(
        "acceptance 4 (aggregation exactness + weight renormalization): {} — \
         oracle gap {:.3e}, worst weight-sum error {:.3e} over {} rounds \
         ({} prune events)",
        verdict(pass),
        max_err,
        max_sum_err,
        series.len(),
        prune_events,
    );
    assert!(max_sum_err <= 1e-12, "weights sum off by {max_sum_err:.3e}");
}

#[test]
fn active_set_shrinks_monotonically_and_respects_floor() {
    let mut rng = seeded_rng(53);
    let gsm = GsmConfig::default();
    for sequence in 0..200 {
        let n = rng.random_range(2..30usize);
        let lambda = rng.random_range(0.0..0.9);
        let warmup = rng.random_range(0..10usize);
        let cap = rng.random_range(1..4usize);
        let schedule = PruneSchedule::new(n, lambda, warmup, cap).expect("schedule");
        let mut set = ActiveSet::new(n);
        let mut ever_pruned: Vec<ClientId> = Vec::new();
        for round in 0..40 {
            let ids = set.active().to_vec();
            let values: Vec<f64> = ids
                .iter()
                .map(|_| {
                    let base: f64 = rng.random_range(0.5..30.0);
                    if rng.random::<f64>() < 0.3 {
                        base * 1e-4
                    } else {
                        base
                    }
                })
                .collect();
            let scores = ScoreVector::new(ids.clone(), values).expect("scores");
            let next = update_active_set(&set, &scores, round, &schedule, &gsm).expect("update");
            assert!(
                next.active().len() <= set.active().len(),
                "sequence {sequence}: active set grew in round {round}"
            );
            assert!(
                next.active().len() >= schedule.floor,
                "sequence {sequence}: round {round} went below the floor"
            );
            if round < warmup {
                assert_eq!(
                    next.active(),
                    set.active(),
                    "sequence {sequence}: changed during warm-up"
                );
            }
            for &id in &ever_pruned {
                assert!(
                    !next.is_active(id),
                    "sequence {sequence}: pruned client {id} reappeared"
                );
            }
            ever_pruned.extend(
                next.pruned()
                    .iter()
                    .filter(|&&(_, r)| r == round)
                    .map(|&(id, _)| id),
            );
            assert_eq!(next.active().len() + next.pruned().len(), n);
            set = next;
        }
    }
    println!(
        "acceptance 5 (pruning state machine): PASS — 200 random schedules, \
         40 rounds each: monotone, floored, warm-up respected, no readmission",
    );
}

#[test]
fn communication_ledger_matches_hand_count() {
    let mut cfg = desk_config(false, 0.3);
    cfg.rounds = 200;
    let series = run_experiment(&cfg).expect("200-round run");
    assert_eq!(series.len(), 200);

    // The run prunes exactly one client per round from the end of warm-up
    // until the floor of 14 is reached.
    for m in &series {
        let expected = usize::from((20..26).contains(&m.round));
        assert_eq!(
            m.pruned_this_round.len(),
            expected,
            "round {}: unexpected prune count",
            m.round
        );
    }
    let uploads: usize = series.iter().map(|m| m.active_count).sum();
    let by_hand: usize = 20 * 20
        + (20..200)
            .map(|t| match t {
                20 => 20,
                21..=25 => 20 - (t - 20),
                _ => 14,
            })
            .sum::<usize>();
    assert_eq!(by_hand, 2941);
    assert_eq!(uploads, by_hand);
    let last = series.last().expect("non-empty");
    let exact = last.relative_comm_cost == 2941.0 / 4000.0;
    assert!(
        exact,
        "relative cost {} != 2941/4000",
        last.relative_comm_cost
    );
    assert_eq!(last.active_count, 14);
    assert_eq!((0.70f64 * 20.0).round() as usize, last.active_count);
    println!(
        "acceptance 6 (communication ledger): PASS — uploads {uploads} over 200 rounds, \
         relative cost {} (= 2941/4000), steady participation {} = 0.70 x 20",
        last.relative_comm_cost, last.active_count,
    );
}

#[test]
fn pruned_run_keeps_accuracy_and_cuts_communication() {
    let runs = desk_runs();
    let cases = [
        ("fedavg", &runs.fedavg_pruned, &runs.fedavg_baseline),
        ("fedprox", &runs.fedprox_pruned, &runs.fedprox_baseline),
    ];
    let mut lines = Vec::new();
    let mut pass = runs.elapsed < Duration::from_secs(120);
    for (name, pruned, baseline) in cases {
        let p = pruned.last().expect("non-empty");
        let b = baseline.last().expect("non-empty");
        let gap = (p.accuracy - b.accuracy).abs();
        pass = pass && gap <= 0.03 && p.relative_comm_cost <= 0.85;
        lines.push(format!(
            "{name}: pruned {:.4} vs baseline {:.4} (gap {:.4}), cost {:.4}",
            p.accuracy, b.accuracy, gap, p.relative_comm_cost
        ));
    }
    println!(
        "acceptance 7 (desk-scale accuracy + communication): {} — {}; 4 runs in {:.2?}",
        verdict(pass),
        lines.join("; "),
        runs.elapsed,
    );
    for (name, pruned, baseline) in cases {
        let p = pruned.last().unwrap();
        let b = baseline.last().unwrap();
        assert!(
            (p.accuracy - b.accuracy).abs() <= 0.03,
            "{name}: accuracy gap {} above 3 points",
            (p.accuracy - b.accuracy).abs()
        );
        assert!(
            p.relative_comm_cost <= 0.85,
            "{name}: relative cost {} above 0.85",
            p.relative_comm_cost
        );
    }
    assert!(
        runs.elapsed < Duration::from_secs(120),
        "runs took {:.2?}",
        runs.elapsed
    );
}

#[test]
fn identical_configs_emit_identical_bytes() {
    let first = &desk_runs().fedavg_pruned;
    let second = run_experiment(&desk_config(false, 0.3)).expect("second run");
    let dir_a = tempfile::tempdir().expect("tempdir");
    let dir_b = tempfile::tempdir().expect("tempdir");
    emit_metrics(first, dir_a.path()).expect("emit first");
    emit_metrics(&second, dir_b.path()).expect("emit second");
    let mut pass = true;
    for file in ["rounds.csv", "scores.csv"] {
        let a = std::fs::read(dir_a.path().join(file)).expect("read");
        let b = std::fs::read(dir_b.path().join(file)).expect("read");
        pass = pass && a == b;
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    println!(
        "acceptance 8 (byte-identical re-execution): {} — rounds.csv and scores.csv match",
        verdict(pass),
    );
}

#[test]
fn raw_scores_are_finite_nonnegative_and_fully_tabulated() {
    let runs = desk_runs();
    let all = [
        &runs.fedavg_pruned,
        &runs.fedavg_baseline,
        &runs.fedprox_pruned,
        &runs.fedprox_baseline,
    ];
    let mut score_rows = 0usize;
    let mut expected_rows = 0usize;
    for series in all {
        for m in series.iter() {
            for rec in &m.scores {
                assert!(
                    rec.raw.is_finite() && rec.raw >= 0.0,
                    "round {} client {}: raw score {}",
                    m.round,
                    rec.client_id,
                    rec.raw
                );
            }
        }
        let dir = tempfile::tempdir().expect("tempdir");
        emit_metrics(series, dir.path()).expect("emit");
        let table = std::fs::read_to_string(dir.path().join("scores.csv")).expect("read");
        score_rows += table.lines().count() - 1;
        expected_rows += series.iter().map(|m| m.active_count).sum::<usize>();
    }
    let pass = score_rows == expected_rows;
    println!(
        "acceptance 9 (score table sanity): {} — {} rows across 4 runs, \
         all raw scores finite and nonnegative",
        verdict(pass),
        score_rows,
    );
    assert_eq!(score_rows, expected_rows);
}
