//! Command-line front end: `run` one experiment, `sweep` a set of pruning
//! ratios, or `oracle` the denoiser against brute-force grid search.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::Rng;

use fedprune::config::ExperimentConfig;
use fedprune::gsm::{
    denoise_scores, estimate_noise_variance, solve_theta_scalar, GsmConfig, ScoreVector,
    SigmaEstimation,
};
use fedprune::harness::{build_partition, emit_metrics, format_float, run_experiment};
use fedprune::oracle;
use fedprune::seeding::{derive_seed, seeded_rng};
use fedprune::{ClientId, Error, Result};

#[derive(Parser)]
#[command(
    version,
    about = "Deterministic federated-learning simulator with client pruning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write the metrics tables.
    Run {
        /// Config file (flat `key = value` lines, `config_version = 1`).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Field overrides, each in `--key=value` form.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Run the same experiment across several pruning ratios.
    Sweep {
        /// Comma-separated pruning ratios, e.g. `0.0,0.3,0.5`.
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<String>,
        /// Config file (flat `key = value` lines, `config_version = 1`).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Field overrides, each in `--key=value` form.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Check the denoiser against brute-force grid minimization.
    Oracle {
        /// Random (a, b, c) draws for the scalar minimizer check.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Random score vectors for the alternating-descent check.
        #[arg(long, default_value_t = 100)]
        vectors: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run { config, overrides } => cmd_run(config.as_deref(), &overrides).map(|()| 0),
        Command::Sweep {
            lambdas,
            config,
            overrides,
        } => cmd_sweep(&lambdas, config.as_deref(), &overrides).map(|()| 0),
        Command::Oracle {
            trials,
            vectors,
            seed,
        } => cmd_oracle(trials, vectors, seed).map(|ok| if ok { 0 } else { 2 }),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            match &err {
                Error::Round { round, source } => eprintln!("error in round {round}: {source}"),
                other => eprintln!("error: {other}"),
            }
            let code = match err {
                Error::InvalidConfig(_) | Error::DataFormat(_) => 1,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn load_config(config: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cfg: &ExperimentConfig) -> Result<()> {
    let (_, partition) = build_partition(cfg)?;
    if !partition.dropped().is_empty() {
        eprintln!(
            "note: {} samples left unassigned by the shard partition",
            partition.dropped().len()
        );
    }
    let series = run_experiment(cfg)?;
    emit_metrics(&series, &cfg.output_path)?;
    for m in &series {
        println!(
            "round {:>4}  accuracy {}  loss {}  active {:>3}  cost {}",
            m.round,
            format_float(m.accuracy),
            format_float(m.mean_loss),
            m.active_count,
            format_float(m.relative_comm_cost),
        );
    }
    let last = series.last().expect("series is non-empty");
    println!(
        "final accuracy {}, relative communication cost {}, metrics in {}",
        format_float(last.accuracy),
        format_float(last.relative_comm_cost),
        cfg.output_path.display(),
    );
    Ok(())
}

fn cmd_run(config: Option<&Path>, overrides: &[String]) -> Result<()> {
    let cfg = load_config(config, overrides)?;
    execute(&cfg)
}

fn cmd_sweep(lambdas: &[String], config: Option<&Path>, overrides: &[String]) -> Result<()> {
    let base = load_config(config, overrides)?;
    for token in lambdas {
        let lambda: f64 = token
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad lambda {token:?}")))?;
        let mut cfg = base.clone();
        cfg.target_ratio = lambda;
        cfg.output_path = base.output_path.join(format!("lambda_{token}"));
        cfg.validate()?;
        println!("=== lambda = {token} ===");
        execute(&cfg)?;
    }
    Ok(())
}

/// Brute-force checks: the scalar minimizer against a dense grid, and the
/// alternating solver against per-coordinate grid minimization at its own
/// fixed point. Returns false if any check fails.
fn cmd_oracle(trials: usize, vectors: usize, seed: u64) -> Result<bool> {
    let epsilon = 1e-6;

    let mut rng = seeded_rng(derive_seed(seed, &[1]));
    let mut max_excess = 0.0f64;
    for _ in 0..trials {
        let a: f64 = rng.random_range(0.0..10.0);
        let b: f64 = rng.random_range(-10.0..10.0);
        let c: f64 = 10.0 - rng.random_range(0.0..10.0);
        let theta = solve_theta_scalar(a, b, c, epsilon)?;
        let value = oracle::scalar_objective(a, b, c, epsilon, theta);
        let (_, grid) = oracle::scalar_grid_min(a, b, c, epsilon, 20.0, 1e-4);
        max_excess = max_excess.max(value - grid);
    }
    let scalar_ok = max_excess <= 1e-6;
    println!(
        "scalar minimizer: {trials} draws vs grid [0,20] step 1e-4, max excess {:.3e} -> {}",
        max_excess,
        if scalar_ok { "PASS" } else { "FAIL" }
    );

    let mut rng = seeded_rng(derive_seed(seed, &[2]));
    let mut monotone_ok = true;
    let mut worst_excess = 0.0f64;
    let mut coord_ok = true;
    for v in 0..vectors {
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
        let scores = ScoreVector::new(ids, values)?;
        // The bilinear term makes alternation converge slowly when a score
        // is much larger than the noise scale, so the fixed point used for
        // the coordinate checks is computed with a very tight budget.
        let cfg = GsmConfig {
            sigma_w_sq: 1.0,
            epsilon,
            max_iters: 20_000,
            rel_tol: 1e-14,
            sigma_estimation: if v % 2 == 0 {
                SigmaEstimation::Fixed
            } else {
                SigmaEstimation::RobustMad
            },
        };
        let (_, state) = denoise_scores(&scores, &cfg)?;
        for pair in state.objective_trace.windows(2) {
            if pair[1] > pair[0] + 1e-9 {
                monotone_ok = false;
            }
        }
        let sigma_sq = estimate_noise_variance(&scores, &cfg)?;
        for j in 0..20 {
            let s_j = scores.values()[j];
            let (t_j, a_j) = (state.theta[j], state.alpha[j]);

            let f_solver = oracle::theta_coordinate_term(s_j, a_j, sigma_sq, epsilon, t_j);
            let hi = (2.0 * t_j + 1.0).max(20.0);
            let (_, coarse) =
                oracle::theta_coordinate_grid_min(s_j, a_j, sigma_sq, epsilon, 0.0, hi, 1e-3);
            let (_, fine) = oracle::theta_coordinate_grid_min(
                s_j,
                a_j,
                sigma_sq,
                epsilon,
                t_j - 0.05,
                t_j + 0.05,
                1e-5,
            );
            worst_excess = worst_excess.max(f_solver - coarse).max(f_solver - fine);
            if f_solver > coarse + 1e-4 || f_solver > fine + 1e-9 {
                coord_ok = false;
            }

            let g_solver = oracle::alpha_coordinate_term(s_j, t_j, sigma_sq, a_j);
            let bound = (2.0 * a_j.abs() + 1.0).max(20.0);
            let (_, g_coarse) =
                oracle::alpha_coordinate_grid_min(s_j, t_j, sigma_sq, -bound, bound, 1e-3);
            let (_, g_fine) =
                oracle::alpha_coordinate_grid_min(s_j, t_j, sigma_sq, a_j - 0.05, a_j + 0.05, 1e-5);
            worst_excess = worst_excess.max(g_solver - g_coarse).max(g_solver - g_fine);
            if g_solver > g_coarse + 1e-4 || g_solver > g_fine + 1e-9 {
                coord_ok = false;
            }
        }
    }
    println!(
        "alternating descent: {vectors} vectors, objective trace monotone -> {}",
        if monotone_ok { "PASS" } else { "FAIL" }
    );
    println!(
        "coordinate optimality: worst excess over per-coordinate grids {:.3e} -> {}",
        worst_excess,
        if coord_ok { "PASS" } else { "FAIL" }
    );
    Ok(scalar_ok && monotone_ok && coord_ok)
}
