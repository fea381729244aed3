//! Subcommand implementations: train, calibrate, diagnose, sweep, gen-data.
//!
//! Every command is a pure function of its config file, flags, and seeds, so
//! reruns write byte-identical artifacts. Output files always land under the
//! directory given by `--out`; informational text goes to stdout and is
//! silenced by `--quiet`, while `--json` switches the stdout report to a
//! machine-readable object.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use dpkan::datagen;
use dpkan::diagnostics;
use dpkan::model::{Activation, KanModel};
use dpkan::noise::{self, NoiseState};
use dpkan::objective;
use dpkan::optimizer::{self, TrainOutput};
use dpkan::rng;
use dpkan::sampling;

use crate::config::{self, fmt_bound, CliError, DataSection, PreparedRun, RunConfig};
use crate::svg;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Copy)]
pub struct GlobalFlags {
    pub seed: Option<u64>,
    pub json: bool,
    pub quiet: bool,
}

/// Stdout-facing summary of one training run; also written as
/// `summary.json`.
#[derive(Debug, Serialize)]
struct TrainSummary {
    seed: u64,
    steps: usize,
    batch: usize,
    eta: f64,
    lambda: f64,
    kappa: f64,
    c_clip: String,
    r_star: String,
    gamma_hat: Option<f64>,
    initial_risk: f64,
    averaged_risk: f64,
    final_risk: f64,
    initial_holdout_risk: Option<f64>,
    final_holdout_risk: Option<f64>,
    clip_fired_total: usize,
    clip_fire_rate: f64,
    projection_steps: usize,
    projection_rate: f64,
    final_dist_from_init: f64,
    final_cumulative_noise_norm: f64,
    max_shifted_residual: Option<f64>,
}

fn summarize(prepared: &PreparedRun, output: &TrainOutput) -> TrainSummary {
    let cfg = &prepared.train;
    let record = &output.record;
    let rows = &record.rows;
    let last = rows.last().expect("a validated run has at least one row");
    let clip_fired_total: usize = rows.iter().map(|r| r.clip_fired).sum();
    let projection_steps = rows.iter().filter(|r| r.projection_active).count();
    let denom = (cfg.steps * cfg.batch) as f64;
    TrainSummary {
        seed: cfg.seed,
        steps: cfg.steps,
        batch: cfg.batch,
        eta: cfg.eta,
        lambda: cfg.lambda,
        kappa: cfg.kappa,
        c_clip: fmt_bound(cfg.c_clip),
        r_star: fmt_bound(cfg.r_star),
        gamma_hat: prepared.gamma_hat,
        initial_risk: record.initial_risk,
        averaged_risk: record.averaged_risk,
        final_risk: last.risk,
        initial_holdout_risk: record.initial_holdout_risk,
        final_holdout_risk: last.holdout_risk,
        clip_fired_total,
        clip_fire_rate: clip_fired_total as f64 / denom,
        projection_steps,
        projection_rate: projection_steps as f64 / cfg.steps as f64,
        final_dist_from_init: last.dist_from_init,
        final_cumulative_noise_norm: last.cumulative_noise_norm,
        max_shifted_residual: output.diag.as_ref().map(|d| d.max_identity_residual()),
    }
}

fn run_once(
    cfg: &RunConfig,
    seed_override: Option<u64>,
) -> Result<(PreparedRun, TrainOutput, TrainSummary), CliError> {
    let prepared = config::prepare_run(cfg, seed_override)?;
    let output = optimizer::train(
        &prepared.model,
        &prepared.data,
        prepared.holdout.as_ref(),
        &prepared.train,
    )
    .map_err(|err| CliError::Runtime(err.to_string()))?;
    let summary = summarize(&prepared, &output);
    Ok((prepared, output, summary))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|err| CliError::Runtime(format!("cannot write {}: {err}", path.display())))
}

fn render_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|err| CliError::Runtime(format!("cannot serialize report: {err}")))?;
    text.push('\n');
    Ok(text)
}

/// Trains per the config file and writes `trajectory.csv`, `model.ckpt`,
/// `summary.json`, and two SVG plots into the output directory.
pub fn cmd_train(config_path: &Path, out: &Path, flags: GlobalFlags) -> Result<(), CliError> {
    let cfg = config::load_config(config_path)?;
    let (prepared, output, summary) = run_once(&cfg, flags.seed)?;

    fs::create_dir_all(out).map_err(|err| {
        CliError::Runtime(format!(
            "cannot create output directory {}: {err}",
            out.display()
        ))
    })?;

    let mut csv = Vec::new();
    output
        .record
        .write_csv(&mut csv)
        .map_err(|err| CliError::Runtime(format!("cannot render trajectory csv: {err}")))?;
    write_file(&out.join("trajectory.csv"), &csv)?;

    let mut ckpt = Vec::new();
    output
        .model
        .write_checkpoint(&mut ckpt, prepared.train.seed)
        .map_err(|err| CliError::Runtime(format!("cannot render checkpoint: {err}")))?;
    write_file(&out.join("model.ckpt"), &ckpt)?;

    let summary_json = render_json(&summary)?;
    write_file(&out.join("summary.json"), summary_json.as_bytes())?;

    write_plots(out, &output, flags.quiet);

    if flags.json {
        print!("{summary_json}");
    } else if !flags.quiet {
        println!(
            "train: n={} d={} model_dim={} steps={} batch={}",
            prepared.data.len(),
            prepared.data.dim(),
            prepared.model.dim(),
            prepared.train.steps,
            prepared.train.batch
        );
        println!("{:<18} {}", "initial risk", summary.initial_risk);
        println!("{:<18} {}", "averaged risk", summary.averaged_risk);
        println!("{:<18} {}", "final risk", summary.final_risk);
        if let Some(h) = summary.final_holdout_risk {
            println!("{:<18} {}", "final holdout", h);
        }
        println!("{:<18} {}", "clip fire rate", summary.clip_fire_rate);
        println!("{:<18} {}", "projection rate", summary.projection_rate);
        if let Some(res) = summary.max_shifted_residual {
            println!("{:<18} {:e}", "max residual", res);
        }
        println!(
            "wrote {}, {}, {}",
            out.join("trajectory.csv").display(),
            out.join("model.ckpt").display(),
            out.join("summary.json").display()
        );
    }
    Ok(())
}

/// Best-effort SVG plots; a failure here warns and never fails the run.
fn write_plots(out: &Path, output: &TrainOutput, quiet: bool) {
    let record = &output.record;
    let mut risk: Vec<f64> = Vec::with_capacity(record.rows.len() + 1);
    risk.push(record.initial_risk);
    risk.extend(record.rows.iter().map(|r| r.risk));
    let mut cumulative: Vec<f64> = Vec::with_capacity(record.rows.len() + 1);
    cumulative.push(0.0);
    cumulative.extend(record.rows.iter().map(|r| r.cumulative_noise_norm));

    let plots = [
        ("risk.svg", svg::line_plot("empirical risk", "iteration", "risk", &risk)),
        (
            "cumulative_noise.svg",
            svg::line_plot(
                "cumulative noise norm",
                "iteration",
                "norm",
                &cumulative,
            ),
        ),
    ];
    for (name, body) in plots {
        let path = out.join(name);
        if let Err(err) = fs::write(&path, body.as_bytes()) {
            if !quiet {
                eprintln!("warning: plot {} not written: {err}", path.display());
            }
        }
    }
}

/// JSON shape of a `calibrate` report.
#[derive(Debug, Serialize)]
struct CalibrateReport {
    mechanism: String,
    epsilon: f64,
    delta: f64,
    n: usize,
    batch: usize,
    steps: usize,
    lambda: f64,
    split: f64,
    kappa_sq: f64,
    kappa: f64,
    tau: Option<f64>,
    sensitivity: Option<f64>,
}

/// Closed-form noise calibration for a privacy budget, printed as aligned
/// text or JSON.
#[allow(clippy::too_many_arguments)]
pub fn cmd_calibrate(
    epsilon: f64,
    delta: f64,
    n: usize,
    batch: usize,
    steps: usize,
    lambda: f64,
    mechanism: &str,
    split: f64,
    flags: GlobalFlags,
) -> Result<(), CliError> {
    let section = config::PrivacySection {
        epsilon,
        delta,
        mechanism: mechanism.to_string(),
        split,
    };
    let calib = config::calibrate_from_section(&section, n, batch, steps, lambda)?;
    let report = CalibrateReport {
        mechanism: calib.mechanism.name().to_string(),
        epsilon,
        delta,
        n,
        batch,
        steps,
        lambda,
        split,
        kappa_sq: calib.kappa_sq,
        kappa: calib.kappa,
        tau: calib.tau,
        sensitivity: calib.sensitivity,
    };
    if flags.json {
        print!("{}", render_json(&report)?);
    } else if !flags.quiet {
        println!("{:<12} {}", "mechanism", report.mechanism);
        println!("{:<12} {}", "epsilon", report.epsilon);
        println!("{:<12} {}", "delta", report.delta);
        println!("{:<12} {}", "n", report.n);
        println!("{:<12} {}", "batch", report.batch);
        println!("{:<12} {}", "steps", report.steps);
        println!("{:<12} {}", "lambda", report.lambda);
        println!("{:<12} {}", "kappa_sq", report.kappa_sq);
        println!("{:<12} {}", "kappa", report.kappa);
        if let Some(tau) = report.tau {
            println!("{:<12} {}", "tau", tau);
        }
        if let Some(sens) = report.sensitivity {
            println!("{:<12} {}", "sensitivity", sens);
        }
    }
    Ok(())
}

/// One line of a diagnose suite.
#[derive(Debug, Serialize)]
struct CheckResult {
    name: String,
    passed: bool,
    detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

#[derive(Debug, Serialize)]
struct DiagnoseReport {
    suite: String,
    passed: bool,
    checks: Vec<CheckResult>,
}

/// Runs one named check suite against a config; exits 0 only if every check
/// passes.
pub fn cmd_diagnose(suite: &str, config_path: &Path, flags: GlobalFlags) -> Result<(), CliError> {
    let cfg = config::load_config(config_path)?;
    let run_seed = flags.seed.unwrap_or(cfg.train.seed);
    let checks = match suite {
        "grad" => suite_grad(run_seed)?,
        "sampling" => suite_sampling(run_seed)?,
        "noise" => suite_noise(run_seed)?,
        "shifted" => suite_shifted(&cfg, flags.seed)?,
        "stability" => suite_stability(&cfg, flags.seed)?,
        "tails" => suite_tails(&cfg, run_seed)?,
        other => {
            return Err(CliError::Usage(format!(
                "unknown suite \"{other}\"; expected grad, sampling, noise, shifted, \
                 stability, or tails"
            )))
        }
    };
    let passed = checks.iter().all(|c| c.passed);
    let failed = checks.iter().filter(|c| !c.passed).count();
    let total = checks.len();
    if flags.json {
        let report = DiagnoseReport {
            suite: suite.to_string(),
            passed,
            checks,
        };
        print!("{}", render_json(&report)?);
    } else if !flags.quiet {
        for c in &checks {
            if c.passed {
                println!("pass: {} ({})", c.name, c.detail);
            } else {
                println!("FAIL: {} ({})", c.name, c.detail);
            }
        }
    }
    if passed {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "suite {suite}: {failed} of {total} checks failed"
        )))
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Closed-form gradients against central finite differences on random small
/// models and unit-ball inputs.
fn suite_grad(seed: u64) -> Result<Vec<CheckResult>, CliError> {
    const DRAWS: usize = 20;
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-5;
    let mut worst_f = 0.0f64;
    let mut worst_loss = 0.0f64;
    for draw in 0..DRAWS {
        let mut gen = rng::substream(seed, rng::TRIAL, draw as u64);
        let m = gen.gen_range(1..=5);
        let d = gen.gen_range(1..=3);
        let p = gen.gen_range(4..=6);
        let activation = if draw % 2 == 0 {
            Activation::Sigmoid
        } else {
            Activation::Tanh
        };
        let model = KanModel::init(m, d, p, 3, activation, seed ^ draw as u64)
            .map_err(|err| CliError::Runtime(err.to_string()))?;
        let mut x: Vec<f64> = (0..d).map(|_| gen.gen_range(-1.0..1.0)).collect();
        let norm = l2(&x);
        if norm > 1.0 {
            for xi in &mut x {
                *xi /= norm;
            }
        }
        let y = if draw % 2 == 0 { 1.0 } else { -1.0 };
        let ex = dpkan::objective::Example { x: x.clone(), y };

        let grad_f = model.grad_f(&x).map_err(|err| CliError::Runtime(err.to_string()))?;
        let grad_loss = objective::per_example_grad(&model, &ex)
            .map_err(|err| CliError::Runtime(err.to_string()))?;
        let w0 = model.weights().to_vec();
        let mut fd_f = vec![0.0; w0.len()];
        let mut fd_loss = vec![0.0; w0.len()];
        let mut probe = model.clone();
        for k in 0..w0.len() {
            let mut w = w0.clone();
            w[k] = w0[k] + H;
            probe.set_weights(&w);
            let f_plus = probe
                .forward(&x)
                .map_err(|err| CliError::Runtime(err.to_string()))?;
            let l_plus = objective::per_example_loss(&probe, &ex)
                .map_err(|err| CliError::Runtime(err.to_string()))?;
            w[k] = w0[k] - H;
            probe.set_weights(&w);
            let f_minus = probe
                .forward(&x)
                .map_err(|err| CliError::Runtime(err.to_string()))?;
            let l_minus = objective::per_example_loss(&probe, &ex)
                .map_err(|err| CliError::Runtime(err.to_string()))?;
            fd_f[k] = (f_plus - f_minus) / (2.0 * H);
            fd_loss[k] = (l_plus - l_minus) / (2.0 * H);
        }
        let diff_f: Vec<f64> = fd_f.iter().zip(&grad_f).map(|(a, b)| a - b).collect();
        let diff_loss: Vec<f64> = fd_loss.iter().zip(&grad_loss).map(|(a, b)| a - b).collect();
        worst_f = worst_f.max(max_abs(&diff_f) / max_abs(&grad_f).max(1.0));
        worst_loss = worst_loss.max(max_abs(&diff_loss) / max_abs(&grad_loss).max(1.0));
    }
    Ok(vec![
        check(
            "network gradient matches finite differences",
            worst_f <= TOL,
            format!("max relative error {worst_f:.3e} over {DRAWS} draws, tolerance {TOL:e}"),
        ),
        check(
            "loss gradient matches finite differences",
            worst_loss <= TOL,
            format!("max relative error {worst_loss:.3e} over {DRAWS} draws, tolerance {TOL:e}"),
        ),
    ])
}

/// Without-replacement subsampling variance against exhaustive enumeration
/// and the coarse `G^2/B` cap.
fn suite_sampling(seed: u64) -> Result<Vec<CheckResult>, CliError> {
    const DIM: usize = 3;
    let mut worst_rel = 0.0f64;
    let mut cap_ok = true;
    let mut gen = rng::substream(seed, rng::TRIAL, 101);
    for n in 4..=6usize {
        for b in 1..=n {
            let vectors: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..DIM).map(|_| gen.gen_range(-1.0..1.0)).collect())
                .collect();
            let formula = sampling::subsample_variance(&vectors, b)
                .map_err(|err| CliError::Runtime(err.to_string()))?;
            let mut mean = vec![0.0; DIM];
            for v in &vectors {
                for (acc, vi) in mean.iter_mut().zip(v) {
                    *acc += vi / n as f64;
                }
            }
            let mut total = 0.0;
            let mut count = 0usize;
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize != b {
                    continue;
                }
                let mut sub = vec![0.0; DIM];
                for (i, v) in vectors.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        for (acc, vi) in sub.iter_mut().zip(v) {
                            *acc += vi / b as f64;
                        }
                    }
                }
                let dist: f64 = sub
                    .iter()
                    .zip(&mean)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum();
                total += dist;
                count += 1;
            }
            let exhaustive = total / count as f64;
            let rel = (formula - exhaustive).abs() / exhaustive.abs().max(1e-300);
            worst_rel = worst_rel.max(rel);
            let g = vectors.iter().map(|v| l2(v)).fold(0.0, f64::max);
            if formula > g * g / b as f64 + 1e-15 {
                cap_ok = false;
            }
        }
    }
    Ok(vec![
        check(
            "closed-form subsampling variance matches exhaustive enumeration",
            worst_rel <= 1e-12,
            format!("max relative error {worst_rel:.3e} over n=4..6, all batch sizes"),
        ),
        check(
            "variance stays under the G^2/B cap",
            cap_ok,
            "checked for every (n, B) pair".to_string(),
        ),
    ])
}

/// Marginal noise moments and the cumulative cancellation ordering in the
/// correlation weight.
fn suite_noise(seed: u64) -> Result<Vec<CheckResult>, CliError> {
    const SAMPLES: usize = 20_000;
    let lambda = 0.7;
    let kappa = 1.5;
    let mut state =
        NoiseState::new(1, lambda, kappa).map_err(|err| CliError::Runtime(err.to_string()))?;
    let mut gen = rng::substream(seed, rng::TRIAL, 201);
    let draws: Vec<f64> = (0..SAMPLES).map(|_| state.next_noise(&mut gen)[0]).collect();
    let mean = draws.iter().sum::<f64>() / SAMPLES as f64;
    let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / SAMPLES as f64;
    let target_var = kappa * kappa * (1.0 + lambda * lambda);
    let var_rel = (var - target_var).abs() / target_var;
    let lag: f64 = draws.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (SAMPLES - 1) as f64;
    let target_lag = -kappa * kappa * lambda;
    let lag_rel = (lag - target_lag).abs() / target_lag.abs();

    let lambdas = [0.0, 0.5, 0.9, 0.99];
    const SEEDS: u64 = 50;
    const HORIZON: usize = 100;
    const DIM: usize = 16;
    let mut means = Vec::with_capacity(lambdas.len());
    for lam in lambdas {
        let mut acc = 0.0;
        for s in 0..SEEDS {
            let profile = noise::cumulative_noise_profile(lam, 1.0, HORIZON, DIM, seed ^ (s + 1))
                .map_err(|err| CliError::Runtime(err.to_string()))?;
            acc += profile[HORIZON - 1];
        }
        means.push(acc / SEEDS as f64);
    }
    let ordered = means.windows(2).all(|w| w[1] <= w[0]);

    Ok(vec![
        check(
            "stationary coordinate variance matches kappa^2 (1 + lambda^2)",
            var_rel <= 0.05,
            format!("empirical {var:.4}, target {target_var:.4}, relative error {var_rel:.3}"),
        ),
        check(
            "lag-1 covariance matches -kappa^2 lambda",
            lag_rel <= 0.10,
            format!("empirical {lag:.4}, target {target_lag:.4}, relative error {lag_rel:.3}"),
        ),
        check(
            "mean cumulative noise norm is non-increasing in lambda",
            ordered,
            format!(
                "means {:?} for lambda {:?} over {SEEDS} seeds",
                means.iter().map(|m| (m * 100.0).round() / 100.0).collect::<Vec<_>>(),
                lambdas
            ),
        ),
    ])
}

/// Runs the configured training with auxiliary tracking forced on and checks
/// the one-step recursion identity of the shifted iterates.
fn suite_shifted(cfg: &RunConfig, seed_override: Option<u64>) -> Result<Vec<CheckResult>, CliError> {
    const TOL: f64 = 1e-10;
    let mut tracked = cfg.clone();
    tracked.train.track_auxiliary = true;
    let (_, output, _) = run_once(&tracked, seed_override)?;
    let diag = output
        .diag
        .as_ref()
        .expect("tracking was forced on, so the run carries diagnostics");
    let residual = diag.max_identity_residual();
    let gap = diag.max_coupling_gap();
    Ok(vec![
        check(
            "shifted iterates satisfy the one-step recursion identity",
            residual <= TOL,
            format!("max residual {residual:.3e} over {} steps, tolerance {TOL:e}", diag.steps()),
        ),
        check(
            "released and noise-recentred iterates stay coupled",
            gap.is_finite(),
            format!("max coupling gap {gap:.3e}"),
        ),
    ])
}

/// Replace-one coupled runs: identical replacement pins the distance at
/// zero, and the common-noise scale drops out of the coupled distances.
fn suite_stability(cfg: &RunConfig, seed_override: Option<u64>) -> Result<Vec<CheckResult>, CliError> {
    let prepared = config::prepare_run(cfg, seed_override)?;
    let gen = prepared.gen.as_ref().ok_or_else(|| {
        CliError::Config(
            "suite \"stability\" draws replacement examples, so it needs a [data] \
             generator section rather than a csv file"
                .to_string(),
        )
    })?;

    let identical = prepared
        .data
        .get(0)
        .map_err(|err| CliError::Runtime(err.to_string()))?
        .clone();
    let glued = diagnostics::coupled_stability(
        &prepared.model,
        &prepared.data,
        0,
        identical,
        &prepared.train,
    )
    .map_err(|err| CliError::Runtime(err.to_string()))?;
    let zero = glued.final_distance == 0.0 && glued.per_t_distances.iter().all(|d| *d == 0.0);

    let replacement = datagen::generate_auxiliary(gen, 1, rng::REPLACEMENT)
        .map_err(|err| CliError::Runtime(err.to_string()))?
        .get(0)
        .map_err(|err| CliError::Runtime(err.to_string()))?
        .clone();
    let mut quiet_cfg = prepared.train;
    quiet_cfg.kappa = 0.0;
    let mut loud_cfg = prepared.train;
    loud_cfg.kappa = 1.0;
    if !loud_cfg.c_clip.is_finite() {
        quiet_cfg.c_clip = 10.0;
        loud_cfg.c_clip = 10.0;
    }
    let quiet_run = diagnostics::coupled_stability(
        &prepared.model,
        &prepared.data,
        0,
        replacement.clone(),
        &quiet_cfg,
    )
    .map_err(|err| CliError::Runtime(err.to_string()))?;
    let loud_run = diagnostics::coupled_stability(
        &prepared.model,
        &prepared.data,
        0,
        replacement,
        &loud_cfg,
    )
    .map_err(|err| CliError::Runtime(err.to_string()))?;
    let invariant = quiet_run == loud_run;

    let average = diagnostics::average_stability(
        &prepared.model,
        &prepared.data,
        gen,
        &prepared.train,
        cfg.diagnostics.stability_indices,
    )
    .map_err(|err| CliError::Config(err.to_string()))?;

    Ok(vec![
        check(
            "identical replacement keeps coupled runs glued",
            zero,
            format!("final distance {}", glued.final_distance),
        ),
        check(
            "coupled distances are invariant to the common noise scale",
            invariant,
            format!(
                "kappa 0 vs 1 final distances {} and {}",
                quiet_run.final_distance, loud_run.final_distance
            ),
        ),
        check(
            "average replace-one distance is finite",
            average.is_finite() && average >= 0.0,
            format!(
                "mean final distance {average:.6e} over {} replacements",
                cfg.diagnostics.stability_indices
            ),
        ),
    ])
}

/// Monte Carlo exceedance rates of the Gaussian max-norm and sum-of-squares
/// caps, against the configured confidence budget.
fn suite_tails(cfg: &RunConfig, run_seed: u64) -> Result<Vec<CheckResult>, CliError> {
    let diag = &cfg.diagnostics;
    let report = diagnostics::gaussian_tail_suite(
        diag.tail_dim,
        diag.tail_horizon,
        diag.tail_delta,
        diag.tail_runs,
        run_seed,
    )
    .map_err(|err| CliError::Config(err.to_string()))?;
    let slack = 3.0 * (diag.tail_delta * (1.0 - diag.tail_delta) / diag.tail_runs as f64).sqrt();
    let budget = diag.tail_delta + slack;
    Ok(vec![
        check(
            "max-norm cap exceedance stays within budget",
            report.max_norm_exceed_frac <= budget,
            format!(
                "exceeded in {:.4} of {} runs, budget {budget:.4} (cap {:.4})",
                report.max_norm_exceed_frac, diag.tail_runs, report.max_norm_bound
            ),
        ),
        check(
            "sum-of-squares cap exceedance stays within budget",
            report.sum_sq_exceed_frac <= budget,
            format!(
                "exceeded in {:.4} of {} runs, budget {budget:.4} (cap {:.4})",
                report.sum_sq_exceed_frac, diag.tail_runs, report.sum_sq_bound
            ),
        ),
    ])
}

#[derive(Debug, Serialize)]
struct SweepEntry {
    param: String,
    value: f64,
    averaged_risk: f64,
    final_risk: f64,
    final_dist_from_init: f64,
    final_cumulative_noise_norm: f64,
    clip_fire_rate: f64,
    projection_rate: f64,
}

#[derive(Debug)]
enum SweepValues {
    Float(Vec<f64>),
    Batch(Vec<usize>),
}

fn parse_sweep_values(param: &str, values: &str) -> Result<SweepValues, CliError> {
    let raw: Vec<&str> = values
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if raw.is_empty() {
        return Err(CliError::Usage(
            "sweep needs at least one value in --values".to_string(),
        ));
    }
    match param {
        "lambda" | "eta" | "kappa" => {
            let mut parsed = Vec::with_capacity(raw.len());
            for s in &raw {
                let v: f64 = s.parse().map_err(|_| {
                    CliError::Usage(format!("cannot parse sweep value \"{s}\" as a number"))
                })?;
                if parsed.iter().any(|p: &f64| p.to_bits() == v.to_bits()) {
                    return Err(CliError::Usage(format!(
                        "duplicate sweep value {v} for {param}"
                    )));
                }
                parsed.push(v);
            }
            Ok(SweepValues::Float(parsed))
        }
        "B" => {
            let mut parsed = Vec::with_capacity(raw.len());
            for s in &raw {
                let v: usize = s.parse().map_err(|_| {
                    CliError::Usage(format!(
                        "cannot parse sweep value \"{s}\" as a batch size"
                    ))
                })?;
                if parsed.contains(&v) {
                    return Err(CliError::Usage(format!("duplicate sweep value {v} for B")));
                }
                parsed.push(v);
            }
            Ok(SweepValues::Batch(parsed))
        }
        other => Err(CliError::Usage(format!(
            "unknown sweep parameter \"{other}\"; expected lambda, eta, B, or kappa"
        ))),
    }
}

/// One training run per value of a single parameter; writes a combined
/// trajectory CSV with a leading value column plus a summary array.
pub fn cmd_sweep(
    config_path: &Path,
    param: &str,
    values: &str,
    out: &Path,
    flags: GlobalFlags,
) -> Result<(), CliError> {
    let cfg = config::load_config(config_path)?;
    let parsed = parse_sweep_values(param, values)?;
    let labels: Vec<String> = match &parsed {
        SweepValues::Float(vs) => vs.iter().map(|v| format!("{v}")).collect(),
        SweepValues::Batch(vs) => vs.iter().map(|v| format!("{v}")).collect(),
    };

    let mut combined = String::new();
    let mut entries = Vec::with_capacity(labels.len());
    for (i, label) in labels.iter().enumerate() {
        let mut variant = cfg.clone();
        match &parsed {
            SweepValues::Float(vs) => match param {
                "lambda" => variant.train.lambda = vs[i],
                "eta" => variant.train.eta = vs[i],
                "kappa" => variant.train.kappa = vs[i],
                _ => unreachable!("parse_sweep_values admits only known parameters"),
            },
            SweepValues::Batch(vs) => variant.train.batch = vs[i],
        }
        let (_, output, summary) = run_once(&variant, flags.seed)?;
        let mut csv = Vec::new();
        output
            .record
            .write_csv(&mut csv)
            .map_err(|err| CliError::Runtime(format!("cannot render trajectory csv: {err}")))?;
        let text = String::from_utf8(csv)
            .map_err(|err| CliError::Runtime(format!("trajectory csv is not utf-8: {err}")))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| CliError::Runtime("trajectory csv is empty".to_string()))?;
        if combined.is_empty() {
            combined.push_str(&format!("{param},{header}\n"));
        }
        for line in lines {
            combined.push_str(&format!("{label},{line}\n"));
        }
        let value = match &parsed {
            SweepValues::Float(vs) => vs[i],
            SweepValues::Batch(vs) => vs[i] as f64,
        };
        entries.push(SweepEntry {
            param: param.to_string(),
            value,
            averaged_risk: summary.averaged_risk,
            final_risk: summary.final_risk,
            final_dist_from_init: summary.final_dist_from_init,
            final_cumulative_noise_norm: summary.final_cumulative_noise_norm,
            clip_fire_rate: summary.clip_fire_rate,
            projection_rate: summary.projection_rate,
        });
        if !flags.quiet && !flags.json {
            println!(
                "{param}={label}: averaged_risk={} final_risk={} cumulative_noise={}",
                summary.averaged_risk, summary.final_risk, summary.final_cumulative_noise_norm
            );
        }
    }

    fs::create_dir_all(out).map_err(|err| {
        CliError::Runtime(format!(
            "cannot create output directory {}: {err}",
            out.display()
        ))
    })?;
    write_file(&out.join("sweep.csv"), combined.as_bytes())?;
    let summary_json = render_json(&entries)?;
    write_file(&out.join("sweep_summary.json"), summary_json.as_bytes())?;
    if flags.json {
        print!("{summary_json}");
    } else if !flags.quiet {
        println!(
            "wrote {} and {}",
            out.join("sweep.csv").display(),
            out.join("sweep_summary.json").display()
        );
    }
    Ok(())
}

/// Materializes the `[data]` generator section as a dataset CSV.
pub fn cmd_gen_data(config_path: &Path, out: &Path, flags: GlobalFlags) -> Result<(), CliError> {
    let cfg = config::load_config(config_path)?;
    let spec = match &cfg.data {
        DataSection::Generated(_) => cfg
            .data
            .gen_spec()?
            .expect("generated section always yields a spec"),
        DataSection::File(_) => {
            return Err(CliError::Config(
                "gen-data needs a [data] generator section, but the config points at a \
                 csv file"
                    .to_string(),
            ))
        }
    };
    let data = datagen::generate(&spec).map_err(|err| CliError::Config(err.to_string()))?;
    data.to_path(out)
        .map_err(|err| CliError::Runtime(format!("cannot write {}: {err}", out.display())))?;
    if !flags.quiet {
        println!(
            "wrote {} examples of dimension {} to {}",
            data.len(),
            data.dim(),
            out.display()
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_values_parse_per_parameter_kind() {
        match parse_sweep_values("lambda", "0, 0.5 ,0.9").expect("floats should parse") {
            SweepValues::Float(vs) => {
                assert_eq!(vs, vec![0.0, 0.5, 0.9], "values should keep their order")
            }
            SweepValues::Batch(_) => panic!("lambda values are floats, not batch sizes"),
        }
        match parse_sweep_values("B", "4,8,16").expect("batch sizes should parse") {
            SweepValues::Batch(vs) => assert_eq!(vs, vec![4, 8, 16]),
            SweepValues::Float(_) => panic!("B values are batch sizes, not floats"),
        }
    }

    #[test]
    fn sweep_rejects_duplicates_unknown_params_and_bad_numbers() {
        let dup = parse_sweep_values("lambda", "0,0.5,0.50")
            .expect_err("equal parsed values should be rejected");
        assert_eq!(dup.code(), 3, "duplicates are a usage error");
        let unknown = parse_sweep_values("gamma", "1,2")
            .expect_err("unknown parameters should be rejected");
        assert_eq!(unknown.code(), 3, "unknown parameters are a usage error");
        assert!(
            unknown.to_string().contains("lambda, eta, B, or kappa"),
            "the error should list the admissible parameters, got: {unknown}"
        );
        let empty = parse_sweep_values("eta", " , ")
            .expect_err("an empty value list should be rejected");
        assert_eq!(empty.code(), 3, "an empty list is a usage error");
        let frac = parse_sweep_values("B", "4,8.5")
            .expect_err("fractional batch sizes should be rejected");
        assert_eq!(frac.code(), 3, "a fractional batch size is a usage error");
        let text = parse_sweep_values("kappa", "0.3,big")
            .expect_err("non-numeric values should be rejected");
        assert_eq!(text.code(), 3, "a non-numeric value is a usage error");
    }
}
