//! Subcommand implementations behind the `cdpg` binary.
//!
//! Every command returns a process exit code: 0 on success, 1 for bad
//! configuration or runtime errors, 2 when a validation check fails.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::cdpg::cdpg_train;
use crate::cliffwalk::greedy_path;
use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{Error, Result};
use crate::eval::{bellman_residual, evaluate_policy, grid_coverage_warning, state_distribution};
use crate::gradcheck::{check_instance, ensure_small, GradcheckSettings, InstanceReport};
use crate::history::TrainingHistory;
use crate::mdp::SoftmaxPolicy;
use crate::measure::{CategoricalDistribution, SupportGrid};
use crate::risk::{risk_value, RiskMeasure};
use crate::spg::spg_train;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    /// Overrides `run.output_dir`.
    pub out: Option<PathBuf>,
    /// Replaces `run.seeds` with this single seed.
    pub seed: Option<u64>,
    pub quiet: bool,
}

impl RunOptions {
    pub fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            config.run.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.run.seeds = vec![seed];
        }
        Ok(config)
    }
}

fn exit_code(result: Result<i32>) -> i32 {
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_ERROR
    })
}

fn output_dir(config: &ExperimentConfig) -> Result<&Path> {
    let dir = config.run.output_dir.as_path();
    fs::create_dir_all(dir)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub iterations: usize,
    pub trajectories: usize,
    /// Risk of the final policy under full model-based evaluation.
    pub final_risk: f64,
    pub final_divergence: Option<f64>,
    pub converged: Option<bool>,
    pub iterations_to_threshold: Option<usize>,
    pub trajectories_to_threshold: Option<usize>,
    pub wall_time_to_threshold_ms: Option<f64>,
    pub greedy_path: Vec<usize>,
    pub warnings: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub summary: RunSummary,
    pub policy: SoftmaxPolicy,
    pub history: TrainingHistory,
}

/// Trains one algorithm on one seed.
pub fn run_one(config: &ExperimentConfig, algo: Algorithm, seed: u64) -> Result<RunResult> {
    let mdp = config.environment.build(seed)?;
    let start = config.start_state();
    let reference = config.reference()?;
    let (policy, history) = match algo {
        Algorithm::Cdpg => {
            cdpg_train(&mdp, &config.risk, &config.cdpg_config(seed, start)?, reference.as_ref())?
        }
        Algorithm::Spg => spg_train(&mdp, &config.spg_config(seed, start)?, reference.as_ref())?,
    };
    let evaluated = evaluate_policy(&mdp, &policy, config.grid, &config.evaluate.eval, None)?;
    let final_risk = risk_value(
        &state_distribution(&evaluated.table, &policy, start)?,
        &config.risk,
    )?;
    let threshold = config.run.threshold;
    let hit = history.first_below(threshold);
    let final_divergence = reference.as_ref().map(|r| r.divergence(&policy)).transpose()?;
    let summary = RunSummary {
        algorithm: algo,
        seed,
        iterations: history.records.len(),
        trajectories: history.last().map_or(0, |r| r.cum_trajectories),
        final_risk,
        final_divergence,
        converged: final_divergence.map(|d| d < threshold),
        iterations_to_threshold: hit.map(|r| r.iteration),
        trajectories_to_threshold: hit.map(|r| r.cum_trajectories),
        wall_time_to_threshold_ms: hit.map(|r| r.wall_time_ms),
        greedy_path: greedy_path(&mdp, &policy, start),
        warnings: history.warnings.len(),
    };
    log::info!(
        "{} seed {seed}: {} iterations, final risk {final_risk:.4}",
        algo.name(),
        summary.iterations
    );
    Ok(RunResult {
        summary,
        policy,
        history,
    })
}

/// Runs every (algorithm, seed) pair in parallel; results come back in
/// canonical algorithm order, then seed order.
pub fn run_all(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    let jobs: Vec<(Algorithm, u64)> = config
        .algorithms()
        .into_iter()
        .flat_map(|a| config.run.seeds.iter().map(move |&s| (a, s)))
        .collect();
    jobs.par_iter()
        .map(|&(a, s)| run_one(config, a, s))
        .collect()
}

fn write_runs(dir: &Path, runs: &[RunResult]) -> Result<()> {
    for run in runs {
        let stem = format!("{}_{}", run.summary.algorithm.name(), run.summary.seed);
        run.history
            .write_csv(BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?))?;
        write_json(&dir.join(format!("{stem}_policy.json")), &run.policy)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    risk: RiskMeasure,
    threshold: f64,
    runs: Vec<&'a RunSummary>,
}

fn check_grid(config: &ExperimentConfig) -> Result<()> {
    let mdp = config.environment.build(config.run.seeds[0])?;
    if let Some(w) = grid_coverage_warning(&mdp, &config.grid) {
        log::warn!("{w}");
    }
    Ok(())
}

pub fn cmd_train(opts: &RunOptions) -> i32 {
    exit_code((|| {
        let config = opts.load()?;
        check_grid(&config)?;
        let dir = output_dir(&config)?;
        let runs = run_all(&config)?;
        write_runs(dir, &runs)?;
        write_json(
            &dir.join("summary.json"),
            &TrainSummary {
                risk: config.risk,
                threshold: config.run.threshold,
                runs: runs.iter().map(|r| &r.summary).collect(),
            },
        )?;
        if !opts.quiet {
            for r in &runs {
                let s = &r.summary;
                println!(
                    "{} seed {}: risk {:.4}, divergence {}, path {:?}",
                    s.algorithm.name(),
                    s.seed,
                    s.final_risk,
                    s.final_divergence
                        .map_or_else(|| "-".to_string(), |d| format!("{d:.4}")),
                    s.greedy_path
                );
            }
        }
        Ok(EXIT_OK)
    })())
}

#[derive(Debug, Clone, Serialize)]
pub struct CvarValue {
    pub alpha: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StateReport {
    pub state: usize,
    pub mean: f64,
    pub cvar: Vec<CvarValue>,
    pub distribution: CategoricalDistribution,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub grid: SupportGrid,
    pub sweeps: usize,
    pub bellman_residual: f64,
    pub start_state: usize,
    pub states: Vec<StateReport>,
}

/// Evaluates `policy` on the configured environment for the first seed.
pub fn evaluate_report(config: &ExperimentConfig, policy: &SoftmaxPolicy) -> Result<EvaluationReport> {
    let mdp = config.environment.build(config.run.seeds[0])?;
    policy.check_compatible(&mdp)?;
    if let Some(w) = grid_coverage_warning(&mdp, &config.grid) {
        log::warn!("{w}");
    }
    let out = evaluate_policy(&mdp, policy, config.grid, &config.evaluate.eval, None)?;
    let states = (0..mdp.n_states())
        .map(|s| {
            let dist = state_distribution(&out.table, policy, s)?;
            let cvar = config
                .evaluate
                .alphas
                .iter()
                .map(|&alpha| {
                    Ok(CvarValue {
                        alpha,
                        value: risk_value(&dist, &RiskMeasure::Cvar { alpha })?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(StateReport {
                state: s,
                mean: dist.mean(),
                cvar,
                distribution: dist,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        grid: config.grid,
        sweeps: out.sweeps,
        bellman_residual: bellman_residual(&out.table, &mdp, policy)?,
        start_state: config.start_state(),
        states,
    })
}

pub fn cmd_evaluate(opts: &RunOptions, policy_path: &Path) -> i32 {
    exit_code((|| {
        let config = opts.load()?;
        let text = fs::read_to_string(policy_path).map_err(|e| {
            Error::Config(format!("cannot read policy {}: {e}", policy_path.display()))
        })?;
        let policy: SoftmaxPolicy = serde_json::from_str(&text)?;
        let report = evaluate_report(&config, &policy)?;
        let dir = output_dir(&config)?;
        write_json(&dir.join("evaluation.json"), &report)?;
        if !opts.quiet {
            let s = &report.states[report.start_state];
            println!("state {}: mean {:.4}", s.state, s.mean);
            for c in &s.cvar {
                println!("  cvar({}) = {:.4}", c.alpha, c.value);
            }
            println!("bellman residual {:.3e}", report.bellman_residual);
        }
        Ok(EXIT_OK)
    })())
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub threshold: f64,
    pub passed: bool,
    pub max_rel_error: f64,
    pub instances: Vec<InstanceReport>,
}

/// Gradient checks over every configured seed.
pub fn gradcheck_report(
    config: &ExperimentConfig,
    corrupt: Option<fn(&mut [f64])>,
) -> Result<GradcheckReport> {
    let g = &config.gradcheck;
    let alpha = match config.risk {
        RiskMeasure::Cvar { alpha } => alpha,
        _ => 0.3,
    };
    let settings = GradcheckSettings {
        fd_step: g.fd_step,
        theta_scale: g.theta_scale,
        tie_margin: g.tie_margin,
        measures: vec![
            RiskMeasure::Expectation,
            RiskMeasure::Cvar { alpha },
            RiskMeasure::MeanSemideviation {
                alpha: g.mean_semideviation_alpha,
            },
        ],
    };
    let start = config.start_state();
    let instances = config
        .run
        .seeds
        .par_iter()
        .map(|&seed| {
            let mdp = config.environment.build(seed)?;
            ensure_small(&mdp, g.max_states)?;
            check_instance(&mdp, config.grid, start, seed, &settings, corrupt)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_rel_error = instances.iter().map(|i| i.max_error()).fold(0.0, f64::max);
    Ok(GradcheckReport {
        threshold: g.threshold,
        passed: max_rel_error < g.threshold,
        max_rel_error,
        instances,
    })
}

pub fn cmd_gradcheck(opts: &RunOptions) -> i32 {
    cmd_gradcheck_with(opts, None)
}

/// `corrupt` perturbs every analytic gradient; tests use it as a negative control.
pub fn cmd_gradcheck_with(opts: &RunOptions, corrupt: Option<fn(&mut [f64])>) -> i32 {
    exit_code((|| {
        let config = opts.load()?;
        let report = gradcheck_report(&config, corrupt)?;
        let dir = output_dir(&config)?;
        write_json(&dir.join("gradcheck.json"), &report)?;
        if !opts.quiet {
            for inst in &report.instances {
                for c in &inst.checks {
                    match (&c.max_rel_error, &c.skipped) {
                        (Some(e), _) => println!("seed {} {}: {e:.3e}", inst.seed, c.measure),
                        (None, Some(why)) => {
                            println!("seed {} {}: skipped ({why})", inst.seed, c.measure)
                        }
                        _ => {}
                    }
                }
            }
        }
        if report.passed {
            Ok(EXIT_OK)
        } else {
            eprintln!(
                "gradient check failed: max relative error {:.3e} >= {:.1e}",
                report.max_rel_error, report.threshold
            );
            Ok(EXIT_VALIDATION)
        }
    })())
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub cdpg_trajectories: Option<usize>,
    pub spg_trajectories: Option<usize>,
    /// SPG over CDPG trajectories-to-threshold.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonSummary {
    pub threshold: f64,
    pub seeds: Vec<SeedComparison>,
    /// Seeds on which CDPG reached the threshold with no more trajectories than SPG.
    pub cdpg_no_worse: usize,
    pub median_ratio: Option<f64>,
}

pub fn compare_runs(threshold: f64, runs: &[RunResult]) -> ComparisonSummary {
    let find = |algo: Algorithm, seed: u64| {
        runs.iter()
            .find(|r| r.summary.algorithm == algo && r.summary.seed == seed)
            .and_then(|r| r.summary.trajectories_to_threshold)
    };
    let mut seeds: Vec<u64> = runs.iter().map(|r| r.summary.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let seeds: Vec<SeedComparison> = seeds
        .into_iter()
        .map(|seed| {
            let c = find(Algorithm::Cdpg, seed);
            let s = find(Algorithm::Spg, seed);
            SeedComparison {
                seed,
                cdpg_trajectories: c,
                spg_trajectories: s,
                ratio: c.zip(s).map(|(c, s)| s as f64 / c as f64),
            }
        })
        .collect();
    let cdpg_no_worse = seeds
        .iter()
        .filter(|c| match (c.cdpg_trajectories, c.spg_trajectories) {
            (Some(a), Some(b)) => a <= b,
            (Some(_), None) => true,
            _ => false,
        })
        .count();
    let mut ratios: Vec<f64> = seeds.iter().filter_map(|c| c.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    let median_ratio = match ratios.len() {
        0 => None,
        n if n % 2 == 1 => Some(ratios[n / 2]),
        n => Some(0.5 * (ratios[n / 2 - 1] + ratios[n / 2])),
    };
    ComparisonSummary {
        threshold,
        seeds,
        cdpg_no_worse,
        median_ratio,
    }
}

fn write_compare_csv(path: &Path, runs: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "algorithm",
        "seed",
        "iterations_to_threshold",
        "trajectories_to_threshold",
        "wall_time_to_threshold_ms",
        "final_divergence",
    ])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in runs {
        let s = &r.summary;
        w.write_record([
            s.algorithm.name().to_string(),
            s.seed.to_string(),
            opt(s.iterations_to_threshold.map(|v| v.to_string())),
            opt(s.trajectories_to_threshold.map(|v| v.to_string())),
            opt(s.wall_time_to_threshold_ms.map(|v| v.to_string())),
            opt(s.final_divergence.map(|v| v.to_string())),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_compare(opts: &RunOptions) -> i32 {
    exit_code((|| {
        let config = opts.load()?;
        if config.algorithms() != [Algorithm::Cdpg, Algorithm::Spg] {
            return Err(Error::Config(
                "comparison needs two algorithms: cdpg and spg".into(),
            ));
        }
        if config.run.reference.is_none() {
            return Err(Error::Config("comparison needs run.reference".into()));
        }
        check_grid(&config)?;
        let dir = output_dir(&config)?;
        let runs = run_all(&config)?;
        write_runs(dir, &runs)?;
        write_compare_csv(&dir.join("compare.csv"), &runs)?;
        let summary = compare_runs(config.run.threshold, &runs);
        write_json(&dir.join("compare_summary.json"), &summary)?;
        if !opts.quiet {
            for c in &summary.seeds {
                let show = |v: Option<usize>| v.map_or_else(|| "-".into(), |v| v.to_string());
                println!(
                    "seed {}: cdpg {} spg {} trajectories",
                    c.seed,
                    show(c.cdpg_trajectories),
                    show(c.spg_trajectories)
                );
            }
            if let Some(r) = summary.median_ratio {
                println!("median spg/cdpg ratio {r:.2}");
            }
        }
        Ok(EXIT_OK)
    })())
}
