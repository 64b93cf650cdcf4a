//! Experiment orchestration: solve or tune every configured method, evaluate
//! it over seeded episodes, and emit CSV tables and SVG plots.

use crate::config::{ExperimentConfig, FeatureKind, MethodConfig};
use crate::csvout::{self, SummaryRow};
use crate::svg::{self, Series};
use anyhow::{Context, Result};
use staq_core::abstraction::{
    features_order_stats_all, features_stationary, kmeans, random_aggregation, solve_abstract_with,
    standardize, AbstractTables, AggregationMap, GroundAbstractPolicy,
};
use staq_core::baselines::{
    build_avg_class_with, grid_search, AvgClassPolicy, GridPolicy, StationaryPolicy,
};
use staq_core::domain::ProblemInstance;
use staq_core::sim::{evaluate, AcceptAll, Evaluation, Policy, RejectAll};
use staq_core::solver::{solve_with_options, SolveOptions, SolvedTables, TablePolicy};
use staq_core::stationary::{solve_stationary, StationarySolution};
use std::path::Path;
use std::time::Instant;

/// Which output families to write.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Svg,
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, Self::Csv | Self::Both)
    }

    pub fn svg(self) -> bool {
        matches!(self, Self::Svg | Self::Both)
    }
}

/// One solved-or-tuned method, holding whatever artifact its policy borrows.
enum SolvedMethod {
    Tables(SolvedTables),
    Abstract(AbstractTables),
    AvgClass(AvgClassPolicy),
    Stationary(StationarySolution),
    Grid(GridPolicy),
    AcceptAll,
    RejectAll,
}

impl SolvedMethod {
    fn policy(&self) -> Box<dyn Policy + '_> {
        match self {
            Self::Tables(t) => Box::new(TablePolicy::new(t)),
            Self::Abstract(t) => Box::new(GroundAbstractPolicy::new(t)),
            Self::AvgClass(p) => Box::new(PolicyRef(p)),
            Self::Stationary(s) => Box::new(StationaryPolicy::new(s)),
            Self::Grid(p) => Box::new(PolicyRef(p)),
            Self::AcceptAll => Box::new(AcceptAll),
            Self::RejectAll => Box::new(RejectAll),
        }
    }
}

struct PolicyRef<'a, P: Policy>(&'a P);

impl<P: Policy> Policy for PolicyRef<'_, P> {
    fn decide(&self, counts: &[u16], class: usize, price: f64, t: f64) -> staq_core::sim::Action {
        self.0.decide(counts, class, price, t)
    }
}

#[derive(Clone, Debug)]
pub struct MethodOutcome {
    pub method: String,
    pub n_abstractions: Option<usize>,
    pub solve_time_s: f64,
    pub evaluation: Option<Evaluation>,
    pub skip_reason: Option<String>,
}

#[derive(Debug, Default)]
pub struct ExperimentReport {
    pub outcomes: Vec<MethodOutcome>,
}

impl ExperimentReport {
    /// True when every configured method was skipped.
    pub fn all_skipped(&self) -> bool {
        !self.outcomes.is_empty() && self.outcomes.iter().all(|o| o.skip_reason.is_some())
    }
}

/// Expands the configured methods into `(name, n_abstractions)` runs.
fn method_runs(config: &ExperimentConfig) -> Vec<(MethodConfig, String, Option<usize>)> {
    let mut runs = Vec::new();
    for m in &config.methods {
        match m {
            MethodConfig::Vi => runs.push((m.clone(), "vi_no_abstr".to_string(), None)),
            MethodConfig::ViAbstract { features, n_abstractions, .. } => {
                let base = match features {
                    FeatureKind::Stationary => "vi_stationary_abstr",
                    FeatureKind::OrderStats => "vi_order_stats_abstr",
                    FeatureKind::Random => "vi_random_abstr",
                };
                for &k in n_abstractions {
                    runs.push((m.clone(), base.to_string(), Some(k)));
                }
            }
            MethodConfig::AvgClass => runs.push((m.clone(), "vi_avg_class".to_string(), None)),
            MethodConfig::Stationary => runs.push((m.clone(), "stationary_sol".to_string(), None)),
            MethodConfig::GridSearch { .. } => runs.push((m.clone(), "grid_search".to_string(), None)),
            MethodConfig::RejectAll => runs.push((m.clone(), "reject_all".to_string(), None)),
            MethodConfig::AcceptAll => runs.push((m.clone(), "accept_all".to_string(), None)),
        }
    }
    runs
}

fn solve_options(config: &ExperimentConfig) -> SolveOptions {
    SolveOptions { memory_budget_bytes: config.memory_budget_mb << 20 }
}

fn aggregation_for(
    instance: &ProblemInstance,
    config: &ExperimentConfig,
    features: FeatureKind,
    k: usize,
    mc_samples: usize,
) -> Result<AggregationMap, String> {
    let n_combos = instance.combination_set().len();
    let assignment = match features {
        FeatureKind::Random => random_aggregation(n_combos, k, config.seed).map_err(|e| e.to_string())?,
        FeatureKind::Stationary => {
            let solution = solve_stationary(instance).map_err(|e| e.to_string())?;
            let mut points = features_stationary(&solution);
            if config.kmeans.standardize {
                points = standardize(&points);
            }
            kmeans(&points, k, config.kmeans.inits, config.seed).map_err(|e| e.to_string())?.assignment
        }
        FeatureKind::OrderStats => {
            let mut points = features_order_stats_all(instance, mc_samples, config.seed);
            if config.kmeans.standardize {
                points = standardize(&points);
            }
            kmeans(&points, k, config.kmeans.inits, config.seed).map_err(|e| e.to_string())?.assignment
        }
    };
    AggregationMap::from_assignment(assignment).map_err(|e| e.to_string())
}

fn solve_method(
    instance: &ProblemInstance,
    config: &ExperimentConfig,
    method: &MethodConfig,
    n_abstractions: Option<usize>,
) -> Result<SolvedMethod, String> {
    let options = solve_options(config);
    match method {
        MethodConfig::Vi => solve_with_options(instance, options, true)
            .map(SolvedMethod::Tables)
            .map_err(|e| e.to_string()),
        MethodConfig::ViAbstract { features, mc_samples, .. } => {
            let k = n_abstractions.expect("abstract runs carry a cluster count");
            let map = aggregation_for(instance, config, *features, k, *mc_samples)?;
            solve_abstract_with(instance, &map, options, true)
                .map(SolvedMethod::Abstract)
                .map_err(|e| e.to_string())
        }
        MethodConfig::AvgClass => build_avg_class_with(instance, config.avg_rate_mode.into(), options, true)
            .map(SolvedMethod::AvgClass)
            .map_err(|e| e.to_string()),
        MethodConfig::Stationary => {
            solve_stationary(instance).map(SolvedMethod::Stationary).map_err(|e| e.to_string())
        }
        MethodConfig::GridSearch { candidates, episodes_per_candidate, bounds } => {
            grid_search(instance, *candidates, *episodes_per_candidate, config.seed, *bounds)
                .map(|(policy, _)| SolvedMethod::Grid(policy))
                .map_err(|e| e.to_string())
        }
        MethodConfig::RejectAll => Ok(SolvedMethod::RejectAll),
        MethodConfig::AcceptAll => Ok(SolvedMethod::AcceptAll),
    }
}

/// Runs every configured method: solve/tune (honouring the compute budget),
/// evaluate over shared seeds, and write outputs under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, format: OutputFormat) -> Result<ExperimentReport> {
    let instance = crate::config::build_instance(&config.instance)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let mut report = ExperimentReport::default();
    for (method, name, n_abstractions) in method_runs(config) {
        let started = Instant::now();
        let solved = solve_method(&instance, config, &method, n_abstractions);
        let solve_time_s = started.elapsed().as_secs_f64();

        let outcome = match solved {
            Err(reason) => MethodOutcome {
                method: name,
                n_abstractions,
                solve_time_s,
                evaluation: None,
                skip_reason: Some(reason),
            },
            Ok(_) if solve_time_s > config.budget_seconds => MethodOutcome {
                method: name,
                n_abstractions,
                solve_time_s,
                evaluation: None,
                skip_reason: Some("budget".to_string()),
            },
            Ok(solved) => {
                let policy = solved.policy();
                let evaluation = evaluate(&instance, policy.as_ref(), config.episodes, config.seed);
                if format.csv() {
                    let file = match n_abstractions {
                        Some(k) => format!("episodes_{name}_{k}.csv"),
                        None => format!("episodes_{name}.csv"),
                    };
                    std::fs::write(out_dir.join(file), csvout::episode_rows(&name, n_abstractions, &evaluation.episodes))?;
                }
                MethodOutcome {
                    method: name,
                    n_abstractions,
                    solve_time_s,
                    evaluation: Some(evaluation),
                    skip_reason: None,
                }
            }
        };
        report.outcomes.push(outcome);
    }

    if format.csv() {
        let rows: Vec<SummaryRow> = report
            .outcomes
            .iter()
            .map(|o| SummaryRow {
                method: o.method.clone(),
                n_abstractions: o.n_abstractions,
                mean_reward: o.evaluation.as_ref().map(|e| e.mean_reward),
                std_error: o.evaluation.as_ref().map(|e| e.std_error),
                solve_time_s: o.solve_time_s,
                status: if o.skip_reason.is_some() { "skipped".into() } else { "ok".into() },
                reason: o.skip_reason.clone().unwrap_or_default(),
            })
            .collect();
        std::fs::write(out_dir.join("summary.csv"), csvout::summary_rows(&rows))?;
    }
    if format.svg() {
        let title = config.name.clone().unwrap_or_else(|| "experiment".to_string());
        if let Some(chart) = reward_vs_abstractions_chart(&title, &report) {
            std::fs::write(out_dir.join("reward_vs_abstractions.svg"), chart)?;
        }
        std::fs::write(out_dir.join("arrival_rates.svg"), arrival_rates_chart(&instance))?;
    }
    Ok(report)
}

/// Mean reward (with standard-error bars) against the abstraction count;
/// methods without one render as flat reference lines.
fn reward_vs_abstractions_chart(title: &str, report: &ExperimentReport) -> Option<String> {
    let ks: Vec<f64> = report
        .outcomes
        .iter()
        .filter_map(|o| o.n_abstractions.map(|k| k as f64))
        .collect();
    if ks.is_empty() {
        return None;
    }
    let (lo, hi) = ks.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &k| (l.min(k), h.max(k)));
    let mut series: Vec<Series> = Vec::new();
    for outcome in &report.outcomes {
        let Some(eval) = &outcome.evaluation else { continue };
        match outcome.n_abstractions {
            Some(k) => {
                let point = (k as f64, eval.mean_reward, eval.std_error);
                match series.iter_mut().find(|s| s.label == outcome.method) {
                    Some(s) => s.points.push(point),
                    None => series.push(Series { label: outcome.method.clone(), points: vec![point] }),
                }
            }
            None => {
                let pts = if lo < hi {
                    vec![(lo, eval.mean_reward, eval.std_error), (hi, eval.mean_reward, eval.std_error)]
                } else {
                    vec![(lo, eval.mean_reward, eval.std_error)]
                };
                series.push(Series { label: outcome.method.clone(), points: pts });
            }
        }
    }
    for s in series.iter_mut() {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Some(svg::line_chart(title, "abstract combinations", "mean total reward", &series))
}

fn arrival_rates_chart(instance: &ProblemInstance) -> String {
    let samples = 240;
    let series: Vec<Series> = instance
        .classes
        .iter()
        .map(|class| Series {
            label: class.name.clone(),
            points: (0..=samples)
                .map(|i| {
                    let t = instance.horizon * i as f64 / samples as f64;
                    (t, class.arrival.value(t), 0.0)
                })
                .collect(),
        })
        .collect();
    svg::line_chart("arrival rates", "time (s)", "tasks per second", &series)
}

#[derive(Clone, Debug)]
pub struct DtSweepRow {
    pub dt: f64,
    pub n_epochs: usize,
    pub solve_time_s: f64,
    pub evaluation: Option<Evaluation>,
    pub skip_reason: Option<String>,
}

/// Solves and evaluates the exact method at each planning step and writes
/// the reward-versus-step table and plot.
pub fn dt_sweep(
    config: &ExperimentConfig,
    dts: &[f64],
    out_dir: &Path,
    format: OutputFormat,
) -> Result<Vec<DtSweepRow>> {
    anyhow::ensure!(dts.len() >= 2, "--dts: need at least 2 values");
    for &dt in dts {
        anyhow::ensure!(dt > 0.0, "--dts: values must be > 0 (got {dt})");
        anyhow::ensure!(dt < config.instance.horizon, "--dts: {dt} does not fit the horizon");
    }
    std::fs::create_dir_all(out_dir)?;
    let options = solve_options(config);
    let mut rows = Vec::new();
    for &dt in dts {
        let mut sub = config.instance.clone();
        sub.dt = dt;
        let instance = crate::config::build_instance(&sub)?;
        let started = Instant::now();
        let solved = solve_with_options(&instance, options, true);
        let solve_time_s = started.elapsed().as_secs_f64();
        let row = match solved {
            Err(e) => DtSweepRow {
                dt,
                n_epochs: instance.n_epochs(),
                solve_time_s,
                evaluation: None,
                skip_reason: Some(e.to_string()),
            },
            Ok(_) if solve_time_s > config.budget_seconds => DtSweepRow {
                dt,
                n_epochs: instance.n_epochs(),
                solve_time_s,
                evaluation: None,
                skip_reason: Some("budget".to_string()),
            },
            Ok(tables) => {
                let policy = TablePolicy::new(&tables);
                let evaluation = evaluate(&instance, &policy, config.episodes, config.seed);
                DtSweepRow {
                    dt,
                    n_epochs: instance.n_epochs(),
                    solve_time_s,
                    evaluation: Some(evaluation),
                    skip_reason: None,
                }
            }
        };
        rows.push(row);
    }

    if format.csv() {
        let mut text = String::from(csvout::DT_SWEEP_HEADER);
        text.push('\n');
        for r in &rows {
            use std::fmt::Write as _;
            writeln!(
                text,
                "{},{},{},{},{},{},{}",
                r.dt,
                r.n_epochs,
                r.evaluation.as_ref().map(|e| e.mean_reward.to_string()).unwrap_or_default(),
                r.evaluation.as_ref().map(|e| e.std_error.to_string()).unwrap_or_default(),
                r.solve_time_s,
                if r.skip_reason.is_some() { "skipped" } else { "ok" },
                r.skip_reason.clone().unwrap_or_default()
            )
            .expect("writing to a string cannot fail");
        }
        std::fs::write(out_dir.join("dt_sweep.csv"), text)?;
    }
    if format.svg() {
        let points: Vec<(f64, f64, f64)> = rows
            .iter()
            .filter_map(|r| r.evaluation.as_ref().map(|e| (r.dt, e.mean_reward, e.std_error)))
            .collect();
        let series = [Series { label: "vi_no_abstr".into(), points }];
        std::fs::write(
            out_dir.join("dt_sweep.svg"),
            svg::line_chart("mean reward vs planning step", "dt (s)", "mean total reward", &series),
        )?;
    }
    Ok(rows)
}
