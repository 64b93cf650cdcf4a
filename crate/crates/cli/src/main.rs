use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use staq_cli::config::{self, ExperimentConfig, FeatureKind};
use staq_cli::csvout;
use staq_cli::experiment::{self, OutputFormat};
use staq_core::abstraction::{
    features_order_stats_all, features_stationary, kmeans, random_aggregation, standardize,
    AggregationMap,
};
use staq_core::sim::evaluate;
use staq_core::solver::{solve_with_options, SolveOptions, SolvedTables, TablePolicy};
use staq_core::stationary::solve_stationary;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;

/// Admission-control solver and simulator for multiclass no-buffer queues.
#[derive(Parser)]
#[command(name = "staq", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps the worker-thread count (0 = default pool size).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Overrides the config's per-method compute budget in seconds.
    #[arg(long)]
    budget_seconds: Option<f64>,
    /// Which output families to write.
    #[arg(long, value_enum, default_value_t = FormatArg::Both)]
    format: FormatArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Svg,
    Both,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Svg => OutputFormat::Svg,
            FormatArg::Both => OutputFormat::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the instance exactly and dump the tables.
    Solve(Common),
    /// Evaluate a dumped table file over simulated episodes.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Table dump produced by `solve`.
        #[arg(long)]
        tables: PathBuf,
        /// Overrides the config's episode count.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Solve, abstract, tune, and evaluate every configured method.
    Experiment(Common),
    /// Solve and evaluate the exact method across planning steps.
    DtSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated planning steps in seconds, e.g. `0.5,1,2,4`.
        #[arg(long, value_delimiter = ',')]
        dts: Vec<f64>,
    },
    /// Build an aggregation map and write it as CSV.
    Abstract {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        features: FeatureArg,
        #[arg(long)]
        n_abstractions: usize,
        /// Monte Carlo samples per combination for order-statistics features.
        #[arg(long, default_value_t = 5000)]
        mc_samples: usize,
    },
    /// Solve the constant-rate average-reward problem.
    Stationary(Common),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FeatureArg {
    Stationary,
    OrderStats,
    Random,
}

impl From<FeatureArg> for FeatureKind {
    fn from(f: FeatureArg) -> Self {
        match f {
            FeatureArg::Stationary => FeatureKind::Stationary,
            FeatureArg::OrderStats => FeatureKind::OrderStats,
            FeatureArg::Random => FeatureKind::Random,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            // Configuration and validation problems exit 2.
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut config = config::load_config(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(budget) = common.budget_seconds {
        config.budget_seconds = budget;
    }
    init_jobs(common.jobs);
    Ok(config)
}

#[cfg(feature = "parallel")]
fn init_jobs(jobs: usize) {
    if jobs > 0 {
        // Ignore the error when a pool already exists (tests, repeat calls).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
}

#[cfg(not(feature = "parallel"))]
fn init_jobs(_jobs: usize) {}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve(common) => {
            let config = load(&common)?;
            let instance = config::build_instance(&config.instance)?;
            let options = SolveOptions { memory_budget_bytes: config.memory_budget_mb << 20 };
            let sizing = SolvedTables::sizing(&instance, options.memory_budget_bytes);
            eprintln!("solving: {sizing}");
            let started = std::time::Instant::now();
            let tables = solve_with_options(&instance, options, true)?;
            eprintln!("solved in {:.2}s", started.elapsed().as_secs_f64());
            std::fs::create_dir_all(&common.out)?;
            let path = common.out.join("tables.staq");
            let mut file = BufWriter::new(File::create(&path)?);
            tables.write_to(&mut file)?;
            file.flush()?;
            println!("{}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { common, tables, episodes } => {
            let config = load(&common)?;
            let instance = config::build_instance(&config.instance)?;
            let file = BufReader::new(File::open(&tables).with_context(|| format!("opening {}", tables.display()))?);
            let tables = SolvedTables::read_from(file, &instance)?;
            let policy = TablePolicy::new(&tables);
            let episodes = episodes.unwrap_or(config.episodes);
            let evaluation = evaluate(&instance, &policy, episodes, config.seed);
            std::fs::create_dir_all(&common.out)?;
            if OutputFormat::from(common.format).csv() {
                std::fs::write(
                    common.out.join("episodes_vi_no_abstr.csv"),
                    csvout::episode_rows("vi_no_abstr", None, &evaluation.episodes),
                )?;
            }
            println!("mean_reward {} std_error {}", evaluation.mean_reward, evaluation.std_error);
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment(common) => {
            let format = OutputFormat::from(common.format);
            let config = load(&common)?;
            let report = experiment::run_experiment(&config, &common.out, format)?;
            for o in &report.outcomes {
                let label = match o.n_abstractions {
                    Some(k) => format!("{} (|N_A|={k})", o.method),
                    None => o.method.clone(),
                };
                match (&o.evaluation, &o.skip_reason) {
                    (Some(e), _) => println!(
                        "{label}: mean {} se {} solve_time {:.2}s",
                        e.mean_reward, e.std_error, o.solve_time_s
                    ),
                    (None, Some(reason)) => println!("{label}: skipped ({reason})"),
                    _ => unreachable!(),
                }
            }
            if report.all_skipped() {
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::DtSweep { common, dts } => {
            let format = OutputFormat::from(common.format);
            let config = load(&common)?;
            let rows = experiment::dt_sweep(&config, &dts, &common.out, format)?;
            for r in &rows {
                match (&r.evaluation, &r.skip_reason) {
                    (Some(e), _) => println!("dt {}: mean {} se {}", r.dt, e.mean_reward, e.std_error),
                    (None, Some(reason)) => println!("dt {}: skipped ({reason})", r.dt),
                    _ => unreachable!(),
                }
            }
            if rows.iter().all(|r| r.skip_reason.is_some()) {
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Abstract { common, features, n_abstractions, mc_samples } => {
            let config = load(&common)?;
            let instance = config::build_instance(&config.instance)?;
            let n_combos = instance.combination_set().len();
            let assignment = match FeatureKind::from(features) {
                FeatureKind::Random => random_aggregation(n_combos, n_abstractions, config.seed)?,
                FeatureKind::Stationary => {
                    let solution = solve_stationary(&instance)?;
                    let mut points = features_stationary(&solution);
                    if config.kmeans.standardize {
                        points = standardize(&points);
                    }
                    kmeans(&points, n_abstractions, config.kmeans.inits, config.seed)?.assignment
                }
                FeatureKind::OrderStats => {
                    let mut points = features_order_stats_all(&instance, mc_samples, config.seed);
                    if config.kmeans.standardize {
                        points = standardize(&points);
                    }
                    kmeans(&points, n_abstractions, config.kmeans.inits, config.seed)?.assignment
                }
            };
            let map = AggregationMap::from_assignment(assignment)?;
            std::fs::create_dir_all(&common.out)?;
            let path = common.out.join("aggregation.csv");
            let mut file = BufWriter::new(File::create(&path)?);
            map.write_csv(&mut file)?;
            file.flush()?;
            println!("{}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Stationary(common) => {
            let config = load(&common)?;
            let instance = config::build_instance(&config.instance)?;
            let solution = solve_stationary(&instance)?;
            std::fs::create_dir_all(&common.out)?;
            let set = solution.combination_set();
            let mut text = String::from("combination_index,relative_q");
            for k in 0..instance.n_classes() {
                text.push_str(&format!(",critical_price_{}", k + 1));
            }
            text.push('\n');
            for i in 0..set.len() {
                text.push_str(&format!("{i},{}", solution.relative_q(i)));
                for k in 0..instance.n_classes() {
                    match solution.critical_price(i, k) {
                        Some(p) => text.push_str(&format!(",{p}")),
                        None => text.push(','),
                    }
                }
                text.push('\n');
            }
            std::fs::write(common.out.join("stationary.csv"), text)?;
            println!("gain {}", solution.gain());
            Ok(ExitCode::SUCCESS)
        }
    }
}
