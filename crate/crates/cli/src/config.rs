//! Experiment configuration: a single JSON document, schema-validated with
//! unknown keys rejected before any compute starts.

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use staq_core::baselines::AvgRateMode;
use staq_core::domain::{ArrivalRateFn, PriceDistribution, ProblemInstance, TaskClass};
use std::path::Path;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceConfig,
    pub methods: Vec<MethodConfig>,
    /// Evaluation episodes per method.
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default)]
    pub seed: u64,
    /// Per-method compute budget in seconds; methods that exceed it are
    /// recorded as skipped.
    #[serde(default = "default_budget_seconds")]
    pub budget_seconds: f64,
    /// Dense-table memory budget for the exact solver, in MiB.
    #[serde(default = "default_memory_budget_mb")]
    pub memory_budget_mb: u64,
    #[serde(default)]
    pub kmeans: KmeansConfig,
    #[serde(default)]
    pub avg_rate_mode: AvgRateModeConfig,
    /// Label written into output file names and plot titles.
    #[serde(default)]
    pub name: Option<String>,
}

fn default_episodes() -> usize {
    300
}

fn default_budget_seconds() -> f64 {
    30_000.0
}

fn default_memory_budget_mb() -> u64 {
    8192
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub n_servers: u16,
    /// Episode horizon in seconds.
    pub horizon: f64,
    /// Planning step in seconds.
    pub dt: f64,
    pub classes: Vec<ClassConfig>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Completions per second of one busy server.
    pub service_rate: f64,
    pub arrival: ArrivalConfig,
    pub price: PriceConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalConfig {
    Constant { rate: f64 },
    Sinusoid { mean: f64, amplitude: f64, period: f64, #[serde(default)] phase: f64 },
    Step { before: f64, after: f64, switch_time: f64 },
    PiecewiseLinear { points: Vec<(f64, f64)> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriceConfig {
    Lomax { shape: f64, scale: f64 },
    Empirical {
        points: Vec<f64>,
        weights: Vec<f64>,
        /// `atoms` treats each point as a mass; `interpolated` builds the
        /// continuous empirical CDF.
        #[serde(default)]
        interpolation: EmpiricalInterpolation,
    },
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum EmpiricalInterpolation {
    #[default]
    Interpolated,
    Atoms,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    /// Exact value iteration on the full combination space.
    Vi,
    /// Value iteration on an aggregated space.
    ViAbstract {
        features: FeatureKind,
        n_abstractions: Vec<usize>,
        #[serde(default = "default_mc_samples")]
        mc_samples: usize,
    },
    /// Value iteration on the pooled average class.
    AvgClass,
    /// Time-invariant thresholds from the average-reward solution.
    Stationary,
    /// Thresholds proportional to expected service time, constant tuned by
    /// simulation.
    GridSearch {
        #[serde(default = "default_grid_candidates")]
        candidates: usize,
        #[serde(default = "default_episodes")]
        episodes_per_candidate: usize,
        #[serde(default)]
        bounds: Option<(f64, f64)>,
    },
    RejectAll,
    AcceptAll,
}

fn default_mc_samples() -> usize {
    5000
}

fn default_grid_candidates() -> usize {
    50
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Stationary,
    OrderStats,
    Random,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmeansConfig {
    #[serde(default = "default_kmeans_inits")]
    pub inits: usize,
    #[serde(default)]
    pub standardize: bool,
}

fn default_kmeans_inits() -> usize {
    20
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self { inits: default_kmeans_inits(), standardize: false }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AvgRateModeConfig {
    #[default]
    Arithmetic,
    Harmonic,
}

impl From<AvgRateModeConfig> for AvgRateMode {
    fn from(value: AvgRateModeConfig) -> Self {
        match value {
            AvgRateModeConfig::Arithmetic => AvgRateMode::Arithmetic,
            AvgRateModeConfig::Harmonic => AvgRateMode::Harmonic,
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    validate(&config)?;
    Ok(config)
}

/// Cross-field checks that the serde schema cannot express; every failure
/// names the offending key and the violated constraint.
pub fn validate(config: &ExperimentConfig) -> Result<()> {
    let inst = &config.instance;
    if inst.dt <= 0.0 {
        bail!("instance.dt: must be > 0 (got {})", inst.dt);
    }
    if inst.horizon <= 0.0 {
        bail!("instance.horizon: must be > 0 (got {})", inst.horizon);
    }
    if inst.dt >= inst.horizon {
        bail!("instance.dt: must be smaller than instance.horizon ({} >= {})", inst.dt, inst.horizon);
    }
    if inst.n_servers == 0 {
        bail!("instance.n_servers: must be >= 1");
    }
    if inst.classes.is_empty() {
        bail!("instance.classes: must not be empty");
    }
    for (i, class) in inst.classes.iter().enumerate() {
        let key = format!("instance.classes[{i}]");
        if class.service_rate <= 0.0 {
            bail!("{key}.service_rate: must be > 0 (got {})", class.service_rate);
        }
        match &class.arrival {
            ArrivalConfig::Constant { rate } if *rate < 0.0 => {
                bail!("{key}.arrival.rate: must be >= 0 (got {rate})")
            }
            ArrivalConfig::Sinusoid { mean, amplitude, period, .. } => {
                if *amplitude < 0.0 || amplitude > mean {
                    bail!("{key}.arrival.amplitude: must satisfy 0 <= amplitude <= mean so the rate stays non-negative");
                }
                if *period <= 0.0 {
                    bail!("{key}.arrival.period: must be > 0 (got {period})");
                }
            }
            ArrivalConfig::Step { before, after, .. } if *before < 0.0 || *after < 0.0 => {
                bail!("{key}.arrival: step rates must be >= 0")
            }
            ArrivalConfig::PiecewiseLinear { points } => {
                if points.len() < 2 {
                    bail!("{key}.arrival.points: needs at least 2 breakpoints");
                }
            }
            _ => {}
        }
        match &class.price {
            PriceConfig::Lomax { shape, scale } => {
                if *shape <= 1.0 {
                    bail!("{key}.price.shape: must be > 1 for a finite mean (got {shape})");
                }
                if *scale <= 0.0 {
                    bail!("{key}.price.scale: must be > 0 (got {scale})");
                }
            }
            PriceConfig::Empirical { points, weights, .. } => {
                if points.is_empty() || points.len() != weights.len() {
                    bail!("{key}.price: points and weights must be non-empty and equal-length");
                }
            }
        }
    }
    if config.episodes == 0 {
        bail!("episodes: must be >= 1");
    }
    if config.methods.is_empty() {
        bail!("methods: must not be empty");
    }
    for (i, method) in config.methods.iter().enumerate() {
        if let MethodConfig::ViAbstract { n_abstractions, mc_samples, .. } = method {
            if n_abstractions.is_empty() {
                bail!("methods[{i}].n_abstractions: must not be empty");
            }
            if n_abstractions.iter().any(|&k| k == 0) {
                bail!("methods[{i}].n_abstractions: entries must be >= 1");
            }
            if *mc_samples == 0 {
                bail!("methods[{i}].mc_samples: must be >= 1");
            }
        }
        if let MethodConfig::GridSearch { candidates, episodes_per_candidate, bounds } = method {
            if *candidates < 2 {
                bail!("methods[{i}].candidates: must be >= 2");
            }
            if *episodes_per_candidate == 0 {
                bail!("methods[{i}].episodes_per_candidate: must be >= 1");
            }
            if let Some((lo, hi)) = bounds {
                if !(lo > &0.0 && hi > lo) {
                    bail!("methods[{i}].bounds: must satisfy 0 < lo < hi");
                }
            }
        }
    }
    if config.kmeans.inits == 0 {
        bail!("kmeans.inits: must be >= 1");
    }
    // Everything a core constructor would also reject is rebuilt once here
    // so the error carries the config key instead of a library type.
    build_instance(inst).map(|_| ())
}

pub fn build_instance(config: &InstanceConfig) -> Result<ProblemInstance> {
    let classes = config
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let name = c.name.clone().unwrap_or_else(|| format!("class{}", i + 1));
            let arrival = match &c.arrival {
                ArrivalConfig::Constant { rate } => ArrivalRateFn::constant(*rate),
                ArrivalConfig::Sinusoid { mean, amplitude, period, phase } => {
                    ArrivalRateFn::sinusoid(*mean, *amplitude, *period, *phase)
                }
                ArrivalConfig::Step { before, after, switch_time } => {
                    ArrivalRateFn::step(*before, *after, *switch_time)
                }
                ArrivalConfig::PiecewiseLinear { points } => ArrivalRateFn::piecewise_linear(points.clone()),
            }
            .with_context(|| format!("instance.classes[{i}].arrival"))?;
            let price = match &c.price {
                PriceConfig::Lomax { shape, scale } => PriceDistribution::lomax(*shape, *scale),
                PriceConfig::Empirical { points, weights, interpolation } => match interpolation {
                    EmpiricalInterpolation::Atoms => PriceDistribution::empirical_atoms(points, weights),
                    EmpiricalInterpolation::Interpolated => {
                        PriceDistribution::empirical_interpolated(points, weights)
                    }
                },
            }
            .with_context(|| format!("instance.classes[{i}].price"))?;
            TaskClass::new(name, c.service_rate, arrival, price)
                .with_context(|| format!("instance.classes[{i}]"))
        })
        .collect::<Result<Vec<_>>>()?;
    ProblemInstance::new(classes, config.n_servers, config.horizon, config.dt).context("instance")
}
