//! Typed run configuration assembled from a [`Config`].

use std::path::{Path, PathBuf};

use fexp_core::adjoint::FinetuneConfig;
use fexp_core::datasets::{Component, DatasetSpec, EllipseSetting, TrimodalSetting};
use fexp_core::expander::{ExpanderConfig, MetricConfig, Mode};
use fexp_core::flowmodel::{Activation, Architecture, TrainConfig};
use fexp_core::sampler::ScoreConfig;
use fexp_core::schedules::{GammaSchedule, InterpolantSchedule, LambdaWeight};
use fexp_core::verifier::{band_verifier, box_verifier, ellipse_verifier, smooth, Verifier};

use crate::config::{Config, ConfigError};

/// Which verifier scores validity in the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoringChoice {
    /// The dataset's strong verifier (the valid set).
    Scoring,
    /// The verifier the expander is constrained by.
    Constraint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSettings {
    pub instances: usize,
    pub max_cells: usize,
    pub rate_instances: usize,
    pub iterations: usize,
    pub gamma: f64,
    pub alphas: Vec<f64>,
    pub fixed_point_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub samples: Option<PathBuf>,
    pub entropy: bool,
    pub validity: bool,
    pub vendi: bool,
    pub knn_k: usize,
    pub vendi_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Scatter2d,
    Histogram1d,
    Curve,
}

impl PlotKind {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "scatter2d" => Some(PlotKind::Scatter2d),
            "histogram1d" => Some(PlotKind::Histogram1d),
            "curve" => Some(PlotKind::Curve),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub inputs: Vec<PathBuf>,
    pub overlay_verifier: bool,
    pub x_label: String,
    pub y_label: String,
    /// Column plotted by histograms (default `x1`) and curves (default `entropy`).
    pub column: Option<String>,
    pub bins: usize,
    pub title: String,
    pub output: String,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: DatasetSpec,
    pub dataset_size: usize,
    pub dataset_seed: u64,
    pub train: TrainConfig,
    pub expander: ExpanderConfig,
    pub metrics: MetricConfig,
    /// Measure every this many outer iterations; 0 keeps only the
    /// pretrained and final measurements.
    pub metrics_every: usize,
    pub scoring: ScoringChoice,
    /// The verifier validity is measured against.
    pub scoring_verifier: Verifier,
    pub pretrained: Option<PathBuf>,
    pub oracle: OracleSettings,
    pub eval: EvalSettings,
    pub plot: Option<PlotSpec>,
}

fn existing_file(cfg: &Config, key: &str, path: PathBuf) -> Result<PathBuf, ConfigError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(cfg.invalid(key, format!("file `{}` does not exist", path.display())))
    }
}

fn pair(cfg: &Config, key: &str, default: [f64; 2]) -> Result<[f64; 2], ConfigError> {
    match cfg.list::<f64>(key)? {
        None => Ok(default),
        Some(v) if v.len() == 2 => Ok([v[0], v[1]]),
        Some(v) => Err(cfg.invalid(key, format!("expected 2 numbers, found {}", v.len()))),
    }
}

fn dataset(cfg: &Config) -> Result<DatasetSpec, ConfigError> {
    let kind: String = cfg.get_or("dataset.kind", "ellipse_partial".to_string())?;
    match kind.as_str() {
        "ellipse_partial" => {
            let d = EllipseSetting::default();
            Ok(DatasetSpec::EllipsePartial(EllipseSetting {
                center: pair(cfg, "dataset.center", d.center)?,
                semi_axes: pair(cfg, "dataset.semi_axes", d.semi_axes)?,
                rotation: cfg.get_or("dataset.rotation", d.rotation)?,
                ..d
            }))
        }
        "trimodal" => {
            let d = TrimodalSetting::default();
            let weights = cfg.list::<f64>("dataset.weights")?;
            let spread: Option<f64> = cfg.get("dataset.spread")?;
            let components = match (weights, spread) {
                (None, None) => d.components.clone(),
                (w, s) => {
                    let w = w.unwrap_or_else(|| d.components.iter().map(|c| c.weight).collect());
                    if w.len() != d.components.len() {
                        return Err(cfg.invalid("dataset.weights", "the trimodal setting needs 3 weights"));
                    }
                    d.components
                        .iter()
                        .zip(w)
                        .map(|(c, wi)| Component::new(c.mean.clone(), s.unwrap_or(c.spread), wi))
                        .collect()
                }
            };
            Ok(DatasetSpec::Trimodal(TrimodalSetting {
                components,
                weak_threshold: cfg.get_or("dataset.weak_threshold", d.weak_threshold)?,
                ..d
            }))
        }
        other => Err(cfg.invalid("dataset.kind", format!("unknown dataset `{other}` (ellipse_partial, trimodal)"))),
    }
}

fn train(cfg: &Config, seed: u64, dim: usize) -> Result<TrainConfig, ConfigError> {
    let activation = match cfg.get_or("train.activation", "silu".to_string())?.as_str() {
        "silu" => Activation::Silu,
        "tanh" => Activation::Tanh,
        other => return Err(cfg.invalid("train.activation", format!("unknown activation `{other}`"))),
    };
    let hidden = cfg.list::<usize>("train.hidden")?.unwrap_or_else(|| vec![128; 3]);
    if hidden.is_empty() || hidden.contains(&0) {
        return Err(cfg.invalid("train.hidden", "hidden widths must be positive"));
    }
    Ok(TrainConfig {
        epochs: cfg.get_or("train.epochs", 150)?,
        batch_size: cfg.get_or("train.batch_size", 256)?,
        learning_rate: cfg.get_or("train.learning_rate", 1e-3)?,
        seed: cfg.get_or("train.seed", seed)?,
        architecture: Architecture { dim, hidden, activation },
    })
}

fn solver(cfg: &Config, prefix: &str, seed: u64) -> Result<FinetuneConfig, ConfigError> {
    let d = FinetuneConfig::default();
    let key = |name: &str| format!("solver.{prefix}.{name}");
    let clip: f64 = cfg.get_or(&key("clip_norm"), d.clip_norm.unwrap_or(0.0))?;
    Ok(FinetuneConfig {
        rounds: cfg.get_or(&key("rounds"), d.rounds)?,
        batch: cfg.get_or(&key("batch"), d.batch)?,
        steps: cfg.get_or(&key("steps"), d.steps)?,
        learning_rate: cfg.get_or(&key("learning_rate"), d.learning_rate)?,
        grad_steps: cfg.get_or(&key("grad_steps"), d.grad_steps)?,
        clip_norm: (clip > 0.0).then_some(clip),
        seed,
    })
}

fn step_schedule(cfg: &Config, prefix: &str, default: GammaSchedule) -> Result<GammaSchedule, ConfigError> {
    let kind_key = format!("{prefix}.kind");
    let kind: String = cfg.get_or(&kind_key, default.kind_name().to_string())?;
    let base = cfg.get_or(&format!("{prefix}.base"), default.base())?;
    GammaSchedule::from_kind(&kind, base)
        .ok_or_else(|| cfg.invalid(&kind_key, format!("unknown schedule `{kind}` (constant, harmonic_decay, paper_toy)")))
}

fn verifier(cfg: &Config, data: &DatasetSpec) -> Result<(Verifier, Verifier), ConfigError> {
    let kind: String = cfg.get_or("verifier.kind", "dataset".to_string())?;
    let custom = |v: fexp_core::Result<Verifier>| v.map_err(|e| cfg.invalid("verifier.kind", e.to_string()));
    let v = match kind.as_str() {
        "dataset" => return Ok((data.constraint_verifier(), data.scoring_verifier())),
        "ellipse" => custom(ellipse_verifier(
            cfg.list("verifier.center")?.unwrap_or_else(|| vec![0.0; 2]),
            cfg.list("verifier.semi_axes")?.ok_or_else(|| ConfigError::Missing { key: "verifier.semi_axes".into() })?,
            cfg.get_or("verifier.rotation", 0.0)?,
        ))?,
        "band" => custom(band_verifier(
            cfg.list("verifier.normal")?.ok_or_else(|| ConfigError::Missing { key: "verifier.normal".into() })?,
            cfg.get_or("verifier.lo", f64::NEG_INFINITY)?,
            cfg.get_or("verifier.hi", f64::INFINITY)?,
        ))?,
        "box" => custom(box_verifier(
            cfg.list("verifier.lo")?.ok_or_else(|| ConfigError::Missing { key: "verifier.lo".into() })?,
            cfg.list("verifier.hi")?.ok_or_else(|| ConfigError::Missing { key: "verifier.hi".into() })?,
        ))?,
        other => return Err(cfg.invalid("verifier.kind", format!("unknown verifier `{other}` (dataset, ellipse, band, box)"))),
    };
    Ok((v.clone(), v))
}

fn plot(cfg: &Config) -> Result<Option<PlotSpec>, ConfigError> {
    let Some(kind_name) = cfg.get::<String>("plot.kind")? else { return Ok(None) };
    let kind = PlotKind::from_name(&kind_name)
        .ok_or_else(|| cfg.invalid("plot.kind", format!("unknown plot `{kind_name}` (scatter2d, histogram1d, curve)")))?;
    let inputs: Vec<String> = cfg.list("plot.inputs")?.ok_or_else(|| ConfigError::Missing { key: "plot.inputs".into() })?;
    let inputs = inputs
        .into_iter()
        .map(|p| existing_file(cfg, "plot.inputs", PathBuf::from(p)))
        .collect::<Result<Vec<_>, _>>()?;
    if kind != PlotKind::Curve && inputs.len() != 1 {
        return Err(cfg.invalid("plot.inputs", "scatter and histogram plots take exactly one CSV"));
    }
    let (dx, dy) = match kind {
        PlotKind::Scatter2d => ("x1", "x2"),
        PlotKind::Histogram1d => ("x1", "count"),
        PlotKind::Curve => ("iteration k", "entropy"),
    };
    Ok(Some(PlotSpec {
        kind,
        inputs,
        overlay_verifier: cfg.get_or("plot.verifier", kind == PlotKind::Scatter2d)?,
        x_label: cfg.get_or("plot.x_label", dx.to_string())?,
        y_label: cfg.get_or("plot.y_label", dy.to_string())?,
        column: cfg.get("plot.column")?,
        bins: cfg.get_or("plot.bins", 40)?,
        title: cfg.get_or("plot.title", String::new())?,
        output: cfg.get_or("plot.output", "plot.svg".to_string())?,
    }))
}

impl RunConfig {
    /// Reads every known key (applying defaults) and rejects unknown ones.
    pub fn from_config(cfg: &Config) -> Result<Self, ConfigError> {
        let seed: u64 = cfg.require("seed")?;
        let out = PathBuf::from(cfg.get_or("out", "out".to_string())?);
        let data = dataset(cfg)?;
        let dim = data.dim();
        let train = train(cfg, seed, dim)?;

        let mode_name: String = cfg.get_or("expander.mode", "global".to_string())?;
        let mode = Mode::from_name(&mode_name).ok_or_else(|| {
            cfg.invalid("expander.mode", format!("unknown mode `{mode_name}` (global, local, nse, terminal_only, constr)"))
        })?;
        let schedule = match cfg.get_or("expander.schedule", "linear".to_string())?.as_str() {
            "linear" => InterpolantSchedule::Linear,
            "trigonometric" => InterpolantSchedule::Trigonometric,
            other => return Err(cfg.invalid("expander.schedule", format!("unknown schedule `{other}`"))),
        };
        let band: f64 = cfg.get_or("expander.lambda.band", 0.05)?;
        let lambda = match cfg.get_or("expander.lambda.kind", "zero_band_constant".to_string())?.as_str() {
            "zero_band_constant" => LambdaWeight::ZeroBandConstant { value: cfg.get_or("expander.lambda.value", 1.2)?, band },
            "zero_band_sigma" => LambdaWeight::ZeroBandSigma { band },
            other => return Err(cfg.invalid("expander.lambda.kind", format!("unknown weighting `{other}`"))),
        };
        let score = ScoreConfig::new(cfg.get_or("expander.epsilon_clip", 0.02)?)
            .map_err(|e| cfg.invalid("expander.epsilon_clip", e.to_string()))?;
        let (constraint, strong) = verifier(cfg, &data)?;
        let temperature: f64 = cfg.get_or("verifier.temperature", 10.0)?;
        let smooth_v = smooth(constraint.clone(), temperature).map_err(|e| cfg.invalid("verifier.temperature", e.to_string()))?;
        let expander_seed = cfg.get_or("expander.seed", seed)?;
        // Modes without an expansion or projection phase default that strength to zero.
        let default_gamma = GammaSchedule::PaperToy(if mode == Mode::Constr { 0.0 } else { 1.5 });
        let default_eta = GammaSchedule::Constant(if mode == Mode::Nse { 0.0 } else { 2.0 });
        let mut expander = ExpanderConfig {
            mode,
            iterations: cfg.get_or("expander.iterations", 10)?,
            gamma: step_schedule(cfg, "expander.gamma", default_gamma)?,
            eta: step_schedule(cfg, "expander.eta", default_eta)?,
            alpha: cfg.get_or("expander.alpha", 0.0)?,
            lambda,
            score,
            schedule,
            verifier: smooth_v,
            expand_solver: solver(cfg, "expand", expander_seed)?,
            project_solver: solver(cfg, "project", expander_seed)?,
            seed: expander_seed,
        };
        if let Some(beta) = cfg.get::<f64>("expander.beta")? {
            if cfg.contains("expander.alpha") {
                return Err(cfg.invalid("expander.beta", "set either expander.alpha or expander.beta, not both"));
            }
            expander = expander.with_beta(beta).map_err(|e| cfg.invalid("expander.beta", e.to_string()))?;
        }
        expander.validate().map_err(|e| cfg.invalid("expander.mode", e.to_string()))?;

        let scoring = match cfg.get_or("metrics.verifier", "scoring".to_string())?.as_str() {
            "scoring" => ScoringChoice::Scoring,
            "constraint" => ScoringChoice::Constraint,
            other => return Err(cfg.invalid("metrics.verifier", format!("unknown choice `{other}` (scoring, constraint)"))),
        };
        let vendi_points: usize = cfg.get_or("metrics.vendi_points", 300)?;
        let metrics = MetricConfig {
            samples: cfg.get_or("metrics.samples", 5000)?,
            ode_steps: cfg.get_or("metrics.ode_steps", 200)?,
            knn_k: cfg.get_or("metrics.knn_k", 5)?,
            vendi_points: (vendi_points > 0).then_some(vendi_points),
            seed: cfg.get_or("metrics.seed", seed)?,
        };
        let metrics_every = cfg.get_or("metrics.every", 1)?;
        let pretrained = match cfg.get::<String>("expander.pretrained")? {
            None => None,
            Some(p) => Some(existing_file(cfg, "expander.pretrained", PathBuf::from(p))?),
        };
        let oracle = OracleSettings {
            instances: cfg.get_or("oracle.instances", 1000)?,
            max_cells: cfg.get_or("oracle.max_cells", 200)?,
            rate_instances: cfg.get_or("oracle.rate_instances", 100)?,
            iterations: cfg.get_or("oracle.iterations", 50)?,
            gamma: cfg.get_or("oracle.gamma", 0.3)?,
            alphas: cfg.list("oracle.alphas")?.unwrap_or_else(|| vec![0.5, 1.0, 9.0]),
            fixed_point_iterations: cfg.get_or("oracle.fixed_point_iterations", 200)?,
        };
        if oracle.max_cells < 2 {
            return Err(cfg.invalid("oracle.max_cells", "need at least 2 cells"));
        }
        let eval = EvalSettings {
            samples: match cfg.get::<String>("eval.samples")? {
                None => None,
                Some(p) => Some(existing_file(cfg, "eval.samples", PathBuf::from(p))?),
            },
            entropy: cfg.get_or("eval.entropy", true)?,
            validity: cfg.get_or("eval.validity", true)?,
            vendi: cfg.get_or("eval.vendi", true)?,
            knn_k: cfg.get_or("eval.knn_k", 5)?,
            vendi_points: cfg.get_or("eval.vendi_points", 1000)?,
        };
        let plot = plot(cfg)?;
        let dataset_size = cfg.get_or("dataset.n", 5000)?;
        let dataset_seed = cfg.get_or("dataset.seed", seed)?;
        cfg.finish()?;
        let scoring_verifier = match scoring {
            ScoringChoice::Scoring => strong,
            ScoringChoice::Constraint => constraint,
        };
        Ok(RunConfig {
            seed,
            out,
            dataset: data,
            dataset_size,
            dataset_seed,
            train,
            expander,
            metrics,
            metrics_every,
            scoring,
            scoring_verifier,
            pretrained,
            oracle,
            eval,
            plot,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_config(&Config::load(path)?)
    }
}
