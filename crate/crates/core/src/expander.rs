//! Flow Expander outer loops: mirror-ascent iterations whose steps are an
//! entropy-increasing expansion followed by a projection onto the verifier's
//! accept set, each solved by Adjoint Matching.

use alloc::string::String;
use alloc::vec::Vec;

use crate::adjoint::{finetune, FinetuneConfig, RewardSpec};
use crate::diffcore::{kernels, Tensor};
use crate::error::bail;
use crate::flowmodel::{Velocity, VelocityField};
use crate::metrics::{knn_entropy_seeded, validity, vendi, KernelSpec};
use crate::rng::{derive_seed, tags};
use crate::sampler::{sample_ode, score_batch, ScoreConfig};
use crate::schedules::{reparametrize_beta, GammaSchedule, InterpolantSchedule, LambdaWeight};
use crate::verifier::{SmoothVerifier, Verifier};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Entropy maximization inside the verifier set.
    Global,
    /// Entropy maximization anchored to the pre-trained model by a KL term.
    Local,
    /// Expansion steps only, no projection.
    Nse,
    /// Unconstrained terminal-score reward, no running cost.
    TerminalOnly,
    /// Projection steps only.
    Constr,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Global => "global",
            Mode::Local => "local",
            Mode::Nse => "nse",
            Mode::TerminalOnly => "terminal_only",
            Mode::Constr => "constr",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "global" => Mode::Global,
            "local" => Mode::Local,
            "nse" => Mode::Nse,
            "terminal_only" => Mode::TerminalOnly,
            "constr" => Mode::Constr,
            _ => return None,
        })
    }

    /// Phases executed, in order, within one outer iteration.
    pub fn phases(self) -> &'static [Phase] {
        match self {
            Mode::Global | Mode::Local => &[Phase::Expand, Phase::Project],
            Mode::Nse => &[Phase::Expand],
            Mode::TerminalOnly => &[Phase::Terminal],
            Mode::Constr => &[Phase::Project],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pre,
    Expand,
    Project,
    Terminal,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pre => "pre",
            Phase::Expand => "expand",
            Phase::Project => "project",
            Phase::Terminal => "terminal",
        }
    }

    fn seed_tag(self) -> u64 {
        match self {
            Phase::Pre => tags::FINETUNE,
            Phase::Expand => tags::EXPAND,
            Phase::Project => tags::PROJECT,
            Phase::Terminal => tags::FINETUNE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExpanderConfig {
    pub mode: Mode,
    pub iterations: usize,
    /// Expansion strengths γ_k.
    pub gamma: GammaSchedule,
    /// Projection strengths η_k.
    pub eta: GammaSchedule,
    /// KL anchor weight α for local mode.
    pub alpha: f64,
    pub lambda: LambdaWeight,
    pub score: ScoreConfig,
    pub schedule: InterpolantSchedule,
    pub verifier: SmoothVerifier,
    pub expand_solver: FinetuneConfig,
    pub project_solver: FinetuneConfig,
    pub seed: u64,
}

impl ExpanderConfig {
    /// Mode-consistency checks.
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            bail!(Domain, "at least one outer iteration is required");
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            bail!(Domain, "α must be finite and non-negative, got {}", self.alpha);
        }
        if self.gamma.base() < 0.0 || self.eta.base() < 0.0 {
            bail!(Domain, "γ and η schedules must be non-negative");
        }
        match self.mode {
            Mode::Global | Mode::Nse if self.alpha != 0.0 => {
                bail!(Domain, "{} mode carries no KL anchor; α must be 0", self.mode.name())
            }
            Mode::Nse if self.eta.base() != 0.0 => bail!(Domain, "nse mode has no projection; η must be 0"),
            Mode::Constr if self.gamma.base() != 0.0 => {
                bail!(Domain, "constr mode has no expansion; γ must be 0")
            }
            _ => Ok(()),
        }
    }

    /// Switches to the bounded (β, γ̃) parametrization: α = β/(1−β) and every
    /// γ_k is divided by α + 1.
    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        let (alpha, factor) = reparametrize_beta(beta, 1.0)?;
        self.alpha = alpha;
        self.gamma = match self.gamma {
            GammaSchedule::Constant(b) => GammaSchedule::Constant(b * factor),
            GammaSchedule::HarmonicDecay(b) => GammaSchedule::HarmonicDecay(b * factor),
            GammaSchedule::PaperToy(b) => GammaSchedule::PaperToy(b * factor),
        };
        Ok(self)
    }

    fn phase_solver(&self, phase: Phase, k: usize) -> FinetuneConfig {
        let base = if phase == Phase::Project { &self.project_solver } else { &self.expand_solver };
        FinetuneConfig { seed: derive_seed(derive_seed(self.seed, phase.seed_tag()), k as u64), ..base.clone() }
    }
}

/// ∇_x f_t for the expansion reward: −s^π_t(x) in global mode, and
/// −s^π_t(x) − α(s^π_t(x) − s^pre_t(x)) in local mode.
#[allow(clippy::too_many_arguments)]
pub fn running_cost_grad<C: Velocity + ?Sized, P: Velocity + ?Sized>(
    mode: Mode,
    current: &C,
    pre: &P,
    schedule: &InterpolantSchedule,
    alpha: f64,
    xs: &Tensor,
    t: f64,
    score_cfg: &ScoreConfig,
) -> Result<Tensor> {
    let s = score_batch(current, schedule, xs, t, score_cfg)?;
    match mode {
        Mode::Global | Mode::Nse => Ok(kernels::scale(&s, -1.0)),
        Mode::Local => {
            let s_pre = score_batch(pre, schedule, xs, t, score_cfg)?;
            let data = s.data().iter().zip(s_pre.data()).map(|(a, b)| -a - alpha * (a - b)).collect();
            Tensor::new(s.shape().to_vec(), data)
        }
        Mode::TerminalOnly | Mode::Constr => {
            bail!(Domain, "{} mode has no running cost", mode.name())
        }
    }
}

/// Expansion: Adjoint Matching with running reward γ_k λ_t f_t and no
/// terminal term, anchored at `field_in`.
pub fn expand_step(field_in: &VelocityField, pre: &VelocityField, cfg: &ExpanderConfig, k: usize) -> Result<VelocityField> {
    let gamma = cfg.gamma.at(k)?;
    let solver = cfg.phase_solver(Phase::Expand, k);
    if gamma == 0.0 {
        return Ok(field_in.clone());
    }
    let mode = if cfg.mode == Mode::Local { Mode::Local } else { Mode::Global };
    let (schedule, steps) = (cfg.schedule, solver.steps);
    let reward = RewardSpec::zero().with_running(
        |xs: &Tensor, t| running_cost_grad(mode, field_in, pre, &schedule, cfg.alpha, xs, t, &cfg.score),
        move |t| gamma * cfg.lambda.at(&schedule, t, steps),
    );
    finetune(field_in, &reward, &cfg.schedule, &solver)
}

/// Projection: Adjoint Matching with terminal reward η_k log ṽ.
pub fn project_step(
    field_in: &VelocityField,
    verifier: &SmoothVerifier,
    eta: f64,
    cfg: &ExpanderConfig,
    k: usize,
) -> Result<VelocityField> {
    if eta < 0.0 {
        bail!(Domain, "η must be non-negative, got {eta}");
    }
    if eta == 0.0 {
        return Ok(field_in.clone());
    }
    let reward = RewardSpec::zero().with_terminal(|xs: &Tensor| verifier.grad_log_batch(xs), eta);
    finetune(field_in, &reward, &cfg.schedule, &cfg.phase_solver(Phase::Project, k))
}

/// Terminal-score baseline: terminal reward γ_k·(−s^π_{1−ε}) without running cost or projection.
pub fn terminal_step(field_in: &VelocityField, cfg: &ExpanderConfig, k: usize) -> Result<VelocityField> {
    let gamma = cfg.gamma.at(k)?;
    if gamma == 0.0 {
        return Ok(field_in.clone());
    }
    let reward = RewardSpec::zero().with_terminal(
        |xs: &Tensor| Ok(kernels::scale(&score_batch(field_in, &cfg.schedule, xs, 1.0, &cfg.score)?, -1.0)),
        gamma,
    );
    finetune(field_in, &reward, &cfg.schedule, &cfg.phase_solver(Phase::Terminal, k))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSnapshot {
    pub entropy: f64,
    pub validity: f64,
    pub vendi: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MetricConfig {
    pub samples: usize,
    pub ode_steps: usize,
    pub knn_k: usize,
    /// Points used for VENDI (the kernel matrix is quadratic); `None` skips it.
    pub vendi_points: Option<usize>,
    pub seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { samples: 5000, ode_steps: 200, knn_k: 5, vendi_points: Some(300), seed: 0 }
    }
}

/// Samples the field's ODE and measures entropy, validity and VENDI.
pub fn snapshot<V: Velocity + ?Sized>(field: &V, verifier: &Verifier, cfg: &MetricConfig) -> Result<(MetricSnapshot, Tensor)> {
    let samples = sample_ode(field, cfg.samples, cfg.ode_steps, derive_seed(cfg.seed, tags::METRICS))?;
    Ok((measure(&samples, verifier, cfg)?, samples))
}

pub fn measure(samples: &Tensor, verifier: &Verifier, cfg: &MetricConfig) -> Result<MetricSnapshot> {
    let entropy = knn_entropy_seeded(samples, cfg.knn_k, cfg.seed)?;
    let vendi = match cfg.vendi_points {
        Some(m) if m > 0 => {
            let m = m.min(samples.rows());
            let head = Tensor::matrix(m, samples.cols(), samples.data()[..m * samples.cols()].to_vec())?;
            Some(vendi(&head, &KernelSpec::median_rbf(&head))?)
        }
        _ => None,
    };
    Ok(MetricSnapshot { entropy, validity: validity(samples, verifier), vendi })
}

/// One completed phase of the outer loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    pub k: usize,
    pub phase: Phase,
    pub snapshot: Option<MetricSnapshot>,
    pub checkpoint: Option<String>,
    pub wall_seconds: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub field: VelocityField,
    pub records: Vec<IterateRecord>,
}

/// Failure mid-run: the error plus everything completed before it.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: Error,
    pub records: Vec<IterateRecord>,
    pub last_field: VelocityField,
}

/// Callback invoked after the pre-trained record and after every phase; it
/// may attach metrics, checkpoint paths and timings to the record.
pub type Observer<'a> = dyn FnMut(&mut IterateRecord, &VelocityField) -> Result<()> + 'a;

/// Runs K outer iterations from `pre` in the configured mode.
pub fn run(pre: &VelocityField, cfg: &ExpanderConfig, observer: &mut Observer<'_>) -> core::result::Result<RunOutput, RunFailure> {
    let mut records = Vec::new();
    let fail = |error: Error, records: Vec<IterateRecord>, last_field: VelocityField| RunFailure { error, records, last_field };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, records, pre.clone()));
    }
    let mut field = pre.clone();
    let mut record = IterateRecord { k: 0, phase: Phase::Pre, snapshot: None, checkpoint: None, wall_seconds: None };
    if let Err(e) = observer(&mut record, &field) {
        return Err(fail(e, records, field));
    }
    records.push(record);
    for k in 1..=cfg.iterations {
        for &phase in cfg.mode.phases() {
            let step = match phase {
                Phase::Expand => expand_step(&field, pre, cfg, k),
                Phase::Project => cfg.eta.at(k).and_then(|eta| project_step(&field, &cfg.verifier, eta, cfg, k)),
                Phase::Terminal => terminal_step(&field, cfg, k),
                Phase::Pre => unreachable!("pre is not an iteration phase"),
            };
            match step {
                Ok(next) => field = next,
                Err(e) => return Err(fail(e, records, field)),
            }
            let mut record = IterateRecord { k, phase, snapshot: None, checkpoint: None, wall_seconds: None };
            if let Err(e) = observer(&mut record, &field) {
                return Err(fail(e, records, field));
            }
            records.push(record);
        }
    }
    Ok(RunOutput { field, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowmodel::analytic::GaussianTarget;
    use crate::flowmodel::{Activation, Architecture};
    use crate::verifier::{ellipse_verifier, smooth};

    fn small_field(seed: u64) -> VelocityField {
        VelocityField::init(&Architecture { dim: 2, hidden: vec![16, 16], activation: Activation::Silu }, seed)
    }

    fn config(mode: Mode) -> ExpanderConfig {
        let v = ellipse_verifier(vec![0.0, 0.0], vec![2.0, 1.2], 0.4).unwrap();
        ExpanderConfig {
            mode,
            iterations: 2,
            gamma: GammaSchedule::PaperToy(if mode == Mode::Constr { 0.0 } else { 1.5 }),
            eta: GammaSchedule::Constant(if mode == Mode::Nse { 0.0 } else { 2.0 }),
            alpha: if mode == Mode::Local { 0.99 } else { 0.0 },
            lambda: LambdaWeight::ZeroBandConstant { value: 1.2, band: 0.05 },
            score: ScoreConfig::default(),
            schedule: InterpolantSchedule::Linear,
            verifier: smooth(v, 8.0).unwrap(),
            expand_solver: FinetuneConfig { rounds: 2, batch: 3, steps: 10, ..FinetuneConfig::default() },
            project_solver: FinetuneConfig { rounds: 2, batch: 3, steps: 10, ..FinetuneConfig::default() },
            seed: 7,
        }
    }

    #[test]
    fn local_gradient_reductions() {
        let (cur, pre) = (small_field(1), small_field(2));
        let xs = Tensor::from_rows(&[&[0.3, -0.2], &[1.0, 0.5]]).unwrap();
        let sc = ScoreConfig::default();
        let lin = InterpolantSchedule::Linear;
        for t in [0.1, 0.5, 0.99] {
            let g = running_cost_grad(Mode::Global, &cur, &pre, &lin, 0.0, &xs, t, &sc).unwrap();
            let l = running_cost_grad(Mode::Local, &cur, &pre, &lin, 0.0, &xs, t, &sc).unwrap();
            assert_eq!(g, l);
            let same = running_cost_grad(Mode::Local, &pre, &pre, &lin, 3.7, &xs, t, &sc).unwrap();
            let global_pre = running_cost_grad(Mode::Global, &pre, &pre, &lin, 0.0, &xs, t, &sc).unwrap();
            assert_eq!(same, global_pre);
        }
    }

    #[test]
    fn gaussian_running_grad_is_negative_score() {
        let target = GaussianTarget::point_mass(vec![1.0, -2.0]);
        let xs = Tensor::from_rows(&[&[0.4, 0.1]]).unwrap();
        let g = running_cost_grad(
            Mode::Global,
            &target,
            &target,
            &InterpolantSchedule::Linear,
            0.0,
            &xs,
            0.5,
            &ScoreConfig::default(),
        )
        .unwrap();
        let expected = [(0.4 - 0.5) / 0.25, (0.1 + 1.0) / 0.25];
        for (a, b) in g.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn validation_rules() {
        assert!(config(Mode::Global).validate().is_ok());
        let mut c = config(Mode::Global);
        c.alpha = 0.5;
        assert!(c.validate().is_err());
        let mut c = config(Mode::Nse);
        c.eta = GammaSchedule::Constant(1.0);
        assert!(c.validate().is_err());
        let mut c = config(Mode::Constr);
        c.gamma = GammaSchedule::Constant(1.0);
        assert!(c.validate().is_err());
        let mut c = config(Mode::Local);
        c.iterations = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn beta_reparametrization() {
        let c = config(Mode::Local).with_beta(0.5).unwrap();
        assert!((c.alpha - 1.0).abs() < 1e-15);
        assert!((c.gamma.base() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn no_op_pipeline_returns_pre() {
        let pre = small_field(3);
        let mut c = config(Mode::Global);
        c.gamma = GammaSchedule::Constant(0.0);
        c.eta = GammaSchedule::Constant(0.0);
        c.iterations = 1;
        let out = run(&pre, &c, &mut |_, _| Ok(())).unwrap();
        assert_eq!(out.field, pre);
        assert_eq!(out.records.len(), 3);
    }

    #[test]
    fn nse_equals_global_without_projection() {
        let pre = small_field(4);
        let nse = run(&pre, &config(Mode::Nse), &mut |_, _| Ok(())).unwrap();
        let mut g = config(Mode::Global);
        g.eta = GammaSchedule::Constant(0.0);
        let mut fields = Vec::new();
        let fe = run(&pre, &g, &mut |r, f| {
            if r.phase != Phase::Project {
                fields.push(f.clone());
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(nse.field, fe.field);
        assert_ne!(nse.field, pre);
        assert_eq!(fields.len(), 3);
    }

    #[test]
    fn observer_failure_keeps_partial_records() {
        let pre = small_field(5);
        let mut calls = 0;
        let err = run(&pre, &config(Mode::Constr), &mut |_, _| {
            calls += 1;
            if calls == 2 { Err(Error::Domain("stop".into())) } else { Ok(()) }
        })
        .unwrap_err();
        assert_eq!(err.records.len(), 1);
        assert_eq!(err.error, Error::Domain("stop".into()));
    }
}
