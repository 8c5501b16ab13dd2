//! Adjoint Matching fine-tuning of a velocity field against trajectory and
//! terminal rewards.
//!
//! Rewards are maximized. For a terminal reward f₁ and running rewards f_t
//! weighted by w(t), the lean adjoint is
//!
//! ```text
//! ã₁      = −w₁ ∇f₁(X₁)
//! ã_{t−h} = ã_t + h ã_tᵀ ∇_x(2u_base(X_t, t) − (ω̇_t/ω_t) X_t) − h w(t) ∇f_t(X_t)
//! ```
//!
//! and the tuned field regresses onto u_base − (σ(t)²/2) ã_t, which tilts the
//! path measure by exp(w₁f₁ + ∫ w f dt).

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::diffcore::{kernels, Tape, Tensor};
use crate::error::bail;
use crate::flowmodel::{Velocity, VelocityField};
use crate::optim::{clip_global_norm, Adam};
use crate::rng::derive_seed;
use crate::sampler::{sample_memoryless_sde, Trajectories};
use crate::schedules::InterpolantSchedule;
use crate::{Error, Result};

type RunningGrad<'a> = Box<dyn Fn(&Tensor, f64) -> Result<Tensor> + 'a>;
type TerminalGrad<'a> = Box<dyn Fn(&Tensor) -> Result<Tensor> + 'a>;

/// Reward gradients driving one fine-tuning solve. Missing gradients are
/// identically zero.
pub struct RewardSpec<'a> {
    running_grad: Option<RunningGrad<'a>>,
    running_weight: Box<dyn Fn(f64) -> f64 + 'a>,
    terminal_grad: Option<TerminalGrad<'a>>,
    terminal_weight: f64,
}

impl<'a> RewardSpec<'a> {
    pub fn zero() -> Self {
        RewardSpec { running_grad: None, running_weight: Box::new(|_| 0.0), terminal_grad: None, terminal_weight: 0.0 }
    }

    /// Running reward gradient ∇f_t on an n × d batch at time t, premultiplied by `weight(t)`.
    pub fn with_running(
        mut self,
        grad: impl Fn(&Tensor, f64) -> Result<Tensor> + 'a,
        weight: impl Fn(f64) -> f64 + 'a,
    ) -> Self {
        self.running_grad = Some(Box::new(grad));
        self.running_weight = Box::new(weight);
        self
    }

    /// Terminal reward gradient ∇f₁ on an n × d batch, scaled by `weight`.
    pub fn with_terminal(mut self, grad: impl Fn(&Tensor) -> Result<Tensor> + 'a, weight: f64) -> Self {
        self.terminal_grad = Some(Box::new(grad));
        self.terminal_weight = weight;
        self
    }

    pub fn running_weight(&self, t: f64) -> f64 {
        if self.running_grad.is_some() { (self.running_weight)(t) } else { 0.0 }
    }

    pub fn terminal_weight(&self) -> f64 {
        if self.terminal_grad.is_some() { self.terminal_weight } else { 0.0 }
    }

    /// w(t)·∇f_t(xs), or `None` when the running term vanishes at t.
    fn weighted_running(&self, xs: &Tensor, t: f64) -> Result<Option<Tensor>> {
        match &self.running_grad {
            Some(g) => {
                let w = (self.running_weight)(t);
                if w == 0.0 {
                    return Ok(None);
                }
                Ok(Some(kernels::scale(&g(xs, t)?, w)))
            }
            None => Ok(None),
        }
    }
}

/// Lean adjoint values aligned with a trajectory batch: `values[i]` is m × d
/// at `times[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointStates {
    pub values: Vec<Tensor>,
}

/// Solves the lean adjoint ODE backwards along `trajs` with the drift of
/// `base`; base parameters are frozen.
pub fn lean_adjoint_backward<V: Velocity + ?Sized>(
    trajs: &Trajectories,
    base: &V,
    schedule: &InterpolantSchedule,
    reward: &RewardSpec<'_>,
) -> Result<AdjointStates> {
    let n_steps = trajs.steps();
    if trajs.states.len() != trajs.times.len() || trajs.dim() != base.dim() {
        bail!(Dimension, "trajectory grid/dimension does not match the base field");
    }
    let (m, d) = (trajs.count(), trajs.dim());
    let mut values = alloc::vec![Tensor::zeros(&[m, d]); n_steps + 1];
    let mut a = Tensor::zeros(&[m, d]);
    let w1 = reward.terminal_weight();
    if let (Some(g), true) = (&reward.terminal_grad, w1 != 0.0) {
        a = kernels::scale(&g(trajs.terminal())?, -w1);
    }
    values[n_steps] = a.clone();
    for i in (1..=n_steps).rev() {
        let t = trajs.times[i];
        let h = t - trajs.times[i - 1];
        let x = &trajs.states[i];
        let ratio = schedule.omega_ratio(t)?;
        let vjp_u = base.velocity_vjp(x, t, &a)?;
        let forcing = reward.weighted_running(x, t)?;
        for (k, (ai, ji)) in a.data_mut().iter_mut().zip(vjp_u.data()).enumerate() {
            let drift_vjp = 2.0 * ji - ratio * *ai;
            *ai += h * drift_vjp;
            if let Some(f) = &forcing {
                *ai -= h * f.data()[k];
            }
        }
        if !a.is_finite() {
            return Err(Error::Integration { step: i, detail: format!("non-finite adjoint at t = {t}") });
        }
        values[i - 1] = a.clone();
    }
    Ok(AdjointStates { values })
}

/// Regression rows of the Adjoint Matching loss over grid points t < 1.
struct MatchingBatch {
    xs: Tensor,
    ts: Tensor,
    target: Tensor,
    /// diag(2/σ) as a dense matrix so the row weighting stays a matmul.
    row_scale: Tensor,
}

fn matching_batch<V: Velocity + ?Sized>(
    trajs: &Trajectories,
    adjoints: &AdjointStates,
    base: &V,
    schedule: &InterpolantSchedule,
) -> Result<MatchingBatch> {
    let (m, d, n_steps) = (trajs.count(), trajs.dim(), trajs.steps());
    if adjoints.values.len() != n_steps + 1 || adjoints.values[0].shape() != [m, d] {
        bail!(Dimension, "adjoints are not aligned with the trajectories");
    }
    let rows = m * n_steps;
    let mut xs = Vec::with_capacity(rows * d);
    let mut ts = Vec::with_capacity(rows);
    let mut target = Vec::with_capacity(rows * d);
    let mut scale = Vec::with_capacity(rows);
    for i in 0..n_steps {
        let t = trajs.times[i];
        let sigma = schedule.sigma(t)?;
        if sigma == 0.0 {
            bail!(Schedule, "σ(t) = 0 at grid time {t}");
        }
        let x = &trajs.states[i];
        let ub = base.velocity(x, t)?;
        let half_s2 = 0.5 * sigma * sigma;
        xs.extend_from_slice(x.data());
        target.extend(ub.data().iter().zip(adjoints.values[i].data()).map(|(u, a)| u - half_s2 * a));
        ts.extend(core::iter::repeat_n(t, m));
        scale.extend(core::iter::repeat_n(2.0 / sigma, m));
    }
    let mut row_scale = Tensor::zeros(&[rows, rows]);
    for (r, s) in scale.iter().enumerate() {
        row_scale.data_mut()[r * rows + r] = *s;
    }
    Ok(MatchingBatch {
        xs: Tensor::matrix(rows, d, xs)?,
        ts: Tensor::matrix(rows, 1, ts)?,
        target: Tensor::matrix(rows, d, target)?,
        row_scale,
    })
}

/// Σ_traj Σ_{t<1} ‖(2/σ(t))(u_tuned(X_t, t) − u_base(X_t, t)) + σ(t) ã_t‖²
/// and its gradient with respect to the tuned parameters. States and
/// adjoints are constants.
pub fn am_objective<V: Velocity + ?Sized>(
    trajs: &Trajectories,
    adjoints: &AdjointStates,
    tuned: &VelocityField,
    base: &V,
    schedule: &InterpolantSchedule,
) -> Result<(f64, Vec<Tensor>)> {
    let batch = matching_batch(trajs, adjoints, base, schedule)?;
    objective_on_batch(&batch, tuned)
}

fn objective_on_batch(batch: &MatchingBatch, tuned: &VelocityField) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let x = tape.constant(batch.xs.clone());
    let t = tape.constant(batch.ts.clone());
    let taped = tuned.record(&mut tape, x, t, true)?;
    let target = tape.constant(batch.target.clone());
    let scale = tape.constant(batch.row_scale.clone());
    let r = tape.sub(taped.output, target)?;
    let r = tape.matmul(scale, r)?;
    let loss_node = tape.sum_squares(r)?;
    let loss = tape.value(loss_node)?.data()[0];
    let mut grads = tape.backward(loss_node, Tensor::scalar(1.0))?;
    let g = taped.params.iter().map(|&p| grads.take(p)).collect::<Result<Vec<_>>>()?;
    Ok((loss, g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    /// Outer rounds N; trajectories are resampled under the tuned field each round.
    pub rounds: usize,
    /// Trajectories m per round.
    pub batch: usize,
    /// SDE grid steps.
    pub steps: usize,
    pub learning_rate: f64,
    /// Optimizer steps taken on each round's regression batch.
    pub grad_steps: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            rounds: 4,
            batch: 4,
            steps: 40,
            learning_rate: 5.5e-4,
            grad_steps: 1,
            clip_norm: Some(10.0),
            seed: 0,
        }
    }
}

/// Mean Adjoint Matching loss per round.
#[derive(Debug, Clone, Default)]
pub struct FinetuneTrace {
    pub round_losses: Vec<f64>,
}

/// Adjoint Matching: starting from a copy of `base`, alternately sample
/// memoryless-SDE trajectories under the tuned field, solve the lean adjoint
/// under the base drift, and take optimizer steps on the matching loss.
pub fn finetune(
    base: &VelocityField,
    reward: &RewardSpec<'_>,
    schedule: &InterpolantSchedule,
    cfg: &FinetuneConfig,
) -> Result<VelocityField> {
    finetune_traced(base, reward, schedule, cfg).map(|(f, _)| f)
}

pub fn finetune_traced(
    base: &VelocityField,
    reward: &RewardSpec<'_>,
    schedule: &InterpolantSchedule,
    cfg: &FinetuneConfig,
) -> Result<(VelocityField, FinetuneTrace)> {
    if cfg.rounds == 0 || cfg.batch == 0 || cfg.steps < 2 || cfg.grad_steps == 0 || !(cfg.learning_rate > 0.0) {
        bail!(Domain, "fine-tuning config must be positive: {cfg:?}");
    }
    let mut tuned = base.clone();
    let mut opt = Adam::new(cfg.learning_rate);
    let mut trace = FinetuneTrace::default();
    for round in 0..cfg.rounds {
        let trajs = sample_memoryless_sde(&tuned, cfg.batch, cfg.steps, schedule, derive_seed(cfg.seed, round as u64))
            .map_err(|e| training_error(round, e))?;
        let adj = lean_adjoint_backward(&trajs, base, schedule, reward).map_err(|e| training_error(round, e))?;
        let batch = matching_batch(&trajs, &adj, base, schedule)?;
        let mut total = 0.0;
        for _ in 0..cfg.grad_steps {
            let (loss, mut grads) = objective_on_batch(&batch, &tuned)?;
            if !loss.is_finite() {
                return Err(Error::Training { epoch: round, detail: format!("matching loss {loss}") });
            }
            total += loss;
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            opt.step(&mut tuned.params_mut(), &grads);
        }
        trace.round_losses.push(total / cfg.grad_steps as f64);
    }
    Ok((tuned, trace))
}

fn training_error(round: usize, e: Error) -> Error {
    match e {
        Error::Integration { step, detail } => {
            Error::Training { epoch: round, detail: format!("step {step}: {detail}") }
        }
        other => other,
    }
}
