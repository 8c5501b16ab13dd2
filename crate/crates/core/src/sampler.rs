//! Forward simulation: Euler ODE sampling, memoryless-SDE trajectories and the
//! velocity-to-score transform.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::diffcore::Tensor;
use crate::error::bail;
use crate::flowmodel::Velocity;
use crate::math::sqrt;
use crate::rng::{tags, Rng};
use crate::schedules::{t_min, InterpolantSchedule};
use crate::{Error, Result};

/// Terminal clipping for the score transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    epsilon_clip: f64,
}

impl ScoreConfig {
    pub fn new(epsilon_clip: f64) -> Result<Self> {
        if !(epsilon_clip > 0.0 && epsilon_clip < 0.5) {
            bail!(Domain, "ε-clip must lie in (0, 0.5), got {epsilon_clip}");
        }
        Ok(ScoreConfig { epsilon_clip })
    }

    pub fn epsilon_clip(&self) -> f64 {
        self.epsilon_clip
    }

    /// t′ = min(t, 1 − ε).
    pub fn clip(&self, t: f64) -> f64 {
        t.min(1.0 - self.epsilon_clip)
    }
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig { epsilon_clip: 0.02 }
    }
}

fn standard_normal(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let mut t = Tensor::zeros(&[rows, cols]);
    rng.fill_normal(t.data_mut());
    t
}

fn check_finite(x: &Tensor, step: usize) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::Integration { step, detail: "non-finite state".into() });
    }
    Ok(())
}

/// Draws X₀ ~ N(0, I) and integrates dX = u(X, t) dt to t = 1 with `steps`
/// explicit Euler steps. Returns the n × d endpoints.
pub fn sample_ode<V: Velocity + ?Sized>(field: &V, n: usize, steps: usize, seed: u64) -> Result<Tensor> {
    if n == 0 || steps == 0 {
        bail!(Domain, "sample_ode needs n >= 1 and steps >= 1");
    }
    let mut rng = Rng::stream(seed, tags::ODE);
    let x0 = standard_normal(n, field.dim(), &mut rng);
    integrate_ode(field, x0, steps)
}

/// Euler integration of the flow ODE from given initial states at t = 0.
pub fn integrate_ode<V: Velocity + ?Sized>(field: &V, mut x: Tensor, steps: usize) -> Result<Tensor> {
    let h = 1.0 / steps as f64;
    for i in 0..steps {
        let t = i as f64 * h;
        let u = field.velocity(&x, t)?;
        for (xi, ui) in x.data_mut().iter_mut().zip(u.data()) {
            *xi += h * ui;
        }
        check_finite(&x, i)?;
    }
    Ok(x)
}

/// One simulated path of the memoryless SDE.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub noises: Vec<Vec<f64>>,
}

/// A batch of `m` memoryless-SDE paths sharing one time grid, stored
/// time-major: `states[i]` holds all m states at `times[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    pub times: Vec<f64>,
    pub states: Vec<Tensor>,
    pub noises: Vec<Tensor>,
}

impl Trajectories {
    /// Number of paths.
    pub fn count(&self) -> usize {
        self.states[0].rows()
    }

    /// Number of integration steps N (there are N + 1 states).
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.states[0].cols()
    }

    pub fn terminal(&self) -> &Tensor {
        &self.states[self.steps()]
    }

    /// Step size of the uniform grid.
    pub fn step_size(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn trajectory(&self, j: usize) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            states: self.states.iter().map(|s| s.row(j).to_vec()).collect(),
            noises: self.noises.iter().map(|s| s.row(j).to_vec()).collect(),
        }
    }

    pub fn split(&self) -> Vec<Trajectory> {
        (0..self.count()).map(|j| self.trajectory(j)).collect()
    }
}

/// Uniform grid from t_min = 1/(2·steps) to exactly 1 with `steps` cells.
pub fn sde_grid(steps: usize) -> Vec<f64> {
    let t0 = t_min(steps);
    let h = (1.0 - t0) / steps as f64;
    let mut g: Vec<f64> = (0..=steps).map(|i| t0 + i as f64 * h).collect();
    g[steps] = 1.0;
    g
}

/// Simulates `n` paths of
/// X_{t+h} = X_t + h(2u(X_t, t) − (ω̇_t/ω_t) X_t) + √h σ(t) ε_t
/// on [`sde_grid`], starting from X_{t_min} ~ N(0, I).
pub fn sample_memoryless_sde<V: Velocity + ?Sized>(
    field: &V,
    n: usize,
    steps: usize,
    schedule: &InterpolantSchedule,
    seed: u64,
) -> Result<Trajectories> {
    if n == 0 || steps < 2 {
        bail!(Domain, "memoryless SDE needs n >= 1 and steps >= 2");
    }
    let d = field.dim();
    let times = sde_grid(steps);
    let mut rng = Rng::stream(seed, tags::SDE);
    let mut x = standard_normal(n, d, &mut rng);
    let mut states = Vec::with_capacity(steps + 1);
    let mut noises = Vec::with_capacity(steps);
    states.push(x.clone());
    for i in 0..steps {
        let t = times[i];
        let h = times[i + 1] - t;
        let ratio = schedule.omega_ratio(t)?;
        let sig = schedule.sigma(t)?;
        let u = field.velocity(&x, t)?;
        let eps = standard_normal(n, d, &mut rng);
        let noise_gain = sqrt(h) * sig;
        for ((xi, ui), ei) in x.data_mut().iter_mut().zip(u.data()).zip(eps.data()) {
            *xi += h * (2.0 * ui - ratio * *xi) + noise_gain * ei;
        }
        check_finite(&x, i).map_err(|_| Error::Integration {
            step: i,
            detail: format!("non-finite SDE state at t = {t}"),
        })?;
        states.push(x.clone());
        noises.push(eps);
    }
    Ok(Trajectories { times, states, noises })
}

/// Score s_t(x) recovered from the velocity:
/// (ω_{t′} u(x, t′) − ω̇_{t′} x) / (κ_{t′}(ω̇_{t′} κ_{t′} − κ̇_{t′} ω_{t′})), t′ = min(t, 1 − ε).
pub fn score_batch<V: Velocity + ?Sized>(
    field: &V,
    schedule: &InterpolantSchedule,
    xs: &Tensor,
    t: f64,
    cfg: &ScoreConfig,
) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&t) {
        bail!(Domain, "score time {t} outside [0, 1]");
    }
    let tc = cfg.clip(t);
    if tc >= 1.0 {
        return Err(Error::Domain(format!("clipped time {tc} reached 1")));
    }
    let denom = schedule.score_denominator(tc)?;
    let (w, wd) = (schedule.omega(tc), schedule.omega_dot(tc));
    let u = field.velocity(xs, tc)?;
    let data = u.data().iter().zip(xs.data()).map(|(ui, xi)| (w * ui - wd * xi) / denom).collect();
    Tensor::new(xs.shape().to_vec(), data)
}

pub fn score<V: Velocity + ?Sized>(
    field: &V,
    schedule: &InterpolantSchedule,
    x: &[f64],
    t: f64,
    cfg: &ScoreConfig,
) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        bail!(Domain, "non-finite point");
    }
    let xs = Tensor::matrix(1, x.len(), x.to_vec())?;
    Ok(score_batch(field, schedule, &xs, t, cfg)?.into_data())
}

/// Per-partition seed for splitting a batch across workers: partition `p` of
/// a run seeded with `seed` uses `derive_seed(seed, 0x7000 + p)`.
pub fn partition_seed(seed: u64, partition: usize) -> u64 {
    crate::rng::derive_seed(seed, 0x7000 + partition as u64)
}

/// Mean and per-coordinate variance of the rows of `xs`.
pub fn moments(xs: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (xs.rows(), xs.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(xs.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for i in 0..n {
        for ((s, v), m) in var.iter_mut().zip(xs.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= (n.max(2) - 1) as f64);
    (mean, var)
}
