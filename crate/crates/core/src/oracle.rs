//! Exact mirror ascent on a finite probability simplex.
//!
//! Every step has a closed form (an exponential tilt restricted to the
//! support mask), so the discrete iterates serve as ground truth for the
//! expand-then-project decomposition and for convergence-rate bounds.

use alloc::vec::Vec;

use crate::error::bail;
use crate::math::{exp, ln};
use crate::{Error, Result};

const MASS_TOL: f64 = 1e-12;

/// Probability vector over m grid cells. Weights are kept alongside their
/// logarithms so long runs can carry masses below the f64 subnormal range.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    centers: Option<Vec<Vec<f64>>>,
}

impl DiscreteMeasure {
    /// Normalizes non-negative weights.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            bail!(Domain, "weights must be finite and non-negative");
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Infeasible);
        }
        Self::from_log_weights(weights.iter().map(|&w| if w > 0.0 { ln(w) } else { f64::NEG_INFINITY }).collect())
    }

    /// Normalizes unnormalized log weights; `-inf` marks an empty cell.
    pub fn from_log_weights(mut log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            bail!(Domain, "log weights must be < +inf");
        }
        let z = logsumexp(&log_weights);
        if z == f64::NEG_INFINITY {
            return Err(Error::Infeasible);
        }
        log_weights.iter_mut().for_each(|l| *l -= z);
        let mut weights: Vec<f64> = log_weights.iter().map(|&l| exp(l)).collect();
        // absorb rounding so the mass is one to the last bit the sum can see
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        Ok(DiscreteMeasure { log_weights, weights, centers: None })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        Self::new(alloc::vec![1.0; m])
    }

    pub fn with_centers(mut self, centers: Vec<Vec<f64>>) -> Result<Self> {
        if centers.len() != self.len() {
            bail!(Dimension, "{} centers for {} cells", centers.len(), self.len());
        }
        self.centers = Some(centers);
        Ok(self)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn centers(&self) -> Option<&[Vec<f64>]> {
        self.centers.as_deref()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_variation(&self, other: &Self) -> Result<f64> {
        same_len(self.len(), other.len())?;
        Ok(0.5 * self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }
}

/// Cells belonging to the verifier's accept set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMask(Vec<bool>);

impl SupportMask {
    pub fn new(cells: Vec<bool>) -> Result<Self> {
        if !cells.iter().any(|&c| c) {
            return Err(Error::Infeasible);
        }
        Ok(SupportMask(cells))
    }

    pub fn full(m: usize) -> Self {
        SupportMask(alloc::vec![true; m])
    }

    pub fn cells(&self) -> &[bool] {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&c| c).count()
    }
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        bail!(Dimension, "length {a} vs {b}");
    }
    Ok(())
}

fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + ln(xs.iter().map(|&x| exp(x - max)).sum::<f64>())
}

/// −Σ q log q with 0·log 0 = 0.
pub fn entropy(q: &DiscreteMeasure) -> f64 {
    -q.weights.iter().zip(&q.log_weights).filter(|(w, _)| **w > 0.0).map(|(w, l)| w * l).sum::<f64>()
}

/// Σ q log(q/p); infinite when q charges a cell p does not.
pub fn kl(q: &DiscreteMeasure, p: &DiscreteMeasure) -> Result<f64> {
    same_len(q.len(), p.len())?;
    let mut total = 0.0;
    for i in 0..q.len() {
        if q.weights[i] == 0.0 && q.log_weights[i] == f64::NEG_INFINITY {
            continue;
        }
        if p.log_weights[i] == f64::NEG_INFINITY {
            return Err(Error::InfiniteDivergence);
        }
        total += q.weights[i] * (q.log_weights[i] - p.log_weights[i]);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// H(q).
    Entropy,
    /// H(q) − α·KL(q ‖ reference).
    EntropyMinusKl { alpha: f64, reference: DiscreteMeasure },
}

impl Objective {
    pub fn value(&self, q: &DiscreteMeasure) -> Result<f64> {
        match self {
            Objective::Entropy => Ok(entropy(q)),
            Objective::EntropyMinusKl { alpha, reference } => Ok(entropy(q) - alpha * kl(q, reference)?),
        }
    }

    /// Analytic maximizer over measures supported on `mask`: uniform for the
    /// entropy, ∝ p^{α/(1+α)} for the KL-anchored objective.
    pub fn maximizer(&self, mask: &SupportMask) -> Result<DiscreteMeasure> {
        let logs = match self {
            Objective::Entropy => mask.0.iter().map(|&c| if c { 0.0 } else { f64::NEG_INFINITY }).collect(),
            Objective::EntropyMinusKl { alpha, reference } => {
                same_len(mask.0.len(), reference.len())?;
                let beta = alpha / (1.0 + alpha);
                mask.0
                    .iter()
                    .zip(&reference.log_weights)
                    .map(|(&c, &l)| if c { beta * l } else { f64::NEG_INFINITY })
                    .collect()
            }
        };
        DiscreteMeasure::from_log_weights(logs)
    }
}

/// First variation of the objective at q on the masked cells; cells outside
/// the mask get 0 since the constrained step never reads them.
pub fn first_variation(objective: &Objective, q: &DiscreteMeasure, mask: &SupportMask) -> Result<Vec<f64>> {
    same_len(q.len(), mask.0.len())?;
    let reference = match objective {
        Objective::Entropy => None,
        Objective::EntropyMinusKl { alpha, reference } => {
            same_len(q.len(), reference.len())?;
            Some((*alpha, reference))
        }
    };
    let mut out = alloc::vec![0.0; q.len()];
    for (i, g) in out.iter_mut().enumerate() {
        if !mask.0[i] {
            continue;
        }
        let lq = q.log_weights[i];
        if lq == f64::NEG_INFINITY {
            bail!(Domain, "cell {i} is in the mask but carries no mass");
        }
        *g = -lq - 1.0;
        if let Some((alpha, p)) = reference {
            if p.log_weights[i] == f64::NEG_INFINITY {
                return Err(Error::InfiniteDivergence);
            }
            *g -= alpha * (lq - p.log_weights[i] + 1.0);
        }
    }
    Ok(out)
}

fn check_step(q: &DiscreteMeasure, grad: &[f64], gamma: f64, mask: &SupportMask) -> Result<()> {
    same_len(q.len(), grad.len())?;
    same_len(q.len(), mask.0.len())?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        bail!(Domain, "step size must be positive, got {gamma}");
    }
    Ok(())
}

/// Constrained mirror-ascent step: q′ ∝ q·exp(γ·grad) on the mask.
pub fn md_step(q: &DiscreteMeasure, grad: &[f64], gamma: f64, mask: &SupportMask) -> Result<DiscreteMeasure> {
    check_step(q, grad, gamma, mask)?;
    let logs = (0..q.len())
        .map(|i| if mask.0[i] { q.log_weights[i] + gamma * grad[i] } else { f64::NEG_INFINITY })
        .collect();
    DiscreteMeasure::from_log_weights(logs)
}

/// The same step split in two: an unconstrained tilt q̃ ∝ q·exp(γ·grad),
/// then the information projection onto the mask (restrict and renormalize).
pub fn expand_then_project_discrete(
    q: &DiscreteMeasure,
    grad: &[f64],
    gamma: f64,
    mask: &SupportMask,
) -> Result<DiscreteMeasure> {
    check_step(q, grad, gamma, mask)?;
    let expanded = DiscreteMeasure::from_log_weights(
        q.log_weights.iter().zip(grad).map(|(l, g)| l + gamma * g).collect(),
    )?;
    project(&expanded, mask)
}

/// argmin_{r supported on mask} KL(r ‖ q).
pub fn project(q: &DiscreteMeasure, mask: &SupportMask) -> Result<DiscreteMeasure> {
    same_len(q.len(), mask.0.len())?;
    let logs = q
        .log_weights
        .iter()
        .zip(&mask.0)
        .map(|(&l, &c)| if c { l } else { f64::NEG_INFINITY })
        .collect();
    DiscreteMeasure::from_log_weights(logs)
}

/// Iterates and convergence diagnostics of a mirror-ascent run.
#[derive(Debug, Clone)]
pub struct MdRun {
    /// q⁰, q¹, …, q^K.
    pub iterates: Vec<DiscreteMeasure>,
    pub optimum: DiscreteMeasure,
    /// L(q*) − L(q^k) for k = 0..=K.
    pub gaps: Vec<f64>,
    /// KL(q*‖q⁰) / Σ_{j≤k} γ_j for k = 0..=K (+inf at k = 0).
    pub bounds: Vec<f64>,
}

impl MdRun {
    /// Index of the first iterate whose gap exceeds its bound by more than `slack`.
    pub fn first_violation(&self, slack: f64) -> Option<usize> {
        self.gaps.iter().zip(&self.bounds).position(|(g, b)| *g > b + slack)
    }
}

/// Runs K constrained mirror-ascent steps with step sizes `gamma(k)`, k ≥ 1.
pub fn run_md(
    q0: &DiscreteMeasure,
    objective: &Objective,
    gamma: impl Fn(usize) -> f64,
    mask: &SupportMask,
    iterations: usize,
) -> Result<MdRun> {
    same_len(q0.len(), mask.0.len())?;
    let optimum = objective.maximizer(mask)?;
    let best = objective.value(&optimum)?;
    let divergence = kl(&optimum, q0)?;
    let mut iterates = Vec::with_capacity(iterations + 1);
    let mut gaps = Vec::with_capacity(iterations + 1);
    let mut bounds = Vec::with_capacity(iterations + 1);
    let mut q = q0.clone();
    let mut step_sum = 0.0;
    gaps.push(best - objective.value(&q)?);
    bounds.push(f64::INFINITY);
    for k in 1..=iterations {
        let g = gamma(k);
        let grad = first_variation(objective, &q, mask)?;
        let next = md_step(&q, &grad, g, mask)?;
        iterates.push(core::mem::replace(&mut q, next));
        step_sum += g;
        gaps.push(best - objective.value(&q)?);
        bounds.push(divergence / step_sum);
    }
    iterates.push(q);
    Ok(MdRun { iterates, optimum, gaps, bounds })
}

/// True when the weights sum to one within 1e-12 and are non-negative.
pub fn is_probability(q: &DiscreteMeasure) -> bool {
    q.weights.iter().all(|&w| w >= 0.0) && (q.weights.iter().sum::<f64>() - 1.0).abs() < MASS_TOL
}
