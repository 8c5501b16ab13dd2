//! Interpolant schedules and every time/iteration coefficient derived from them.

use crate::error::bail;
use crate::math::{cos, sin, sqrt, PI};
use crate::Result;

/// Conditional path `X_t = κ_t X_0 + ω_t X_1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InterpolantSchedule {
    /// κ = 1 − t, ω = t.
    #[default]
    Linear,
    /// κ = cos(πt/2), ω = sin(πt/2).
    Trigonometric,
}

impl InterpolantSchedule {
    pub fn kappa(&self, t: f64) -> f64 {
        match self {
            InterpolantSchedule::Linear => 1.0 - t,
            // cos(π/2) is 6e-17 in floating point; pin the endpoint
            InterpolantSchedule::Trigonometric if t == 1.0 => 0.0,
            InterpolantSchedule::Trigonometric => cos(0.5 * PI * t),
        }
    }

    pub fn omega(&self, t: f64) -> f64 {
        match self {
            InterpolantSchedule::Linear => t,
            InterpolantSchedule::Trigonometric => sin(0.5 * PI * t),
        }
    }

    pub fn kappa_dot(&self, t: f64) -> f64 {
        match self {
            InterpolantSchedule::Linear => -1.0,
            InterpolantSchedule::Trigonometric => -0.5 * PI * sin(0.5 * PI * t),
        }
    }

    pub fn omega_dot(&self, t: f64) -> f64 {
        match self {
            InterpolantSchedule::Linear => 1.0,
            InterpolantSchedule::Trigonometric if t == 1.0 => 0.0,
            InterpolantSchedule::Trigonometric => 0.5 * PI * cos(0.5 * PI * t),
        }
    }

    /// ω̇_t / ω_t, the coefficient of the state in the memoryless drift.
    pub fn omega_ratio(&self, t: f64) -> Result<f64> {
        let w = self.omega(t);
        if w <= 0.0 {
            bail!(Domain, "ω_t = {w} at t = {t}; the drift ω̇/ω is singular");
        }
        Ok(self.omega_dot(t) / w)
    }

    /// Memoryless noise level σ(t) = √(2 κ_t (ω̇_t/ω_t · κ_t − κ̇_t)).
    pub fn sigma(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t < 1.0) {
            bail!(Domain, "σ(t) needs 0 < t < 1, got {t}");
        }
        let k = self.kappa(t);
        let radicand = 2.0 * k * (self.omega_ratio(t)? * k - self.kappa_dot(t));
        if radicand < 0.0 {
            bail!(Schedule, "negative radicand {radicand} in σ({t})");
        }
        Ok(sqrt(radicand))
    }

    /// κ_t(ω̇_t κ_t − κ̇_t ω_t): the score-transform denominator multiplied by
    /// ω_t, which stays finite at t = 0.
    pub fn score_denominator(&self, t: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&t) {
            bail!(Domain, "score denominator needs 0 <= t < 1, got {t}");
        }
        let k = self.kappa(t);
        Ok(k * (self.omega_dot(t) * k - self.kappa_dot(t) * self.omega(t)))
    }

    pub fn name(&self) -> &'static str {
        match self {
            InterpolantSchedule::Linear => "linear",
            InterpolantSchedule::Trigonometric => "trigonometric",
        }
    }
}

/// Smallest time the SDE grid and σ(t) are evaluated at: half a step.
pub fn t_min(steps: usize) -> f64 {
    0.5 / steps as f64
}

/// σ(t) with t clamped into [t_min, 1 − t_min].
pub fn sigma_clamped(schedule: &InterpolantSchedule, t: f64, steps: usize) -> Result<f64> {
    let lo = t_min(steps);
    schedule.sigma(t.clamp(lo, 1.0 - lo))
}

/// Converts the bounded parametrization (β, γ̃) into (α, γ) by absorbing the
/// (α + 1) factor: α = β/(1−β), γ = γ̃/(α+1).
pub fn reparametrize_beta(beta: f64, gamma_tilde: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&beta) {
        bail!(Domain, "β must lie in [0, 1), got {beta}");
    }
    if gamma_tilde <= 0.0 {
        bail!(Domain, "γ̃ must be positive, got {gamma_tilde}");
    }
    let alpha = beta / (1.0 - beta);
    Ok((alpha, gamma_tilde / (alpha + 1.0)))
}

/// Inverse of [`reparametrize_beta`]'s first component.
pub fn beta_from_alpha(alpha: f64) -> f64 {
    alpha / (alpha + 1.0)
}

/// Inverse step sizes γ_k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSchedule {
    Constant(f64),
    /// base / (1 + k): Σγ = ∞, Σγ² < ∞.
    HarmonicDecay(f64),
    /// base / (1 + 3(k − 1)).
    PaperToy(f64),
}

impl GammaSchedule {
    pub fn at(&self, k: usize) -> Result<f64> {
        if k < 1 {
            bail!(Domain, "iterations are 1-based, got k = {k}");
        }
        let kf = k as f64;
        Ok(match *self {
            GammaSchedule::Constant(b) => b,
            GammaSchedule::HarmonicDecay(b) => b / (1.0 + kf),
            GammaSchedule::PaperToy(b) => b / (1.0 + 3.0 * (kf - 1.0)),
        })
    }

    pub fn base(&self) -> f64 {
        match *self {
            GammaSchedule::Constant(b) | GammaSchedule::HarmonicDecay(b) | GammaSchedule::PaperToy(b) => b,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            GammaSchedule::Constant(_) => "constant",
            GammaSchedule::HarmonicDecay(_) => "harmonic_decay",
            GammaSchedule::PaperToy(_) => "paper_toy",
        }
    }

    pub fn from_kind(kind: &str, base: f64) -> Option<Self> {
        match kind {
            "constant" => Some(GammaSchedule::Constant(base)),
            "harmonic_decay" => Some(GammaSchedule::HarmonicDecay(base)),
            "paper_toy" => Some(GammaSchedule::PaperToy(base)),
            _ => None,
        }
    }
}

/// Integral weights λ_t, zero on the terminal band t > 1 − band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaWeight {
    ZeroBandConstant { value: f64, band: f64 },
    /// λ_t = σ(t) off the band.
    ZeroBandSigma { band: f64 },
}

impl LambdaWeight {
    pub fn band(&self) -> f64 {
        match *self {
            LambdaWeight::ZeroBandConstant { band, .. } | LambdaWeight::ZeroBandSigma { band } => band,
        }
    }

    /// λ_t. `steps` is the grid resolution used to clamp σ near t = 0.
    pub fn at(&self, schedule: &InterpolantSchedule, t: f64, steps: usize) -> f64 {
        if t > 1.0 - self.band() {
            return 0.0;
        }
        match *self {
            LambdaWeight::ZeroBandConstant { value, .. } => value,
            LambdaWeight::ZeroBandSigma { .. } => sigma_clamped(schedule, t, steps).unwrap_or(0.0),
        }
    }

    /// λ* = ∫₀¹ λ_t dt by the midpoint rule on `steps` cells.
    pub fn integral(&self, schedule: &InterpolantSchedule, steps: usize) -> f64 {
        let h = 1.0 / steps as f64;
        (0..steps).map(|i| self.at(schedule, (i as f64 + 0.5) * h, steps) * h).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    const LIN: InterpolantSchedule = InterpolantSchedule::Linear;

    #[test]
    fn boundary_identities_are_exact() {
        for s in [InterpolantSchedule::Linear, InterpolantSchedule::Trigonometric] {
            assert_eq!(s.kappa(0.0), 1.0, "{}", s.name());
            assert_eq!(s.kappa(1.0), 0.0, "{}", s.name());
            assert_eq!(s.omega(0.0), 0.0, "{}", s.name());
            assert_eq!(s.omega(1.0), 1.0, "{}", s.name());
        }
    }

    #[test]
    fn sigma_linear_values() {
        assert!((LIN.sigma(0.5).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((LIN.sigma(0.2).unwrap() - 8f64.sqrt()).abs() < 1e-14);
        assert!(LIN.sigma(1.0 - 1e-12).unwrap() < 1e-5);
        assert!(matches!(LIN.sigma(0.0), Err(Error::Domain(_))));
        assert!(matches!(LIN.sigma(1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn sigma_squared_times_t_is_two_one_minus_t() {
        for i in 1..1000 {
            let t = i as f64 / 1000.0;
            let s = LIN.sigma(t).unwrap();
            assert!((s * s * t - 2.0 * (1.0 - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn score_denominator_linear() {
        assert_eq!(LIN.score_denominator(0.5).unwrap(), 0.5);
        assert_eq!(LIN.score_denominator(0.0).unwrap(), 1.0);
        assert!(LIN.score_denominator(1.0).is_err());
        for i in 0..1000 {
            let t = i as f64 / 1000.0;
            assert!((LIN.score_denominator(t).unwrap() - (1.0 - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn trigonometric_sigma_is_pi_cot() {
        let s = InterpolantSchedule::Trigonometric;
        for t in [0.1, 0.4, 0.9] {
            let expected = (PI * cos(0.5 * PI * t) / sin(0.5 * PI * t)).sqrt();
            assert!((s.sigma(t).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn reparametrization() {
        let g0 = 0.37;
        let (a, g) = reparametrize_beta(0.9, 10.0 * g0).unwrap();
        assert!((a - 9.0).abs() < 1e-12);
        assert!((g - g0).abs() < 1e-12);
        assert_eq!(reparametrize_beta(0.0, 2.0).unwrap(), (0.0, 2.0));
        let (a, g) = reparametrize_beta(0.5, 3.0).unwrap();
        assert_eq!((a, g), (1.0, 1.5));
        assert!(reparametrize_beta(1.0, 1.0).is_err());
        for i in 0..100 {
            let beta = i as f64 / 100.0;
            let (a, _) = reparametrize_beta(beta, 1.0).unwrap();
            assert!((beta_from_alpha(a) - beta).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_schedules() {
        assert_eq!(GammaSchedule::PaperToy(1.5).at(1).unwrap(), 1.5);
        assert_eq!(GammaSchedule::PaperToy(1.5).at(2).unwrap(), 0.375);
        for k in 1..20 {
            assert_eq!(GammaSchedule::Constant(0.3).at(k).unwrap(), 0.3);
        }
        assert_eq!(GammaSchedule::HarmonicDecay(1.0).at(3).unwrap(), 0.25);
        assert!(GammaSchedule::Constant(1.0).at(0).is_err());
    }

    #[test]
    fn lambda_weights() {
        let c = LambdaWeight::ZeroBandConstant { value: 1.2, band: 0.05 };
        assert_eq!(c.at(&LIN, 0.97, 40), 0.0);
        assert_eq!(c.at(&LIN, 0.5, 40), 1.2);
        let s = LambdaWeight::ZeroBandSigma { band: 0.015 };
        assert!((s.at(&LIN, 0.5, 40) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.at(&LIN, 0.99, 40), 0.0);
        assert!((c.integral(&LIN, 1000) - 1.2 * 0.95).abs() < 1e-9);
    }
}
