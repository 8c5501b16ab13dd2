//! Hard verifiers v: R^d → {0, 1}, their intersection, and sigmoid-smoothed
//! surrogates with analytic ∇ log ṽ.
//!
//! Every hard verifier uses the closed-set convention: boundary points are
//! accepted. Kinds that expose a signed margin m(x) (positive inside) can be
//! smoothed into ṽ(x) = 1 / (1 + exp(−τ m(x))).

use alloc::vec;
use alloc::vec::Vec;

use crate::diffcore::Tensor;
use crate::error::bail;
use crate::math::{cos, log_sigmoid, sigmoid, sin};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub enum Verifier {
    /// Rotated ellipsoid; rotation acts in the (x₁, x₂) plane.
    Ellipse { center: Vec<f64>, semi_axes: Vec<f64>, rotation: f64 },
    /// lo ≤ ⟨n, x⟩ ≤ hi; either bound may be infinite.
    Band { normal: Vec<f64>, lo: f64, hi: f64 },
    /// Axis-aligned box lo ≤ x ≤ hi.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Pointwise minimum of the members.
    Intersection(Vec<Verifier>),
    /// Opaque predicate without a margin; cannot be smoothed.
    Predicate(fn(&[f64]) -> bool),
}

pub fn ellipse_verifier(center: Vec<f64>, semi_axes: Vec<f64>, rotation: f64) -> Result<Verifier> {
    if center.len() != semi_axes.len() || center.is_empty() {
        bail!(Dimension, "ellipse center has {} coords, semi-axes {}", center.len(), semi_axes.len());
    }
    if semi_axes.iter().any(|&a| !(a > 0.0)) {
        bail!(Domain, "ellipse semi-axes must be positive: {semi_axes:?}");
    }
    if center.len() < 2 && rotation != 0.0 {
        bail!(Domain, "rotation needs at least two dimensions");
    }
    Ok(Verifier::Ellipse { center, semi_axes, rotation })
}

pub fn band_verifier(normal: Vec<f64>, lo: f64, hi: f64) -> Result<Verifier> {
    if normal.iter().all(|&v| v == 0.0) {
        bail!(Domain, "band normal must be non-zero");
    }
    if !(lo < hi) {
        bail!(Domain, "band bounds must satisfy lo < hi, got [{lo}, {hi}]");
    }
    Ok(Verifier::Band { normal, lo, hi })
}

pub fn box_verifier(lo: Vec<f64>, hi: Vec<f64>) -> Result<Verifier> {
    if lo.len() != hi.len() || lo.is_empty() {
        bail!(Dimension, "box bounds of lengths {} and {}", lo.len(), hi.len());
    }
    if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
        bail!(Domain, "box needs lo < hi in every coordinate");
    }
    Ok(Verifier::Box { lo, hi })
}

pub fn intersect(verifiers: Vec<Verifier>) -> Result<Verifier> {
    match verifiers.len() {
        0 => bail!(Domain, "cannot intersect an empty list of verifiers"),
        1 => Ok(verifiers.into_iter().next().expect("one")),
        _ => Ok(Verifier::Intersection(verifiers)),
    }
}

impl Verifier {
    /// Ellipse frame coordinates u = Rᵀ(x − c).
    fn ellipse_frame(center: &[f64], rotation: f64, x: &[f64]) -> Vec<f64> {
        let mut u: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
        if u.len() >= 2 && rotation != 0.0 {
            let (s, c) = (sin(rotation), cos(rotation));
            let (dx, dy) = (u[0], u[1]);
            u[0] = c * dx + s * dy;
            u[1] = -s * dx + c * dy;
        }
        u
    }

    fn ellipse_q(center: &[f64], axes: &[f64], rotation: f64, x: &[f64]) -> f64 {
        Self::ellipse_frame(center, rotation, x).iter().zip(axes).map(|(u, a)| (u / a) * (u / a)).sum()
    }

    /// v(x) ∈ {0, 1} as a bool.
    pub fn accepts(&self, x: &[f64]) -> bool {
        match self {
            Verifier::Ellipse { center, semi_axes, rotation } => {
                Self::ellipse_q(center, semi_axes, *rotation, x) <= 1.0
            }
            Verifier::Band { normal, lo, hi } => {
                let p = crate::math::dot(normal, x);
                *lo <= p && p <= *hi
            }
            Verifier::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| l <= v && v <= h),
            Verifier::Intersection(vs) => vs.iter().all(|v| v.accepts(x)),
            Verifier::Predicate(f) => f(x),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        if self.accepts(x) { 1.0 } else { 0.0 }
    }

    /// Signed margin m(x) (positive inside) and its gradient.
    pub fn margin(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            Verifier::Ellipse { center, semi_axes, rotation } => {
                let u = Self::ellipse_frame(center, *rotation, x);
                let q: f64 = u.iter().zip(semi_axes).map(|(u, a)| (u / a) * (u / a)).sum();
                // ∇q in frame coords, then rotate back: ∇_x q = R · (2u/a²)
                let mut g: Vec<f64> = u.iter().zip(semi_axes).map(|(u, a)| 2.0 * u / (a * a)).collect();
                if g.len() >= 2 && *rotation != 0.0 {
                    let (s, c) = (sin(*rotation), cos(*rotation));
                    let (g0, g1) = (g[0], g[1]);
                    g[0] = c * g0 - s * g1;
                    g[1] = s * g0 + c * g1;
                }
                Ok((1.0 - q, g.into_iter().map(|v| -v).collect()))
            }
            Verifier::Band { normal, lo, hi } => {
                let p = crate::math::dot(normal, x);
                if p - lo <= hi - p {
                    Ok((p - lo, normal.clone()))
                } else {
                    Ok((hi - p, normal.iter().map(|v| -v).collect()))
                }
            }
            Verifier::Box { lo, hi } => {
                let mut best = (f64::INFINITY, 0usize, 1.0);
                for (i, (v, (l, h))) in x.iter().zip(lo.iter().zip(hi)).enumerate() {
                    if v - l < best.0 {
                        best = (v - l, i, 1.0);
                    }
                    if h - v < best.0 {
                        best = (h - v, i, -1.0);
                    }
                }
                let mut g = vec![0.0; x.len()];
                g[best.1] = best.2;
                Ok((best.0, g))
            }
            Verifier::Intersection(vs) => {
                let mut best: Option<(f64, Vec<f64>)> = None;
                for v in vs {
                    let (m, g) = v.margin(x)?;
                    if best.as_ref().is_none_or(|(bm, _)| m < *bm) {
                        best = Some((m, g));
                    }
                }
                Ok(best.expect("non-empty intersection"))
            }
            Verifier::Predicate(_) => Err(Error::Capability("opaque predicate has no signed margin".into())),
        }
    }

    fn supports_margin(&self) -> bool {
        match self {
            Verifier::Predicate(_) => false,
            Verifier::Intersection(vs) => vs.iter().all(Verifier::supports_margin),
            _ => true,
        }
    }
}

/// Differentiable surrogate ṽ = sigmoid(τ m(x)).
#[derive(Debug, Clone)]
pub struct SmoothVerifier {
    verifier: Verifier,
    temperature: f64,
}

pub fn smooth(verifier: Verifier, temperature: f64) -> Result<SmoothVerifier> {
    if !(temperature > 0.0) {
        bail!(Domain, "temperature must be positive, got {temperature}");
    }
    if !verifier.supports_margin() {
        return Err(Error::Capability("verifier kind cannot be smoothed".into()));
    }
    Ok(SmoothVerifier { verifier, temperature })
}

impl SmoothVerifier {
    pub fn verifier(&self) -> &Verifier {
        &self.verifier
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.temperature * self.verifier.margin(x)?.0))
    }

    pub fn log_value(&self, x: &[f64]) -> Result<f64> {
        Ok(log_sigmoid(self.temperature * self.verifier.margin(x)?.0))
    }

    /// ∇ log ṽ(x) = τ · sigmoid(−τ m) · ∇m.
    pub fn grad_log(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (m, g) = self.verifier.margin(x)?;
        let w = self.temperature * sigmoid(-self.temperature * m);
        Ok(g.into_iter().map(|v| w * v).collect())
    }

    /// Row-wise ∇ log ṽ for an n × d batch.
    pub fn grad_log_batch(&self, xs: &Tensor) -> Result<Tensor> {
        let mut out = Tensor::zeros(xs.shape());
        for i in 0..xs.rows() {
            let g = self.grad_log(xs.row(i))?;
            out.row_mut(i).copy_from_slice(&g);
        }
        Ok(out)
    }
}

/// Effective width of the sigmoid transition in margin units: |m| at which
/// ṽ reaches 1/(1+e^{-2}) ≈ 0.88.
pub fn transition_width(temperature: f64) -> f64 {
    2.0 / temperature
}
