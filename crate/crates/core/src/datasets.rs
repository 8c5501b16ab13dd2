//! Seeded synthetic data for the two toy regimes: a Gaussian mixture that
//! covers only part of an ellipse, and a trimodal prior with one mode outside
//! the weak verifier's accept set.

use alloc::vec::Vec;

use crate::diffcore::Tensor;
use crate::error::bail;
use crate::math::{cos, sin};
use crate::rng::{tags, Rng};
use crate::verifier::{band_verifier, box_verifier, ellipse_verifier, intersect, Verifier};
use crate::Result;

/// Isotropic Gaussian mixture component.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub mean: Vec<f64>,
    pub spread: f64,
    pub weight: f64,
}

impl Component {
    pub fn new(mean: Vec<f64>, spread: f64, weight: f64) -> Self {
        Component { mean, spread, weight }
    }
}

fn validate_mixture(components: &[Component]) -> Result<usize> {
    let Some(first) = components.first() else {
        bail!(Domain, "mixture needs at least one component");
    };
    let d = first.mean.len();
    if components.iter().any(|c| c.mean.len() != d) {
        bail!(Dimension, "mixture components disagree on dimension");
    }
    if components.iter().any(|c| !(c.spread > 0.0) || !(c.weight >= 0.0)) {
        bail!(Domain, "spreads must be positive and weights non-negative");
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        bail!(Domain, "mixture weights sum to {total}, not 1");
    }
    Ok(d)
}

fn draw(components: &[Component], rng: &mut Rng, out: &mut [f64]) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut label = components.len() - 1;
    for (i, c) in components.iter().enumerate() {
        acc += c.weight;
        if u < acc {
            label = i;
            break;
        }
    }
    let c = &components[label];
    for (o, m) in out.iter_mut().zip(&c.mean) {
        *o = m + c.spread * rng.normal();
    }
    label
}

/// Ellipse with a mixture placed in its upper-left region. Component means
/// are given in the ellipse frame (major axis first) before rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipseSetting {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    pub rotation: f64,
    pub components: Vec<Component>,
}

impl Default for EllipseSetting {
    fn default() -> Self {
        EllipseSetting {
            center: [0.0, 0.0],
            semi_axes: [2.0, 1.2],
            rotation: 0.4,
            components: alloc::vec![
                Component::new(alloc::vec![-1.0, 0.45], 0.3, 0.45),
                Component::new(alloc::vec![-0.25, 0.65], 0.25, 0.3),
                Component::new(alloc::vec![-1.45, -0.05], 0.22, 0.25),
            ],
        }
    }
}

impl EllipseSetting {
    pub fn verifier(&self) -> Verifier {
        ellipse_verifier(self.center.to_vec(), self.semi_axes.to_vec(), self.rotation)
            .expect("validated ellipse geometry")
    }

    pub fn to_world(&self, frame: [f64; 2]) -> [f64; 2] {
        let (s, c) = (sin(self.rotation), cos(self.rotation));
        [self.center[0] + c * frame[0] - s * frame[1], self.center[1] + s * frame[0] + c * frame[1]]
    }

    pub fn to_frame(&self, world: &[f64]) -> [f64; 2] {
        let (s, c) = (sin(self.rotation), cos(self.rotation));
        let (dx, dy) = (world[0] - self.center[0], world[1] - self.center[1]);
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// Positive in the upper-left half of the ellipse frame, split along the
    /// normalized anti-diagonal.
    pub fn upper_left_score(&self, world: &[f64]) -> f64 {
        let f = self.to_frame(world);
        f[1] / self.semi_axes[1] - f[0] / self.semi_axes[0]
    }
}

/// One dominant central mode and two side modes; `invalid_mode` lies outside
/// the weak verifier's half-space.
#[derive(Debug, Clone, PartialEq)]
pub struct TrimodalSetting {
    pub components: Vec<Component>,
    pub invalid_mode: usize,
    /// Weak verifier accepts x₁ ≥ `weak_threshold`.
    pub weak_threshold: f64,
    /// The strong (scoring) validity set is the box [lo, hi], a subset of the weak set.
    pub valid_lo: [f64; 2],
    pub valid_hi: [f64; 2],
}

impl Default for TrimodalSetting {
    fn default() -> Self {
        TrimodalSetting {
            components: alloc::vec![
                Component::new(alloc::vec![-3.0, 0.0], 0.35, 0.05),
                Component::new(alloc::vec![0.0, 0.0], 0.35, 0.9),
                Component::new(alloc::vec![3.0, 0.0], 0.35, 0.05),
            ],
            invalid_mode: 0,
            weak_threshold: -1.5,
            valid_lo: [-1.5, -2.0],
            valid_hi: [4.5, 2.0],
        }
    }
}

impl TrimodalSetting {
    pub fn weak_verifier(&self) -> Verifier {
        band_verifier(alloc::vec![1.0, 0.0], self.weak_threshold, f64::INFINITY).expect("finite normal")
    }

    pub fn strong_verifier(&self) -> Verifier {
        intersect(alloc::vec![
            self.weak_verifier(),
            box_verifier(self.valid_lo.to_vec(), self.valid_hi.to_vec()).expect("ordered box"),
        ])
        .expect("non-empty intersection")
    }

    /// Whether x falls in the invalid mode's basin (closer to that center than to any other).
    pub fn in_invalid_basin(&self, x: &[f64]) -> bool {
        let dist = |c: &Component| c.mean.iter().zip(x).map(|(m, v)| (m - v) * (m - v)).sum::<f64>();
        let own = dist(&self.components[self.invalid_mode]);
        self.components.iter().enumerate().all(|(i, c)| i == self.invalid_mode || own < dist(c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    EllipsePartial(EllipseSetting),
    Trimodal(TrimodalSetting),
}

impl DatasetSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DatasetSpec::EllipsePartial(_) => "ellipse_partial",
            DatasetSpec::Trimodal(_) => "trimodal",
        }
    }

    pub fn dim(&self) -> usize {
        2
    }

    /// The verifier the expansion is constrained to.
    pub fn constraint_verifier(&self) -> Verifier {
        match self {
            DatasetSpec::EllipsePartial(s) => s.verifier(),
            DatasetSpec::Trimodal(s) => s.weak_verifier(),
        }
    }

    /// The verifier used to score validity.
    pub fn scoring_verifier(&self) -> Verifier {
        match self {
            DatasetSpec::EllipsePartial(s) => s.verifier(),
            DatasetSpec::Trimodal(s) => s.strong_verifier(),
        }
    }

    /// Generates n points (labels are the mixture component of each point).
    pub fn generate(&self, n: usize, seed: u64) -> Result<(Tensor, Vec<usize>)> {
        match self {
            DatasetSpec::EllipsePartial(s) => gen_global_setting(s, n, seed),
            DatasetSpec::Trimodal(s) => gen_local_setting(s, n, seed),
        }
    }
}

const MAX_REJECTION_RATE: f64 = 0.99;

/// Mixture samples restricted to the ellipse by rejection, so every point is valid.
pub fn gen_global_setting(spec: &EllipseSetting, n: usize, seed: u64) -> Result<(Tensor, Vec<usize>)> {
    if validate_mixture(&spec.components)? != 2 {
        bail!(Dimension, "ellipse setting is two-dimensional");
    }
    if spec.semi_axes.iter().any(|&a| !(a > 0.0)) {
        bail!(Domain, "ellipse semi-axes must be positive");
    }
    if n == 0 {
        bail!(Domain, "dataset size must be at least 1");
    }
    let verifier = spec.verifier();
    let mut rng = Rng::stream(seed, tags::DATA);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let (mut attempts, mut frame) = (0usize, [0.0; 2]);
    while labels.len() < n {
        attempts += 1;
        let label = draw(&spec.components, &mut rng, &mut frame);
        let p = spec.to_world(frame);
        if verifier.accepts(&p) {
            data.extend_from_slice(&p);
            labels.push(label);
        } else if attempts >= 1000 && (attempts - labels.len()) as f64 > MAX_REJECTION_RATE * attempts as f64 {
            bail!(Geometry, "rejection rate above 99% after {attempts} draws; mixture barely overlaps the ellipse");
        }
    }
    Ok((Tensor::matrix(n, 2, data)?, labels))
}

/// Trimodal mixture samples with their mode labels.
pub fn gen_local_setting(spec: &TrimodalSetting, n: usize, seed: u64) -> Result<(Tensor, Vec<usize>)> {
    let d = validate_mixture(&spec.components)?;
    if spec.invalid_mode >= spec.components.len() {
        bail!(Domain, "invalid mode index {} out of range", spec.invalid_mode);
    }
    if n == 0 {
        bail!(Domain, "dataset size must be at least 1");
    }
    let mut rng = Rng::stream(seed, tags::DATA);
    let mut data = alloc::vec![0.0; n * d];
    let labels = data.chunks_mut(d).map(|row| draw(&spec.components, &mut rng, row)).collect();
    Ok((Tensor::matrix(n, d, data)?, labels))
}
