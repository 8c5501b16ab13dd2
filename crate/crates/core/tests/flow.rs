//! Sampler, score transform and fine-tuning behaviour on fields whose answer
//! is known in closed form or by direction.

use std::sync::OnceLock;

use fexp_core::adjoint::{finetune, FinetuneConfig, RewardSpec};
use fexp_core::diffcore::{kernels, Tensor};
use fexp_core::expander::{expand_step, measure, project_step, snapshot, ExpanderConfig, MetricConfig, Mode};
use fexp_core::flowmodel::analytic::GaussianTarget;
use fexp_core::flowmodel::{pretrain, Activation, Architecture, TrainConfig, VelocityField};
use fexp_core::metrics::knn_entropy;
use fexp_core::rng::Rng;
use fexp_core::sampler::{moments, sample_memoryless_sde, sample_ode, score_batch, ScoreConfig};
use fexp_core::schedules::{GammaSchedule, InterpolantSchedule, LambdaWeight};
use fexp_core::verifier::{band_verifier, smooth};

const LIN: InterpolantSchedule = InterpolantSchedule::Linear;

#[test]
fn score_transform_matches_the_point_mass_score() {
    let target = vec![0.7, -1.3];
    let field = GaussianTarget::point_mass(target.clone());
    let cfg = ScoreConfig::new(0.02).unwrap();
    let mut worst: f64 = 0.0;
    for i in 1..=19 {
        let t = 0.05 * i as f64;
        let xs = Tensor::from_rows(&[&[0.3, 0.1], &[-2.0, 4.0], &[1.5, -0.8]]).unwrap();
        let got = score_batch(&field, &LIN, &xs, t, &cfg).unwrap();
        for r in 0..xs.rows() {
            for j in 0..2 {
                let exact = -(xs.get(r, j) - t * target[j]) / ((1.0 - t) * (1.0 - t));
                worst = worst.max((got.get(r, j) - exact).abs() / exact.abs().max(1e-12));
            }
        }
    }
    assert!(worst < 1e-10, "worst relative error {worst}");
}

#[test]
fn memoryless_sde_preserves_the_gaussian_marginal() {
    let (m, s) = (vec![1.5, -0.5], 0.6);
    let field = GaussianTarget { mean: m.clone(), std: s };
    let n = 10_000;
    let sde = sample_memoryless_sde(&field, n, 200, &LIN, 5).unwrap();
    let ode = sample_ode(&field, n, 200, 6).unwrap();
    let (sde_mean, sde_var) = moments(sde.terminal());
    let (ode_mean, ode_var) = moments(&ode);
    let mean_tol = 4.0 * s / (n as f64).sqrt();
    for j in 0..2 {
        assert!((sde_mean[j] - m[j]).abs() < mean_tol, "sde mean {j}: {}", sde_mean[j]);
        assert!((ode_mean[j] - m[j]).abs() < mean_tol, "ode mean {j}: {}", ode_mean[j]);
        assert!((sde_var[j] / (s * s) - 1.0).abs() < 0.1, "sde var {j}: {}", sde_var[j]);
        assert!((sde_var[j] / ode_var[j] - 1.0).abs() < 0.1);
    }
}

/// A small field pretrained on N((0, 0), 0.5² I), shared by the fine-tuning tests.
fn gaussian_prior() -> &'static VelocityField {
    static FIELD: OnceLock<VelocityField> = OnceLock::new();
    FIELD.get_or_init(|| {
        let mut rng = Rng::new(40);
        let data: Vec<f64> = (0..4000).map(|_| 0.5 * rng.normal()).collect();
        let data = Tensor::matrix(2000, 2, data).unwrap();
        let arch = Architecture { dim: 2, hidden: vec![32; 2], activation: Activation::Silu };
        let cfg = TrainConfig { epochs: 40, batch_size: 200, learning_rate: 3e-3, seed: 1, architecture: arch };
        pretrain(&data, &LIN, &cfg).unwrap().field
    })
}

fn solver() -> FinetuneConfig {
    FinetuneConfig { rounds: 4, batch: 16, grad_steps: 4, ..FinetuneConfig::default() }
}

fn expander(mode: Mode, gamma: f64, eta: f64, verifier_lo: f64) -> ExpanderConfig {
    ExpanderConfig {
        mode,
        iterations: 1,
        gamma: GammaSchedule::Constant(gamma),
        eta: GammaSchedule::Constant(eta),
        alpha: 0.0,
        lambda: LambdaWeight::ZeroBandConstant { value: 1.2, band: 0.05 },
        score: ScoreConfig::default(),
        schedule: LIN,
        verifier: smooth(band_verifier(vec![1.0, 0.0], verifier_lo, f64::INFINITY).unwrap(), 10.0).unwrap(),
        expand_solver: solver(),
        project_solver: solver(),
        seed: 3,
    }
}

fn ode_mean(field: &VelocityField) -> Vec<f64> {
    moments(&sample_ode(field, 3000, 100, 9).unwrap()).0
}

#[test]
fn terminal_reward_pulls_the_mean_toward_its_target() {
    let base = gaussian_prior();
    let target = [1.0, -1.0];
    // f(x) = −½‖x − c‖², ∇f = c − x
    let reward = RewardSpec::zero().with_terminal(
        |xs: &Tensor| {
            let mut g = kernels::scale(xs, -1.0);
            for i in 0..g.rows() {
                g.row_mut(i).iter_mut().zip(target).for_each(|(v, c)| *v += c);
            }
            Ok(g)
        },
        1.0,
    );
    let tuned = finetune(base, &reward, &LIN, &solver()).unwrap();
    let before = ode_mean(base);
    let after = ode_mean(&tuned);
    for j in 0..2 {
        let moved = (after[j] - before[j]) * target[j].signum();
        assert!(moved > 0.05, "coordinate {j}: {} -> {}", before[j], after[j]);
    }
}

#[test]
fn expansion_raises_entropy() {
    let base = gaussian_prior();
    let cfg = expander(Mode::Global, 1.0, 0.0, -10.0);
    let expanded = expand_step(base, base, &cfg, 1).unwrap();
    let h = |f: &VelocityField| knn_entropy(&sample_ode(f, 3000, 100, 12).unwrap(), 5).unwrap();
    let (h0, h1) = (h(base), h(&expanded));
    assert!(h1 > h0 + 0.05, "entropy {h0} -> {h1}");
}

#[test]
fn projection_raises_validity() {
    let base = gaussian_prior();
    let cfg = expander(Mode::Constr, 0.0, 2.0, 0.3);
    let projected = project_step(base, &cfg.verifier, 2.0, &cfg, 1).unwrap();
    let metrics = MetricConfig { samples: 3000, ode_steps: 100, vendi_points: None, ..MetricConfig::default() };
    let v = cfg.verifier.verifier();
    let (before, _) = snapshot(base, v, &metrics).unwrap();
    let (after, samples) = snapshot(&projected, v, &metrics).unwrap();
    assert!(after.validity > before.validity + 0.05, "validity {} -> {}", before.validity, after.validity);
    assert_eq!(measure(&samples, v, &metrics).unwrap().validity, after.validity);
}
