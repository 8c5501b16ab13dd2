//! Randomized sweeps over the discrete mirror-descent oracle, checked against
//! closed forms computed here.

use fexp_core::oracle::*;
use fexp_core::rng::Rng;

fn random_instance(rng: &mut Rng, max_cells: usize) -> (DiscreteMeasure, Vec<f64>, SupportMask) {
    let m = 2 + rng.below(max_cells - 1);
    let q = DiscreteMeasure::new((0..m).map(|_| rng.uniform() + 1e-3).collect()).unwrap();
    let grad: Vec<f64> = (0..m).map(|_| 4.0 * rng.normal()).collect();
    let mut cells: Vec<bool> = (0..m).map(|_| rng.uniform() < 0.7).collect();
    cells[rng.below(m)] = true;
    (q, grad, SupportMask::new(cells).unwrap())
}

#[test]
fn constrained_step_equals_expand_then_project() {
    let mut rng = Rng::new(2024);
    for _ in 0..1000 {
        let (q, grad, mask) = random_instance(&mut rng, 200);
        let gamma = 0.05 + 2.0 * rng.uniform();
        let direct = md_step(&q, &grad, gamma, &mask).unwrap();
        let split = expand_then_project_discrete(&q, &grad, gamma, &mask).unwrap();
        assert!(direct.total_variation(&split).unwrap() < 1e-12);
        assert!(is_probability(&direct));
    }
}

#[test]
fn step_matches_a_hand_normalized_tilt() {
    let mut rng = Rng::new(7);
    for _ in 0..100 {
        let (q, grad, mask) = random_instance(&mut rng, 30);
        let gamma = rng.uniform();
        let raw: Vec<f64> = (0..q.len())
            .map(|i| if mask.cells()[i] { q.weights()[i] * (gamma * grad[i]).exp() } else { 0.0 })
            .collect();
        let z: f64 = raw.iter().sum();
        let got = md_step(&q, &grad, gamma, &mask).unwrap();
        for (g, r) in got.weights().iter().zip(&raw) {
            assert!((g - r / z).abs() < 1e-12);
        }
    }
}

#[test]
fn unit_step_reaches_the_uniform_measure_on_the_mask() {
    let mut rng = Rng::new(8);
    for _ in 0..100 {
        let (q, _, mask) = random_instance(&mut rng, 60);
        let run = run_md(&q, &Objective::Entropy, |_| 1.0, &mask, 3).unwrap();
        assert!(run.gaps[1].abs() < 1e-12, "gap after one step: {}", run.gaps[1]);
        let share = 1.0 / mask.count() as f64;
        for (w, &c) in run.iterates[1].weights().iter().zip(mask.cells()) {
            assert!((w - if c { share } else { 0.0 }).abs() < 1e-12);
        }
    }
}

#[test]
fn small_steps_respect_the_sublinear_bound() {
    let mut rng = Rng::new(9);
    for _ in 0..100 {
        let (q, _, mask) = random_instance(&mut rng, 80);
        let run = run_md(&q, &Objective::Entropy, |_| 0.3, &mask, 50).unwrap();
        // KL(q*‖q⁰) is infinite when q⁰ misses part of the mask; it never does here.
        let uniform_on_mask = Objective::Entropy.maximizer(&mask).unwrap();
        let d0 = kl(&uniform_on_mask, &q).unwrap();
        for k in 1..=50 {
            let bound = d0 / (0.3 * k as f64);
            assert!(run.gaps[k] <= bound + 1e-12, "k={k}: {} > {bound}", run.gaps[k]);
        }
        assert!(run.first_violation(1e-12).is_none());
    }
}

#[test]
fn kl_regularized_fixed_point_has_the_tempered_exponent() {
    let mut rng = Rng::new(10);
    for alpha in [0.5, 1.0, 9.0] {
        for _ in 0..20 {
            let m = 3 + rng.below(40);
            let p = DiscreteMeasure::new((0..m).map(|_| rng.uniform() + 0.01).collect()).unwrap();
            let objective = Objective::EntropyMinusKl { alpha, reference: p.clone() };
            let mask = SupportMask::full(m);
            // log q contracts toward the fixed point by 1 − γ(1 + α) per step
            let gamma = 0.5 / (1.0 + alpha);
            let run = run_md(&DiscreteMeasure::uniform(m).unwrap(), &objective, |_| gamma, &mask, 200).unwrap();

            let beta = alpha / (1.0 + alpha);
            let tempered: Vec<f64> = p.weights().iter().map(|w| w.powf(beta)).collect();
            let z: f64 = tempered.iter().sum();
            let target = DiscreteMeasure::new(tempered.iter().map(|w| w / z).collect()).unwrap();
            let last = run.iterates.last().unwrap();
            assert!(last.total_variation(&target).unwrap() < 1e-8, "α={alpha}");
        }
    }
}

#[test]
fn projection_is_the_kl_minimizer_over_the_mask() {
    // Any other measure on the mask is at least as far from q in KL(r‖q).
    let mut rng = Rng::new(11);
    for _ in 0..50 {
        let (q, _, mask) = random_instance(&mut rng, 20);
        let proj = project(&q, &mask).unwrap();
        let best = kl(&proj, &q).unwrap();
        for _ in 0..20 {
            let other: Vec<f64> =
                mask.cells().iter().map(|&c| if c { rng.uniform() + 1e-6 } else { 0.0 }).collect();
            let r = DiscreteMeasure::new(other).unwrap();
            assert!(kl(&r, &q).unwrap() >= best - 1e-12);
        }
    }
}
