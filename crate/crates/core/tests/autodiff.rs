//! Reverse-mode gradients of random small networks against central finite
//! differences, plus linearity of the backward pass in its seed.

use fexp_core::diffcore::{kernels, Tape, Tensor};
use fexp_core::flowmodel::{Activation, Architecture, VelocityField};
use proptest::prelude::*;

const STEP: f64 = 1e-6;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn arch(dim: usize, width: usize, depth: usize, tanh: bool) -> Architecture {
    Architecture {
        dim,
        hidden: vec![width; depth],
        activation: if tanh { Activation::Tanh } else { Activation::Silu },
    }
}

/// ⟨c, u(x, t)⟩ summed over rows, evaluated without a tape.
fn probe(field: &VelocityField, xs: &Tensor, t: f64, c: &Tensor) -> f64 {
    let u = field.evaluate_batch(xs, t).unwrap();
    u.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
}

fn random_tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = fexp_core::rng::Rng::new(seed);
    let data = (0..rows * cols).map(|_| rng.normal()).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parameter_gradients_match_finite_differences(
        seed in 0u64..10_000,
        dim in 1usize..4,
        width in 2usize..7,
        depth in 1usize..3,
        tanh in any::<bool>(),
        t in 0.05f64..0.95,
    ) {
        let field = VelocityField::init(&arch(dim, width, depth, tanh), seed);
        let xs = random_tensor(3, dim, seed ^ 1);
        let c = random_tensor(3, dim, seed ^ 2);

        let mut tape = Tape::new();
        let x = tape.constant(xs.clone());
        let tn = tape.constant(Tensor::filled(&[3, 1], t));
        let rec = field.record(&mut tape, x, tn, true).unwrap();
        let grads = tape.backward(rec.output, c.clone()).unwrap();

        for (p, &node) in rec.params.iter().enumerate() {
            let g = grads.get(node).unwrap();
            for j in 0..g.len() {
                let mut plus = field.clone();
                plus.params_mut()[p].data_mut()[j] += STEP;
                let mut minus = field.clone();
                minus.params_mut()[p].data_mut()[j] -= STEP;
                let fd = (probe(&plus, &xs, t, &c) - probe(&minus, &xs, t, &c)) / (2.0 * STEP);
                prop_assert!(rel_err(g.data()[j], fd) < 1e-5, "param {p}[{j}]: {} vs {fd}", g.data()[j]);
            }
        }
    }

    #[test]
    fn input_vjp_matches_finite_differences(
        seed in 0u64..10_000,
        dim in 1usize..4,
        tanh in any::<bool>(),
        t in 0.05f64..0.95,
    ) {
        let field = VelocityField::init(&arch(dim, 5, 2, tanh), seed);
        let xs = random_tensor(2, dim, seed ^ 3);
        let c = random_tensor(2, dim, seed ^ 4);
        let vjp = field.input_vjp(&xs, t, &c).unwrap();
        for j in 0..xs.len() {
            let mut plus = xs.clone();
            plus.data_mut()[j] += STEP;
            let mut minus = xs.clone();
            minus.data_mut()[j] -= STEP;
            let fd = (probe(&field, &plus, t, &c) - probe(&field, &minus, t, &c)) / (2.0 * STEP);
            prop_assert!(rel_err(vjp.data()[j], fd) < 1e-5, "x[{j}]: {} vs {fd}", vjp.data()[j]);
        }
    }

    #[test]
    fn backward_is_linear_in_the_seed(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let field = VelocityField::init(&arch(2, 4, 2, false), seed);
        let xs = random_tensor(4, 2, seed ^ 5);
        let c1 = random_tensor(4, 2, seed ^ 6);
        let c2 = random_tensor(4, 2, seed ^ 7);
        let mixed = kernels::add(&kernels::scale(&c1, a), &kernels::scale(&c2, b)).unwrap();
        let g1 = field.input_vjp(&xs, 0.4, &c1).unwrap();
        let g2 = field.input_vjp(&xs, 0.4, &c2).unwrap();
        let gm = field.input_vjp(&xs, 0.4, &mixed).unwrap();
        for j in 0..gm.len() {
            let expected = a * g1.data()[j] + b * g2.data()[j];
            prop_assert!((gm.data()[j] - expected).abs() < 1e-10 * (1.0 + expected.abs()));
        }
    }
}

#[test]
fn sum_squares_of_a_product_has_the_textbook_gradient() {
    // f(A, B) = ‖AB‖² has ∂f/∂A = 2(AB)Bᵀ and ∂f/∂B = 2Aᵀ(AB).
    let a = random_tensor(3, 4, 11);
    let b = random_tensor(4, 2, 12);
    let mut tape = Tape::new();
    let na = tape.variable(a.clone());
    let nb = tape.variable(b.clone());
    let prod = tape.matmul(na, nb).unwrap();
    let out = tape.sum_squares(prod).unwrap();
    let grads = tape.backward(out, Tensor::scalar(1.0)).unwrap();

    let ab = kernels::matmul(&a, &b).unwrap();
    let want_a = kernels::scale(&kernels::matmul(&ab, &b.transpose().unwrap()).unwrap(), 2.0);
    let want_b = kernels::scale(&kernels::matmul(&a.transpose().unwrap(), &ab).unwrap(), 2.0);
    for (got, want) in [(grads.get(na).unwrap(), &want_a), (grads.get(nb).unwrap(), &want_b)] {
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() < 1e-12);
        }
    }
}

#[test]
fn gradients_accumulate_over_shared_nodes() {
    // y = x + x·2 reuses x twice; dy/dx = 3 everywhere.
    let mut tape = Tape::new();
    let x = tape.variable(random_tensor(2, 3, 13));
    let twice = tape.scale(x, 2.0).unwrap();
    let y = tape.add(x, twice).unwrap();
    let s = tape.sum(y).unwrap();
    let grads = tape.backward(s, Tensor::scalar(1.0)).unwrap();
    assert!(grads.get(x).unwrap().data().iter().all(|&g| g == 3.0));
}
