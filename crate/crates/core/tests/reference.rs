mod common;

use common::*;
use dyadic_core::dynamics::relax_two_l;
use dyadic_core::reference::loss_at;
use dyadic_core::{
    classical_backprop, finite_difference_grad, neumann_stress, Activation, Layer, LayerSpec, LossSpec,
    NetworkParams,
};
use ndarray::{array, Array2};
use proptest::prelude::*;

fn flat(g: &dyadic_core::GradientBundle<f64>) -> Vec<f64> {
    g.values().collect()
}

#[test]
fn single_identity_layer_closed_form() {
    let w: Array2<f64> = array![[0.5, -1.0], [2.0, 0.25], [1.5, 0.0]];
    let b = array![0.1, -0.2, 0.3];
    let p = NetworkParams::new(
        2,
        vec![Layer { spec: LayerSpec::new(3, Activation::Identity), weights: w.clone(), bias: b.clone() }],
    )
    .unwrap();
    let x = array![1.0, -2.0];
    let y = array![0.0, 1.0, -1.0];
    let bp = classical_backprop(&p, x.view(), &LossSpec::mse(y.clone()).unwrap()).unwrap();
    let r = w.dot(&x) + &b - &y;
    for i in 0..3 {
        for j in 0..2 {
            assert!((bp.gradient.weights[0][(i, j)] - r[i] * x[j]).abs() < 1e-15);
        }
    }
    assert!((&bp.gradient.biases[0] - &r).iter().all(|e| e.abs() < 1e-15));
}

#[test]
fn backprop_matches_dense_back_substitution() {
    for seed in 0..20 {
        let inst = random_instance(seed, 1..=6, 9, &SMOOTH);
        let bp = classical_backprop(&inst.params, inst.input.view(), &inst.loss).unwrap();
        let (s, g) = dense_backprop(&inst.params, inst.input.view(), &inst.loss);
        assert!(rel(bp.sensitivities.data().as_slice().unwrap(), s.as_slice().unwrap()) <= 1e-12);
        assert!(rel(&flat(&bp.gradient), &g) <= 1e-12);
    }
}

#[test]
fn tanh_mse_matches_central_differences_per_entry() {
    let mut r = rng(41);
    let specs = [
        LayerSpec::new(6, Activation::Tanh),
        LayerSpec::new(5, Activation::Tanh),
        LayerSpec::new(4, Activation::Tanh),
        LayerSpec::new(3, Activation::Tanh),
    ];
    let p = network(&mut r, 3, &specs, 0.3);
    let x = gaussian_vec(&mut r, 3, 1.0);
    let loss = LossSpec::mse(gaussian_vec(&mut r, 3, 1.0)).unwrap();
    let bp = flat(&classical_backprop(&p, x.view(), &loss).unwrap().gradient);
    let fd = flat(&finite_difference_grad(&p, x.view(), &loss, 1e-5).unwrap());
    let scale = bp.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in bp.iter().zip(&fd) {
        assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-3 * scale), "{a} vs {b}");
    }
}

#[test]
fn linear_network_differences_are_exact_to_rounding() {
    let mut r = rng(42);
    let specs = [LayerSpec::new(4, Activation::Identity), LayerSpec::new(3, Activation::Identity)];
    let p = network(&mut r, 3, &specs, 0.5);
    let x = gaussian_vec(&mut r, 3, 1.0);
    let loss = LossSpec::mse(gaussian_vec(&mut r, 3, 1.0)).unwrap();
    let bp = classical_backprop(&p, x.view(), &loss).unwrap().gradient;
    let fd = finite_difference_grad(&p, x.view(), &loss, 1e-5).unwrap();
    assert!(fd.relative_error(&bp) <= 1e-8);
}

#[test]
fn relu_differences_away_from_the_kink() {
    let h = 1e-5;
    let specs = [
        LayerSpec::new(8, Activation::Relu),
        LayerSpec::new(6, Activation::Relu),
        LayerSpec::new(3, Activation::Identity),
    ];
    let mut checked = 0;
    for seed in 0..200u64 {
        let mut r = rng(1000 + seed);
        let p = network(&mut r, 4, &specs, 0.3);
        let x = gaussian_vec(&mut r, 4, 1.0);
        let fp = p.forward_pass(x.view()).unwrap();
        let margin_ok = fp.pre_activations[..2].iter().flatten().all(|z| z.abs() > 10.0 * h);
        if !margin_ok {
            continue;
        }
        let loss = LossSpec::mse(gaussian_vec(&mut r, 3, 1.0)).unwrap();
        let bp = classical_backprop(&p, x.view(), &loss).unwrap().gradient;
        let fd = finite_difference_grad(&p, x.view(), &loss, h).unwrap();
        assert!(fd.relative_error(&bp) <= 1e-6, "seed {seed}");
        checked += 1;
        if checked == 10 {
            break;
        }
    }
    assert_eq!(checked, 10);
}

#[test]
fn neumann_series_special_cases() {
    let mut r = rng(43);
    let p = network(&mut r, 3, &[LayerSpec::new(4, Activation::Tanh)], 0.2);
    let x = gaussian_vec(&mut r, 3, 1.0);
    let loss = LossSpec::mse(gaussian_vec(&mut r, 4, 1.0)).unwrap();
    let s = neumann_stress(&p, x.view(), &loss).unwrap();
    let out = p.forward_pass(x.view()).unwrap().output().to_owned();
    assert_eq!(s.data(), &(&out - &loss.target));

    let specs = [LayerSpec::new(5, Activation::Tanh), LayerSpec::new(2, Activation::Sigmoid)];
    let p = network(&mut r, 3, &specs, 0.2);
    let s = neumann_stress(&p, x.view(), &ZeroLoss(2)).unwrap();
    assert!(s.data().iter().all(|&v| v == 0.0));
}

#[test]
fn neumann_series_equals_backprop_sensitivities() {
    let mut r = rng(44);
    let specs: Vec<_> = [7, 6, 5, 4, 3]
        .iter()
        .enumerate()
        .map(|(i, &w)| LayerSpec::new(w, if i % 2 == 0 { Activation::Tanh } else { Activation::Sigmoid }))
        .collect();
    let p = network(&mut r, 4, &specs, 0.4);
    let x = gaussian_vec(&mut r, 4, 1.0);
    let loss = LossSpec::mse(gaussian_vec(&mut r, 3, 1.0)).unwrap();
    let s = neumann_stress(&p, x.view(), &loss).unwrap();
    let bp = classical_backprop(&p, x.view(), &loss).unwrap();
    assert!(rel(s.data().as_slice().unwrap(), bp.sensitivities.data().as_slice().unwrap()) <= 1e-12);
}

#[test]
fn zero_loss_gradient_gives_zero_from_every_oracle() {
    let mut r = rng(45);
    let specs = [LayerSpec::new(5, Activation::Tanh), LayerSpec::new(2, Activation::Identity)];
    let p = network(&mut r, 3, &specs, 0.3);
    let x = gaussian_vec(&mut r, 3, 1.0);
    let out = p.forward_pass(x.view()).unwrap().output().to_owned();
    let at_target = LossSpec::mse(out).unwrap();
    let bp = classical_backprop(&p, x.view(), &at_target).unwrap();
    assert!(bp.gradient.values().all(|v| v == 0.0));
    let fd = finite_difference_grad(&p, x.view(), &at_target, 1e-5).unwrap();
    assert!(fd.values().all(|v| v.abs() <= 1e-9));
    let zero = ZeroLoss(2);
    assert!(classical_backprop(&p, x.view(), &zero).unwrap().gradient.values().all(|v| v == 0.0));
    assert!(neumann_stress(&p, x.view(), &zero).unwrap().data().iter().all(|&v| v == 0.0));
    assert!(relax_two_l(&p, x.view(), &zero).unwrap().gradient.values().all(|v| v == 0.0));
    assert_eq!(loss_at(&p, x.view(), &zero).unwrap(), 0.0);
}

#[test]
fn cross_entropy_backprop_matches_differences() {
    let mut r = rng(46);
    let specs = [LayerSpec::new(6, Activation::Sigmoid), LayerSpec::new(3, Activation::Identity)];
    let p = network(&mut r, 2, &specs, 0.3);
    let x = gaussian_vec(&mut r, 2, 1.0);
    let loss = LossSpec::cross_entropy(array![0.0, 0.0, 1.0]).unwrap();
    let bp = classical_backprop(&p, x.view(), &loss).unwrap().gradient;
    let fd = finite_difference_grad(&p, x.view(), &loss, 1e-5).unwrap();
    assert!(fd.relative_error(&bp) <= 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn oracle_triangle(seed in any::<u64>()) {
        let inst = random_instance(seed, 1..=8, 12, &SMOOTH);
        let (p, x) = (&inst.params, inst.input.view());
        let bp = classical_backprop(p, x, &inst.loss).unwrap().gradient;
        let fd = finite_difference_grad(p, x, &inst.loss, 1e-5).unwrap();
        let dyn_grad = relax_two_l(p, x, &inst.loss).unwrap().gradient;
        let scale = bp.norm().max(1e-8);
        let abs_err = |a: &dyadic_core::GradientBundle<f64>, b: &dyadic_core::GradientBundle<f64>| {
            a.values().zip(b.values()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt() / scale
        };
        prop_assert!(abs_err(&fd, &bp) <= 1e-5);
        prop_assert!(abs_err(&dyn_grad, &bp) <= 1e-5);
        prop_assert!(abs_err(&dyn_grad, &fd) <= 1e-5);
    }

    #[test]
    fn neumann_matches_backprop(seed in any::<u64>()) {
        let inst = random_instance(seed, 1..=8, 16, &SMOOTH);
        let s = neumann_stress(&inst.params, inst.input.view(), &inst.loss).unwrap();
        let bp = classical_backprop(&inst.params, inst.input.view(), &inst.loss).unwrap();
        prop_assert!(rel(s.data().as_slice().unwrap(), bp.sensitivities.data().as_slice().unwrap()) <= 1e-12);
    }
}
