mod common;

use common::*;
use dyadic_core::{Activation, GlobalVector, Layer, LayerSpec, NetworkParams};
use ndarray::{array, Array1};
use proptest::prelude::*;

fn two_layer_scalar() -> NetworkParams<f64> {
    NetworkParams::new(
        1,
        vec![
            Layer { spec: LayerSpec::new(1, Activation::Identity), weights: array![[1.0]], bias: array![0.5] },
            Layer { spec: LayerSpec::new(1, Activation::Identity), weights: array![[3.0]], bias: array![-1.0] },
        ],
    )
    .unwrap()
}

#[test]
fn beta_drive_substitution() {
    let p = two_layer_scalar();
    let beta = p.beta_drive(array![2.0].view()).unwrap();
    assert_eq!(beta.data(), &array![2.5, -1.0]);
}

#[test]
fn forward_pass_matches_loop_implementation() {
    let mut r = rng(3);
    let specs = [
        LayerSpec::new(7, Activation::Tanh),
        LayerSpec::new(5, Activation::Tanh),
        LayerSpec::new(4, Activation::Tanh),
    ];
    let p = network(&mut r, 6, &specs, 0.3);
    let x = gaussian_vec(&mut r, 6, 1.0);
    let fp = p.forward_pass(x.view()).unwrap();
    let expected = naive_forward(&p, x.view());
    assert!(max_rel_entry(fp.stacked.data(), &expected) <= 1e-12);
    assert_eq!(fp.activations.len(), 3);
    assert_eq!(fp.output().len(), 4);
    assert!(max_rel_entry(p.beta_drive(x.view()).unwrap().data(), &naive_beta(&p, x.view())) <= 1e-14);
}

#[test]
fn global_actions_match_dense_matrix() {
    let mut r = rng(4);
    let specs = [
        LayerSpec::new(5, Activation::Tanh),
        LayerSpec::new(3, Activation::Sigmoid),
        LayerSpec::new(4, Activation::Identity),
    ];
    let p = network(&mut r, 2, &specs, 0.3);
    let w = dense_w(&p);
    let v = random_global(&p, &mut r);
    let wv = p.apply_global_w(&v).unwrap();
    let wtv = p.apply_global_wt(&v).unwrap();
    assert!((wv.data() - &w.dot(v.data())).iter().all(|e| e.abs() <= 1e-14));
    assert!((wtv.data() - &w.t().dot(v.data())).iter().all(|e| e.abs() <= 1e-14));
    let zero = p.zeros();
    assert_eq!(p.apply_global_w(&zero).unwrap(), zero);
    assert_eq!(p.apply_global_wt(&zero).unwrap(), zero);
}

#[test]
fn forward_field_matches_dense_recomputation() {
    let mut r = rng(5);
    let specs = [LayerSpec::new(4, Activation::Sigmoid), LayerSpec::new(3, Activation::Tanh)];
    let p = network(&mut r, 3, &specs, 0.5);
    let x = gaussian_vec(&mut r, 3, 1.0);
    let a = random_global(&p, &mut r);
    let f = p.forward_field(x.view(), &a).unwrap();
    let expected = dense_field(&p, x.view(), a.data());
    assert!((f.data() - &expected).iter().all(|e| e.abs() <= 1e-14));

    let zero_params = network(&mut r, 3, &[LayerSpec::new(2, Activation::Identity)], 0.0);
    let mut zp = zero_params.clone();
    zp.weights_mut(0).fill(0.0);
    let f = zp.forward_field(x.view(), &zp.zeros()).unwrap();
    assert!(f.data().iter().all(|&v| v == 0.0));
}

#[test]
fn sigmoid_slope_matches_closed_form() {
    let mut r = rng(6);
    let specs = [LayerSpec::new(6, Activation::Sigmoid), LayerSpec::new(2, Activation::Sigmoid)];
    let p = network(&mut r, 3, &specs, 1.0);
    let x = gaussian_vec(&mut r, 3, 1.0);
    let m = random_global(&p, &mut r);
    let d = p.local_derivative_diag(x.view(), &m).unwrap();
    let pre = dense_pre(&p, x.view(), m.data());
    for (i, &z) in pre.iter().enumerate() {
        let s = 1.0 / (1.0 + (-z).exp());
        assert!((d.data()[i] - s * (1.0 - s)).abs() <= 1e-15);
    }
}

#[test]
fn tanh_slope_is_one_at_zero_preactivation() {
    let mut r = rng(7);
    let specs = [LayerSpec::new(3, Activation::Tanh), LayerSpec::new(2, Activation::Tanh)];
    let p = network(&mut r, 2, &specs, 0.0);
    let d = p.local_derivative_diag(Array1::zeros(2).view(), &p.zeros()).unwrap();
    assert!(d.data().iter().all(|&v| v == 1.0));
}

#[test]
fn relu_kink_uses_zero_slope() {
    let p = NetworkParams::new(
        1,
        vec![Layer { spec: LayerSpec::new(2, Activation::Relu), weights: array![[1.0], [1.0]], bias: array![0.0, 1.0] }],
    )
    .unwrap();
    let d = p.local_derivative_diag(array![0.0].view(), &p.zeros()).unwrap();
    assert_eq!(d.data(), &array![0.0, 1.0]);
}

#[test]
fn block_views_are_contiguous() {
    let mut r = rng(8);
    let specs = [LayerSpec::new(2, Activation::Tanh), LayerSpec::new(3, Activation::Tanh)];
    let p = network(&mut r, 1, &specs, 0.0);
    let v = global(&p, Array1::from_iter((0..5).map(f64::from)));
    assert_eq!(v.block(0), array![0.0, 1.0]);
    assert_eq!(v.block(1), array![2.0, 3.0, 4.0]);
    assert!(GlobalVector::<f64>::from_data(p.layout().clone(), Array1::zeros(4)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn global_w_is_nilpotent(seed in any::<u64>()) {
        let inst = random_instance(seed, 1..=8, 12, &[Activation::Tanh, Activation::Relu, Activation::Sigmoid]);
        let p = &inst.params;
        let mut r = rng(seed ^ 1);
        let start = random_global(p, &mut r);
        let (mut u, mut v) = (start.clone(), start);
        for _ in 0..p.num_layers() {
            u = p.apply_global_w(&u).unwrap();
            v = p.apply_global_wt(&v).unwrap();
        }
        prop_assert!(u.data().iter().all(|&e| e == 0.0));
        prop_assert!(v.data().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn forward_stack_is_a_fixed_point(seed in any::<u64>()) {
        let inst = random_instance(seed, 1..=8, 16, &[Activation::Identity, Activation::Tanh, Activation::Sigmoid, Activation::Relu]);
        let fp = inst.params.forward_pass(inst.input.view()).unwrap();
        let f = inst.params.forward_field(inst.input.view(), &fp.stacked).unwrap();
        prop_assert!(f.data().iter().all(|e| e.abs() <= 1e-12));
    }

    #[test]
    fn global_w_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let inst = random_instance(seed, 1..=6, 10, &SMOOTH);
        let p = &inst.params;
        let mut r = rng(seed ^ 2);
        let u = random_global(p, &mut r);
        let v = random_global(p, &mut r);
        let lhs = p.apply_global_w(&u.scaled(alpha).add(&v.scaled(beta))).unwrap();
        let rhs = p.apply_global_w(&u).unwrap().scaled(alpha).add(&p.apply_global_w(&v).unwrap().scaled(beta));
        let scale = 1.0 + rhs.norm();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-13 * scale);
    }

    #[test]
    fn transpose_is_the_adjoint(seed in any::<u64>()) {
        let inst = random_instance(seed, 1..=8, 16, &SMOOTH);
        let p = &inst.params;
        let mut r = rng(seed ^ 3);
        let u = random_global(p, &mut r);
        let v = random_global(p, &mut r);
        let lhs = p.apply_global_w(&u).unwrap().dot(&v);
        let rhs = u.dot(&p.apply_global_wt(&v).unwrap());
        let scale = p.apply_global_w(&u).unwrap().norm() * v.norm();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1e-300));
    }
}
