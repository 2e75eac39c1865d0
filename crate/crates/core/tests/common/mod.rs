#![allow(dead_code)]

use dyadic_core::{
    Activation, GlobalVector, Layer, LayerSpec, Loss, LossKind, LossSpec, NetworkParams,
};
use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const SMOOTH: [Activation; 3] = [Activation::Identity, Activation::Tanh, Activation::Sigmoid];

pub struct Instance {
    pub params: NetworkParams<f64>,
    pub input: Array1<f64>,
    pub loss: LossSpec<f64>,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut impl Rng, n: usize, std: f64) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || std * rng.sample::<f64, _>(StandardNormal))
}

pub fn network(rng: &mut impl Rng, input_dim: usize, specs: &[LayerSpec], bias_std: f64) -> NetworkParams<f64> {
    let mut fan_in = input_dim;
    let mut layers = Vec::new();
    for spec in specs {
        let std = 1.0 / (fan_in as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((spec.width, fan_in), || std * rng.sample::<f64, _>(StandardNormal));
        let bias = gaussian_vec(rng, spec.width, bias_std);
        layers.push(Layer { spec: *spec, weights, bias });
        fan_in = spec.width;
    }
    NetworkParams::new(input_dim, layers).unwrap()
}

/// Random chain with `L` in `layers`, widths in `1..=max_width`, hidden
/// activations from `acts`, and a random loss. CE instances get an identity
/// output layer.
pub fn random_instance(
    seed: u64,
    layers: std::ops::RangeInclusive<usize>,
    max_width: usize,
    acts: &[Activation],
) -> Instance {
    let mut r = rng(seed);
    let depth = r.random_range(layers);
    let input_dim = r.random_range(1..=max_width);
    let kind = if r.random_bool(0.5) { LossKind::Mse } else { LossKind::SoftmaxCrossEntropy };
    let mut specs = Vec::new();
    for l in 0..depth {
        let last = l + 1 == depth;
        let width = if last && kind == LossKind::SoftmaxCrossEntropy {
            r.random_range(2..=max_width.max(2))
        } else {
            r.random_range(1..=max_width)
        };
        let act = if last && kind == LossKind::SoftmaxCrossEntropy {
            Activation::Identity
        } else {
            acts[r.random_range(0..acts.len())]
        };
        specs.push(LayerSpec::new(width, act));
    }
    let params = network(&mut r, input_dim, &specs, 0.5);
    let input = gaussian_vec(&mut r, input_dim, 1.0);
    let out = params.output_dim();
    let target = match kind {
        LossKind::Mse => gaussian_vec(&mut r, out, 1.0),
        LossKind::SoftmaxCrossEntropy => {
            let mut t = Array1::zeros(out);
            t[r.random_range(0..out)] = 1.0;
            t
        }
    };
    Instance { params, input, loss: LossSpec::new(kind, target).unwrap() }
}

/// The desk-scale reference shape: 2 inputs, eight tanh layers of 32, two logits.
pub fn reference_mlp(seed: u64) -> Instance {
    let mut r = rng(seed);
    let mut specs = vec![LayerSpec::new(32, Activation::Tanh); 8];
    specs.push(LayerSpec::new(2, Activation::Identity));
    let params = network(&mut r, 2, &specs, 0.0);
    let input = gaussian_vec(&mut r, 2, 1.0);
    let mut t = Array1::zeros(2);
    t[r.random_range(0..2)] = 1.0;
    Instance { params, input, loss: LossSpec::cross_entropy(t).unwrap() }
}

pub fn global(params: &NetworkParams<f64>, data: Array1<f64>) -> GlobalVector<f64> {
    GlobalVector::from_data(params.layout().clone(), data).unwrap()
}

pub fn random_global(params: &NetworkParams<f64>, rng: &mut impl Rng) -> GlobalVector<f64> {
    global(params, gaussian_vec(rng, params.state_dim(), 1.0))
}

fn offsets(params: &NetworkParams<f64>) -> Vec<usize> {
    let mut o = vec![0];
    for layer in params.layers() {
        o.push(o.last().unwrap() + layer.spec.width);
    }
    o
}

/// Dense strictly block-lower-triangular `W`.
pub fn dense_w(params: &NetworkParams<f64>) -> Array2<f64> {
    let o = offsets(params);
    let n = *o.last().unwrap();
    let mut w = Array2::zeros((n, n));
    for l in 1..params.num_layers() {
        let wl = &params.layer(l).weights;
        for i in 0..wl.nrows() {
            for j in 0..wl.ncols() {
                w[(o[l] + i, o[l - 1] + j)] = wl[(i, j)];
            }
        }
    }
    w
}

pub fn sigma(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Identity => z,
        Activation::Tanh => z.tanh(),
        Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        Activation::Relu => z.max(0.0),
    }
}

pub fn sigma_prime(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Identity => 1.0,
        Activation::Tanh => 1.0 - z.tanh() * z.tanh(),
        Activation::Sigmoid => {
            let s = 1.0 / (1.0 + (-z).exp());
            s * (1.0 - s)
        }
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

fn activation_of_entry(params: &NetworkParams<f64>) -> Vec<Activation> {
    params
        .layers()
        .iter()
        .flat_map(|l| std::iter::repeat_n(l.spec.activation, l.spec.width))
        .collect()
}

/// Drive vector with explicit loops.
pub fn naive_beta(params: &NetworkParams<f64>, x: ArrayView1<'_, f64>) -> Array1<f64> {
    let mut out = Vec::new();
    for (l, layer) in params.layers().iter().enumerate() {
        for i in 0..layer.spec.width {
            let mut v = layer.bias[i];
            if l == 0 {
                for j in 0..x.len() {
                    v += layer.weights[(i, j)] * x[j];
                }
            }
            out.push(v);
        }
    }
    Array1::from(out)
}

/// Pre-activations `W a + beta` through the dense matrix.
pub fn dense_pre(params: &NetworkParams<f64>, x: ArrayView1<'_, f64>, a: &Array1<f64>) -> Array1<f64> {
    dense_w(params).dot(a) + naive_beta(params, x)
}

pub fn dense_field(params: &NetworkParams<f64>, x: ArrayView1<'_, f64>, a: &Array1<f64>) -> Array1<f64> {
    let acts = activation_of_entry(params);
    let pre = dense_pre(params, x, a);
    Array1::from_shape_fn(a.len(), |i| sigma(acts[i], pre[i]) - a[i])
}

pub fn dense_slope(params: &NetworkParams<f64>, x: ArrayView1<'_, f64>, m: &Array1<f64>) -> Array1<f64> {
    let acts = activation_of_entry(params);
    let pre = dense_pre(params, x, m);
    Array1::from_shape_fn(m.len(), |i| sigma_prime(acts[i], pre[i]))
}

/// Layer-by-layer forward pass with explicit loops.
pub fn naive_forward(params: &NetworkParams<f64>, x: ArrayView1<'_, f64>) -> Array1<f64> {
    let mut prev: Vec<f64> = x.to_vec();
    let mut stacked = Vec::new();
    for layer in params.layers() {
        let mut next = Vec::with_capacity(layer.spec.width);
        for i in 0..layer.spec.width {
            let mut z = layer.bias[i];
            for (j, p) in prev.iter().enumerate() {
                z += layer.weights[(i, j)] * p;
            }
            next.push(sigma(layer.spec.activation, z));
        }
        stacked.extend_from_slice(&next);
        prev = next;
    }
    Array1::from(stacked)
}

/// Backprop through the dense matrices: sensitivities `s = g + W^T D s` solved
/// by back substitution, then `grad W_l = (D_l s_l) a_{l-1}^T`. Returns the
/// stacked sensitivities and the flattened gradient (weights row-major, then bias, per layer).
pub fn dense_backprop(
    params: &NetworkParams<f64>,
    x: ArrayView1<'_, f64>,
    loss: &dyn Loss<f64>,
) -> (Array1<f64>, Vec<f64>) {
    let a = naive_forward(params, x);
    let o = offsets(params);
    let n = a.len();
    let d = dense_slope(params, x, &a);
    let w = dense_w(params);
    let last = params.num_layers() - 1;
    let g_out = loss.gradient(a.slice(ndarray::s![o[last]..]));
    let mut s = Array1::zeros(n);
    for i in (0..n).rev() {
        let mut v = if i >= o[last] { g_out[i - o[last]] } else { 0.0 };
        for k in (i + 1)..n {
            v += w[(k, i)] * d[k] * s[k];
        }
        s[i] = v;
    }
    let mut flat = Vec::new();
    for l in 0..params.num_layers() {
        let layer = params.layer(l);
        let pre: Vec<f64> = if l == 0 { x.to_vec() } else { a.slice(ndarray::s![o[l - 1]..o[l]]).to_vec() };
        for i in 0..layer.spec.width {
            let delta = d[o[l] + i] * s[o[l] + i];
            for p in &pre {
                flat.push(delta * p);
            }
        }
        for i in 0..layer.spec.width {
            flat.push(d[o[l] + i] * s[o[l] + i]);
        }
    }
    (s, flat)
}

pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

pub fn max_rel_entry(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-300))
        .fold(0.0, f64::max)
}

/// Loss with identically zero gradient.
pub struct ZeroLoss(pub usize);

impl Loss<f64> for ZeroLoss {
    fn output_dim(&self) -> usize {
        self.0
    }

    fn value(&self, _: ArrayView1<'_, f64>) -> f64 {
        0.0
    }

    fn gradient(&self, _: ArrayView1<'_, f64>) -> Array1<f64> {
        Array1::zeros(self.0)
    }
}
