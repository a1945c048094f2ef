//! Backprop against central finite differences.

use hwnas_core::arch::Activation;
use hwnas_core::fixed::FixedPointFormat;
use hwnas_core::nn::{LossKind, Network, ParamRef, Targets};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const H: f64 = 1e-5;
// below this magnitude both values are treated as zero-scale and compared
// relative to it
const SCALE_FLOOR: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(SCALE_FLOOR)
}

fn batch(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// Worst relative error over every trainable scalar.
fn check(net: &Network, x: &Array2<f64>, labels: &[usize]) -> (f64, usize) {
    let grads = net.gradients(x, Targets::Classes(labels)).unwrap();
    let refs = net.param_refs();
    let mut worst: f64 = 0.0;
    for &p in &refs {
        let v = net.param(p);
        let mut plus = net.clone();
        plus.set_param(p, v + H);
        let mut minus = net.clone();
        minus.set_param(p, v - H);
        let fd = (plus.loss_value(x, Targets::Classes(labels)).unwrap()
            - minus.loss_value(x, Targets::Classes(labels)).unwrap())
            / (2.0 * H);
        let e = rel_err(grads.get(p), fd);
        assert!(e <= TOL, "{p:?}: backprop {} vs fd {fd} (rel {e:.2e})", grads.get(p));
        worst = worst.max(e);
    }
    (worst, refs.len())
}

#[test]
fn every_activation_bn_and_l1_combination() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let activations =
        [Activation::Relu, Activation::Tanh, Activation::Sigmoid, Activation::LeakyRelu, Activation::None];
    let mut configs = 0;
    for (a_i, &act) in activations.iter().enumerate() {
        for bn in [false, true] {
            for l1 in [0.0, 1e-3] {
                for (loss, out) in [(LossKind::SoftmaxCrossEntropy, 3), (LossKind::BinaryCrossEntropyWithLogits, 1)] {
                    let seed = (a_i * 8 + usize::from(bn) * 4 + usize::from(l1 > 0.0) * 2 + out) as u64;
                    let net = Network::new(&[5, 8, 6, out], act, bn, 0.0, l1, loss, seed);
                    let x = batch(8, 5, &mut rng);
                    let labels: Vec<usize> = (0..8).map(|_| rng.random_range(0..out.max(2))).collect();
                    let (_, n) = check(&net, &x, &labels);
                    assert!(n >= 100, "only {n} parameters checked");
                    configs += 1;
                }
            }
        }
    }
    assert_eq!(configs, 40);
}

#[test]
fn masked_entries_have_zero_gradient_and_others_still_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = Network::new(&[4, 6, 3], Activation::Tanh, true, 0.0, 1e-3, LossKind::SoftmaxCrossEntropy, 9);
    net.layers[0].mask[[1, 2]] = false;
    net.layers[1].mask[[0, 0]] = false;
    net.apply_masks();
    let x = batch(6, 4, &mut rng);
    let labels = vec![0, 1, 2, 0, 1, 2];
    let g = net.gradients(&x, Targets::Classes(&labels)).unwrap();
    assert_eq!(g.get(ParamRef::Weight { layer: 0, row: 1, col: 2 }), 0.0);
    assert_eq!(g.get(ParamRef::Weight { layer: 1, row: 0, col: 0 }), 0.0);
    check(&net, &x, &labels);
}

#[test]
fn straight_through_matches_float_gradient_in_range() {
    // single affine layer with on-grid inputs and weights: the quantized
    // forward pass is exactly the float one, so STE gradients must agree
    let fmt = FixedPointFormat::new(16, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut float = Network::new(&[4, 3], Activation::None, false, 0.0, 0.0, LossKind::SoftmaxCrossEntropy, 3);
    for w in float.layers[0].weights.iter_mut() {
        *w = fmt.quantize(*w);
    }
    let x = batch(5, 4, &mut rng).mapv(|v| fmt.quantize(v));
    let labels = vec![0, 1, 2, 1, 0];
    let mut q = float.clone();
    q.quant = Some(fmt);
    let gf = float.gradients(&x, Targets::Classes(&labels)).unwrap();
    let gq = q.gradients(&x, Targets::Classes(&labels)).unwrap();
    for p in float.param_refs() {
        assert_eq!(gf.get(p), gq.get(p), "{p:?}");
    }
}

#[test]
fn straight_through_blocks_out_of_range_weights() {
    let fmt = FixedPointFormat::new(8, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let mut net = Network::new(&[3, 2], Activation::None, false, 0.0, 0.0, LossKind::SoftmaxCrossEntropy, 4);
    net.layers[0].weights[[0, 0]] = 10.0;
    net.quant = Some(fmt);
    let x = batch(4, 3, &mut rng);
    let g = net.gradients(&x, Targets::Classes(&[0, 1, 0, 1])).unwrap();
    assert_eq!(g.get(ParamRef::Weight { layer: 0, row: 0, col: 0 }), 0.0);
    assert_ne!(g.get(ParamRef::Weight { layer: 0, row: 1, col: 0 }), 0.0);
}
