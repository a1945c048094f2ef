use hwnas_core::arch::Activation;
use hwnas_core::compress::{attach_qat, local_search, prune_step, rewind, sparsity, LocalSearchSchedule, LocalTrainConfig};
use hwnas_core::cost::effective_bops;
use hwnas_core::data::{gen_jet_like, stratified_kfold};
use hwnas_core::fixed::FixedPointFormat;
use hwnas_core::nn::{fit, LossKind, Mode, Network, Targets, TrainConfig};
use ndarray::Array2;
use proptest::prelude::*;

fn fmt(t: u32, i: u32) -> FixedPointFormat {
    FixedPointFormat::new(t, i).unwrap()
}

fn precisions() -> Vec<FixedPointFormat> {
    vec![fmt(32, 16), fmt(16, 6), fmt(8, 3), fmt(4, 1)]
}

fn jet_net(seed: u64) -> Network {
    Network::new(&[16, 64, 32, 32, 5], Activation::Relu, true, 0.0, 1e-4, LossKind::SoftmaxCrossEntropy, seed)
}

/// Unmasked count after `steps` floor-prunes of `n` weights.
fn floor_oracle(n: usize, rate: f64, steps: usize) -> usize {
    (0..steps).fold(n, |a, _| a - (rate * a as f64).floor() as usize)
}

#[test]
fn quantization_examples() {
    let f = fmt(8, 3);
    assert_eq!(f.quantize(0.3), 0.3125);
    assert_eq!(f.encode(0.3), 10);
    assert_eq!(f.quantize(5.0), 3.96875);
    assert_eq!(f.quantize(-9.0), -4.0);
    assert_eq!(f.quantize(0.0), 0.0);
}

#[test]
fn trained_qat_weights_lie_on_the_grid() {
    let data = gen_jet_like(300, 16, 5, 2.0, 1).unwrap();
    for f in precisions() {
        let mut net = jet_net(2);
        attach_qat(&mut net, f);
        fit(&mut net, &data.features, Targets::Classes(&data.labels), &TrainConfig::new(2, 64, 1e-3, 3)).unwrap();
        for l in 0..net.layers.len() {
            assert!(net.forward_weights(l).iter().all(|&w| f.on_grid(w) && f.in_range(w)), "{f} layer {l}");
            assert!(net.forward_bias(l).iter().all(|&b| f.on_grid(b)), "{f} layer {l} bias");
        }
    }
}

#[test]
fn wide_format_on_grid_weights_match_float_forward() {
    let f = fmt(32, 16);
    let mut float = Network::new(&[6, 5, 3], Activation::None, false, 0.0, 0.0, LossKind::SoftmaxCrossEntropy, 8);
    for l in &mut float.layers {
        l.weights.mapv_inplace(|w| f.quantize(w));
        l.bias.mapv_inplace(|b| f.quantize(b));
    }
    let x = Array2::from_shape_fn((4, 6), |(i, j)| f.quantize((i as f64 - j as f64) / 7.0));
    let mut q = float.clone();
    attach_qat(&mut q, f);
    let (a, b) = (float.forward(&x, Mode::Eval).unwrap(), q.forward(&x, Mode::Eval).unwrap());
    for (u, v) in a.iter().zip(b.iter()) {
        assert!((u - v).abs() <= 2.0 * f.resolution(), "{u} vs {v}");
    }
}

#[test]
fn ten_prune_steps_follow_floor_arithmetic() {
    let mut net = jet_net(5);
    let sizes: Vec<usize> = net.layers.iter().map(|l| l.mask.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut prev = 1.0;
    for step in 1..=10 {
        prune_step(&mut net, 0.2);
        let s = sparsity(&net);
        for (l, &n) in sizes.iter().enumerate() {
            assert_eq!(net.layers[l].unmasked(), floor_oracle(n, 0.2, step), "layer {l} step {step}");
        }
        assert!(s.global <= prev);
        prev = s.global;
    }
    let global = sparsity(&net).global;
    // floor leaves e_k = 0.8 e_{k-1} + frac < Σ 0.8^j extra weights per layer
    let slack: f64 = (0..10).map(|j| 0.8f64.powi(j)).sum::<f64>() * sizes.len() as f64 / total as f64;
    assert!(global >= 0.8f64.powi(10) && global - 0.8f64.powi(10) <= slack, "global density {global}");
}

#[test]
fn prune_examples() {
    let mut net = Network::new(&[4, 1], Activation::None, false, 0.0, 0.0, LossKind::MeanSquaredError, 0);
    net.layers[0].weights = Array2::from_shape_vec((4, 1), vec![4.0, -3.0, 2.0, -1.0]).unwrap();
    assert_eq!(prune_step(&mut net, 0.5), vec![2]);
    let m: Vec<bool> = net.layers[0].mask.iter().copied().collect();
    assert_eq!(m, vec![true, true, false, false]);

    // equal magnitudes: lowest row-major indices go first
    let mut net = Network::new(&[10, 10], Activation::None, false, 0.0, 0.0, LossKind::MeanSquaredError, 0);
    net.layers[0].weights.fill(0.5);
    prune_step(&mut net, 0.2);
    let m: Vec<bool> = net.layers[0].mask.iter().copied().collect();
    assert!(m[..20].iter().all(|&b| !b) && m[20..].iter().all(|&b| b));
    prune_step(&mut net, 0.2);
    assert_eq!(net.layers[0].unmasked(), 64);

    // a layer with nothing left is skipped
    net.layers[0].mask.fill(false);
    assert_eq!(prune_step(&mut net, 0.2), vec![0]);
}

#[test]
fn rewind_restores_survivors_bit_for_bit() {
    let data = gen_jet_like(200, 16, 5, 2.0, 7).unwrap();
    let mut net = jet_net(9);
    attach_qat(&mut net, fmt(16, 6));
    let snap = net.snapshot();
    prune_step(&mut net, 0.2);
    fit(&mut net, &data.features, Targets::Classes(&data.labels), &TrainConfig::new(1, 32, 1e-3, 1)).unwrap();
    let masks = net.masks();
    rewind(&mut net, &snap, &masks).unwrap();
    for (l, layer) in net.layers.iter().enumerate() {
        for ((&w, &m), &s) in layer.weights.iter().zip(layer.mask.iter()).zip(snap.layers[l].weights.iter()) {
            if m {
                assert_eq!(w.to_bits(), s.to_bits());
            } else {
                assert_eq!(w, 0.0);
            }
        }
        assert_eq!(layer.bias, snap.layers[l].bias);
        assert_eq!(layer.bn, snap.layers[l].bn);
    }
    // rewinding twice from different trained states lands on the same weights
    let first = net.snapshot();
    fit(&mut net, &data.features, Targets::Classes(&data.labels), &TrainConfig::new(1, 32, 1e-3, 2)).unwrap();
    rewind(&mut net, &snap, &masks).unwrap();
    assert_eq!(net.snapshot(), first);
}

#[test]
fn rewind_with_extreme_masks() {
    let mut net = jet_net(3);
    let snap = net.snapshot();
    let ones: Vec<_> = net.masks();
    rewind(&mut net, &snap, &ones).unwrap();
    assert_eq!(net.snapshot(), snap);
    let zeros: Vec<_> = ones.iter().map(|m| m.mapv(|_| false)).collect();
    rewind(&mut net, &snap, &zeros).unwrap();
    assert!(net.layers.iter().all(|l| l.weights.iter().all(|&w| w == 0.0)));
    let bad = vec![Array2::from_elem((2, 2), true)];
    assert!(rewind(&mut net, &snap, &bad).is_err());
}

#[test]
fn effective_bops_strictly_decrease_while_pruning() {
    let mut net = jet_net(4);
    attach_qat(&mut net, fmt(8, 3));
    let mut prev = effective_bops(&net, fmt(16, 6));
    for _ in 0..10 {
        let removed: usize = prune_step(&mut net, 0.2).iter().sum();
        let now = effective_bops(&net, fmt(16, 6));
        if removed > 0 {
            assert!(now < prev, "{now} !< {prev}");
        }
        prev = now;
    }
}

fn small_schedule(iterations: usize, rate: f64) -> LocalSearchSchedule {
    LocalSearchSchedule { qat_epochs: 2, iterations, epochs_per_iteration: 1, pruning_rate: rate, precisions: vec![fmt(16, 6), fmt(8, 3)] }
}

fn train_cfg() -> LocalTrainConfig {
    LocalTrainConfig { batch_size: 32, learning_rate: 1e-3, seed: 17, default_precision: fmt(16, 6) }
}

#[test]
fn local_search_logs_every_iteration_with_monotone_density() {
    let data = gen_jet_like(240, 16, 5, 3.0, 11).unwrap();
    let plan = stratified_kfold(&data.labels, 2, 5).unwrap();
    let splits = plan.splits();
    let seeds: Vec<Network> = splits
        .iter()
        .map(|s| {
            let mut n = jet_net(1);
            let t = data.subset(&s.train);
            let tc = TrainConfig { standardize: false, ..TrainConfig::new(2, 32, 1e-3, 0) };
            fit(&mut n, &t.features, Targets::Classes(&t.labels), &tc).unwrap();
            n
        })
        .collect();
    let out = local_search(&seeds, &small_schedule(4, 0.2), &data, &splits, &train_cfg());
    assert!(out.error.is_none());
    assert_eq!(out.results.len(), 2);
    for r in &out.results {
        assert_eq!(r.log.len(), 4);
        assert!(r.log.windows(2).all(|w| w[1].global_density <= w[0].global_density));
        assert!(r.log.windows(2).all(|w| w[1].effective_bops < w[0].effective_bops));
        let best = r.log.iter().map(|l| l.val_metric).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best_metric, best);
        assert_eq!(r.log[r.best_iteration - 1].val_metric, best);
    }
}

#[test]
fn no_op_pruning_keeps_the_warmup_model() {
    let data = gen_jet_like(120, 16, 5, 3.0, 12).unwrap();
    let split = hwnas_core::data::holdout_split(&data.labels, 0.2, 1);
    let seed = jet_net(6);
    // one weight per layer would need rate >= 1/fan size; this rate masks nothing
    let mut schedule = small_schedule(1, 1e-6);
    schedule.epochs_per_iteration = 0;
    schedule.precisions = vec![fmt(16, 6)];
    let out = local_search(std::slice::from_ref(&seed), &schedule, &data, std::slice::from_ref(&split), &train_cfg());
    let r = &out.results[0];
    assert_eq!(r.log[0].global_density, 1.0);

    // reproduce the warmup directly
    let mut warm = seed.clone();
    attach_qat(&mut warm, fmt(16, 6));
    let t = data.subset(&split.train);
    let seed_val = hwnas_core::derive_seed(hwnas_core::derive_seed(17, 0), 0);
    let tc = TrainConfig { standardize: false, ..TrainConfig::new(2, 32, 1e-3, seed_val) };
    fit(&mut warm, &t.features, Targets::Classes(&t.labels), &tc).unwrap();
    assert_eq!(r.network().unwrap().snapshot(), warm.snapshot());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn quantize_is_idempotent_and_on_grid(x in -1e4f64..1e4, t in 2u32..33, i in 1u32..17) {
        prop_assume!(i <= t);
        let f = fmt(t, i);
        let q = f.quantize(x);
        prop_assert_eq!(f.quantize(q), q);
        prop_assert!(f.on_grid(q) && f.in_range(q));
        if f.in_range(x) {
            prop_assert!((q - x).abs() <= f.resolution() / 2.0);
        }
    }

    #[test]
    fn floor_rule_matches_oracle(n in 1usize..400, rate in 0.01f64..0.99, steps in 1usize..6) {
        let mut net = Network::new(&[n, 1], Activation::None, false, 0.0, 0.0, LossKind::MeanSquaredError, n as u64);
        for _ in 0..steps {
            prune_step(&mut net, rate);
        }
        prop_assert_eq!(net.layers[0].unmasked(), floor_oracle(n, rate, steps));
    }
}
