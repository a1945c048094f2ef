use std::collections::BTreeSet;
use std::path::PathBuf;

use hwnas_core::arch::{decode_architecture, Activation, DecodeError};
use hwnas_core::config::{load_config, parse_config, ConfigError};
use hwnas_core::data::WindowSpec;
use hwnas_core::space::{ParamAssignment, ParamDomain, ParamValue, SearchSpace};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

const MINIMAL: &str = "\
study: {name: m}
dataset: {kind: jet, n: 100}
space:
  params:
    - {name: depth, choices: [1, 2]}
    - {name: width_1, choices: [4, 8]}
    - {name: width_2, choices: [4, 8]}
  conditional:
    - {param: width_2, when: depth, in: [2]}
objectives:
  - {metric: accuracy, direction: maximize}
  - {metric: bops, direction: minimize}
hls: {board: VU13P}
runtime: {trial_budget: 10, population_size: 5}
";

#[test]
fn shipped_configs_load_and_round_trip() {
    for name in ["jet.yaml", "qubit.yaml", "tiny.yaml"] {
        let cfg = load_config(config_dir().join(name)).unwrap();
        let again = parse_config(&cfg.to_yaml()).unwrap();
        assert_eq!(again, cfg, "{name}");
        assert_eq!(parse_config(&again.to_yaml()).unwrap().to_yaml(), cfg.to_yaml());
    }
}

#[test]
fn minimal_config_keeps_objective_order() {
    let cfg = parse_config(MINIMAL).unwrap();
    let names: Vec<&str> = cfg.objectives.iter().map(|o| o.name.as_str()).collect();
    assert_eq!(names, ["accuracy", "bops"]);
    assert_eq!(cfg.runtime.trial_budget, 10);
    let k3 = parse_config(&MINIMAL.replace("population_size: 5}", "population_size: 5, k_folds: 3}")).unwrap();
    assert_eq!(k3.runtime.k_folds, 3);
}

#[test]
fn config_errors_are_classified() {
    let too_big = MINIMAL.replace("population_size: 5", "population_size: 50");
    assert!(matches!(parse_config(&too_big), Err(ConfigError::Validation(_))));

    let typo = MINIMAL.replace("hls: {board: VU13P}", "hls: {board: VU13P, reuse_factr: 2}");
    assert!(parse_config(&typo).is_err());

    let missing = MINIMAL.replace("hls: {board: VU13P}\n", "");
    match parse_config(&missing) {
        Err(ConfigError::MissingKey { key, .. }) => assert_eq!(key, "hls"),
        other => panic!("{other:?}"),
    }

    let broken = MINIMAL.replace("objectives:\n", "objectives: [\n");
    match parse_config(&broken) {
        Err(ConfigError::Parse { line, .. }) => assert!(line.is_some()),
        other => panic!("{other:?}"),
    }

    let wrong_dir = MINIMAL.replace("{metric: accuracy, direction: maximize}", "{metric: accuracy, direction: minimize}");
    assert!(matches!(parse_config(&wrong_dir), Err(ConfigError::Validation(_))));

    let cycle = MINIMAL.replace(
        "    - {param: width_2, when: depth, in: [2]}\n",
        "    - {param: width_2, when: width_1, in: [4]}\n    - {param: width_1, when: width_2, in: [4]}\n",
    );
    assert!(matches!(parse_config(&cycle), Err(ConfigError::Validation(_))));
}

#[test]
fn numeric_choices_are_kept_as_written() {
    let cfg = parse_config(&MINIMAL.replace("[4, 8]}\n    - {name: width_2", "[4, 8]}\n    - {name: l1, choices: [0.0, 1.0e-4, 0.1]}\n    - {name: width_2")).unwrap();
    let l1 = cfg.space.domain("l1").unwrap();
    assert_eq!(l1.choices, vec![ParamValue::Float(0.0), ParamValue::Float(1e-4), ParamValue::Float(0.1)]);
    assert_eq!(cfg.space.domain("depth").unwrap().choices[0], ParamValue::Int(1));
}

fn jet_space() -> SearchSpace {
    load_config(config_dir().join("jet.yaml")).unwrap().space
}

fn qubit_space() -> SearchSpace {
    load_config(config_dir().join("qubit.yaml")).unwrap().space
}

fn active_names(space: &SearchSpace, a: &ParamAssignment) -> BTreeSet<String> {
    // fixed point of the activation rule, computed from scratch
    let mut active: BTreeSet<String> = BTreeSet::new();
    loop {
        let before = active.len();
        for p in &space.params {
            let ok = space.conditional.iter().filter(|r| r.param == p.name).all(|r| {
                active.contains(&r.when) && a.get(&r.when).is_some_and(|v| r.values.iter().any(|c| c.same_choice(v)))
            });
            if ok {
                active.insert(p.name.clone());
            }
        }
        if active.len() == before {
            return active;
        }
    }
}

#[test]
fn decode_examples() {
    let space = SearchSpace::new(vec![
        ParamDomain::new("depth", vec![ParamValue::Int(4)]),
        ParamDomain::new("width_1", vec![ParamValue::Int(64)]),
        ParamDomain::new("width_2", vec![ParamValue::Int(32)]),
        ParamDomain::new("width_3", vec![ParamValue::Int(16)]),
        ParamDomain::new("width_4", vec![ParamValue::Int(32)]),
        ParamDomain::new("activation", vec!["relu".into(), "None".into()]),
        ParamDomain::new("batch_norm", vec![ParamValue::Bool(true)]),
    ]);
    let mut a: ParamAssignment = space.params.iter().map(|p| (p.name.clone(), p.choices[0].clone())).collect();
    let spec = decode_architecture(&a, &space).unwrap();
    assert_eq!(spec.depth, 4);
    assert_eq!(spec.layer_widths, vec![64, 32, 16, 32]);
    assert_eq!(spec.activation, Activation::Relu);
    assert!(spec.batch_norm);
    a.insert("activation".into(), "None".into());
    assert_eq!(decode_architecture(&a, &space).unwrap().activation, Activation::None);
    a.remove("width_3");
    assert!(decode_architecture(&a, &space).is_err());

    let w = SearchSpace::new(vec![
        ParamDomain::new("depth", vec![ParamValue::Int(1)]),
        ParamDomain::new("width_1", vec![ParamValue::Int(8)]),
        ParamDomain::new("window_start", vec![ParamValue::Int(100)]),
        ParamDomain::new("window_size", vec![ParamValue::Int(400)]),
    ]);
    let a: ParamAssignment = w.params.iter().map(|p| (p.name.clone(), p.choices[0].clone())).collect();
    assert_eq!(decode_architecture(&a, &w).unwrap().window, Some(WindowSpec { start: 100, size: 400 }));
}

#[test]
fn missing_depth_is_a_decode_error() {
    let space = SearchSpace::new(vec![ParamDomain::new("width_1", vec![ParamValue::Int(4)])]);
    let a: ParamAssignment = [("width_1".to_string(), ParamValue::Int(4))].into();
    assert!(matches!(decode_architecture(&a, &space), Err(DecodeError::Missing(_))));
}

#[test]
fn two_choice_frequencies_are_balanced() {
    let space = SearchSpace::new(vec![ParamDomain::new("a", vec!["x".into(), "y".into()])]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let xs = (0..10_000).filter(|_| space.sample_uniform(&mut rng)["a"] == ParamValue::from("x")).count();
    let f = xs as f64 / 10_000.0;
    assert!((0.45..=0.55).contains(&f), "{f}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sampled_assignments_follow_the_active_set_rule(seed in any::<u64>()) {
        for space in [jet_space(), qubit_space()] {
            let a = space.sample_uniform(&mut ChaCha8Rng::seed_from_u64(seed));
            let keys: BTreeSet<String> = a.keys().cloned().collect();
            prop_assert_eq!(&keys, &active_names(&space, &a));
            prop_assert!(space.check_assignment(&a).is_ok());
            let spec = decode_architecture(&a, &space).unwrap();
            prop_assert_eq!(spec.layer_widths.len(), spec.depth);
            for i in 1..=8 {
                let slot = format!("width_{i}");
                let declared = space.domain(&slot).is_some();
                prop_assert_eq!(a.contains_key(&slot), declared && i <= spec.depth);
            }
        }
    }

    #[test]
    fn decode_is_pure_and_sampling_reproducible(seed in any::<u64>()) {
        let space = jet_space();
        let a = space.sample_uniform(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = space.sample_uniform(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(decode_architecture(&a, &space).unwrap(), decode_architecture(&a, &space).unwrap());
    }

    #[test]
    fn config_round_trip_is_a_fixed_point(seed in any::<u64>(), budget in 1usize..1000, pop_frac in 0.0f64..1.0, k in 1usize..6) {
        let mut cfg = parse_config(MINIMAL).unwrap();
        cfg.study.seed = seed;
        cfg.runtime.trial_budget = budget;
        cfg.runtime.population_size = ((budget as f64 * pop_frac) as usize).max(1);
        cfg.runtime.k_folds = k;
        cfg.validate().unwrap();
        let once = parse_config(&cfg.to_yaml()).unwrap();
        prop_assert_eq!(&once, &cfg);
        prop_assert_eq!(once.to_yaml(), cfg.to_yaml());
    }
}
