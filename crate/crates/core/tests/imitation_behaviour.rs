mod common;

use advice_reuse::imitation::{
    nearest_rank, should_train, threshold_from_uncertainties, AdviceBuffer, ImitationConfig, ImitationModel,
    ImitationTriggerConfig,
};
use advice_reuse::nn::{Activation, DropoutMask, HeadKind, Network, NetworkSpec};
use common::brute_force_percentile;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn config() -> ImitationConfig {
    ImitationConfig {
        hidden_layers: vec![32],
        learning_rate: 1e-3,
        k_init: 500,
        k_periodic: 100,
        ..ImitationConfig::default()
    }
}

fn model(config: &ImitationConfig, dim: usize, actions: usize, seed: u64) -> ImitationModel {
    ImitationModel::new(config, dim, actions, seed, seed + 1, seed + 2).unwrap()
}

fn memorize(config: &ImitationConfig, state: &[f64]) -> f64 {
    let mut m = model(config, state.len(), 4, 1);
    let mut buffer = AdviceBuffer::new();
    buffer.push(state.to_vec(), 2);
    let trace = m.train(&mut buffer, 500, 32, 0).unwrap();
    assert_eq!(trace.len(), 500);
    assert_eq!(m.predict_action(state).unwrap(), 2);
    m.probabilities(state).unwrap()[2]
}

#[test]
fn single_pair_is_memorized() {
    // Default network on a dense observation.
    let p = memorize(&ImitationConfig::default(), &[1.0; 37]);
    assert!(p > 0.99, "default p = {p}");
    // Desk network on a one-hot grid observation.
    let desk = ImitationConfig {
        hidden_layers: vec![64],
        ..config()
    };
    let p = memorize(&desk, &one_hot(3, 37));
    assert!(p > 0.99, "desk p = {p}");
}

#[test]
fn first_training_uses_k_init_then_k_periodic() {
    let c = config();
    let trigger = c.trigger();
    let mut m = model(&c, 4, 2, 3);
    let mut buffer = AdviceBuffer::new();
    buffer.push(one_hot(0, 4), 1);
    for (call, expected) in [(0, c.k_init), (1, c.k_periodic), (2, c.k_periodic)] {
        let iterations = m.next_iterations(&trigger);
        let trace = m.train(&mut buffer, iterations, c.batch_size, call).unwrap();
        assert_eq!(trace.len(), expected);
    }
    assert_eq!(m.train_events(), 3);
}

#[test]
fn smoothed_loss_is_non_increasing_on_separable_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut buffer = AdviceBuffer::new();
    for _ in 0..200 {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let label = usize::from(x[0] + 0.5 * x[1] > 0.0);
        buffer.push(x, label);
    }
    let mut m = model(&config(), 4, 2, 5);
    let trace = m.train(&mut buffer, 500, 32, 0).unwrap();
    let windows: Vec<f64> = trace.chunks(50).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    for pair in windows.windows(2) {
        assert!(pair[1] <= pair[0], "windowed losses {windows:?}");
    }
}

#[test]
fn should_train_worked_examples_and_reset() {
    let trigger = ImitationTriggerConfig {
        n_min: 100,
        t_min: 50,
        k_init: 1,
        k_periodic: 1,
        batch_size: 1,
    };
    let with_new = |n: usize| {
        let mut b = AdviceBuffer::new();
        for i in 0..n {
            b.push(vec![i as f64], 0);
        }
        b
    };
    assert!(should_train(&with_new(100), &trigger, 0));
    assert!(should_train(&with_new(60), &trigger, 50));
    assert!(!should_train(&with_new(40), &trigger, 500));

    let mut buffer = with_new(150);
    let mut m = model(&config(), 1, 2, 0);
    m.train(&mut buffer, 1, 1, 77).unwrap();
    assert_eq!((buffer.n_last(), buffer.t_last()), (150, 77));
    assert!(!should_train(&buffer, &trigger, 77));
}

#[test]
fn threshold_worked_examples() {
    let u: Vec<f64> = (1..=10).map(f64::from).collect();
    assert_eq!(threshold_from_uncertainties(u.clone(), 90.0), Some(9.0));
    assert_eq!(threshold_from_uncertainties(u.clone(), 100.0), Some(10.0));
    assert_eq!(threshold_from_uncertainties(Vec::new(), 90.0), None);
    assert_eq!(nearest_rank(&[4.0], 1.0), Some(4.0));
}

#[test]
fn misclassified_buffer_keeps_the_previous_threshold() {
    let mut m = model(&config(), 4, 3, 9);
    let mut buffer = AdviceBuffer::new();
    buffer.push(one_hot(0, 4), 1);
    m.train(&mut buffer, 300, 16, 0).unwrap();
    let tau = m.tune_threshold(&buffer).unwrap();
    assert!(tau.is_some());
    // A buffer whose only label disagrees with the model leaves U empty.
    let mut wrong = AdviceBuffer::new();
    wrong.push(one_hot(0, 4), 2);
    assert_eq!(m.tune_threshold(&wrong).unwrap(), tau);

    let mut fresh = model(&config(), 4, 3, 9);
    assert!(fresh.tune_threshold(&buffer).is_err(), "untrained models cannot tune");
    fresh.train(&mut wrong.clone(), 300, 16, 0).unwrap();
    assert_eq!(fresh.tune_threshold(&buffer).unwrap(), None);
}

#[test]
fn tuned_threshold_matches_brute_force_on_the_real_pipeline() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut buffer = AdviceBuffer::new();
    for _ in 0..60 {
        let s = rng.gen_range(0..12);
        buffer.push(one_hot(s, 12), s % 4);
    }
    for p in [50.0, 90.0, 100.0] {
        let c = ImitationConfig {
            percentile: p,
            ..config()
        };
        let mut m = model(&c, 12, 4, 21);
        m.train(&mut buffer.clone(), 400, 32, 0).unwrap();
        // A clone shares the MC stream position, so it sees the same U.
        let known = m.clone().known_uncertainties(&buffer).unwrap();
        assert!(!known.is_empty());
        assert_eq!(m.tune_threshold(&buffer).unwrap(), brute_force_percentile(&known, p));
        assert!(known.contains(&m.tau().unwrap()));
    }
}

#[test]
fn two_mask_fixture_gives_variance_one_quarter() {
    let spec = NetworkSpec {
        input_dim: 1,
        hidden_layers: vec![2],
        output_dim: 2,
        dropout_rate: 0.5,
        head_kind: HeadKind::SoftmaxClassifier,
        activation: Activation::Relu,
    };
    let mut net = Network::new(spec, 0).unwrap();
    let hidden = net.layer_mut(0);
    hidden.weights.copy_from_slice(&[1.0, 1.0]);
    hidden.bias.fill(0.0);
    let head = net.layer_mut(1);
    head.weights.copy_from_slice(&[25.0, -25.0, -25.0, 25.0]);
    head.bias.fill(0.0);
    // Inverted dropout at rate 0.5 scales survivors by 2.
    let a = DropoutMask::from_layers(vec![vec![2.0, 0.0]]);
    let b = DropoutMask::from_layers(vec![vec![0.0, 2.0]]);
    let samples = net.forward_mc(&[1.0], &[a, b]).unwrap();
    let u = advice_reuse::imitation::predictive_variance(&samples);
    assert!((u - 0.25).abs() < 1e-9, "u = {u}");
}

#[test]
fn uncertainty_degenerate_cases() {
    let s = one_hot(2, 5);
    let mut no_dropout = model(
        &ImitationConfig {
            dropout_rate: 0.0,
            ..config()
        },
        5,
        3,
        1,
    );
    assert_eq!(no_dropout.uncertainty(&s).unwrap(), 0.0);
    let mut single = model(
        &ImitationConfig {
            mc_passes: 1,
            ..config()
        },
        5,
        3,
        1,
    );
    assert_eq!(single.uncertainty(&s).unwrap(), 0.0);
    let mut normal = model(&config(), 5, 3, 1);
    assert!(normal.uncertainty(&s).unwrap() > 0.0);
}

#[test]
fn memorized_states_are_rarely_recollected_and_novel_ones_are() {
    let c = config();
    let mut m = model(&c, 10, 4, 13);
    let mut buffer = AdviceBuffer::new();
    // The same advice collected at the same state many times.
    for _ in 0..50 {
        buffer.push(one_hot(3, 10), 2);
    }
    m.train(&mut buffer, 500, 32, 0).unwrap();
    let tau = m.tune_threshold(&buffer).unwrap().unwrap();
    let probes = 200;
    let recollect = |m: &mut ImitationModel, s: &[f64]| {
        (0..probes).filter(|_| m.uncertainty(s).unwrap() > tau).count() as f64 / probes as f64
    };
    let known_rate = recollect(&mut m, &one_hot(3, 10));
    let novel_rate = recollect(&mut m, &one_hot(7, 10));
    assert!(known_rate <= 0.2, "memorized state re-collected {known_rate}");
    assert!(novel_rate >= 0.9, "novel state re-collected only {novel_rate}");
}

#[test]
fn train_and_tune_are_reproducible() {
    let run = || {
        let mut m = model(&config(), 6, 3, 4);
        let mut buffer = AdviceBuffer::new();
        for i in 0..20 {
            buffer.push(one_hot(i % 6, 6), i % 3);
        }
        let trace = m.train(&mut buffer, 200, 16, 0).unwrap();
        let tau = m.tune_threshold(&buffer).unwrap();
        (trace.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), tau.map(f64::to_bits))
    };
    assert_eq!(run(), run());
}

#[test]
fn buffer_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut buffer = AdviceBuffer::new();
    buffer.push(vec![0.1, -2.5, 1e-300], 3);
    buffer.push(vec![0.0, 1.0, 0.0], 0);
    let path = dir.path().join("d.csv");
    buffer.write_csv(&path).unwrap();
    let back = AdviceBuffer::read_csv(&path).unwrap();
    assert_eq!(back.pairs(), buffer.pairs());
}

proptest! {
    #[test]
    fn threshold_is_the_brute_force_percentile_and_a_member(
        values in prop::collection::vec(0u8..20, 1..200),
        p in prop::sample::select(vec![50.0, 90.0, 100.0, 33.0, 1.0]),
    ) {
        // Small integer support forces duplicates into the multiset.
        let u: Vec<f64> = values.iter().map(|v| f64::from(*v) * 0.125).collect();
        let tau = threshold_from_uncertainties(u.clone(), p);
        prop_assert_eq!(tau, brute_force_percentile(&u, p));
        prop_assert!(u.contains(&tau.unwrap()));
    }

    #[test]
    fn uncertainty_ignores_mask_order(seed in 0u64..200) {
        let mut m = model(&config(), 6, 4, seed);
        let masks = m.draw_masks();
        let mut shuffled = masks.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let s = one_hot((seed % 6) as usize, 6);
        let a = m.uncertainty_with_masks(&s, &masks).unwrap();
        let b = m.uncertainty_with_masks(&s, &shuffled).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn reuse_gate_grows_with_tau(seed in 0u64..50, t1 in 0.0f64..0.05, dt in 0.0f64..0.05) {
        let mut m = model(&config(), 6, 4, seed);
        let masks = m.draw_masks();
        let us: Vec<f64> = (0..6).map(|i| m.uncertainty_with_masks(&one_hot(i, 6), &masks).unwrap()).collect();
        let below = |tau: f64| us.iter().filter(|u| **u < tau).count();
        prop_assert!(below(t1) <= below(t1 + dt));
    }
}
