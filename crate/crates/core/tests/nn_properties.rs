mod common;

use advice_reuse::envs::Transition;
use advice_reuse::nn::{
    apply_gradients, dueling_combine, nll_loss_and_grad, softmax, td_loss_and_grad, td_targets, Activation, Adam,
    AdamConfig, HeadKind, Mode, Network, NetworkSpec,
};
use common::{check_gradient, value_iteration};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(head_kind: HeadKind, dropout_rate: f64) -> NetworkSpec {
    NetworkSpec {
        input_dim: 3,
        hidden_layers: vec![8, 6],
        output_dim: 3,
        dropout_rate,
        head_kind,
        activation: Activation::Relu,
    }
}

fn random_input(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn nll_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let base = Network::new(spec(HeadKind::SoftmaxClassifier, 0.3), seed).unwrap();
        let inputs: Vec<Vec<f64>> = (0..4).map(|_| random_input(&mut rng)).collect();
        let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..3)).collect();
        let batch: Vec<(&[f64], usize)> = inputs.iter().map(|x| x.as_slice()).zip(labels).collect();
        let (_, grads) = nll_loss_and_grad(&mut base.clone(), &batch).unwrap();
        let report = check_gradient(grads.as_slice(), base.params(), |p| {
            let mut net = base.clone();
            net.params_mut().copy_from_slice(p);
            nll_loss_and_grad(&mut net, &batch).unwrap().0
        });
        assert!(report.mismatches.is_empty(), "seed {seed}: {report:?}");
    }
}

#[test]
fn td_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let base = Network::new(spec(HeadKind::QDueling, 0.3), seed).unwrap();
        let target = Network::new(spec(HeadKind::QDueling, 0.0), seed + 50).unwrap();
        let transitions: Vec<Transition> = (0..4)
            .map(|i| Transition {
                state: random_input(&mut rng),
                action: rng.gen_range(0..3),
                reward: rng.gen_range(-1.0..1.0),
                next_state: random_input(&mut rng),
                terminal: i == 0,
                truncated: false,
            })
            .collect();
        let batch: Vec<&Transition> = transitions.iter().collect();
        let (_, grads) = td_loss_and_grad(&mut base.clone(), &target, &batch, 0.9).unwrap();
        let report = check_gradient(grads.as_slice(), base.params(), |p| {
            let mut net = base.clone();
            net.params_mut().copy_from_slice(p);
            td_loss_and_grad(&mut net, &target, &batch, 0.9).unwrap().0
        });
        assert!(report.mismatches.is_empty(), "seed {seed}: {report:?}");
    }
}

#[test]
fn double_q_target_worked_example() {
    // Online net prefers action 1 at s'; the target net scores it 2.
    let mut online = Network::new(spec(HeadKind::QDueling, 0.0), 1).unwrap();
    let mut target = Network::new(spec(HeadKind::QDueling, 0.0), 2).unwrap();
    for (net, value, adv) in [(&mut online, 0.0, [0.0, 5.0, 0.0]), (&mut target, 2.0, [0.0, 0.0, 0.0])] {
        let n = net.layer_count();
        let v = net.layer_mut(n - 2);
        v.weights.fill(0.0);
        v.bias[0] = value;
        let a = net.layer_mut(n - 1);
        a.weights.fill(0.0);
        a.bias.copy_from_slice(&adv);
    }
    let tr = Transition {
        state: vec![0.0; 3],
        action: 0,
        reward: 1.0,
        next_state: vec![0.3, -0.2, 0.5],
        terminal: false,
        truncated: false,
    };
    let y = td_targets(&online, &target, &[&tr], 0.99).unwrap();
    assert!((y[0] - 2.98).abs() < 1e-12);
    let terminal = Transition {
        reward: -1.0,
        terminal: true,
        ..tr.clone()
    };
    assert_eq!(td_targets(&online, &target, &[&terminal], 0.99).unwrap(), vec![-1.0]);
    let truncated = Transition {
        truncated: true,
        ..tr
    };
    assert!((td_targets(&online, &target, &[&truncated], 0.99).unwrap()[0] - 2.98).abs() < 1e-12);
}

#[test]
fn two_state_chain_reaches_the_value_iteration_fixed_point() {
    // Action 0 stays, action 1 switches state. Rewards favour switching out
    // of state 0 and staying in state 1.
    let rewards = [[0.0, 1.0], [0.5, 0.0]];
    let gamma = 0.9;
    let model = |s: usize, a: usize| (if a == 0 { s } else { 1 - s }, rewards[s][a], false);
    let q_star = value_iteration(2, 2, gamma, model);

    let one_hot = |s: usize| if s == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
    let transitions: Vec<Transition> = (0..2)
        .flat_map(|s| (0..2).map(move |a| (s, a)))
        .map(|(s, a)| {
            let (s2, r, _) = model(s, a);
            Transition {
                state: one_hot(s),
                action: a,
                reward: r,
                next_state: one_hot(s2),
                terminal: false,
                truncated: false,
            }
        })
        .collect();
    let batch: Vec<&Transition> = transitions.iter().collect();
    let net_spec = NetworkSpec {
        input_dim: 2,
        hidden_layers: vec![16],
        output_dim: 2,
        dropout_rate: 0.0,
        head_kind: HeadKind::QDueling,
        activation: Activation::Relu,
    };
    let mut online = Network::new(net_spec, 7).unwrap();
    let mut target = online.clone();
    let mut adam = Adam::new(AdamConfig::with_learning_rate(3e-3), online.parameter_count());
    for step in 0..40_000 {
        if step % 200 == 0 {
            target.copy_params_from(&online);
        }
        let (_, grads) = td_loss_and_grad(&mut online, &target, &batch, gamma).unwrap();
        apply_gradients(&mut online, &mut adam, &grads).unwrap();
    }
    for s in 0..2 {
        let q = online.predict(&one_hot(s)).unwrap();
        for a in 0..2 {
            assert!(
                (q[a] - q_star[s][a]).abs() < 0.05,
                "Q({s},{a}) = {} vs {}",
                q[a],
                q_star[s][a]
            );
        }
    }
}

#[test]
fn eval_mode_ignores_dropout() {
    let mut net = Network::new(spec(HeadKind::SoftmaxClassifier, 0.5), 3).unwrap();
    let x = [0.2, -0.4, 0.9];
    let first = net.forward(&x, Mode::Eval).unwrap();
    for _ in 0..100 {
        assert_eq!(net.forward(&x, Mode::Eval).unwrap(), first);
    }
    let train: Vec<_> = (0..20).map(|_| net.forward(&x, Mode::Train).unwrap()).collect();
    assert!(train.iter().any(|o| *o != first));
}

#[test]
fn same_seed_same_network_and_training() {
    let train = |seed| {
        let mut net = Network::new(spec(HeadKind::SoftmaxClassifier, 0.2), seed).unwrap();
        let mut adam = Adam::new(AdamConfig::with_learning_rate(1e-2), net.parameter_count());
        let data = [([0.1, 0.2, 0.3], 0usize), ([0.9, -0.2, 0.0], 2)];
        for _ in 0..50 {
            let batch: Vec<(&[f64], usize)> = data.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
            let (_, g) = nll_loss_and_grad(&mut net, &batch).unwrap();
            apply_gradients(&mut net, &mut adam, &g).unwrap();
        }
        net.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(train(5), train(5));
    assert_ne!(train(5), train(6));
}

proptest! {
    #[test]
    fn softmax_is_a_simplex_point(logits in prop::collection::vec(-50.0f64..50.0, 2..10)) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dueling_advantage_shift_leaves_q_unchanged(
        value in -5.0f64..5.0,
        adv in prop::collection::vec(-5.0f64..5.0, 2..8),
        shift in -10.0f64..10.0,
    ) {
        let q = dueling_combine(value, &adv);
        let shifted: Vec<f64> = adv.iter().map(|a| a + shift).collect();
        let q2 = dueling_combine(value, &shifted);
        for (a, b) in q.iter().zip(&q2) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let mean_adv = q.iter().map(|x| x - value).sum::<f64>() / q.len() as f64;
        prop_assert!(mean_adv.abs() < 1e-9);
    }

    #[test]
    fn classifier_outputs_are_probabilities(seed in 0u64..1000, x in prop::collection::vec(-3.0f64..3.0, 3)) {
        let mut net = Network::new(spec(HeadKind::SoftmaxClassifier, 0.4), seed).unwrap();
        for mode in [Mode::Eval, Mode::Train, Mode::McSample] {
            let p = net.forward(&x, mode).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn adam_descends_a_quadratic_monotonically_after_warmup() {
    let mut adam = Adam::new(AdamConfig::with_learning_rate(0.05), 1);
    let mut x = [4.0];
    let loss = |x: f64| (x - 1.0) * (x - 1.0);
    let mut prev = loss(x[0]);
    for step in 0..200 {
        let g = [2.0 * (x[0] - 1.0)];
        adam.step(&mut x, &g).unwrap();
        let l = loss(x[0]);
        if step >= 5 && x[0] > 1.0 + 0.05 {
            assert!(l <= prev, "step {step}: {l} > {prev}");
        }
        prev = l;
    }
    assert!(loss(x[0]) < 1e-2);
}
