mod common;

use advice_reuse::envs::{
    make_env, Corridor, EnvConfig, EnvKind, Environment, KeyDoorWorld, DEFAULT_KEY_DOOR_LAYOUT, KEY_DOOR_8X8_LAYOUT,
};
use common::{corridor_optimal_return, key_door_optimal_return, GridModel};
use proptest::prelude::*;

fn grid_config(kind: EnvKind, layout: &[&str]) -> EnvConfig {
    EnvConfig {
        name: kind,
        grid_layout: layout.iter().map(|s| s.to_string()).collect(),
        ..EnvConfig::default()
    }
}

fn layouts() -> Vec<EnvConfig> {
    vec![
        grid_config(EnvKind::KeyDoor, &DEFAULT_KEY_DOOR_LAYOUT),
        grid_config(EnvKind::KeyDoor, &KEY_DOOR_8X8_LAYOUT),
    ]
}

#[test]
fn transitions_match_the_reference_model() {
    for config in layouts() {
        let model = GridModel::parse(&config.grid_layout);
        let mut world = KeyDoorWorld::from_config(&config, 0).unwrap();
        let cells: Vec<usize> = world.layout().standable_cells().collect();
        for &cell in &cells {
            for key in [false, true] {
                if cell == model.key && !key {
                    continue; // unreachable: stepping on the key picks it up
                }
                for a in 0..4 {
                    world.reset_to(cell, key);
                    let tr = world.step(a).unwrap();
                    let (next, nkey, done) = model.step(cell, key, a);
                    assert_eq!(tr.terminal, done, "cell {cell} key {key} action {a}");
                    if !done {
                        assert_eq!(world.position(), (next, nkey), "cell {cell} key {key} action {a}");
                    }
                }
            }
        }
    }
}

#[test]
fn oracle_follows_shortest_paths_from_every_state() {
    for config in layouts() {
        let model = GridModel::parse(&config.grid_layout);
        let table = model.distances_to_door();
        let mut world = KeyDoorWorld::from_config(&config, 0).unwrap();
        let oracle = world.oracle();
        let cells: Vec<usize> = world.layout().standable_cells().collect();
        for &cell in &cells {
            for key in [false, true] {
                if cell == model.key && !key {
                    continue;
                }
                let Some(expected) = model.distance(&table, cell, key) else {
                    continue;
                };
                let mut obs = world.reset_to(cell, key);
                let mut steps = 0;
                loop {
                    let tr = world.step(oracle.action(&obs)).unwrap();
                    steps += 1;
                    if tr.terminal {
                        break;
                    }
                    assert!(steps <= expected, "oracle wandered from cell {cell} key {key}");
                    obs = tr.next_state;
                }
                assert_eq!(steps, expected, "cell {cell} key {key}");
            }
        }
    }
}

fn oracle_return(config: &EnvConfig) -> f64 {
    let mut env = make_env(config, 0).unwrap();
    let oracle = env.oracle();
    let mut obs = env.reset();
    let mut total = 0.0;
    loop {
        let tr = env.step(oracle.action(&obs)).unwrap();
        total += tr.reward;
        if tr.episode_over() {
            return total;
        }
        obs = tr.next_state;
    }
}

#[test]
fn oracle_returns_match_value_iteration() {
    let corridor = EnvConfig {
        name: EnvKind::Corridor,
        ..EnvConfig::default()
    };
    let optimal = corridor_optimal_return(&corridor);
    assert!((optimal - 0.92).abs() < 1e-12);
    assert!((oracle_return(&corridor) - optimal).abs() < 1e-12);
    for config in layouts() {
        assert!((oracle_return(&config) - key_door_optimal_return(&config)).abs() < 1e-12);
    }
}

#[test]
fn default_and_large_layouts_have_known_optimal_lengths() {
    let d = GridModel::parse(&layouts()[0].grid_layout);
    assert_eq!(d.distance(&d.distances_to_door(), d.start, false), Some(12));
    let l = GridModel::parse(&layouts()[1].grid_layout);
    assert_eq!(l.distance(&l.distances_to_door(), l.start, false), Some(19));
}

#[test]
fn corridor_oracle_always_moves_forward() {
    let config = EnvConfig {
        name: EnvKind::Corridor,
        ..EnvConfig::default()
    };
    let mut c = Corridor::from_config(&config, 0).unwrap();
    let oracle = c.oracle();
    for pos in 0..config.corridor_length - 1 {
        assert_eq!(oracle.action(&c.reset_to(pos)), 1);
    }
}

#[test]
fn slip_replaces_actions_at_the_configured_rate() {
    let mut config = grid_config(EnvKind::SlipperyKeyDoor, &KEY_DOOR_8X8_LAYOUT);
    config.slip_prob = 0.2;
    let model = GridModel::parse(&config.grid_layout);
    let mut world = KeyDoorWorld::from_config(&config, 9).unwrap();
    // From an open cell every action moves somewhere different, so a slip
    // is visible unless it redraws the same action.
    let open = 3 * 8 + 2;
    let trials = 20_000;
    let mut deviated = 0;
    for i in 0..trials {
        let a = i % 4;
        world.reset_to(open, false);
        world.step(a).unwrap();
        if world.position().0 != model.step(open, false, a).0 {
            deviated += 1;
        }
    }
    let rate = deviated as f64 / trials as f64;
    assert!((rate - 0.2 * 0.75).abs() < 0.012, "rate {rate}");
}

proptest! {
    #[test]
    fn episodes_never_exceed_the_time_limit(seed in 0u64..500, actions in prop::collection::vec(0usize..4, 1..300)) {
        let mut config = grid_config(EnvKind::SlipperyKeyDoor, &DEFAULT_KEY_DOOR_LAYOUT);
        config.max_episode_steps = 25;
        let mut env = make_env(&config, seed).unwrap();
        env.reset();
        let mut steps = 0;
        for a in actions {
            let tr = env.step(a).unwrap();
            steps += 1;
            prop_assert!(tr.reward >= -1.0 && tr.reward <= 1.0);
            prop_assert_eq!(tr.truncated, steps == 25 && !tr.terminal);
            if tr.episode_over() {
                prop_assert!(env.step(0).is_err());
                env.reset();
                steps = 0;
            }
        }
    }

    #[test]
    fn same_seed_same_trajectory(seed in 0u64..1000, actions in prop::collection::vec(0usize..4, 1..100)) {
        let config = grid_config(EnvKind::SlipperyKeyDoor, &KEY_DOOR_8X8_LAYOUT);
        let run = |actions: &[usize]| {
            let mut env = make_env(&config, seed).unwrap();
            let mut obs = vec![env.reset()];
            for &a in actions {
                let tr = env.step(a).unwrap();
                obs.push(tr.next_state.clone());
                if tr.episode_over() {
                    obs.push(env.reset());
                }
            }
            obs
        };
        prop_assert_eq!(run(&actions), run(&actions));
    }
}
