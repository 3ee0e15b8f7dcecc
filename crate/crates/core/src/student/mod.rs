//! The student's own reinforcement learner: Double DQN with a dueling head,
//! uniform replay, a periodically synced target network and linearly
//! annealed ε-greedy exploration.
//!
//! This module knows nothing about teachers or imitation. Advised actions
//! reach it only as ordinary transitions through [`StudentAgent::observe_and_update`].

mod replay;
mod schedule;

pub use replay::ReplayBuffer;
pub use schedule::EpsilonSchedule;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::Transition;
use crate::nn::{
    apply_gradients, save_checkpoint, td_loss_and_grad, Activation, Adam, AdamConfig, HeadKind, Network,
    NetworkSpec, NnError,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentConfig {
    pub hidden_layers: Vec<usize>,
    pub gamma: f64,
    pub learning_rate: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub replay_min_size: usize,
    pub target_update_period: u64,
    /// Environment steps per gradient step.
    pub train_period: u64,
    pub eps_init: f64,
    pub eps_final: f64,
    pub eps_decay_steps: u64,
}

impl Default for StudentConfig {
    /// Full-scale Atari values; the harness scales the step counts down.
    fn default() -> Self {
        Self {
            hidden_layers: vec![512],
            gamma: 0.99,
            learning_rate: 625e-7,
            adam_epsilon: 1.5e-4,
            batch_size: 32,
            replay_capacity: 500_000,
            replay_min_size: 50_000,
            target_update_period: 7_500,
            train_period: 1,
            eps_init: 1.0,
            eps_final: 0.01,
            eps_decay_steps: 500_000,
        }
    }
}

impl StudentConfig {
    pub fn epsilon(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            eps_init: self.eps_init,
            eps_final: self.eps_final,
            decay_steps: self.eps_decay_steps,
        }
    }

    pub fn network_spec(&self, observation_dim: usize, action_count: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim: observation_dim,
            hidden_layers: self.hidden_layers.clone(),
            output_dim: action_count,
            dropout_rate: 0.0,
            head_kind: HeadKind::QDueling,
            activation: Activation::Relu,
        }
    }
}

pub struct StudentAgent {
    config: StudentConfig,
    online: Network,
    target: Network,
    optimizer: Adam,
    replay: ReplayBuffer,
    epsilon: EpsilonSchedule,
    rng: ChaCha8Rng,
    step_count: u64,
    gradient_steps: u64,
}

impl StudentAgent {
    /// `init_seed` fixes the network weights, `rng_seed` the exploration
    /// and minibatch draws.
    pub fn new(
        config: StudentConfig,
        observation_dim: usize,
        action_count: usize,
        init_seed: u64,
        rng_seed: u64,
    ) -> Result<Self, NnError> {
        let online = Network::new(config.network_spec(observation_dim, action_count), init_seed)?;
        let target = online.clone();
        let mut adam = AdamConfig::with_learning_rate(config.learning_rate);
        adam.epsilon = config.adam_epsilon;
        Ok(Self {
            optimizer: Adam::new(adam, online.parameter_count()),
            replay: ReplayBuffer::new(config.replay_capacity, config.replay_min_size),
            epsilon: config.epsilon(),
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            online,
            target,
            config,
            step_count: 0,
            gradient_steps: 0,
        })
    }

    pub fn config(&self) -> &StudentConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn gradient_steps(&self) -> u64 {
        self.gradient_steps
    }

    pub fn epsilon_schedule(&self) -> &EpsilonSchedule {
        &self.epsilon
    }

    pub fn current_epsilon(&self) -> f64 {
        self.epsilon.value(self.step_count)
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn online_net(&self) -> &Network {
        &self.online
    }

    pub fn online_net_mut(&mut self) -> &mut Network {
        &mut self.online
    }

    pub fn target_net(&self) -> &Network {
        &self.target
    }

    pub fn action_count(&self) -> usize {
        self.online.spec().output_dim
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>, NnError> {
        self.online.predict(state)
    }

    pub fn greedy_action(&self, state: &[f64]) -> Result<usize, NnError> {
        self.online.greedy_action(state)
    }

    /// One ε-greedy coin flip at the current step.
    pub fn exploration_draw(&mut self) -> bool {
        let eps = self.current_epsilon();
        self.rng.gen::<f64>() < eps
    }

    pub fn random_action(&mut self) -> usize {
        let n = self.action_count();
        self.rng.gen_range(0..n)
    }

    /// ε-greedy when `explore`, otherwise greedy (evaluation).
    pub fn self_action(&mut self, state: &[f64], explore: bool) -> Result<usize, NnError> {
        if explore && self.exploration_draw() {
            Ok(self.random_action())
        } else {
            self.greedy_action(state)
        }
    }

    /// Stores the transition, takes a gradient step every `train_period`
    /// steps once replay is warm, and syncs the target network every
    /// `target_update_period` steps. Returns the TD loss when trained.
    pub fn observe_and_update(&mut self, transition: Transition) -> Result<Option<f64>, NnError> {
        self.replay.push(transition);
        self.step_count += 1;
        let mut loss = None;
        if self.step_count % self.config.train_period == 0 {
            if let Some(batch) = self.replay.sample(&mut self.rng, self.config.batch_size) {
                let (l, grads) = td_loss_and_grad(&mut self.online, &self.target, &batch, self.config.gamma)?;
                apply_gradients(&mut self.online, &mut self.optimizer, &grads)?;
                self.gradient_steps += 1;
                loss = Some(l);
            }
        }
        if self.step_count % self.config.target_update_period == 0 {
            self.sync_target();
        }
        Ok(loss)
    }

    pub fn sync_target(&mut self) {
        self.target.copy_params_from(&self.online);
    }

    pub fn save_online(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        save_checkpoint(&self.online, path)
    }
}
