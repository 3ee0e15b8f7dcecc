use std::sync::Arc;

use super::{EnvConfig, EnvError, EnvSpec, Environment, Oracle, Transition};

pub const BACK: usize = 0;
pub const FORWARD: usize = 1;

/// A chain of cells observed as a one-hot vector. The agent starts in cell 0
/// and the goal is the last cell. Actions beyond `FORWARD` leave the agent in
/// place.
#[derive(Clone, Debug)]
pub struct Corridor {
    spec: EnvSpec,
    length: usize,
    goal_reward: f64,
    step_penalty: f64,
    position: usize,
    steps: u32,
    done: bool,
}

impl Corridor {
    pub fn from_config(config: &EnvConfig, seed: u64) -> Result<Self, EnvError> {
        if config.corridor_length < 2 {
            return Err(EnvError::InvalidConfig("corridor_length must be at least 2".into()));
        }
        if config.corridor_actions < 2 {
            return Err(EnvError::InvalidConfig("corridor_actions must be at least 2".into()));
        }
        Ok(Self {
            spec: EnvSpec {
                name: "corridor".into(),
                observation_dim: config.corridor_length,
                action_count: config.corridor_actions,
                max_episode_steps: config.max_episode_steps,
                seed,
            },
            length: config.corridor_length,
            goal_reward: config.goal_reward,
            step_penalty: config.step_penalty,
            position: 0,
            steps: 0,
            done: true,
        })
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn reset_to(&mut self, position: usize) -> Vec<f64> {
        assert!(position + 1 < self.length, "start cell must be a non-goal cell");
        self.position = position;
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn observe(&self) -> Vec<f64> {
        let mut obs = vec![0.0; self.length];
        obs[self.position] = 1.0;
        obs
    }
}

impl Environment for Corridor {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Vec<f64> {
        self.reset_to(0)
    }

    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        if action >= self.spec.action_count {
            return Err(EnvError::InvalidAction {
                action,
                count: self.spec.action_count,
            });
        }
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let state = self.observe();
        self.position = match action {
            BACK => self.position.saturating_sub(1),
            FORWARD => self.position + 1,
            _ => self.position,
        };
        self.steps += 1;
        let terminal = self.position == self.length - 1;
        self.done = terminal;
        Ok(Transition {
            state,
            action,
            reward: if terminal { self.goal_reward } else { -self.step_penalty },
            next_state: self.observe(),
            terminal,
            truncated: false,
        })
    }

    fn episode_step(&self) -> u32 {
        self.steps
    }

    fn oracle(&self) -> Arc<dyn Oracle> {
        Arc::new(CorridorOracle)
    }
}

struct CorridorOracle;

impl Oracle for CorridorOracle {
    fn action(&self, _state: &[f64]) -> usize {
        FORWARD
    }
}
