//! Small deterministic (or seeded-stochastic) episodic environments with
//! discrete actions and an exact optimal-policy oracle.

mod corridor;
mod grid;

pub use corridor::Corridor;
pub use grid::{GridLayout, KeyDoorWorld, DEFAULT_KEY_DOOR_LAYOUT, KEY_DOOR_8X8_LAYOUT};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("action {action} out of range for {count} actions")]
    InvalidAction { action: usize, count: usize },
    #[error("step called after the episode ended; reset first")]
    EpisodeOver,
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub observation_dim: usize,
    pub action_count: usize,
    pub max_episode_steps: u32,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// The episode ended in an absorbing state; no bootstrapping.
    pub terminal: bool,
    /// The episode hit its step limit; bootstrapping still applies.
    pub truncated: bool,
}

impl Transition {
    pub fn episode_over(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// Ground-truth optimal action for an observation.
pub trait Oracle: Send + Sync {
    fn action(&self, state: &[f64]) -> usize;
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<Transition, EnvError>;
    fn episode_step(&self) -> u32;
    fn oracle(&self) -> Arc<dyn Oracle>;

    fn oracle_action(&self, state: &[f64]) -> usize {
        self.oracle().action(state)
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn spec(&self) -> &EnvSpec {
        (**self).spec()
    }
    fn reset(&mut self) -> Vec<f64> {
        (**self).reset()
    }
    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        (**self).step(action)
    }
    fn episode_step(&self) -> u32 {
        (**self).episode_step()
    }
    fn oracle(&self) -> Arc<dyn Oracle> {
        (**self).oracle()
    }
}

/// Clamps rewards into `[-1, 1]`.
pub struct ClipReward<E> {
    inner: E,
}

impl<E: Environment> ClipReward<E> {
    pub fn new(inner: E) -> Self {
        Self { inner }
    }

    pub fn into_inner(self) -> E {
        self.inner
    }
}

impl<E: Environment> Environment for ClipReward<E> {
    fn spec(&self) -> &EnvSpec {
        self.inner.spec()
    }
    fn reset(&mut self) -> Vec<f64> {
        self.inner.reset()
    }
    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        let mut tr = self.inner.step(action)?;
        tr.reward = tr.reward.clamp(-1.0, 1.0);
        Ok(tr)
    }
    fn episode_step(&self) -> u32 {
        self.inner.episode_step()
    }
    fn oracle(&self) -> Arc<dyn Oracle> {
        self.inner.oracle()
    }
}

/// Truncates episodes at `spec().max_episode_steps`.
pub struct TimeLimit<E> {
    inner: E,
    over: bool,
}

impl<E: Environment> TimeLimit<E> {
    pub fn new(inner: E) -> Self {
        Self { inner, over: true }
    }
}

impl<E: Environment> Environment for TimeLimit<E> {
    fn spec(&self) -> &EnvSpec {
        self.inner.spec()
    }
    fn reset(&mut self) -> Vec<f64> {
        self.over = false;
        self.inner.reset()
    }
    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        if self.over {
            return Err(EnvError::EpisodeOver);
        }
        let mut tr = self.inner.step(action)?;
        if !tr.terminal && self.inner.episode_step() >= self.inner.spec().max_episode_steps {
            tr.truncated = true;
        }
        self.over = tr.episode_over();
        Ok(tr)
    }
    fn episode_step(&self) -> u32 {
        self.inner.episode_step()
    }
    fn oracle(&self) -> Arc<dyn Oracle> {
        self.inner.oracle()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Corridor,
    KeyDoor,
    SlipperyKeyDoor,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Corridor => "corridor",
            EnvKind::KeyDoor => "key_door",
            EnvKind::SlipperyKeyDoor => "slippery_key_door",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub name: EnvKind,
    pub max_episode_steps: u32,
    /// Reward on reaching the goal, before clipping.
    pub goal_reward: f64,
    /// Subtracted on every non-goal step.
    pub step_penalty: f64,
    pub corridor_length: usize,
    /// Corridor actions: 0 back, 1 forward, the rest stay in place.
    pub corridor_actions: usize,
    /// Rows of `.` floor, `#` wall, `S` start, `K` key, `D` door.
    pub grid_layout: Vec<String>,
    /// Probability that a grid action is replaced by a uniform random one.
    pub slip_prob: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            name: EnvKind::KeyDoor,
            max_episode_steps: 100,
            goal_reward: 1.0,
            step_penalty: 0.01,
            corridor_length: 10,
            corridor_actions: 3,
            grid_layout: DEFAULT_KEY_DOOR_LAYOUT.iter().map(|s| s.to_string()).collect(),
            slip_prob: 0.1,
        }
    }
}

/// Builds the named environment wrapped in reward clipping and a time limit.
pub fn make_env(config: &EnvConfig, seed: u64) -> Result<Box<dyn Environment>, EnvError> {
    Ok(match config.name {
        EnvKind::Corridor => Box::new(TimeLimit::new(ClipReward::new(Corridor::from_config(config, seed)?))),
        EnvKind::KeyDoor | EnvKind::SlipperyKeyDoor => {
            Box::new(TimeLimit::new(ClipReward::new(KeyDoorWorld::from_config(config, seed)?)))
        }
    })
}
