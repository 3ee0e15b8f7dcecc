//! Teacher policies and the budget-metered advice channel.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::Oracle;
use crate::nn::{load_checkpoint, Network, NnError};
use crate::seeding::{mix64, unit_f64};

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error("advice budget exhausted")]
    BudgetExhausted,
    #[error(transparent)]
    Network(#[from] NnError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherKind {
    ScriptedOracle,
    DqnSnapshot,
}

#[derive(Clone)]
pub enum TeacherPolicy {
    ScriptedOracle(Arc<dyn Oracle>),
    /// Greedy policy of a trained dueling Q-network.
    DqnSnapshot(Network),
}

impl TeacherPolicy {
    pub fn kind(&self) -> TeacherKind {
        match self {
            TeacherPolicy::ScriptedOracle(_) => TeacherKind::ScriptedOracle,
            TeacherPolicy::DqnSnapshot(_) => TeacherKind::DqnSnapshot,
        }
    }
}

/// A teacher policy with optional noise: each query answers with a uniform
/// random action with probability `noise`, otherwise with the policy's own
/// action. Noise draws are a pure function of the seed, the query stream and
/// the query's index in it, so metered and shadow queries never disturb each
/// other.
#[derive(Clone)]
pub struct Teacher {
    policy: TeacherPolicy,
    action_count: usize,
    noise: f64,
    noise_seed: u64,
}

impl Teacher {
    pub fn new(policy: TeacherPolicy, action_count: usize) -> Self {
        Self {
            policy,
            action_count,
            noise: 0.0,
            noise_seed: 0,
        }
    }

    pub fn scripted(oracle: Arc<dyn Oracle>, action_count: usize) -> Self {
        Self::new(TeacherPolicy::ScriptedOracle(oracle), action_count)
    }

    pub fn from_snapshot(path: impl AsRef<Path>) -> Result<Self, TeacherError> {
        let net = load_checkpoint(path)?;
        let n = net.spec().output_dim;
        Ok(Self::new(TeacherPolicy::DqnSnapshot(net), n))
    }

    pub fn with_noise(mut self, noise: f64, seed: u64) -> Self {
        assert!((0.0..=1.0).contains(&noise), "teacher noise must be a probability");
        self.noise = noise;
        self.noise_seed = seed;
        self
    }

    pub fn kind(&self) -> TeacherKind {
        self.policy.kind()
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// The noise-free policy: same state, same action.
    pub fn policy_action(&self, state: &[f64]) -> Result<usize, TeacherError> {
        match &self.policy {
            TeacherPolicy::ScriptedOracle(oracle) => Ok(oracle.action(state)),
            TeacherPolicy::DqnSnapshot(net) => Ok(net.greedy_action(state)?),
        }
    }

    /// Answer to the `index`-th query of `stream`.
    pub fn answer(&self, state: &[f64], stream: QueryStream, index: u64) -> Result<usize, TeacherError> {
        if self.noise > 0.0 {
            let h = mix64(mix64(self.noise_seed ^ stream as u64) ^ index);
            if unit_f64(h) < self.noise {
                return Ok((mix64(h) % self.action_count as u64) as usize);
            }
        }
        self.policy_action(state)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum QueryStream {
    Metered = 0x6d65_7465_7265_6400,
    Shadow = 0x7368_6164_6f77_0000,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    initial_budget: u64,
    remaining: u64,
    metered_queries: u64,
    shadow_queries: u64,
}

impl BudgetLedger {
    pub fn new(initial_budget: u64) -> Self {
        Self {
            initial_budget,
            remaining: initial_budget,
            metered_queries: 0,
            shadow_queries: 0,
        }
    }

    pub fn initial_budget(&self) -> u64 {
        self.initial_budget
    }

    pub fn remaining(&self) -> u64 {
        self.remaining
    }

    pub fn metered_queries(&self) -> u64 {
        self.metered_queries
    }

    pub fn shadow_queries(&self) -> u64 {
        self.shadow_queries
    }

    pub fn has_budget(&self) -> bool {
        self.remaining > 0
    }
}

/// The student's only route to the teacher.
pub struct AdviceChannel {
    teacher: Teacher,
    ledger: BudgetLedger,
}

impl AdviceChannel {
    pub fn new(teacher: Teacher, budget: u64) -> Self {
        Self {
            teacher,
            ledger: BudgetLedger::new(budget),
        }
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn teacher(&self) -> &Teacher {
        &self.teacher
    }

    /// Metered query: costs one unit of budget.
    pub fn advise(&mut self, state: &[f64]) -> Result<usize, TeacherError> {
        if self.ledger.remaining == 0 {
            return Err(TeacherError::BudgetExhausted);
        }
        let action = self.teacher.answer(state, QueryStream::Metered, self.ledger.metered_queries)?;
        self.ledger.remaining -= 1;
        self.ledger.metered_queries += 1;
        Ok(action)
    }

    /// Instrumentation-only query that leaves the budget untouched. Only the
    /// metrics path may call this; decisions must never depend on it.
    pub fn shadow_advise(&mut self, state: &[f64]) -> Result<usize, TeacherError> {
        let action = self.teacher.answer(state, QueryStream::Shadow, self.ledger.shadow_queries)?;
        self.ledger.shadow_queries += 1;
        Ok(action)
    }
}
