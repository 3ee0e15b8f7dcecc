//! Per-step orchestration of advice collection, teacher imitation and advice
//! reuse on top of the student's own learner, for every student mode.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{EnvError, Environment};
use crate::imitation::{should_train, AdviceBuffer, ImitationConfig, ImitationError, ImitationModel};
use crate::nn::NnError;
use crate::student::StudentAgent;
use crate::teacher::{AdviceChannel, TeacherError};

#[derive(Debug, Error)]
pub enum AdvisingError {
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Imitation(#[from] ImitationError),
}

impl AdvisingError {
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            AdvisingError::Network(NnError::Divergence { .. })
                | AdvisingError::Imitation(ImitationError::Network(NnError::Divergence { .. }))
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StudentMode {
    /// No advising.
    #[serde(rename = "NA")]
    NoAdvising,
    /// Ask greedily until the budget runs out.
    #[serde(rename = "EA")]
    EarlyAdvising,
    /// Ask with a fixed probability.
    #[serde(rename = "RA")]
    RandomAdvising,
    /// Early advising, one imitation, manual threshold, reuse in place of
    /// exploration during the ε-decay window.
    #[serde(rename = "AR")]
    AdviceReuse,
    /// As `AdviceReuse` with an automatically tuned threshold.
    #[serde(rename = "AR_A", alias = "AR+A")]
    AdviceReuseAuto,
    /// As `AdviceReuseAuto` with the decaying per-episode reuse schedule.
    #[serde(rename = "AR_A_E", alias = "AR+A+E")]
    AdviceReuseAutoExtended,
    /// Uncertainty-driven collection, periodic imitation, tuned threshold
    /// and the extended reuse schedule.
    #[serde(rename = "AIR")]
    AdviceImitationReuse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeFlags {
    pub collects_advice: bool,
    pub uncertainty_gated_collection: bool,
    pub reuses_advice: bool,
    pub auto_threshold: bool,
    pub extended_reuse: bool,
}

impl StudentMode {
    pub const ALL: [StudentMode; 7] = [
        StudentMode::NoAdvising,
        StudentMode::EarlyAdvising,
        StudentMode::RandomAdvising,
        StudentMode::AdviceReuse,
        StudentMode::AdviceReuseAuto,
        StudentMode::AdviceReuseAutoExtended,
        StudentMode::AdviceImitationReuse,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StudentMode::NoAdvising => "NA",
            StudentMode::EarlyAdvising => "EA",
            StudentMode::RandomAdvising => "RA",
            StudentMode::AdviceReuse => "AR",
            StudentMode::AdviceReuseAuto => "AR_A",
            StudentMode::AdviceReuseAutoExtended => "AR_A_E",
            StudentMode::AdviceImitationReuse => "AIR",
        }
    }

    pub fn flags(self) -> ModeFlags {
        let f = |collects, gated, reuses, auto, extended| ModeFlags {
            collects_advice: collects,
            uncertainty_gated_collection: gated,
            reuses_advice: reuses,
            auto_threshold: auto,
            extended_reuse: extended,
        };
        match self {
            StudentMode::NoAdvising => f(false, false, false, false, false),
            StudentMode::EarlyAdvising | StudentMode::RandomAdvising => f(true, false, false, false, false),
            StudentMode::AdviceReuse => f(true, false, true, false, false),
            StudentMode::AdviceReuseAuto => f(true, false, true, true, false),
            StudentMode::AdviceReuseAutoExtended => f(true, false, true, true, true),
            StudentMode::AdviceImitationReuse => f(true, true, true, true, true),
        }
    }
}

impl fmt::Display for StudentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StudentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('+', "_");
        StudentMode::ALL
            .into_iter()
            .find(|m| m.label() == norm)
            .ok_or_else(|| format!("unknown student mode {s:?} (expected NA, EA, RA, AR, AR_A, AR_A_E or AIR)"))
    }
}

/// Per-episode reuse probability: `rho_init` up to `decay_start_step`,
/// linear to `rho_final` at `decay_end_step`, constant afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReuseSchedule {
    pub rho_init: f64,
    pub rho_final: f64,
    pub decay_start_step: u64,
    pub decay_end_step: u64,
}

impl ReuseSchedule {
    pub fn constant(rho: f64) -> Self {
        Self {
            rho_init: rho,
            rho_final: rho,
            decay_start_step: 0,
            decay_end_step: 0,
        }
    }

    pub fn value(&self, t: u64) -> f64 {
        if t <= self.decay_start_step {
            return self.rho_init;
        }
        if t >= self.decay_end_step {
            return self.rho_final;
        }
        let frac = (t - self.decay_start_step) as f64 / (self.decay_end_step - self.decay_start_step) as f64;
        self.rho_init * (1.0 - frac) + self.rho_final * frac
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvisingConfig {
    pub mode: StudentMode,
    pub rho_init: f64,
    pub rho_final: f64,
    pub rho_decay_start: u64,
    pub rho_decay_end: u64,
    /// Fixed reuse probability of the non-extended reuse modes.
    pub non_extended_rho: f64,
    /// Request probability of random advising.
    pub random_advice_prob: f64,
    /// Threshold of the manually tuned mode.
    pub manual_tau: f64,
    /// Uncertainty-driven collection only happens in reuse-enabled episodes.
    pub collect_requires_reuse_enabled: bool,
    /// Same gate for the extended-reuse mode with early collection.
    pub extended_collect_requires_reuse_enabled: bool,
    /// Step at which the single-imitation modes train if their budget never
    /// runs out; 0 disables the fallback.
    pub single_imitation_fallback_step: u64,
    /// Keep the advice buffer in modes that never reuse it (for diversity
    /// analysis only).
    pub record_advice_for_non_reuse: bool,
}

impl Default for AdvisingConfig {
    fn default() -> Self {
        Self {
            mode: StudentMode::AdviceImitationReuse,
            rho_init: 0.5,
            rho_final: 0.1,
            rho_decay_start: 500_000,
            rho_decay_end: 2_000_000,
            non_extended_rho: 0.5,
            random_advice_prob: 0.5,
            manual_tau: 0.01,
            collect_requires_reuse_enabled: true,
            extended_collect_requires_reuse_enabled: false,
            single_imitation_fallback_step: 0,
            record_advice_for_non_reuse: true,
        }
    }
}

impl AdvisingConfig {
    pub fn reuse_schedule(&self) -> ReuseSchedule {
        let flags = self.mode.flags();
        if flags.extended_reuse {
            ReuseSchedule {
                rho_init: self.rho_init,
                rho_final: self.rho_final,
                decay_start_step: self.rho_decay_start,
                decay_end_step: self.rho_decay_end,
            }
        } else if flags.reuses_advice {
            ReuseSchedule::constant(self.non_extended_rho)
        } else {
            ReuseSchedule::constant(0.0)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EpisodeAdviceState {
    /// Drawn once at episode start.
    pub reuse_enabled: bool,
    pub collected: u64,
    pub reused: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSource {
    CollectedAdvice,
    ReusedAdvice,
    SelfPolicy,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub source: ActionSource,
    /// Last uncertainty computed for the state during this step, if any.
    pub uncertainty: Option<f64>,
    pub imitation_trained: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImitationEvent {
    pub t: u64,
    pub buffer_size: usize,
    pub iterations: usize,
    pub final_loss: Option<f64>,
    pub tau: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct AdvisorSeeds {
    pub advising: u64,
    pub imitation_init: u64,
    pub imitation_train: u64,
    pub imitation_mc: u64,
}

pub struct Advisor {
    config: AdvisingConfig,
    flags: ModeFlags,
    schedule: ReuseSchedule,
    imitation_config: ImitationConfig,
    imitation: Option<ImitationModel>,
    buffer: AdviceBuffer,
    rng: ChaCha8Rng,
    events: Vec<ImitationEvent>,
}

impl Advisor {
    pub fn new(
        config: AdvisingConfig,
        imitation_config: ImitationConfig,
        observation_dim: usize,
        action_count: usize,
        seeds: AdvisorSeeds,
    ) -> Result<Self, AdvisingError> {
        let flags = config.mode.flags();
        let imitation = if flags.reuses_advice {
            Some(ImitationModel::new(
                &imitation_config,
                observation_dim,
                action_count,
                seeds.imitation_init,
                seeds.imitation_train,
                seeds.imitation_mc,
            )?)
        } else {
            None
        };
        Ok(Self {
            schedule: config.reuse_schedule(),
            flags,
            config,
            imitation_config,
            imitation,
            buffer: AdviceBuffer::new(),
            rng: ChaCha8Rng::seed_from_u64(seeds.advising),
            events: Vec::new(),
        })
    }

    pub fn mode(&self) -> StudentMode {
        self.config.mode
    }

    pub fn config(&self) -> &AdvisingConfig {
        &self.config
    }

    pub fn buffer(&self) -> &AdviceBuffer {
        &self.buffer
    }

    pub fn imitation(&self) -> Option<&ImitationModel> {
        self.imitation.as_ref()
    }

    pub fn imitation_mut(&mut self) -> Option<&mut ImitationModel> {
        self.imitation.as_mut()
    }

    pub fn events(&self) -> &[ImitationEvent] {
        &self.events
    }

    pub fn tau(&self) -> Option<f64> {
        self.imitation.as_ref().and_then(|m| m.tau())
    }

    pub fn rho(&self, t: u64) -> f64 {
        self.schedule.value(t)
    }

    /// Inserts a pair directly, bypassing collection (test fixtures, warm starts).
    pub fn seed_buffer(&mut self, state: Vec<f64>, action: usize) {
        self.buffer.push(state, action);
    }

    pub fn begin_episode(&mut self, t: u64) -> EpisodeAdviceState {
        let reuse_enabled = self.flags.reuses_advice && self.rng.gen::<f64>() < self.schedule.value(t);
        EpisodeAdviceState {
            reuse_enabled,
            ..EpisodeAdviceState::default()
        }
    }

    fn records_advice(&self) -> bool {
        self.flags.reuses_advice || self.config.record_advice_for_non_reuse
    }

    /// Runs one imitation round now: train, then set τ.
    pub fn imitate(&mut self, t: u64) -> Result<(), AdvisingError> {
        let Some(model) = self.imitation.as_mut() else {
            return Ok(());
        };
        let trigger = self.imitation_config.trigger();
        let iterations = model.next_iterations(&trigger);
        let losses = model.train(&mut self.buffer, iterations, trigger.batch_size, t)?;
        let tau = if self.flags.auto_threshold {
            model.tune_threshold(&self.buffer)?
        } else {
            model.set_manual_threshold(self.config.manual_tau);
            model.tau()
        };
        self.events.push(ImitationEvent {
            t,
            buffer_size: self.buffer.len(),
            iterations,
            final_loss: losses.last().copied(),
            tau,
        });
        Ok(())
    }

    fn imitation_due(&self, channel: &AdviceChannel, t: u64) -> bool {
        let Some(model) = self.imitation.as_ref() else {
            return false;
        };
        if self.buffer.is_empty() {
            return false;
        }
        if self.flags.uncertainty_gated_collection {
            return should_train(&self.buffer, &self.imitation_config.trigger(), t);
        }
        let fallback = self.config.single_imitation_fallback_step;
        !model.is_trained() && (!channel.ledger().has_budget() || (fallback > 0 && t >= fallback))
    }

    /// Collection, then imitation, then reuse, then the student's own
    /// ε-greedy policy. A step that collects advice never also reuses.
    pub fn choose_action(
        &mut self,
        state: &[f64],
        episode: &mut EpisodeAdviceState,
        channel: &mut AdviceChannel,
        student: &mut StudentAgent,
        t: u64,
    ) -> Result<Decision, AdvisingError> {
        let mut uncertainty: Option<f64> = None;
        let mut last_uncertainty = None;
        let mut chosen: Option<(usize, ActionSource)> = None;

        // Collection
        if self.flags.collects_advice && channel.ledger().has_budget() {
            let request = match self.config.mode {
                StudentMode::NoAdvising => false,
                StudentMode::EarlyAdvising | StudentMode::AdviceReuse | StudentMode::AdviceReuseAuto => true,
                StudentMode::RandomAdvising => self.rng.gen::<f64>() < self.config.random_advice_prob,
                StudentMode::AdviceReuseAutoExtended => {
                    !self.config.extended_collect_requires_reuse_enabled || episode.reuse_enabled
                }
                StudentMode::AdviceImitationReuse => {
                    (!self.config.collect_requires_reuse_enabled || episode.reuse_enabled) && {
                        let model = self.imitation.as_mut().expect("reuse modes own a model");
                        match model.tau() {
                            Some(tau) if model.is_trained() => {
                                let u = model.uncertainty(state)?;
                                uncertainty = Some(u);
                                last_uncertainty = Some(u);
                                u > tau
                            }
                            _ => true,
                        }
                    }
                }
            };
            if request {
                let action = channel.advise(state)?;
                if self.records_advice() {
                    self.buffer.push(state.to_vec(), action);
                }
                episode.collected += 1;
                chosen = Some((action, ActionSource::CollectedAdvice));
            }
        }

        // Imitation
        let imitation_trained = self.imitation_due(channel, t);
        if imitation_trained {
            self.imitate(t)?;
            uncertainty = None;
        }

        // Reuse
        let mut exploration: Option<bool> = None;
        if chosen.is_none() && episode.reuse_enabled {
            if let Some(model) = self.imitation.as_mut() {
                if let (true, Some(tau)) = (model.is_trained(), model.tau()) {
                    let eligible = if self.flags.extended_reuse {
                        true
                    } else if t <= student.epsilon_schedule().decay_steps {
                        // Non-extended reuse only replaces exploratory actions.
                        let explore = student.exploration_draw();
                        exploration = Some(explore);
                        explore
                    } else {
                        false
                    };
                    if eligible {
                        let u = match uncertainty {
                            Some(u) => u,
                            None => model.uncertainty(state)?,
                        };
                        last_uncertainty = Some(u);
                        if u < tau {
                            episode.reused += 1;
                            chosen = Some((model.predict_action(state)?, ActionSource::ReusedAdvice));
                        }
                    }
                }
            }
        }

        let (action, source) = match chosen {
            Some(c) => c,
            None => {
                let action = match exploration {
                    Some(true) => student.random_action(),
                    Some(false) => student.greedy_action(state)?,
                    None => student.self_action(state, true)?,
                };
                (action, ActionSource::SelfPolicy)
            }
        };
        Ok(Decision {
            action,
            source,
            uncertainty: last_uncertainty,
            imitation_trained,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    pub state: Vec<f64>,
    pub action: usize,
    pub source: ActionSource,
    pub reward: f64,
    pub episode_over: bool,
    /// Whether a reused action matched the teacher; `None` when the step
    /// did not reuse or instrumentation is off.
    pub reuse_hit: Option<bool>,
    pub imitation_trained: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpisodeSummary {
    pub episode_return: f64,
    pub steps: u64,
    pub collected: u64,
    pub reused: u64,
    pub reuse_hits: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTotals {
    pub steps: u64,
    pub episodes: u64,
    pub collected: u64,
    pub reused: u64,
    pub reuse_hits: u64,
}

/// The training loop body: one environment, one student, one advisor.
pub struct Learner {
    env: Box<dyn Environment>,
    student: StudentAgent,
    advisor: Advisor,
    channel: AdviceChannel,
    instrument: bool,
    t: u64,
    obs: Option<Vec<f64>>,
    episode: EpisodeAdviceState,
    current: EpisodeSummary,
    totals: RunTotals,
}

impl Learner {
    pub fn new(
        env: Box<dyn Environment>,
        student: StudentAgent,
        advisor: Advisor,
        channel: AdviceChannel,
        instrument: bool,
    ) -> Self {
        Self {
            env,
            student,
            advisor,
            channel,
            instrument,
            t: 0,
            obs: None,
            episode: EpisodeAdviceState::default(),
            current: EpisodeSummary::default(),
            totals: RunTotals::default(),
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn student(&self) -> &StudentAgent {
        &self.student
    }

    pub fn advisor(&self) -> &Advisor {
        &self.advisor
    }

    pub fn advisor_mut(&mut self) -> &mut Advisor {
        &mut self.advisor
    }

    pub fn channel(&self) -> &AdviceChannel {
        &self.channel
    }

    pub fn totals(&self) -> &RunTotals {
        &self.totals
    }

    pub fn episode_state(&self) -> &EpisodeAdviceState {
        &self.episode
    }

    pub fn env(&self) -> &dyn Environment {
        self.env.as_ref()
    }

    /// Advances one environment step, resetting first if the previous
    /// episode ended.
    pub fn step(&mut self) -> Result<StepRecord, AdvisingError> {
        let state = match self.obs.take() {
            Some(obs) => obs,
            None => {
                let obs = self.env.reset();
                self.episode = self.advisor.begin_episode(self.t + 1);
                self.current = EpisodeSummary::default();
                obs
            }
        };
        self.t += 1;
        let decision =
            self.advisor
                .choose_action(&state, &mut self.episode, &mut self.channel, &mut self.student, self.t)?;
        let transition = self.env.step(decision.action)?;
        let reuse_hit = if self.instrument && decision.source == ActionSource::ReusedAdvice {
            Some(self.channel.shadow_advise(&state)? == decision.action)
        } else {
            None
        };
        let reward = transition.reward;
        let over = transition.episode_over();
        let next = transition.next_state.clone();
        self.student.observe_and_update(transition)?;

        self.totals.steps += 1;
        self.current.steps += 1;
        self.current.episode_return += reward;
        match decision.source {
            ActionSource::CollectedAdvice => {
                self.totals.collected += 1;
                self.current.collected += 1;
            }
            ActionSource::ReusedAdvice => {
                self.totals.reused += 1;
                self.current.reused += 1;
            }
            ActionSource::SelfPolicy => {}
        }
        if reuse_hit == Some(true) {
            self.totals.reuse_hits += 1;
            self.current.reuse_hits += 1;
        }
        if over {
            self.totals.episodes += 1;
        } else {
            self.obs = Some(next);
        }
        Ok(StepRecord {
            t: self.t,
            state,
            action: decision.action,
            source: decision.source,
            reward,
            episode_over: over,
            reuse_hit,
            imitation_trained: decision.imitation_trained,
        })
    }

    /// Steps until the current (or next) episode ends, or `step_limit`
    /// total steps have been taken.
    pub fn run_episode(&mut self, step_limit: Option<u64>) -> Result<EpisodeSummary, AdvisingError> {
        loop {
            let record = self.step()?;
            if record.episode_over || step_limit.is_some_and(|limit| self.t >= limit) {
                return Ok(self.current);
            }
        }
    }

    pub fn into_parts(self) -> (StudentAgent, Advisor, AdviceChannel) {
        (self.student, self.advisor, self.channel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in StudentMode::ALL {
            assert_eq!(m.label().parse::<StudentMode>().unwrap(), m);
        }
        assert_eq!("AR+A+E".parse::<StudentMode>().unwrap(), StudentMode::AdviceReuseAutoExtended);
        assert!("XX".parse::<StudentMode>().is_err());
    }

    #[test]
    fn capability_flags() {
        assert!(!StudentMode::NoAdvising.flags().collects_advice);
        assert!(!StudentMode::RandomAdvising.flags().reuses_advice);
        assert!(!StudentMode::AdviceReuse.flags().auto_threshold);
        assert!(StudentMode::AdviceReuseAutoExtended.flags().extended_reuse);
        assert!(!StudentMode::AdviceReuseAutoExtended.flags().uncertainty_gated_collection);
        assert!(StudentMode::AdviceImitationReuse.flags().uncertainty_gated_collection);
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let s = ReuseSchedule {
            rho_init: 0.5,
            rho_final: 0.1,
            decay_start_step: 500_000,
            decay_end_step: 2_000_000,
        };
        assert_eq!(s.value(0), 0.5);
        assert_eq!(s.value(500_000), 0.5);
        assert_eq!(s.value(1_250_000), (0.5 + 0.1) / 2.0);
        assert_eq!(s.value(1_250_000), 0.3);
        assert_eq!(s.value(2_000_000), 0.1);
        assert_eq!(s.value(7_000_000), 0.1);
    }

    #[test]
    fn non_extended_modes_use_a_constant_half() {
        let cfg = AdvisingConfig {
            mode: StudentMode::AdviceReuseAuto,
            ..AdvisingConfig::default()
        };
        let s = cfg.reuse_schedule();
        assert_eq!(s.value(0), 0.5);
        assert_eq!(s.value(10_000_000), 0.5);
    }
}
