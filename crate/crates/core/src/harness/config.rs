use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advising::{AdvisingConfig, StudentMode};
use crate::envs::EnvConfig;
use crate::imitation::ImitationConfig;
use crate::student::StudentConfig;
use crate::teacher::TeacherKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Named starting points. `Full` carries the full-scale values; `Desk`
/// multiplies every step-count hyperparameter by `scale` and shrinks the
/// networks to suit small feature-vector tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Full,
    Desk,
}

impl Profile {
    pub fn default_scale(self) -> f64 {
        match self {
            Profile::Full => 1.0,
            Profile::Desk => DESK_SCALE,
        }
    }
}

pub const DESK_SCALE: f64 = 0.04;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    pub kind: TeacherKind,
    /// Per-query probability that the teacher answers with a uniform random action.
    pub noise: f64,
    /// Checkpoint of a dueling Q-network; used when `kind = "dqn_snapshot"`.
    pub snapshot_path: String,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            kind: TeacherKind::ScriptedOracle,
            noise: 0.0,
            snapshot_path: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub scale: f64,
    pub seed: u64,
    pub total_steps: u64,
    pub budget: u64,
    pub eval_period: u64,
    pub eval_episodes: u32,
    /// Steps per diagnostic metrics row.
    pub diag_window: u64,
    /// Score reused actions against shadow teacher queries.
    pub instrument: bool,
    pub output_dir: String,
    pub env: EnvConfig,
    pub teacher: TeacherConfig,
    pub student: StudentConfig,
    pub imitation: ImitationConfig,
    pub advising: AdvisingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Desk, None)
    }
}

impl RunConfig {
    pub fn full() -> Self {
        Self {
            profile: Profile::Full,
            scale: 1.0,
            seed: 0,
            total_steps: 5_000_000,
            budget: 25_000,
            eval_period: 50_000,
            eval_episodes: 10,
            diag_window: 100,
            instrument: true,
            output_dir: "runs".to_string(),
            env: EnvConfig::default(),
            teacher: TeacherConfig::default(),
            student: StudentConfig::default(),
            imitation: ImitationConfig::default(),
            advising: AdvisingConfig::default(),
        }
    }

    pub fn for_profile(profile: Profile, scale: Option<f64>) -> Self {
        let mut config = Self::full();
        config.profile = profile;
        config.scale = scale.unwrap_or(profile.default_scale());
        config.apply_scale();
        if profile == Profile::Desk {
            config.student.hidden_layers = vec![64];
            config.student.learning_rate = 1e-3;
            config.imitation.hidden_layers = vec![64];
            config.imitation.learning_rate = 1e-3;
        }
        config
    }

    /// Multiplies the full-scale step counts by `self.scale`.
    fn apply_scale(&mut self) {
        let f = self.scale;
        let s = |x: u64| ((x as f64 * f).round() as u64).max(1);
        let su = |x: usize| s(x as u64) as usize;
        self.total_steps = s(self.total_steps);
        self.budget = s(self.budget);
        self.eval_period = s(self.eval_period);
        self.student.replay_capacity = su(self.student.replay_capacity);
        self.student.replay_min_size = su(self.student.replay_min_size);
        self.student.target_update_period = s(self.student.target_update_period);
        self.student.eps_decay_steps = s(self.student.eps_decay_steps);
        self.imitation.n_min = su(self.imitation.n_min);
        self.imitation.t_min = s(self.imitation.t_min);
        self.imitation.k_init = su(self.imitation.k_init);
        self.imitation.k_periodic = su(self.imitation.k_periodic);
        self.advising.rho_decay_start = s(self.advising.rho_decay_start);
        self.advising.rho_decay_end = s(self.advising.rho_decay_end);
    }

    /// Parses a TOML document: `profile` and `scale` pick the base values,
    /// every other key overrides them. Unknown keys are rejected by path.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let user: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let profile = match user.get("profile") {
            None => Profile::Desk,
            Some(v) => v
                .clone()
                .try_into::<Profile>()
                .map_err(|_| invalid("profile", "expected \"full\" or \"desk\""))?,
        };
        let scale = match user.get("scale") {
            None => None,
            Some(toml::Value::Float(f)) => Some(*f),
            Some(toml::Value::Integer(i)) => Some(*i as f64),
            Some(_) => return Err(invalid("scale", "expected a number")),
        };
        if let Some(f) = scale {
            if !(f > 0.0 && f.is_finite()) {
                return Err(invalid("scale", "must be positive"));
            }
        }
        let mut base = toml::Table::try_from(Self::for_profile(profile, scale))
            .map_err(|e| ConfigError::Parse(e.to_string()))?;
        merge(&mut base, user, "")?;
        let config: RunConfig = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_mode(mut self, mode: StudentMode) -> Self {
        self.advising.mode = mode;
        self
    }

    pub fn mode(&self) -> StudentMode {
        self.advising.mode
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("total_steps", self.total_steps),
            ("eval_period", self.eval_period),
            ("eval_episodes", self.eval_episodes as u64),
            ("diag_window", self.diag_window),
            ("env.max_episode_steps", self.env.max_episode_steps as u64),
            ("student.batch_size", self.student.batch_size as u64),
            ("student.replay_capacity", self.student.replay_capacity as u64),
            ("student.target_update_period", self.student.target_update_period),
            ("student.train_period", self.student.train_period),
            ("imitation.batch_size", self.imitation.batch_size as u64),
            ("imitation.mc_passes", self.imitation.mc_passes as u64),
        ];
        for (key, value) in positive {
            if value == 0 {
                return Err(invalid(key, "must be positive"));
            }
        }
        let unit = [
            ("teacher.noise", self.teacher.noise),
            ("env.slip_prob", self.env.slip_prob),
            ("student.eps_init", self.student.eps_init),
            ("student.eps_final", self.student.eps_final),
            ("imitation.dropout_rate", self.imitation.dropout_rate),
            ("advising.rho_init", self.advising.rho_init),
            ("advising.rho_final", self.advising.rho_final),
            ("advising.non_extended_rho", self.advising.non_extended_rho),
            ("advising.random_advice_prob", self.advising.random_advice_prob),
        ];
        for (key, value) in unit {
            if !(0.0..=1.0).contains(&value) {
                return Err(invalid(key, "must lie in [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.student.gamma) {
            return Err(invalid("student.gamma", "must lie in [0, 1)"));
        }
        if !(self.imitation.percentile > 0.0 && self.imitation.percentile <= 100.0) {
            return Err(invalid("imitation.percentile", "must lie in (0, 100]"));
        }
        if self.advising.rho_final > self.advising.rho_init {
            return Err(invalid("advising.rho_final", "must not exceed rho_init"));
        }
        if self.advising.rho_decay_end < self.advising.rho_decay_start {
            return Err(invalid("advising.rho_decay_end", "must not precede rho_decay_start"));
        }
        if self.student.replay_min_size > self.student.replay_capacity {
            return Err(invalid("student.replay_min_size", "exceeds replay_capacity"));
        }
        for (key, lr) in [
            ("student.learning_rate", self.student.learning_rate),
            ("imitation.learning_rate", self.imitation.learning_rate),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(invalid(key, "must be positive"));
            }
        }
        if self.advising.manual_tau < 0.0 {
            return Err(invalid("advising.manual_tau", "must be non-negative"));
        }
        if self.teacher.kind == TeacherKind::DqnSnapshot && self.teacher.snapshot_path.is_empty() {
            return Err(invalid("teacher.snapshot_path", "required for dqn_snapshot teachers"));
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, user: toml::Table, prefix: &str) -> Result<(), ConfigError> {
    for (key, value) in user {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match (base.get_mut(&key), value) {
            (None, _) => return Err(ConfigError::UnknownKey(path)),
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u, &path)?,
            (Some(toml::Value::Table(_)), _) => return Err(invalid(&path, "expected a table")),
            (Some(slot), value) => *slot = value,
        }
    }
    Ok(())
}
