//! Teacher imitation: the advice buffer, behavioural cloning of the teacher
//! into a dropout classifier, Monte-Carlo dropout uncertainty, and the
//! percentile rule that turns uncertainties into a reuse threshold.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{
    apply_gradients, nll_loss_and_grad, save_checkpoint, Activation, Adam, AdamConfig, DropoutMask, HeadKind,
    Network, NetworkSpec, NnError,
};

#[derive(Debug, Error)]
pub enum ImitationError {
    #[error("the advice buffer is empty")]
    EmptyBuffer,
    #[error("the imitation model has not been trained")]
    NotTrained,
    #[error(transparent)]
    Network(#[from] NnError),
    #[error("advice buffer file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdvicePair {
    pub state: Vec<f64>,
    pub action: usize,
}

/// Append-only store of collected advice. `n_last` and `t_last` record the
/// buffer size and step at the most recent imitation training.
#[derive(Clone, Debug, Default)]
pub struct AdviceBuffer {
    pairs: Vec<AdvicePair>,
    n_last: usize,
    t_last: u64,
}

impl AdviceBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, state: Vec<f64>, action: usize) {
        self.pairs.push(AdvicePair { state, action });
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[AdvicePair] {
        &self.pairs
    }

    pub fn n_last(&self) -> usize {
        self.n_last
    }

    pub fn t_last(&self) -> u64 {
        self.t_last
    }

    pub fn new_since_last(&self) -> usize {
        self.pairs.len() - self.n_last
    }

    /// One `action,x0,x1,...` line per pair.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), ImitationError> {
        let mut out = BufWriter::new(File::create(path)?);
        for pair in &self.pairs {
            write!(out, "{}", pair.action)?;
            for x in &pair.state {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, ImitationError> {
        let mut buffer = Self::new();
        for (no, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| ImitationError::Format(format!("line {}: {what}", no + 1));
            let mut fields = line.split(',');
            let action = fields
                .next()
                .and_then(|a| a.parse().ok())
                .ok_or_else(|| bad("bad action"))?;
            let state = fields
                .map(|x| x.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad("bad state component"))?;
            buffer.push(state, action);
        }
        Ok(buffer)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImitationTriggerConfig {
    pub n_min: usize,
    pub t_min: u64,
    pub k_init: usize,
    pub k_periodic: usize,
    pub batch_size: usize,
}

/// Retrain after `n_min` new pairs, or after `t_min` steps with at least
/// `ceil(n_min / 2)` new pairs.
pub fn should_train(buffer: &AdviceBuffer, trigger: &ImitationTriggerConfig, t: u64) -> bool {
    let new = buffer.new_since_last();
    let half = trigger.n_min.div_ceil(2);
    new >= trigger.n_min || (t.saturating_sub(buffer.t_last()) >= trigger.t_min && new >= half)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImitationConfig {
    pub hidden_layers: Vec<usize>,
    pub dropout_rate: f64,
    /// Stochastic forward passes per uncertainty estimate.
    pub mc_passes: usize,
    /// Percentile of correctly classified buffer uncertainties used as τ.
    pub percentile: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub n_min: usize,
    pub t_min: u64,
    pub k_init: usize,
    pub k_periodic: usize,
}

impl Default for ImitationConfig {
    /// Full-scale Atari values; the harness scales the step counts down.
    fn default() -> Self {
        Self {
            hidden_layers: vec![512],
            dropout_rate: 0.35,
            mc_passes: 100,
            percentile: 90.0,
            learning_rate: 1e-4,
            batch_size: 32,
            n_min: 2_500,
            t_min: 50_000,
            k_init: 200_000,
            k_periodic: 50_000,
        }
    }
}

impl ImitationConfig {
    pub fn trigger(&self) -> ImitationTriggerConfig {
        ImitationTriggerConfig {
            n_min: self.n_min,
            t_min: self.t_min,
            k_init: self.k_init,
            k_periodic: self.k_periodic,
            batch_size: self.batch_size,
        }
    }

    pub fn network_spec(&self, observation_dim: usize, action_count: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim: observation_dim,
            hidden_layers: self.hidden_layers.clone(),
            output_dim: action_count,
            dropout_rate: self.dropout_rate,
            head_kind: HeadKind::SoftmaxClassifier,
            activation: Activation::Relu,
        }
    }
}

/// Nearest-rank percentile of an ascending slice: the element at 0-based
/// index `ceil(p/100 · n) - 1`, clamped to the slice.
pub fn nearest_rank(sorted: &[f64], percentile: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = (percentile * n as f64 / 100.0).ceil() as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

/// τ for a multiset of known-state uncertainties: the nearest-rank
/// `percentile` after sorting; `None` for an empty multiset.
pub fn threshold_from_uncertainties(mut known: Vec<f64>, percentile: f64) -> Option<f64> {
    known.sort_by(f64::total_cmp);
    nearest_rank(&known, percentile)
}

/// Mean over output components of the per-component population variance
/// across the sampled probability vectors.
pub fn predictive_variance(samples: &[Vec<f64>]) -> f64 {
    let Some(first) = samples.first() else {
        return 0.0;
    };
    let k = samples.len() as f64;
    let dims = first.len();
    let mut total = 0.0;
    for d in 0..dims {
        // Shifted by the first sample so identical samples give exactly zero.
        let shift = first[d];
        let mean = samples.iter().map(|s| s[d] - shift).sum::<f64>() / k;
        total += samples.iter().map(|s| (s[d] - shift - mean).powi(2)).sum::<f64>() / k;
    }
    total / dims as f64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImitationState {
    pub tau: Option<f64>,
    pub trained: bool,
    pub train_events: u32,
}

#[derive(Clone)]
pub struct ImitationModel {
    net: Network,
    optimizer: Adam,
    tau: Option<f64>,
    trained: bool,
    train_events: u32,
    mc_passes: usize,
    percentile: f64,
    sample_rng: ChaCha8Rng,
    mc_rng: ChaCha8Rng,
}

impl ImitationModel {
    /// `init_seed` drives weights and training dropout, `train_seed` the
    /// minibatch draws, `mc_seed` the uncertainty masks.
    pub fn new(
        config: &ImitationConfig,
        observation_dim: usize,
        action_count: usize,
        init_seed: u64,
        train_seed: u64,
        mc_seed: u64,
    ) -> Result<Self, ImitationError> {
        let net = Network::new(config.network_spec(observation_dim, action_count), init_seed)?;
        Ok(Self {
            optimizer: Adam::new(AdamConfig::with_learning_rate(config.learning_rate), net.parameter_count()),
            net,
            tau: None,
            trained: false,
            train_events: 0,
            mc_passes: config.mc_passes.max(1),
            percentile: config.percentile,
            sample_rng: ChaCha8Rng::seed_from_u64(train_seed),
            mc_rng: ChaCha8Rng::seed_from_u64(mc_seed),
        })
    }

    pub fn net(&self) -> &Network {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn train_events(&self) -> u32 {
        self.train_events
    }

    pub fn mc_passes(&self) -> usize {
        self.mc_passes
    }

    pub fn set_manual_threshold(&mut self, tau: f64) {
        self.tau = Some(tau);
    }

    pub fn state(&self) -> ImitationState {
        ImitationState {
            tau: self.tau,
            trained: self.trained,
            train_events: self.train_events,
        }
    }

    pub fn probabilities(&self, state: &[f64]) -> Result<Vec<f64>, ImitationError> {
        Ok(self.net.predict(state)?)
    }

    /// `argmax_a G(a | s)` in eval mode.
    pub fn predict_action(&self, state: &[f64]) -> Result<usize, ImitationError> {
        Ok(self.net.greedy_action(state)?)
    }

    pub fn draw_masks(&mut self) -> Vec<DropoutMask> {
        let spec = self.net.spec();
        (0..self.mc_passes)
            .map(|_| DropoutMask::sample(spec, &mut self.mc_rng))
            .collect()
    }

    /// Epistemic uncertainty from `mc_passes` fresh dropout masks.
    pub fn uncertainty(&mut self, state: &[f64]) -> Result<f64, ImitationError> {
        let masks = self.draw_masks();
        self.uncertainty_with_masks(state, &masks)
    }

    pub fn uncertainty_with_masks(&self, state: &[f64], masks: &[DropoutMask]) -> Result<f64, ImitationError> {
        Ok(predictive_variance(&self.net.forward_mc(state, masks)?))
    }

    /// Number of iterations the next training call should run.
    pub fn next_iterations(&self, trigger: &ImitationTriggerConfig) -> usize {
        if self.trained {
            trigger.k_periodic
        } else {
            trigger.k_init
        }
    }

    /// Minibatch NLL steps on pairs drawn uniformly with replacement,
    /// continuing from the current weights. Returns the per-step losses.
    pub fn train(
        &mut self,
        buffer: &mut AdviceBuffer,
        iterations: usize,
        batch_size: usize,
        t: u64,
    ) -> Result<Vec<f64>, ImitationError> {
        if buffer.is_empty() {
            return Err(ImitationError::EmptyBuffer);
        }
        let n = buffer.len();
        let mut trace = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let batch: Vec<(&[f64], usize)> = (0..batch_size.max(1))
                .map(|_| {
                    let p = &buffer.pairs[self.sample_rng.gen_range(0..n)];
                    (p.state.as_slice(), p.action)
                })
                .collect();
            let (loss, grads) = nll_loss_and_grad(&mut self.net, &batch)?;
            apply_gradients(&mut self.net, &mut self.optimizer, &grads)?;
            trace.push(loss);
        }
        self.trained = true;
        self.train_events += 1;
        buffer.n_last = buffer.len();
        buffer.t_last = t;
        Ok(trace)
    }

    /// Sets τ to the configured percentile of the uncertainties of buffer
    /// pairs the model classifies correctly. With no such pair τ keeps its
    /// previous value. Returns the resulting τ.
    pub fn tune_threshold(&mut self, buffer: &AdviceBuffer) -> Result<Option<f64>, ImitationError> {
        if !self.trained {
            return Err(ImitationError::NotTrained);
        }
        if buffer.is_empty() {
            return Err(ImitationError::EmptyBuffer);
        }
        let known = self.known_uncertainties(buffer)?;
        if let Some(tau) = threshold_from_uncertainties(known, self.percentile) {
            self.tau = Some(tau);
        }
        Ok(self.tau)
    }

    /// The multiset U: uncertainties of the buffer pairs the model
    /// classifies correctly, in buffer order.
    pub fn known_uncertainties(&mut self, buffer: &AdviceBuffer) -> Result<Vec<f64>, ImitationError> {
        let mut known = Vec::new();
        for pair in &buffer.pairs {
            if self.predict_action(&pair.state)? == pair.action {
                known.push(self.uncertainty(&pair.state)?);
            }
        }
        Ok(known)
    }

    /// Writes `imitation.ckpt` and `imitation.json` (τ and bookkeeping).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), ImitationError> {
        let dir = dir.as_ref();
        save_checkpoint(&self.net, dir.join("imitation.ckpt"))?;
        let json = serde_json::to_string_pretty(&self.state()).map_err(|e| ImitationError::Format(e.to_string()))?;
        std::fs::write(dir.join("imitation.json"), json + "\n")?;
        Ok(())
    }
}
