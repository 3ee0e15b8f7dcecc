use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, TeacherConfig};
use super::HarnessError;
use crate::advising::{ActionSource, Advisor, AdvisorSeeds, Learner, StudentMode};
use crate::envs::{make_env, Environment};
use crate::seeding::{derive_seed, Stream};
use crate::student::StudentAgent;
use crate::teacher::{AdviceChannel, Teacher, TeacherKind};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BUFFER_FILE: &str = "advice_buffer.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const STUDENT_CHECKPOINT: &str = "student.ckpt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Eval,
    Window,
}

/// One line of `metrics.jsonl`. Eval rows carry counts since the previous
/// eval row; window rows carry counts over the last `diag_window` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub kind: RecordKind,
    pub step: u64,
    pub eval_score: Option<f64>,
    pub reuse_count_window: u64,
    pub collection_count_window: u64,
    pub tau_current: Option<f64>,
    pub budget_remaining: u64,
    /// Fraction of reused actions so far that matched the teacher.
    pub reuse_accuracy_running: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub env: String,
    pub mode: StudentMode,
    pub seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
    pub total_steps: u64,
    pub steps_completed: u64,
    pub episodes: u64,
    pub eval_count: u64,
    pub final_score: Option<f64>,
    /// Mean evaluation score over all eval rows.
    pub auc: Option<f64>,
    pub reuse_ratio_pct: f64,
    pub reuse_accuracy_pct: Option<f64>,
    pub collected: u64,
    pub reused: u64,
    pub reuse_hits: u64,
    pub budget_initial: u64,
    pub budget_remaining: u64,
    pub metered_queries: u64,
    pub shadow_queries: u64,
    pub imitation_events: u64,
    pub tau_final: Option<f64>,
}

impl RunSummary {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = dir.as_ref().join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Everything a run owns apart from its output files.
pub struct RunParts {
    pub learner: Learner,
    pub eval_env: Box<dyn Environment>,
}

pub fn build_teacher(
    config: &TeacherConfig,
    env: &dyn Environment,
    noise_seed: u64,
) -> Result<Teacher, HarnessError> {
    let teacher = match config.kind {
        TeacherKind::ScriptedOracle => Teacher::scripted(env.oracle(), env.spec().action_count),
        TeacherKind::DqnSnapshot => Teacher::from_snapshot(&config.snapshot_path)?,
    };
    Ok(teacher.with_noise(config.noise, noise_seed))
}

/// Builds the environment, student, advisor and metered channel of a run
/// with seeds split from `config.seed`.
pub fn build_run(config: &RunConfig) -> Result<RunParts, HarnessError> {
    config.validate()?;
    let seed = |stream| derive_seed(config.seed, stream);
    let env = make_env(&config.env, seed(Stream::Env))?;
    let eval_env = make_env(&config.env, seed(Stream::EvalEnv))?;
    let spec = env.spec();
    let teacher = build_teacher(&config.teacher, env.as_ref(), seed(Stream::TeacherNoise))?;
    let student = StudentAgent::new(
        config.student.clone(),
        spec.observation_dim,
        spec.action_count,
        seed(Stream::StudentInit),
        seed(Stream::StudentRng),
    )?;
    let advisor = Advisor::new(
        config.advising.clone(),
        config.imitation.clone(),
        spec.observation_dim,
        spec.action_count,
        AdvisorSeeds {
            advising: seed(Stream::Advising),
            imitation_init: seed(Stream::ImitationInit),
            imitation_train: seed(Stream::ImitationTrain),
            imitation_mc: seed(Stream::ImitationMc),
        },
    )?;
    let channel = AdviceChannel::new(teacher, config.budget);
    Ok(RunParts {
        learner: Learner::new(env, student, advisor, channel, config.instrument),
        eval_env,
    })
}

/// Mean undiscounted return of the greedy policy over `episodes` episodes.
/// Takes the student by shared reference: evaluation cannot train, explore
/// or query anyone.
pub fn evaluate_policy(student: &StudentAgent, env: &mut dyn Environment, episodes: u32) -> Result<f64, HarnessError> {
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut obs = env.reset();
        loop {
            let action = student.greedy_action(&obs)?;
            let tr = env.step(action)?;
            total += tr.reward;
            if tr.episode_over() {
                break;
            }
            obs = tr.next_state;
        }
    }
    Ok(total / episodes as f64)
}

#[derive(PartialEq, Eq, Debug)]
struct PurityProbe {
    metered: u64,
    shadow: u64,
    replay: usize,
    student_steps: u64,
    gradient_steps: u64,
    imitation_events: usize,
    buffer: usize,
}

impl PurityProbe {
    fn take(learner: &Learner) -> Self {
        let ledger = learner.channel().ledger();
        Self {
            metered: ledger.metered_queries(),
            shadow: ledger.shadow_queries(),
            replay: learner.student().replay().len(),
            student_steps: learner.student().step_count(),
            gradient_steps: learner.student().gradient_steps(),
            imitation_events: learner.advisor().events().len(),
            buffer: learner.advisor().buffer().len(),
        }
    }
}

struct MetricsWriter {
    file: File,
}

impl MetricsWriter {
    fn create(path: &Path) -> Result<Self, HarnessError> {
        Ok(Self {
            file: File::create(path).map_err(|e| HarnessError::io(path, e))?,
        })
    }

    /// One self-delimiting line per record, flushed immediately.
    fn write(&mut self, record: &MetricsRecord) -> Result<(), HarnessError> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>, HarnessError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    // A writer killed mid-row can leave one unterminated line; drop it.
    let complete = match text.rfind('\n') {
        Some(end) => &text[..end],
        None => "",
    };
    complete
        .lines()
        .filter(|line| !line.trim().is_empty())
        .map(|line| Ok(serde_json::from_str(line)?))
        .collect()
}

fn running_accuracy(learner: &Learner) -> Option<f64> {
    let totals = learner.totals();
    (learner.channel().ledger().shadow_queries() > 0 && totals.reused > 0)
        .then(|| totals.reuse_hits as f64 / totals.reused as f64)
}

/// Default directory of a run inside `root`.
pub fn run_dir(root: impl AsRef<Path>, config: &RunConfig) -> PathBuf {
    root.as_ref()
        .join(config.env.name.name())
        .join(config.mode().label())
        .join(format!("seed{}", config.seed))
}

/// Trains for `total_steps`, evaluating every `eval_period` steps, and
/// writes the metrics, summary and artifacts into `out_dir`. A run that
/// fails mid-way (e.g. diverges) returns a `Failed` summary and keeps the
/// metrics written so far.
pub fn run(config: &RunConfig, out_dir: impl AsRef<Path>) -> Result<RunSummary, HarnessError> {
    let out_dir = out_dir.as_ref();
    let RunParts {
        mut learner,
        mut eval_env,
    } = build_run(config)?;
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    fs::write(out_dir.join(CONFIG_FILE), config.to_toml_string())?;
    let mut metrics = MetricsWriter::create(&out_dir.join(METRICS_FILE))?;

    let mut eval_scores = Vec::new();
    let (mut win_reuse, mut win_collect, mut eval_reuse, mut eval_collect) = (0u64, 0u64, 0u64, 0u64);
    let mut error = None;
    let record = |learner: &Learner, kind, score, reuse, collect| MetricsRecord {
        kind,
        step: learner.t(),
        eval_score: score,
        reuse_count_window: reuse,
        collection_count_window: collect,
        tau_current: learner.advisor().tau(),
        budget_remaining: learner.channel().ledger().remaining(),
        reuse_accuracy_running: running_accuracy(learner),
    };

    while learner.t() < config.total_steps {
        let step = match learner.step() {
            Ok(step) => step,
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        };
        let (reused, collected) = match step.source {
            ActionSource::ReusedAdvice => (1, 0),
            ActionSource::CollectedAdvice => (0, 1),
            ActionSource::SelfPolicy => (0, 0),
        };
        win_reuse += reused;
        win_collect += collected;
        eval_reuse += reused;
        eval_collect += collected;
        let t = learner.t();
        if t % config.diag_window == 0 {
            metrics.write(&record(&learner, RecordKind::Window, None, win_reuse, win_collect))?;
            win_reuse = 0;
            win_collect = 0;
        }
        if t % config.eval_period == 0 {
            let before = PurityProbe::take(&learner);
            let score = evaluate_policy(learner.student(), eval_env.as_mut(), config.eval_episodes)?;
            let after = PurityProbe::take(&learner);
            if before != after {
                return Err(HarnessError::EvalPurity(format!("{before:?} -> {after:?}")));
            }
            eval_scores.push(score);
            metrics.write(&record(&learner, RecordKind::Eval, Some(score), eval_reuse, eval_collect))?;
            eval_reuse = 0;
            eval_collect = 0;
        }
    }

    let totals = *learner.totals();
    let ledger = learner.channel().ledger();
    let advisor = learner.advisor();
    let status = if error.is_some() { RunStatus::Failed } else { RunStatus::Completed };
    let steps = learner.t();
    let summary = RunSummary {
        env: config.env.name.name().to_string(),
        mode: config.mode(),
        seed: config.seed,
        status,
        error,
        total_steps: config.total_steps,
        steps_completed: steps,
        episodes: totals.episodes,
        eval_count: eval_scores.len() as u64,
        final_score: eval_scores.last().copied(),
        auc: (!eval_scores.is_empty()).then(|| eval_scores.iter().sum::<f64>() / eval_scores.len() as f64),
        reuse_ratio_pct: if steps == 0 { 0.0 } else { 100.0 * totals.reused as f64 / steps as f64 },
        reuse_accuracy_pct: running_accuracy(&learner).map(|a| 100.0 * a),
        collected: totals.collected,
        reused: totals.reused,
        reuse_hits: totals.reuse_hits,
        budget_initial: ledger.initial_budget(),
        budget_remaining: ledger.remaining(),
        metered_queries: ledger.metered_queries(),
        shadow_queries: ledger.shadow_queries(),
        imitation_events: advisor.events().len() as u64,
        tau_final: advisor.tau(),
    };

    if !advisor.buffer().is_empty() {
        advisor.buffer().write_csv(out_dir.join(BUFFER_FILE))?;
    }
    if summary.status == RunStatus::Completed {
        learner.student().save_online(out_dir.join(STUDENT_CHECKPOINT))?;
        if let Some(model) = advisor.imitation().filter(|m| m.is_trained()) {
            model.save(out_dir)?;
        }
    }
    fs::write(out_dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}
