use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::run::{RunSummary, BUFFER_FILE};
use super::suite::find_run_dirs;
use super::HarnessError;
use crate::advising::StudentMode;
use crate::imitation::AdviceBuffer;

/// A state keyed by the bit patterns of its features (gridworld states are
/// discrete, so exact matching is meaningful).
pub type StateKey = Vec<u64>;

pub fn state_key(state: &[f64]) -> StateKey {
    state.iter().map(|x| x.to_bits()).collect()
}

pub fn distinct_states(buffer: &AdviceBuffer) -> BTreeSet<StateKey> {
    buffer.pairs().iter().map(|p| state_key(&p.state)).collect()
}

/// Mean Euclidean distance over unordered pairs of distinct states; `None`
/// with fewer than two states.
pub fn mean_pairwise_distance(states: &BTreeSet<StateKey>) -> Option<f64> {
    let points: Vec<Vec<f64>> = states
        .iter()
        .map(|k| k.iter().map(|b| f64::from_bits(*b)).collect())
        .collect();
    let n = points.len();
    if n < 2 {
        return None;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
        }
    }
    Some(total / (n * (n - 1) / 2) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub only_a: usize,
    pub only_b: usize,
    pub both: usize,
    pub mean_distance_a: Option<f64>,
    pub mean_distance_b: Option<f64>,
}

/// Coverage statistics over the distinct states of two buffers.
pub fn compare(a: &AdviceBuffer, b: &AdviceBuffer) -> Coverage {
    let (sa, sb) = (distinct_states(a), distinct_states(b));
    let both = sa.intersection(&sb).count();
    Coverage {
        only_a: sa.len() - both,
        only_b: sb.len() - both,
        both,
        mean_distance_a: mean_pairwise_distance(&sa),
        mean_distance_b: mean_pairwise_distance(&sb),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityRow {
    pub env: String,
    pub seed: u64,
    pub mode_a: StudentMode,
    pub mode_b: StudentMode,
    pub coverage: Coverage,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub rows: Vec<DiversityRow>,
    /// Run directories without a readable advice buffer.
    pub missing: Vec<String>,
}

impl DiversityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("env,seed,mode_a,mode_b,only_a,only_b,both,mean_distance_a,mean_distance_b\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let c = &r.coverage;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.env,
                r.seed,
                r.mode_a,
                r.mode_b,
                c.only_a,
                c.only_b,
                c.both,
                opt(c.mean_distance_a),
                opt(c.mean_distance_b)
            ));
        }
        out
    }

    pub fn find(&self, env: &str, seed: u64, a: StudentMode, b: StudentMode) -> Option<&DiversityRow> {
        self.rows
            .iter()
            .find(|r| r.env == env && r.seed == seed && r.mode_a == a && r.mode_b == b)
    }
}

/// Compares the advice buffers of every mode pair that shares an
/// (env, seed). Runs that never stored a buffer count as empty if their
/// summary shows no collection, and as missing otherwise.
pub fn diversity_report(roots: &[PathBuf]) -> Result<DiversityReport, HarnessError> {
    let mut report = DiversityReport::default();
    let mut groups: BTreeMap<(String, u64), BTreeMap<StudentMode, AdviceBuffer>> = BTreeMap::new();
    for dir in find_run_dirs(roots)? {
        let summary = RunSummary::load(&dir)?;
        let path = dir.join(BUFFER_FILE);
        let buffer = if path.is_file() {
            match AdviceBuffer::read_csv(&path) {
                Ok(b) => b,
                Err(e) => {
                    report.missing.push(format!("{}: {e}", dir.display()));
                    continue;
                }
            }
        } else if summary.collected == 0 {
            AdviceBuffer::new()
        } else {
            report.missing.push(format!("{}: no {BUFFER_FILE}", dir.display()));
            continue;
        };
        groups
            .entry((summary.env.clone(), summary.seed))
            .or_default()
            .insert(summary.mode, buffer);
    }
    for ((env, seed), buffers) in groups {
        let modes: Vec<_> = buffers.keys().copied().collect();
        for (i, &a) in modes.iter().enumerate() {
            for &b in &modes[i + 1..] {
                report.rows.push(DiversityRow {
                    env: env.clone(),
                    seed,
                    mode_a: a,
                    mode_b: b,
                    coverage: compare(&buffers[&a], &buffers[&b]),
                });
            }
        }
    }
    Ok(report)
}
