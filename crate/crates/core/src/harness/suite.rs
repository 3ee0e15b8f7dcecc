use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::{run, run_dir, RunStatus, RunSummary, SUMMARY_FILE};
use super::HarnessError;
use crate::advising::StudentMode;

pub const SUITE_SUMMARY_FILE: &str = "suite_summary.csv";

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        // Moments about the first value, so identical inputs give exactly
        // their value and a zero spread.
        let origin = values[0];
        let shift = values.iter().map(|v| v - origin).sum::<f64>() / n as f64;
        let mean = origin + shift;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - origin - shift).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { mean, std, n })
    }
}

/// One (env, mode) row of the suite report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub env: String,
    pub mode: StudentMode,
    pub runs: usize,
    pub failed: usize,
    pub final_score: Option<Stat>,
    pub reuse_ratio_pct: Option<Stat>,
    pub reuse_accuracy_pct: Option<Stat>,
    pub auc: Option<Stat>,
    pub reused: Option<Stat>,
}

pub struct SuiteOutcome {
    pub runs: Vec<(PathBuf, Result<RunSummary, String>)>,
    pub rows: Vec<AggregateRow>,
}

/// Groups summaries by (env, mode); failed runs count towards `failed` and
/// are left out of the statistics.
pub fn aggregate(summaries: &[RunSummary]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, StudentMode), Vec<&RunSummary>> = BTreeMap::new();
    for s in summaries {
        groups.entry((s.env.clone(), s.mode)).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|((env, mode), runs)| {
            let ok: Vec<_> = runs.iter().filter(|s| s.status == RunStatus::Completed).collect();
            let collect = |f: &dyn Fn(&RunSummary) -> Option<f64>| {
                Stat::of(&ok.iter().filter_map(|s| f(s)).collect::<Vec<_>>())
            };
            AggregateRow {
                env,
                mode,
                runs: runs.len(),
                failed: runs.len() - ok.len(),
                final_score: collect(&|s| s.final_score),
                reuse_ratio_pct: collect(&|s| Some(s.reuse_ratio_pct)),
                reuse_accuracy_pct: collect(&|s| s.reuse_accuracy_pct),
                auc: collect(&|s| s.auc),
                reused: collect(&|s| Some(s.reused as f64)),
            }
        })
        .collect()
}

pub fn format_table(rows: &[AggregateRow]) -> String {
    let mut out = String::from(
        "env,mode,runs,failed,final_score_mean,final_score_std,reuse_ratio_pct_mean,reuse_ratio_pct_std,\
         reuse_accuracy_pct_mean,reuse_accuracy_pct_std,auc_mean,auc_std\n",
    );
    let cells = |s: &Option<Stat>| match s {
        Some(s) => format!("{},{}", s.mean, s.std),
        None => ",".to_string(),
    };
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.env,
            r.mode,
            r.runs,
            r.failed,
            cells(&r.final_score),
            cells(&r.reuse_ratio_pct),
            cells(&r.reuse_accuracy_pct),
            cells(&r.auc)
        );
    }
    out
}

/// Runs every (seed, mode) combination of `base` on up to `jobs` threads.
/// Runs share nothing; a failing run is recorded and the rest continue.
pub fn run_suite(
    base: &RunConfig,
    seeds: &[u64],
    modes: &[StudentMode],
    jobs: usize,
    out_root: impl AsRef<Path>,
) -> Result<SuiteOutcome, HarnessError> {
    let out_root = out_root.as_ref();
    let configs: Vec<RunConfig> = seeds
        .iter()
        .flat_map(|&seed| modes.iter().map(move |&mode| base.clone().with_seed(seed).with_mode(mode)))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<(PathBuf, Result<RunSummary, String>)>>> =
        Mutex::new((0..configs.len()).map(|_| None).collect());
    let workers = jobs.clamp(1, configs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(config) = configs.get(i) else { break };
                let dir = run_dir(out_root, config);
                let result = run(config, &dir).map_err(|e| e.to_string());
                results.lock().expect("no worker panicked holding the lock")[i] = Some((dir, result));
            });
        }
    });
    let runs: Vec<_> = results
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect();
    let summaries: Vec<RunSummary> = runs.iter().filter_map(|(_, r)| r.as_ref().ok().cloned()).collect();
    let rows = aggregate(&summaries);
    fs::create_dir_all(out_root).map_err(|e| HarnessError::io(out_root, e))?;
    fs::write(out_root.join(SUITE_SUMMARY_FILE), format_table(&rows))?;
    Ok(SuiteOutcome { runs, rows })
}

/// Every directory under the given roots (inclusive) holding a run summary.
pub fn find_run_dirs(roots: &[PathBuf]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut found = Vec::new();
    let mut stack: Vec<PathBuf> = roots.to_vec();
    while let Some(dir) = stack.pop() {
        if dir.join(SUMMARY_FILE).is_file() {
            found.push(dir.clone());
        }
        let entries = fs::read_dir(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        for entry in entries {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            }
        }
    }
    found.sort();
    found.dedup();
    Ok(found)
}

pub fn load_summaries(roots: &[PathBuf]) -> Result<Vec<RunSummary>, HarnessError> {
    find_run_dirs(roots)?.iter().map(RunSummary::load).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_uses_the_sample_deviation() {
        let s = Stat::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(Stat::of(&[4.0]).unwrap().std, 0.0);
        assert!(Stat::of(&[]).is_none());
    }

    #[test]
    fn identical_values_have_zero_spread() {
        let s = Stat::of(&[0.3, 0.3, 0.3]).unwrap();
        assert_eq!(s.std, 0.0);
    }
}
