//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::VecDeque;

use advice_reuse::envs::EnvConfig;

/// Relative tolerance of the finite-difference gradient check.
pub const FD_REL_TOL: f64 = 1e-3;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-4;
/// Absolute floor below which both gradients count as zero.
pub const FD_ABS_FLOOR: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs());
    scale <= FD_ABS_FLOOR || (a - b).abs() <= FD_REL_TOL * scale
}

/// Outcome of a finite-difference check that tolerates ReLU kinks.
#[derive(Debug, Default)]
pub struct FdReport {
    /// Coordinates where a kink lay inside the step and the analytic value
    /// matched one of the one-sided differences instead.
    pub kinks: usize,
    pub mismatches: Vec<(usize, f64, f64)>,
}

/// Central differences at `FD_STEP`. A coordinate whose forward and backward
/// differences disagree has a non-differentiable point within the step; it
/// passes only if the analytic value equals one of the one-sided differences.
pub fn check_gradient(analytic: &[f64], params: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> FdReport {
    let mut p = params.to_vec();
    let base = loss(&p);
    let mut report = FdReport::default();
    for (i, &a) in analytic.iter().enumerate() {
        let orig = p[i];
        p[i] = orig + FD_STEP;
        let up = loss(&p);
        p[i] = orig - FD_STEP;
        let down = loss(&p);
        p[i] = orig;
        let central = (up - down) / (2.0 * FD_STEP);
        if close(a, central) {
            continue;
        }
        let (fwd, bwd) = ((up - base) / FD_STEP, (base - down) / FD_STEP);
        if !close(fwd, bwd) && (close(a, fwd) || close(a, bwd)) {
            report.kinks += 1;
        } else {
            report.mismatches.push((i, a, central));
        }
    }
    report
}

/// Nearest-rank percentile by search: the smallest k (1-based) with
/// k/n ≥ p/100, compared in integers where possible.
pub fn brute_force_percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let k = (1..=n)
        .find(|&k| {
            if p.fract() == 0.0 {
                100 * k as u64 >= p as u64 * n as u64
            } else {
                k as f64 * 100.0 >= p * n as f64
            }
        })
        .unwrap_or(n);
    Some(sorted[k - 1])
}

/// Key-door grid parsed independently of the library.
pub struct GridModel {
    pub width: usize,
    pub height: usize,
    pub walls: Vec<bool>,
    pub start: usize,
    pub key: usize,
    pub door: usize,
}

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

impl GridModel {
    pub fn parse(rows: &[String]) -> Self {
        let height = rows.len();
        let width = rows[0].len();
        let mut walls = vec![false; width * height];
        let (mut start, mut key, mut door) = (0, 0, 0);
        for (r, row) in rows.iter().enumerate() {
            for (c, ch) in row.chars().enumerate() {
                let i = r * width + c;
                match ch {
                    '#' => walls[i] = true,
                    'S' => start = i,
                    'K' => key = i,
                    'D' => door = i,
                    _ => {}
                }
            }
        }
        Self {
            width,
            height,
            walls,
            start,
            key,
            door,
        }
    }

    /// `(next_cell, next_key, reached_door)`.
    pub fn step(&self, cell: usize, key: bool, action: usize) -> (usize, bool, bool) {
        let (r, c) = ((cell / self.width) as i64, (cell % self.width) as i64);
        let (nr, nc) = match action {
            UP => (r - 1, c),
            DOWN => (r + 1, c),
            LEFT => (r, c - 1),
            _ => (r, c + 1),
        };
        if nr < 0 || nc < 0 || nr >= self.height as i64 || nc >= self.width as i64 {
            return (cell, key, false);
        }
        let next = nr as usize * self.width + nc as usize;
        if self.walls[next] {
            return (cell, key, false);
        }
        if next == self.door {
            return if key { (next, key, true) } else { (cell, key, false) };
        }
        (next, key || next == self.key, false)
    }

    fn index(&self, cell: usize, key: bool) -> usize {
        cell * 2 + key as usize
    }

    /// Fewest steps to the door from every `(cell, key)` state, by backward
    /// breadth-first search over the explicit transition graph.
    pub fn distances_to_door(&self) -> Vec<Option<u32>> {
        let n = self.width * self.height;
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n * 2];
        let mut dist = vec![None; n * 2];
        let mut queue = VecDeque::new();
        for cell in 0..n {
            if self.walls[cell] || cell == self.door {
                continue;
            }
            for key in [false, true] {
                for a in 0..4 {
                    let (next, nkey, done) = self.step(cell, key, a);
                    let from = self.index(cell, key);
                    if done {
                        if dist[from].is_none() {
                            dist[from] = Some(1);
                            queue.push_back(from);
                        }
                    } else {
                        preds[self.index(next, nkey)].push(from);
                    }
                }
            }
        }
        while let Some(s) = queue.pop_front() {
            let d = dist[s].unwrap();
            for &p in &preds[s] {
                if dist[p].is_none() {
                    dist[p] = Some(d + 1);
                    queue.push_back(p);
                }
            }
        }
        dist
    }

    pub fn distance(&self, table: &[Option<u32>], cell: usize, key: bool) -> Option<u32> {
        table[self.index(cell, key)]
    }
}

/// Optimal undiscounted return from the corridor start, by finite-horizon
/// value iteration over the corridor's transition model with clipping.
pub fn corridor_optimal_return(config: &EnvConfig) -> f64 {
    let n = config.corridor_length;
    let goal = n - 1;
    let clip = |r: f64| r.clamp(-1.0, 1.0);
    let mut v = vec![0.0; n];
    for _ in 0..config.max_episode_steps {
        let mut next = vec![0.0; n];
        for (s, slot) in next.iter_mut().enumerate() {
            if s == goal {
                continue;
            }
            *slot = (0..config.corridor_actions)
                .map(|a| {
                    let s2 = match a {
                        0 => s.saturating_sub(1),
                        1 => (s + 1).min(goal),
                        _ => s,
                    };
                    if s2 == goal {
                        clip(config.goal_reward)
                    } else {
                        clip(-config.step_penalty) + v[s2]
                    }
                })
                .fold(f64::NEG_INFINITY, f64::max);
        }
        v = next;
    }
    v[0]
}

/// Optimal undiscounted key-door return from the start cell.
pub fn key_door_optimal_return(config: &EnvConfig) -> f64 {
    let model = GridModel::parse(&config.grid_layout);
    let table = model.distances_to_door();
    let steps = model.distance(&table, model.start, false).expect("door reachable") as f64;
    config.goal_reward.clamp(-1.0, 1.0) - (steps - 1.0) * config.step_penalty.clamp(-1.0, 1.0)
}

/// Tabular discounted value iteration for a deterministic MDP given as
/// `model(state, action) -> (next_state, reward, terminal)`.
pub fn value_iteration(
    states: usize,
    actions: usize,
    gamma: f64,
    model: impl Fn(usize, usize) -> (usize, f64, bool),
) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0; actions]; states];
    for _ in 0..10_000 {
        let v: Vec<f64> = q.iter().map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
        let mut delta: f64 = 0.0;
        for s in 0..states {
            for a in 0..actions {
                let (s2, r, terminal) = model(s, a);
                let target = if terminal { r } else { r + gamma * v[s2] };
                delta = delta.max((target - q[s][a]).abs());
                q[s][a] = target;
            }
        }
        if delta < 1e-12 {
            break;
        }
    }
    q
}
