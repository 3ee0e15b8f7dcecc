use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvConfig, EnvError, EnvKind, EnvSpec, Environment, Oracle, Transition};

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
const ACTIONS: usize = 4;

/// Eight by eight: the key sits in the far corner of the start room, the
/// door in the other room, and random walks rarely finish.
pub const KEY_DOOR_8X8_LAYOUT: [&str; 8] = [
    "S...#...",
    "....#...",
    "....#..D",
    "........",
    "....#...",
    "....#...",
    "....#...",
    "K...#...",
];

/// Start top-left, key bottom-left, door on the far side of a wall with a
/// single gap.
pub const DEFAULT_KEY_DOOR_LAYOUT: [&str; 6] = [
    "S..#..",
    "...#.D",
    "......",
    "...#..",
    "K..#..",
    "...#..",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cell {
    Floor,
    Wall,
    Door,
}

/// Static description of a key-door grid.
#[derive(Clone, Debug)]
pub struct GridLayout {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    start: usize,
    key: usize,
    door: usize,
}

/// Outcome of one deterministic move.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Moved {
    cell: usize,
    has_key: bool,
    reached_door: bool,
}

impl GridLayout {
    pub fn parse(rows: &[String]) -> Result<Self, EnvError> {
        let height = rows.len();
        let width = rows.first().map(|r| r.chars().count()).unwrap_or(0);
        if height == 0 || width == 0 {
            return Err(EnvError::InvalidConfig("grid_layout is empty".into()));
        }
        let mut cells = Vec::with_capacity(width * height);
        let (mut start, mut key, mut door) = (None, None, None);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(EnvError::InvalidConfig(format!("grid_layout row {r} has the wrong width")));
            }
            for (c, ch) in row.chars().enumerate() {
                let idx = r * width + c;
                let cell = match ch {
                    '.' => Cell::Floor,
                    '#' => Cell::Wall,
                    'S' => {
                        start = Some(idx);
                        Cell::Floor
                    }
                    'K' => {
                        key = Some(idx);
                        Cell::Floor
                    }
                    'D' => {
                        door = Some(idx);
                        Cell::Door
                    }
                    other => {
                        return Err(EnvError::InvalidConfig(format!("unknown grid cell {other:?}")));
                    }
                };
                cells.push(cell);
            }
        }
        let missing = |what: &str| EnvError::InvalidConfig(format!("grid_layout has no {what}"));
        Ok(Self {
            width,
            height,
            cells,
            start: start.ok_or_else(|| missing("start 'S'"))?,
            key: key.ok_or_else(|| missing("key 'K'"))?,
            door: door.ok_or_else(|| missing("door 'D'"))?,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn key(&self) -> usize {
        self.key
    }

    pub fn door(&self) -> usize {
        self.door
    }

    pub fn is_wall(&self, cell: usize) -> bool {
        self.cells[cell] == Cell::Wall
    }

    /// Cells an agent may stand on (everything but walls and the door).
    pub fn standable_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.cell_count()).filter(|&c| self.cells[c] == Cell::Floor)
    }

    /// The neighbouring cell for `action`, or `None` at the border.
    pub fn neighbour(&self, cell: usize, action: usize) -> Option<usize> {
        let (r, c) = (cell / self.width, cell % self.width);
        match action {
            UP if r > 0 => Some(cell - self.width),
            DOWN if r + 1 < self.height => Some(cell + self.width),
            LEFT if c > 0 => Some(cell - 1),
            RIGHT if c + 1 < self.width => Some(cell + 1),
            _ => None,
        }
    }

    fn apply(&self, cell: usize, has_key: bool, action: usize) -> Moved {
        let stay = Moved {
            cell,
            has_key,
            reached_door: false,
        };
        let Some(next) = self.neighbour(cell, action) else {
            return stay;
        };
        match self.cells[next] {
            Cell::Wall => stay,
            Cell::Door if !has_key => stay,
            Cell::Door => Moved {
                cell: next,
                has_key,
                reached_door: true,
            },
            Cell::Floor => Moved {
                cell: next,
                has_key: has_key || next == self.key,
                reached_door: false,
            },
        }
    }

    pub fn observe(&self, cell: usize, has_key: bool) -> Vec<f64> {
        let mut obs = vec![0.0; self.cell_count() + 1];
        obs[cell] = 1.0;
        obs[self.cell_count()] = if has_key { 1.0 } else { 0.0 };
        obs
    }

    pub fn decode(&self, obs: &[f64]) -> (usize, bool) {
        let n = self.cell_count();
        let cell = crate::nn::argmax(&obs[..n]);
        (cell, obs[n] > 0.5)
    }
}

/// Steps-to-door for every `(cell, has_key)` state, and the first action of
/// a shortest path (lowest index on ties).
struct GridOracle {
    layout: GridLayout,
    best: Vec<usize>,
}

impl GridOracle {
    fn new(layout: GridLayout) -> Self {
        let n = layout.cell_count();
        let index = |cell: usize, key: bool| cell + if key { n } else { 0 };
        let mut dist = vec![u32::MAX; 2 * n];
        // Bellman-Ford on unit edge costs; converges in at most 2n sweeps.
        loop {
            let mut changed = false;
            for key in [false, true] {
                for cell in layout.standable_cells() {
                    for a in 0..ACTIONS {
                        let m = layout.apply(cell, key, a);
                        let cost = if m.reached_door {
                            1
                        } else {
                            dist[index(m.cell, m.has_key)].saturating_add(1)
                        };
                        if cost < dist[index(cell, key)] {
                            dist[index(cell, key)] = cost;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut best = vec![0; 2 * n];
        for key in [false, true] {
            for cell in layout.standable_cells() {
                let mut best_cost = u32::MAX;
                for a in 0..ACTIONS {
                    let m = layout.apply(cell, key, a);
                    let cost = if m.reached_door {
                        1
                    } else {
                        dist[index(m.cell, m.has_key)].saturating_add(1)
                    };
                    if cost < best_cost {
                        best_cost = cost;
                        best[index(cell, key)] = a;
                    }
                }
            }
        }
        Self { layout, best }
    }
}

impl Oracle for GridOracle {
    fn action(&self, state: &[f64]) -> usize {
        let (cell, key) = self.layout.decode(state);
        self.best[cell + if key { self.layout.cell_count() } else { 0 }]
    }
}

/// Fetch the key, then reach the door. Observations are a one-hot position
/// followed by a key-held flag. With `slip_prob > 0` each action is replaced
/// by a uniformly random one with that probability.
pub struct KeyDoorWorld {
    spec: EnvSpec,
    oracle: Arc<GridOracle>,
    goal_reward: f64,
    step_penalty: f64,
    slip_prob: f64,
    rng: ChaCha8Rng,
    cell: usize,
    has_key: bool,
    steps: u32,
    done: bool,
}

impl KeyDoorWorld {
    pub fn from_config(config: &EnvConfig, seed: u64) -> Result<Self, EnvError> {
        let layout = GridLayout::parse(&config.grid_layout)?;
        let slip_prob = match config.name {
            EnvKind::SlipperyKeyDoor => config.slip_prob,
            _ => 0.0,
        };
        if !(0.0..=1.0).contains(&slip_prob) {
            return Err(EnvError::InvalidConfig("slip_prob outside [0, 1]".into()));
        }
        Ok(Self {
            spec: EnvSpec {
                name: config.name.name().into(),
                observation_dim: layout.cell_count() + 1,
                action_count: ACTIONS,
                max_episode_steps: config.max_episode_steps,
                seed,
            },
            cell: layout.start(),
            oracle: Arc::new(GridOracle::new(layout)),
            goal_reward: config.goal_reward,
            step_penalty: config.step_penalty,
            slip_prob,
            rng: ChaCha8Rng::seed_from_u64(seed),
            has_key: false,
            steps: 0,
            done: true,
        })
    }

    pub fn layout(&self) -> &GridLayout {
        &self.oracle.layout
    }

    pub fn position(&self) -> (usize, bool) {
        (self.cell, self.has_key)
    }

    /// Starts an episode from an arbitrary standable state.
    pub fn reset_to(&mut self, cell: usize, has_key: bool) -> Vec<f64> {
        assert!(
            self.layout().standable_cells().any(|c| c == cell),
            "cell {cell} is not standable"
        );
        self.cell = cell;
        self.has_key = has_key || cell == self.layout().key();
        self.steps = 0;
        self.done = false;
        self.layout().observe(self.cell, self.has_key)
    }
}

impl Environment for KeyDoorWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Vec<f64> {
        let start = self.layout().start();
        self.reset_to(start, false)
    }

    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        if action >= ACTIONS {
            return Err(EnvError::InvalidAction { action, count: ACTIONS });
        }
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let state = self.layout().observe(self.cell, self.has_key);
        let executed = if self.slip_prob > 0.0 && self.rng.gen::<f64>() < self.slip_prob {
            self.rng.gen_range(0..ACTIONS)
        } else {
            action
        };
        let moved = self.oracle.layout.apply(self.cell, self.has_key, executed);
        self.cell = moved.cell;
        self.has_key = moved.has_key;
        self.steps += 1;
        self.done = moved.reached_door;
        Ok(Transition {
            state,
            action,
            reward: if moved.reached_door {
                self.goal_reward
            } else {
                -self.step_penalty
            },
            next_state: self.layout().observe(self.cell, self.has_key),
            terminal: moved.reached_door,
            truncated: false,
        })
    }

    fn episode_step(&self) -> u32 {
        self.steps
    }

    fn oracle(&self) -> Arc<dyn Oracle> {
        self.oracle.clone()
    }
}
