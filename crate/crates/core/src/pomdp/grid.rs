//! Grid-world navigation benchmark.
//!
//! Every cell is a state, plus two absorbing states: `CRASHED` (entered when
//! a move lands on an obstacle) and `DONE` (entered when a move lands on the
//! goal). The eight king moves are the actions. A move reaches its target with
//! probability `1 - delta`; otherwise the agent lands on a uniformly random
//! in-grid neighbor. Moves off the grid leave the agent in place.
//!
//! Observations are binary and state-conditioned: `obstacle` is emitted when
//! an obstacle occupies one of the eight cells a move from the current cell
//! could target, `clear` otherwise; the reading is flipped with the
//! configured false-negative / false-positive rates.

use std::collections::BTreeSet;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pomdp::Pomdp;

pub const CRASHED: &str = "CRASHED";
pub const DONE: &str = "DONE";
pub const GRID_FORMAT: &str = "riskfsc-grid";
pub const GRID_FORMAT_VERSION: u32 = 1;

/// Move names and `(d_row, d_col)` offsets; row 0 is the top of the map.
pub const MOVES: [(&str, i64, i64); 8] = [
    ("N", -1, 0),
    ("NE", -1, 1),
    ("E", 0, 1),
    ("SE", 1, 1),
    ("S", 1, 0),
    ("SW", 1, -1),
    ("W", 0, -1),
    ("NW", -1, -1),
];

pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridWorldSpec {
    #[serde(default = "default_format")]
    pub format: String,
    #[serde(default = "default_version")]
    pub version: u32,
    pub rows: usize,
    pub cols: usize,
    pub obstacles: Vec<Cell>,
    pub goal: Cell,
    /// Start cell; the initial distribution is uniform over free cells when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Cell>,
    #[serde(default = "default_rate")]
    pub delta: f64,
    #[serde(default = "default_rate")]
    pub fn_rate: f64,
    #[serde(default = "default_rate")]
    pub fp_rate: f64,
    #[serde(default = "default_move_cost")]
    pub move_cost: f64,
    #[serde(default = "default_crash_cost")]
    pub crash_cost: f64,
}

fn default_format() -> String {
    GRID_FORMAT.to_string()
}
fn default_version() -> u32 {
    GRID_FORMAT_VERSION
}
fn default_rate() -> f64 {
    0.1
}
fn default_move_cost() -> f64 {
    1.0
}
fn default_crash_cost() -> f64 {
    10.0
}

impl GridWorldSpec {
    /// A map with default noise and costs.
    pub fn new(rows: usize, cols: usize, obstacles: Vec<Cell>, goal: Cell) -> Self {
        Self {
            format: default_format(),
            version: default_version(),
            rows,
            cols,
            obstacles,
            goal,
            start: None,
            delta: default_rate(),
            fn_rate: default_rate(),
            fp_rate: default_rate(),
            move_cost: default_move_cost(),
            crash_cost: default_crash_cost(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.format != GRID_FORMAT || self.version != GRID_FORMAT_VERSION {
            return bad(format!("unsupported grid format {} v{}", self.format, self.version));
        }
        if self.rows == 0 || self.cols == 0 {
            return bad("grid must have at least one row and column".into());
        }
        let inside = |c: &Cell| c.0 < self.rows && c.1 < self.cols;
        if !inside(&self.goal) {
            return bad(format!("goal {:?} outside the grid", self.goal));
        }
        if let Some(c) = self.obstacles.iter().find(|c| !inside(c)) {
            return bad(format!("obstacle {c:?} outside the grid"));
        }
        if self.obstacles.contains(&self.goal) {
            return bad("goal is an obstacle".into());
        }
        if let Some(start) = self.start {
            if !inside(&start) || self.obstacles.contains(&start) || start == self.goal {
                return bad(format!("start {start:?} must be a free, non-goal cell"));
            }
        }
        for (name, rate) in [("delta", self.delta), ("fn_rate", self.fn_rate), ("fp_rate", self.fp_rate)] {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("{name} must lie in [0, 1), got {rate}"));
            }
        }
        for (name, cost) in [("move_cost", self.move_cost), ("crash_cost", self.crash_cost)] {
            if !cost.is_finite() || cost < 0.0 {
                return bad(format!("{name} must be non-negative, got {cost}"));
            }
        }
        if self.start.is_none() && self.free_cells().is_empty() {
            return bad("no free cell to start from".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("grid spec serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Syntax {
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            message: e.message().to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn cell_index(&self, c: Cell) -> usize {
        c.0 * self.cols + c.1
    }

    pub fn cell_of(&self, state: usize) -> Option<Cell> {
        (state < self.rows * self.cols).then(|| (state / self.cols, state % self.cols))
    }

    pub fn crashed_state(&self) -> usize {
        self.rows * self.cols
    }

    pub fn done_state(&self) -> usize {
        self.rows * self.cols + 1
    }

    /// In-grid cells reachable by one king move, in [`MOVES`] order.
    pub fn neighbors(&self, c: Cell) -> Vec<Cell> {
        MOVES.iter().filter_map(|&(_, dr, dc)| self.offset(c, dr, dc)).collect()
    }

    fn offset(&self, c: Cell, dr: i64, dc: i64) -> Option<Cell> {
        let r = c.0 as i64 + dr;
        let col = c.1 as i64 + dc;
        (r >= 0 && col >= 0 && (r as usize) < self.rows && (col as usize) < self.cols)
            .then(|| (r as usize, col as usize))
    }

    /// Free cells (neither obstacle nor goal), row-major.
    pub fn free_cells(&self) -> Vec<Cell> {
        let blocked: BTreeSet<Cell> = self.obstacles.iter().copied().chain([self.goal]).collect();
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .filter(|c| !blocked.contains(c))
            .collect()
    }
}

/// Builds the navigation POMDP for a grid-world spec.
pub fn make_gridworld(spec: &GridWorldSpec) -> Result<Pomdp> {
    make_gridworld_with_discount(spec, 0.95)
}

pub fn make_gridworld_with_discount(spec: &GridWorldSpec, discount: f64) -> Result<Pomdp> {
    spec.validate()?;
    let cells = spec.rows * spec.cols;
    let (crashed, done) = (spec.crashed_state(), spec.done_state());
    let mut states: Vec<String> = (0..cells).map(|i| format!("r{}c{}", i / spec.cols, i % spec.cols)).collect();
    states.push(CRASHED.to_string());
    states.push(DONE.to_string());
    let actions = MOVES.iter().map(|m| m.0.to_string()).collect();
    let observations = vec!["clear".to_string(), "obstacle".to_string()];
    let mut m = Pomdp::new(states, actions, observations, discount);

    let obstacles: BTreeSet<Cell> = spec.obstacles.iter().copied().collect();
    let landing = |c: Cell| -> usize {
        if obstacles.contains(&c) {
            crashed
        } else if c == spec.goal {
            done
        } else {
            spec.cell_index(c)
        }
    };

    for idx in 0..cells {
        let cell = spec.cell_of(idx).unwrap();
        let neighbors = spec.neighbors(cell);
        let near_obstacle = neighbors.iter().any(|n| obstacles.contains(n));
        let p_alarm = if near_obstacle { 1.0 - spec.fn_rate } else { spec.fp_rate };
        m.set_observation(idx, 0, 1.0 - p_alarm);
        m.set_observation(idx, 1, p_alarm);

        if obstacles.contains(&cell) || cell == spec.goal {
            let sink = if cell == spec.goal { done } else { crashed };
            for a in 0..MOVES.len() {
                m.set_transition(idx, a, sink, 1.0);
                m.set_cost(idx, a, if sink == crashed { spec.crash_cost } else { 0.0 });
            }
            continue;
        }

        for (a, &(_, dr, dc)) in MOVES.iter().enumerate() {
            let target = spec.offset(cell, dr, dc).unwrap_or(cell);
            let mut row = vec![0.0; cells + 2];
            row[landing(target)] += 1.0 - spec.delta;
            let slip = spec.delta / neighbors.len() as f64;
            for &n in &neighbors {
                row[landing(n)] += slip;
            }
            for (next, p) in row.iter().enumerate() {
                if *p != 0.0 {
                    m.set_transition(idx, a, next, *p);
                }
            }
            m.set_cost(idx, a, spec.move_cost + spec.crash_cost * row[crashed]);
        }
    }
    for sink in [crashed, done] {
        for a in 0..MOVES.len() {
            m.set_transition(sink, a, sink, 1.0);
            m.set_cost(sink, a, 0.0);
        }
        m.set_observation(sink, 0, 1.0);
    }

    let mut initial = vec![0.0; cells + 2];
    match spec.start {
        Some(start) => initial[spec.cell_index(start)] = 1.0,
        None => {
            let free = spec.free_cells();
            for c in &free {
                initial[spec.cell_index(*c)] = 1.0 / free.len() as f64;
            }
        }
    }
    m.set_initial(initial);
    Ok(m)
}

/// Moves each obstacle, then the goal, to a uniformly random in-grid
/// neighbor with probability `p`. A move that lands on another obstacle, the
/// goal or the start is redrawn up to eight times and otherwise abandoned.
pub fn perturb_scenario(spec: &GridWorldSpec, p: f64, seed: u64) -> GridWorldSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perturb_with(spec, p, &mut rng)
}

pub(crate) fn perturb_with(spec: &GridWorldSpec, p: f64, rng: &mut ChaCha8Rng) -> GridWorldSpec {
    let mut out = spec.clone();
    let n = out.obstacles.len();
    for item in 0..=n {
        let moves = rng.random_bool(p.clamp(0.0, 1.0));
        if !moves {
            continue;
        }
        let current = if item < n { out.obstacles[item] } else { out.goal };
        let neighbors = out.neighbors(current);
        if neighbors.is_empty() {
            continue;
        }
        for _ in 0..8 {
            let candidate = neighbors[rng.random_range(0..neighbors.len())];
            let clash = out.start == Some(candidate)
                || if item < n {
                    candidate == out.goal
                        || out.obstacles.iter().enumerate().any(|(j, &o)| j != item && o == candidate)
                } else {
                    out.obstacles.contains(&candidate)
                };
            if !clash {
                if item < n {
                    out.obstacles[item] = candidate;
                } else {
                    out.goal = candidate;
                }
                break;
            }
        }
    }
    out
}

/// Places `count` obstacles by seeded rejection sampling, avoiding the goal and start.
pub fn random_obstacles(
    rows: usize,
    cols: usize,
    count: usize,
    goal: Cell,
    start: Option<Cell>,
    seed: u64,
) -> Result<Vec<Cell>> {
    // The goal plus one start cell must stay free.
    let reserved = if start == Some(goal) { 1 } else { 2 };
    let capacity = (rows * cols).saturating_sub(reserved);
    if count > capacity {
        return Err(Error::Infeasible(format!(
            "{count} obstacles do not fit in a {rows}x{cols} grid with {capacity} free cells"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed: Vec<Cell> = Vec::with_capacity(count);
    while placed.len() < count {
        let c = (rng.random_range(0..rows), rng.random_range(0..cols));
        if c != goal && Some(c) != start && !placed.contains(&c) {
            placed.push(c);
        }
    }
    Ok(placed)
}
