//! Puddle world with n-step plans as actions.
//!
//! The agent starts on the start cell and may only move down or right. An
//! action is a whole plan of `n` base moves, embedded as the concatenation of
//! per-move one-hot pairs (down = `(1, 0)`, right = `(0, 1)`), so a world with
//! plan length `n` has `2^n` actions. Action id bits read the plan from its
//! first move (most significant) to its last, with right = 1.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use super::{EnvStep, Environment};
use crate::index::{ActionId, ActionSet};
use crate::rng;
use crate::{Error, Result};

pub const EMPTY_REWARD: f64 = -1.0;
pub const PUDDLE_REWARD: f64 = -3.0;
pub const GOAL_REWARD: f64 = 250.0;
pub const DEFAULT_WINDOW_RADIUS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Empty,
    Puddle,
    Start,
    Goal,
}

impl Cell {
    fn channel(self) -> usize {
        match self {
            Cell::Empty => 0,
            Cell::Puddle => 1,
            Cell::Start => 2,
            Cell::Goal => 3,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Cell::Empty => '.',
            Cell::Puddle => 'P',
            Cell::Start => 'S',
            Cell::Goal => 'G',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            '.' => Some(Cell::Empty),
            'P' => Some(Cell::Puddle),
            'S' => Some(Cell::Start),
            'G' => Some(Cell::Goal),
            _ => None,
        }
    }
}

/// Reward and termination for entering a cell. The start cell costs the same
/// as an empty one.
pub fn puddle_reward(cell: Cell) -> (f64, bool) {
    match cell {
        Cell::Empty | Cell::Start => (EMPTY_REWARD, false),
        Cell::Puddle => (PUDDLE_REWARD, false),
        Cell::Goal => (GOAL_REWARD, true),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Move {
    Down,
    Right,
}

pub fn encode_plan(steps: &[Move], n: usize) -> Result<Vec<f64>> {
    Error::check_dim("plan length", n, steps.len())?;
    Ok(steps
        .iter()
        .flat_map(|m| match m {
            Move::Down => [1.0, 0.0],
            Move::Right => [0.0, 1.0],
        })
        .collect())
}

pub fn plan_id(steps: &[Move]) -> ActionId {
    let bits = steps
        .iter()
        .fold(0u32, |acc, m| (acc << 1) | u32::from(*m == Move::Right));
    ActionId(bits)
}

pub fn decode_plan(id: ActionId, n: usize) -> Vec<Move> {
    (0..n)
        .map(|i| {
            if (id.0 >> (n - 1 - i)) & 1 == 1 {
                Move::Right
            } else {
                Move::Down
            }
        })
        .collect()
}

/// All `2^n` plans, row `i` being the encoding of `decode_plan(i, n)`.
pub fn plan_action_set(n: usize) -> Result<ActionSet> {
    if n == 0 || n > 24 {
        return Err(Error::invalid(format!("plan length must be in 1..=24, got {n}")));
    }
    let count = 1usize << n;
    let mut data = Vec::with_capacity(count * 2 * n);
    for id in 0..count {
        for i in (0..n).rev() {
            if (id >> i) & 1 == 1 {
                data.extend([0.0, 1.0]);
            } else {
                data.extend([1.0, 0.0]);
            }
        }
    }
    ActionSet::from_flat(2 * n, data)
}

/// Static grid layout with one start cell and the goal in the bottom-right corner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PuddleMap {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    start: (usize, usize),
}

impl PuddleMap {
    pub fn new(rows: usize, cols: usize, cells: Vec<Cell>) -> Result<Self> {
        if rows == 0 || cols == 0 || cells.len() != rows * cols {
            return Err(Error::Format("grid size does not match cell count".into()));
        }
        let starts: Vec<usize> = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Cell::Start)
            .map(|(i, _)| i)
            .collect();
        if starts.len() != 1 {
            return Err(Error::Format(format!("expected one start cell, found {}", starts.len())));
        }
        let goals = cells.iter().filter(|c| **c == Cell::Goal).count();
        if goals != 1 || cells[rows * cols - 1] != Cell::Goal {
            return Err(Error::Format("the single goal must be in the bottom-right corner".into()));
        }
        Ok(PuddleMap {
            rows,
            cols,
            start: (starts[0] / cols, starts[0] % cols),
            cells,
        })
    }

    /// Puddle-free grid, start top-left.
    pub fn open(rows: usize, cols: usize) -> Result<Self> {
        let mut cells = vec![Cell::Empty; rows * cols];
        cells[0] = Cell::Start;
        if let Some(last) = cells.last_mut() {
            *last = Cell::Goal;
        }
        Self::new(rows, cols, cells)
    }

    /// Rectangular puddles placed from a seed, never covering start or goal.
    pub fn generate(size: usize, seed: u64) -> Result<Self> {
        if size < 2 {
            return Err(Error::invalid("puddle map needs at least 2×2 cells"));
        }
        let mut cells = vec![Cell::Empty; size * size];
        let mut r = rng::stream(seed, 0x9u64);
        let count = (size / 2).max(1);
        let max_extent = (size / 4).max(1);
        for _ in 0..count {
            let h = r.random_range(1..=max_extent);
            let w = r.random_range(1..=max_extent);
            let top = r.random_range(0..size);
            let left = r.random_range(0..size);
            for row in top..(top + h).min(size) {
                for col in left..(left + w).min(size) {
                    cells[row * size + col] = Cell::Puddle;
                }
            }
        }
        cells[0] = Cell::Start;
        cells[size * size - 1] = Cell::Goal;
        Self::new(size, size, cells)
    }

    /// The fixed map shipped for a grid size; other sizes are generated with seed 0.
    pub fn benchmark(size: usize) -> Result<Self> {
        match size {
            20 => Self::parse_ascii(include_str!("../../data/puddle_20.txt")),
            50 => Self::parse_ascii(include_str!("../../data/puddle_50.txt")),
            _ => Self::generate(size, 0),
        }
    }

    pub fn parse_ascii(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        let rows = lines.len();
        let cols = lines.first().map_or(0, |l| l.chars().count());
        let mut cells = Vec::with_capacity(rows * cols);
        for (i, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(Error::Format(format!("row {i} has a different width")));
            }
            for c in line.chars() {
                cells.push(
                    Cell::from_char(c)
                        .ok_or_else(|| Error::Format(format!("unknown cell character {c:?}")))?,
                );
            }
        }
        Self::new(rows, cols, cells)
    }

    pub fn to_ascii(&self) -> String {
        self.to_string()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    /// Best undiscounted return from the start cell, by dynamic programming
    /// over the down/right lattice.
    pub fn optimal_return(&self) -> f64 {
        self.value_table()[self.start.0 * self.cols + self.start.1]
    }

    /// `value[r][c]` is the best return obtainable from standing on `(r, c)`.
    pub fn value_table(&self) -> Vec<f64> {
        let (rows, cols) = (self.rows, self.cols);
        let mut value = vec![f64::NEG_INFINITY; rows * cols];
        for r in (0..rows).rev() {
            for c in (0..cols).rev() {
                if self.cell(r, c) == Cell::Goal {
                    value[r * cols + c] = 0.0;
                    continue;
                }
                let mut best = f64::NEG_INFINITY;
                for (nr, nc) in [(r + 1, c), (r, c + 1)] {
                    if nr < rows && nc < cols {
                        let (rew, _) = puddle_reward(self.cell(nr, nc));
                        best = best.max(rew + value[nr * cols + nc]);
                    }
                }
                value[r * cols + c] = best;
            }
        }
        value
    }
}

impl fmt::Display for PuddleMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.cells.chunks(self.cols) {
            let line: String = row.iter().map(|c| c.to_char()).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PuddleWorld {
    map: Arc<PuddleMap>,
    plan_len: usize,
    window: usize,
    max_steps: usize,
    actions: Arc<ActionSet>,
    pos: (usize, usize),
    steps: usize,
    done: bool,
}

impl PuddleWorld {
    pub fn new(map: PuddleMap, plan_len: usize) -> Result<Self> {
        let actions = Arc::new(plan_action_set(plan_len)?);
        let moves = 4 * (map.rows + map.cols);
        let max_steps = moves.div_ceil(plan_len);
        let pos = map.start;
        Ok(PuddleWorld {
            map: Arc::new(map),
            plan_len,
            window: DEFAULT_WINDOW_RADIUS,
            max_steps,
            actions,
            pos,
            steps: 0,
            done: false,
        })
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps.max(1);
        self
    }

    pub fn with_window_radius(mut self, radius: usize) -> Self {
        self.window = radius;
        self
    }

    pub fn map(&self) -> &PuddleMap {
        &self.map
    }

    pub fn plan_len(&self) -> usize {
        self.plan_len
    }

    pub fn position(&self) -> (usize, usize) {
        self.pos
    }

    /// One-hot cell types over the `(2w+1)²` window around the agent; cells
    /// off the grid are all-zero.
    pub fn observe(&self) -> Vec<f64> {
        let side = 2 * self.window + 1;
        let mut obs = vec![0.0; 4 * side * side];
        let (r0, c0) = (self.pos.0 as isize, self.pos.1 as isize);
        let w = self.window as isize;
        let mut slot = 0;
        for dr in -w..=w {
            for dc in -w..=w {
                let (r, c) = (r0 + dr, c0 + dc);
                if r >= 0 && c >= 0 && (r as usize) < self.map.rows && (c as usize) < self.map.cols {
                    obs[slot * 4 + self.map.cell(r as usize, c as usize).channel()] = 1.0;
                }
                slot += 1;
            }
        }
        obs
    }

    /// Executes the plan move by move, stopping early on the goal. A move off
    /// the grid leaves the agent in place and costs the current cell.
    pub fn step_plan(&mut self, plan: ActionId) -> Result<EnvStep> {
        if self.done {
            return Err(Error::EpisodeOver);
        }
        if plan.index() >= self.actions.len() {
            return Err(Error::invalid(format!("plan id {plan} out of range")));
        }
        let mut total = 0.0;
        let mut terminal = false;
        for mv in decode_plan(plan, self.plan_len) {
            let (r, c) = self.pos;
            let next = match mv {
                Move::Down if r + 1 < self.map.rows => (r + 1, c),
                Move::Right if c + 1 < self.map.cols => (r, c + 1),
                _ => (r, c),
            };
            self.pos = next;
            let (reward, term) = puddle_reward(self.map.cell(next.0, next.1));
            total += reward;
            if term {
                terminal = true;
                break;
            }
        }
        self.steps += 1;
        let truncated = !terminal && self.steps >= self.max_steps;
        self.done = terminal || truncated;
        Ok(EnvStep {
            observation: self.observe(),
            reward: total,
            terminal,
            truncated,
        })
    }
}

impl Environment for PuddleWorld {
    fn observation_dim(&self) -> usize {
        let side = 2 * self.window + 1;
        4 * side * side
    }

    fn action_set(&self) -> &Arc<ActionSet> {
        &self.actions
    }

    fn reset(&mut self) -> Vec<f64> {
        self.pos = self.map.start;
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: ActionId) -> Result<EnvStep> {
        self.step_plan(action)
    }

    fn fork(&self, _seed: u64) -> Self {
        let mut env = self.clone();
        env.reset();
        env
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rewards_per_cell() {
        assert_eq!(puddle_reward(Cell::Empty), (-1.0, false));
        assert_eq!(puddle_reward(Cell::Puddle), (-3.0, false));
        assert_eq!(puddle_reward(Cell::Goal), (250.0, true));
        assert_eq!(puddle_reward(Cell::Start), (-1.0, false));
    }

    #[test]
    fn single_step_encoding() {
        assert_eq!(encode_plan(&[Move::Down], 1).unwrap(), vec![1.0, 0.0]);
        assert_eq!(encode_plan(&[Move::Right], 1).unwrap(), vec![0.0, 1.0]);
        assert!(encode_plan(&[Move::Right], 2).is_err());
    }

    #[test]
    fn plan_bijection_n8() {
        let set = plan_action_set(8).unwrap();
        assert_eq!(set.len(), 256);
        assert_eq!(set.dim(), 16);
        for id in set.ids() {
            let plan = decode_plan(id, 8);
            assert_eq!(plan_id(&plan), id);
            assert_eq!(encode_plan(&plan, 8).unwrap(), set.get(id));
        }
    }

    #[test]
    fn twenty_step_plans_have_a_million_actions() {
        assert_eq!(1usize << 20, 1_048_576);
        assert_eq!(plan_id(&[Move::Right; 20]), ActionId((1 << 20) - 1));
    }

    #[test]
    fn tiny_grid_down_then_right() {
        let map = PuddleMap::open(2, 2).unwrap();
        let mut env = PuddleWorld::new(map, 2).unwrap();
        env.reset();
        let s = env.step(plan_id(&[Move::Down, Move::Right])).unwrap();
        assert_eq!(s.reward, 249.0);
        assert!(s.terminal);
        assert!(matches!(env.step(ActionId(0)), Err(Error::EpisodeOver)));
    }

    #[test]
    fn all_down_on_open_grid() {
        let mut env = PuddleWorld::new(PuddleMap::open(50, 50).unwrap(), 20).unwrap();
        env.reset();
        let s = env.step(plan_id(&[Move::Down; 20])).unwrap();
        assert_eq!(s.reward, -20.0);
        assert!(!s.terminal && !s.truncated);
        assert_eq!(env.position(), (20, 0));
    }

    #[test]
    fn edge_moves_cost_current_cell() {
        let mut cells = vec![Cell::Empty; 4];
        cells[0] = Cell::Start;
        cells[1] = Cell::Puddle;
        cells[3] = Cell::Goal;
        let map = PuddleMap::new(2, 2, cells).unwrap();
        let mut env = PuddleWorld::new(map, 3).unwrap();
        env.reset();
        // right into the puddle (-3), right off the edge (-3 again), down to goal
        let s = env.step(plan_id(&[Move::Right, Move::Right, Move::Down])).unwrap();
        assert_eq!(s.reward, -3.0 - 3.0 + 250.0);
    }

    #[test]
    fn open_fifty_grid_optimum() {
        // 97 intermediate cells at -1 each, then the goal
        assert_eq!(PuddleMap::open(50, 50).unwrap().optimal_return(), 153.0);
    }

    #[test]
    fn dp_matches_path_enumeration() {
        // brute force over every monotone path on small generated maps
        fn best(map: &PuddleMap, r: usize, c: usize) -> f64 {
            if map.cell(r, c) == Cell::Goal {
                return 0.0;
            }
            let mut b = f64::NEG_INFINITY;
            if r + 1 < map.rows() {
                b = b.max(puddle_reward(map.cell(r + 1, c)).0 + best(map, r + 1, c));
            }
            if c + 1 < map.cols() {
                b = b.max(puddle_reward(map.cell(r, c + 1)).0 + best(map, r, c + 1));
            }
            b
        }
        for seed in 0..5 {
            let map = PuddleMap::generate(7, seed).unwrap();
            assert_eq!(map.optimal_return(), best(&map, 0, 0));
        }
    }

    #[test]
    fn ascii_roundtrip_and_validation() {
        let map = PuddleMap::generate(12, 3).unwrap();
        assert_eq!(PuddleMap::parse_ascii(&map.to_ascii()).unwrap(), map);
        assert!(PuddleMap::parse_ascii("S.\n.G\n.G\n").is_err());
        assert!(PuddleMap::parse_ascii("SG\n..\n").is_err());
        assert!(PuddleMap::parse_ascii("S.\n.X\n").is_err());
    }

    #[test]
    fn benchmark_maps_are_valid() {
        for size in [20, 50] {
            let map = PuddleMap::benchmark(size).unwrap();
            assert_eq!((map.rows(), map.cols()), (size, size));
            assert_eq!(map.start(), (0, 0));
            assert!(map.optimal_return() > 0.0);
        }
    }

    #[test]
    fn observation_window_layout() {
        let env = PuddleWorld::new(PuddleMap::open(5, 5).unwrap(), 1).unwrap();
        let obs = env.observe();
        assert_eq!(obs.len(), 100);
        // center slot 12 holds the start cell
        assert_eq!(&obs[48..52], &[0.0, 0.0, 1.0, 0.0]);
        // top-left slot is off the grid
        assert!(obs[0..4].iter().all(|&v| v == 0.0));
        assert_eq!(obs.iter().sum::<f64>(), 9.0);
    }
}
