//! Grid-world representation, the move transition and trajectory execution.
//!
//! Coordinates are `(row, col)` with row 0 at the top of the rendered map:
//! `up` decreases the row, `down` increases it, `left` and `right` move
//! along the column axis.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the four cardinal moves. There is no diagonal.
///
/// The derived ordering (`up < down < left < right`) is the tie-break order
/// used by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    /// Row and column delta.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("not a direction: {0:?}")]
pub struct ParseDirectionError(pub String);

impl FromStr for Direction {
    type Err = ParseDirectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "up" => Ok(Direction::Up),
            "down" => Ok(Direction::Down),
            "left" => Ok(Direction::Left),
            "right" => Ok(Direction::Right),
            _ => Err(ParseDirectionError(s.trim().to_string())),
        }
    }
}

/// Grid cell index. Serializes as `[row, col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Coord {
    pub row: usize,
    pub col: usize,
}

impl Coord {
    pub const fn new(row: usize, col: usize) -> Self {
        Coord { row, col }
    }

    pub fn manhattan(self, other: Coord) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    /// Direction of the orthogonal step from `self` to `other`, if they are adjacent.
    pub fn direction_to(self, other: Coord) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| {
            let (dr, dc) = d.delta();
            self.row as isize + dr == other.row as isize
                && self.col as isize + dc == other.col as isize
        })
    }
}

impl From<[usize; 2]> for Coord {
    fn from([row, col]: [usize; 2]) -> Self {
        Coord { row, col }
    }
}

impl From<Coord> for [usize; 2] {
    fn from(c: Coord) -> Self {
        [c.row, c.col]
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Ordered list of moves. Ground truths, model predictions and SDPO
/// segments all use this type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory(Vec<Direction>);

impl Trajectory {
    pub fn new(moves: Vec<Direction>) -> Self {
        Trajectory(moves)
    }

    pub fn moves(&self) -> &[Direction] {
        &self.0
    }

    pub fn push(&mut self, d: Direction) {
        self.0.push(d);
    }

    pub fn into_inner(self) -> Vec<Direction> {
        self.0
    }

    /// First `k` moves (clipped).
    pub fn prefix(&self, k: usize) -> Trajectory {
        Trajectory(self.0[..k.min(self.0.len())].to_vec())
    }

    /// Moves in `[from, from + len)`, clipped at the end of the sequence.
    pub fn window(&self, from: usize, len: usize) -> Trajectory {
        let start = from.min(self.0.len());
        let end = from.saturating_add(len).min(self.0.len());
        Trajectory(self.0[start..end].to_vec())
    }

    pub fn is_prefix_of(&self, other: &Trajectory) -> bool {
        other.0.starts_with(&self.0)
    }
}

impl Deref for Trajectory {
    type Target = [Direction];

    fn deref(&self) -> &[Direction] {
        &self.0
    }
}

impl From<Vec<Direction>> for Trajectory {
    fn from(v: Vec<Direction>) -> Self {
        Trajectory(v)
    }
}

impl FromIterator<Direction> for Trajectory {
    fn from_iter<I: IntoIterator<Item = Direction>>(iter: I) -> Self {
        Trajectory(iter.into_iter().collect())
    }
}

/// Renders as the answer-list format, e.g. `["down", "right"]`.
impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "\"{d}\"")?;
        }
        f.write_str("]")
    }
}

/// Why a move could not be applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MoveError {
    #[error("move leaves the grid at ({row},{col})")]
    BoundaryExit { row: isize, col: isize },
    #[error("move collides with obstacle at {target}")]
    ObstacleCollision { target: Coord },
    #[error("trajectory exceeds the length cap of {cap} moves")]
    LengthCap { cap: usize },
}

/// Result of running a trajectory from the maze start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    /// Visited cells, starting with the maze start; one entry per executed move plus one.
    pub positions: Vec<Coord>,
    /// Index of the first move that could not be applied.
    pub first_invalid: Option<usize>,
    pub failure: Option<MoveError>,
    pub reached_destination: bool,
}

impl ExecutionTrace {
    /// Number of moves executed before halting.
    pub fn valid_steps(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn last_position(&self) -> Coord {
        *self
            .positions
            .last()
            .expect("trace always holds the start cell")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MazeError {
    #[error("maze must have positive width and height")]
    ZeroSize,
    #[error("{what} {at} is outside the {width}x{height} grid")]
    OutOfBounds {
        what: &'static str,
        at: Coord,
        width: usize,
        height: usize,
    },
    #[error("{what} {at} is an obstacle")]
    OnObstacle { what: &'static str, at: Coord },
    #[error("start and destination coincide")]
    StartIsDestination,
    #[error("destination is listed as a misleading destination")]
    DestinationMisleading,
    #[error("optimal path does not reach the destination: {0}")]
    PathInvalid(String),
    #[error("turn point {0} is neither on the optimal path nor a junction")]
    TurnPointOffPath(Coord),
    #[error("malformed map: {0}")]
    Malformed(String),
}

/// A grid maze with its annotations.
///
/// Obstacles are kept as a dense row-major mask. The JSON form is
/// [`MazeRecord`]; deserialization re-checks every invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MazeRecord", into = "MazeRecord")]
pub struct Maze {
    width: usize,
    height: usize,
    blocked: Vec<bool>,
    start: Coord,
    destination: Coord,
    misleading: Vec<Coord>,
    turn_points: Vec<Coord>,
    optimal_path: Trajectory,
    tier: u32,
    seed: u64,
}

/// Wire form of a maze, one JSON object per JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MazeRecord {
    pub width: usize,
    pub height: usize,
    pub start: Coord,
    pub destination: Coord,
    #[serde(default)]
    pub misleading: Vec<Coord>,
    pub obstacles: Vec<Coord>,
    #[serde(default)]
    pub turn_points: Vec<Coord>,
    pub optimal_path: Trajectory,
    pub tier: u32,
    pub seed: u64,
}

impl From<Maze> for MazeRecord {
    fn from(m: Maze) -> Self {
        let obstacles = m.obstacles().collect();
        MazeRecord {
            width: m.width,
            height: m.height,
            start: m.start,
            destination: m.destination,
            misleading: m.misleading,
            obstacles,
            turn_points: m.turn_points,
            optimal_path: m.optimal_path,
            tier: m.tier,
            seed: m.seed,
        }
    }
}

impl TryFrom<MazeRecord> for Maze {
    type Error = MazeError;

    fn try_from(r: MazeRecord) -> Result<Self, Self::Error> {
        let mut maze = Maze::layout(r.width, r.height, r.obstacles, r.start, r.destination)?;
        maze.misleading = r.misleading;
        maze.turn_points = r.turn_points;
        maze.optimal_path = r.optimal_path;
        maze.tier = r.tier;
        maze.seed = r.seed;
        maze.validate()?;
        Ok(maze)
    }
}

impl Maze {
    /// Bare layout: geometry, start and destination only. The optimal path
    /// and turn points are empty until the maze is solved.
    pub fn layout(
        width: usize,
        height: usize,
        obstacles: impl IntoIterator<Item = Coord>,
        start: Coord,
        destination: Coord,
    ) -> Result<Maze, MazeError> {
        if width == 0 || height == 0 {
            return Err(MazeError::ZeroSize);
        }
        let mut maze = Maze {
            width,
            height,
            blocked: vec![false; width * height],
            start,
            destination,
            misleading: Vec::new(),
            turn_points: Vec::new(),
            optimal_path: Trajectory::default(),
            tier: 0,
            seed: 0,
        };
        for c in obstacles {
            maze.check_in_bounds("obstacle", c)?;
            let i = maze.index(c);
            maze.blocked[i] = true;
        }
        maze.check_cell("start", start)?;
        maze.check_cell("destination", destination)?;
        if start == destination {
            return Err(MazeError::StartIsDestination);
        }
        Ok(maze)
    }

    /// Builds a layout from a compact character map, one row per line:
    /// `S` start, `D` destination, `M` misleading destination, `#` obstacle,
    /// anything else passable. Spaces are ignored.
    pub fn from_ascii(text: &str) -> Result<Maze, MazeError> {
        let rows: Vec<Vec<char>> = text
            .lines()
            .map(|l| l.chars().filter(|c| !c.is_whitespace()).collect::<Vec<_>>())
            .filter(|r| !r.is_empty())
            .collect();
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(MazeError::Malformed("ragged rows".into()));
        }
        let (mut start, mut dest) = (None, None);
        let mut obstacles = Vec::new();
        let mut misleading = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            for (c, ch) in row.iter().enumerate() {
                let at = Coord::new(r, c);
                match ch {
                    'S' => start = Some(at),
                    'D' => dest = Some(at),
                    'M' => misleading.push(at),
                    '#' => obstacles.push(at),
                    _ => {}
                }
            }
        }
        let start = start.ok_or_else(|| MazeError::Malformed("no start cell".into()))?;
        let dest = dest.ok_or_else(|| MazeError::Malformed("no destination cell".into()))?;
        let mut maze = Maze::layout(width, height, obstacles, start, dest)?;
        maze.misleading = misleading;
        Ok(maze)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn start(&self) -> Coord {
        self.start
    }

    pub fn destination(&self) -> Coord {
        self.destination
    }

    pub fn misleading(&self) -> &[Coord] {
        &self.misleading
    }

    pub fn turn_points(&self) -> &[Coord] {
        &self.turn_points
    }

    pub fn optimal_path(&self) -> &Trajectory {
        &self.optimal_path
    }

    pub fn tier(&self) -> u32 {
        self.tier
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stable identifier derived from tier and seed.
    pub fn id(&self) -> String {
        format!("k{}-{:016x}", self.tier, self.seed)
    }

    /// Hard cap on executed trajectory length.
    pub fn trajectory_cap(&self) -> usize {
        4 * self.width * self.height
    }

    /// Obstacles in row-major order.
    pub fn obstacles(&self) -> impl Iterator<Item = Coord> + '_ {
        self.blocked
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| Coord::new(i / self.width, i % self.width))
    }

    pub fn passable_cells(&self) -> impl Iterator<Item = Coord> + '_ {
        self.blocked
            .iter()
            .enumerate()
            .filter(|(_, b)| !**b)
            .map(|(i, _)| Coord::new(i / self.width, i % self.width))
    }

    pub fn in_bounds(&self, c: Coord) -> bool {
        c.row < self.height && c.col < self.width
    }

    pub fn is_obstacle(&self, c: Coord) -> bool {
        self.in_bounds(c) && self.blocked[self.index(c)]
    }

    pub fn is_passable(&self, c: Coord) -> bool {
        self.in_bounds(c) && !self.blocked[self.index(c)]
    }

    pub(crate) fn index(&self, c: Coord) -> usize {
        c.row * self.width + c.col
    }

    /// Neighbor in `dir` if it is inside the grid, regardless of obstacles.
    pub fn step(&self, at: Coord, dir: Direction) -> Option<Coord> {
        let (dr, dc) = dir.delta();
        let r = at.row as isize + dr;
        let c = at.col as isize + dc;
        if r < 0 || c < 0 || r as usize >= self.height || c as usize >= self.width {
            None
        } else {
            Some(Coord::new(r as usize, c as usize))
        }
    }

    /// Passable orthogonal neighbors in solver order.
    pub fn open_neighbors(&self, at: Coord) -> impl Iterator<Item = (Direction, Coord)> + '_ {
        Direction::ALL.into_iter().filter_map(move |d| {
            self.step(at, d)
                .filter(|n| self.is_passable(*n))
                .map(|n| (d, n))
        })
    }

    pub fn open_degree(&self, at: Coord) -> usize {
        self.open_neighbors(at).count()
    }

    /// A junction is a passable cell with at least three passable neighbors.
    pub fn is_junction(&self, at: Coord) -> bool {
        self.is_passable(at) && self.open_degree(at) >= 3
    }

    /// The transition function: the adjacent cell in `dir`, or why it is unreachable.
    pub fn apply_move(&self, at: Coord, dir: Direction) -> Result<Coord, MoveError> {
        match self.step(at, dir) {
            None => {
                let (dr, dc) = dir.delta();
                Err(MoveError::BoundaryExit {
                    row: at.row as isize + dr,
                    col: at.col as isize + dc,
                })
            }
            Some(n) if self.blocked[self.index(n)] => {
                Err(MoveError::ObstacleCollision { target: n })
            }
            Some(n) => Ok(n),
        }
    }

    /// Runs `traj` from the start, halting at the first invalid move.
    ///
    /// `reached_destination` requires the trajectory to end on the
    /// destination; passing through it earlier does not count.
    pub fn execute(&self, traj: &Trajectory) -> ExecutionTrace {
        let cap = self.trajectory_cap();
        let mut positions = Vec::with_capacity(traj.len().min(cap) + 1);
        positions.push(self.start);
        let mut at = self.start;
        for (i, &d) in traj.iter().enumerate() {
            if i >= cap {
                return ExecutionTrace {
                    positions,
                    first_invalid: Some(i),
                    failure: Some(MoveError::LengthCap { cap }),
                    reached_destination: false,
                };
            }
            match self.apply_move(at, d) {
                Ok(n) => {
                    at = n;
                    positions.push(n);
                }
                Err(e) => {
                    return ExecutionTrace {
                        positions,
                        first_invalid: Some(i),
                        failure: Some(e),
                        reached_destination: false,
                    }
                }
            }
        }
        ExecutionTrace {
            positions,
            first_invalid: None,
            failure: None,
            reached_destination: at == self.destination,
        }
    }

    /// Checks every structural invariant, including that the stored optimal
    /// path executes validly to the destination.
    pub fn validate(&self) -> Result<(), MazeError> {
        if self.width == 0 || self.height == 0 {
            return Err(MazeError::ZeroSize);
        }
        self.check_cell("start", self.start)?;
        self.check_cell("destination", self.destination)?;
        if self.start == self.destination {
            return Err(MazeError::StartIsDestination);
        }
        for &m in &self.misleading {
            self.check_cell("misleading destination", m)?;
        }
        if self.misleading.contains(&self.destination) {
            return Err(MazeError::DestinationMisleading);
        }
        let trace = self.execute(&self.optimal_path);
        if let Some(e) = trace.failure {
            return Err(MazeError::PathInvalid(e.to_string()));
        }
        if !trace.reached_destination {
            return Err(MazeError::PathInvalid(format!(
                "ends at {}",
                trace.last_position()
            )));
        }
        let on_path: BTreeSet<Coord> = trace.positions.iter().copied().collect();
        for &t in &self.turn_points {
            self.check_cell("turn point", t)?;
            if !on_path.contains(&t) && !self.is_junction(t) {
                return Err(MazeError::TurnPointOffPath(t));
            }
        }
        Ok(())
    }

    fn check_in_bounds(&self, what: &'static str, at: Coord) -> Result<(), MazeError> {
        if self.in_bounds(at) {
            Ok(())
        } else {
            Err(MazeError::OutOfBounds {
                what,
                at,
                width: self.width,
                height: self.height,
            })
        }
    }

    fn check_cell(&self, what: &'static str, at: Coord) -> Result<(), MazeError> {
        self.check_in_bounds(what, at)?;
        if self.blocked[self.index(at)] {
            return Err(MazeError::OnObstacle { what, at });
        }
        Ok(())
    }

    pub(crate) fn set_passable(&mut self, at: Coord, passable: bool) {
        let i = self.index(at);
        self.blocked[i] = !passable;
    }

    pub(crate) fn set_start(&mut self, at: Coord) {
        self.start = at;
    }

    pub(crate) fn set_destination(&mut self, at: Coord) {
        self.destination = at;
    }

    pub(crate) fn set_misleading(&mut self, cells: Vec<Coord>) {
        self.misleading = cells;
    }

    pub(crate) fn set_turn_points(&mut self, cells: Vec<Coord>) {
        self.turn_points = cells;
    }

    pub(crate) fn set_optimal_path(&mut self, path: Trajectory) {
        self.optimal_path = path;
    }

    pub fn with_tier(mut self, tier: u32) -> Self {
        self.tier = tier;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// True iff the direction changes between consecutive moves. Reversals count.
pub fn is_turn(prev: Direction, next: Direction) -> bool {
    prev != next
}
