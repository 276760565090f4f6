//! Exact shortest paths, next-step ground truth and a brute-force oracle.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::annotate_turnpoints;
use crate::maze::{Coord, Direction, Maze, Trajectory};

/// Largest `max_len` accepted by [`enumerate_paths`].
pub const ENUMERATION_MAX_LEN: usize = 20;
/// Largest maze area accepted by [`enumerate_paths`].
pub const ENUMERATION_MAX_AREA: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("destination is not reachable from the start")]
    Unsolvable,
    #[error("prefix cannot be extended to any shortest path")]
    OffOptimalPrefix,
    #[error("instance too large for brute force (max_len {max_len}, area {area})")]
    GuardExceeded { max_len: usize, area: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSolution {
    pub path: Trajectory,
    pub length: usize,
    pub is_unique: bool,
}

/// BFS distances from `from` over passable cells, row-major.
pub fn distance_field(maze: &Maze, from: Coord) -> Vec<Option<usize>> {
    let mut dist = vec![None; maze.area()];
    if !maze.is_passable(from) {
        return dist;
    }
    let mut queue = VecDeque::new();
    dist[maze.index(from)] = Some(0);
    queue.push_back(from);
    while let Some(c) = queue.pop_front() {
        let d = dist[maze.index(c)].unwrap_or(0);
        for (_, n) in maze.open_neighbors(c) {
            let i = maze.index(n);
            if dist[i].is_none() {
                dist[i] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Shortest start-to-destination trajectory.
///
/// Among equal-length paths the canonical one takes, at every cell, the
/// first direction in `up, down, left, right` order that stays optimal.
pub fn shortest_path(maze: &Maze) -> Result<PathSolution, SolveError> {
    let to_dest = distance_field(maze, maze.destination());
    let length = to_dest[maze.index(maze.start())].ok_or(SolveError::Unsolvable)?;

    let mut path = Trajectory::default();
    let mut at = maze.start();
    while at != maze.destination() {
        let here = to_dest[maze.index(at)].unwrap_or(0);
        let (d, n) = maze
            .open_neighbors(at)
            .find(|(_, n)| to_dest[maze.index(*n)] == Some(here - 1))
            .expect("a BFS layer always has a predecessor");
        path.push(d);
        at = n;
    }

    // Count shortest paths from each cell to the destination, saturating at 2.
    let mut cells: Vec<Coord> = maze
        .passable_cells()
        .filter(|c| to_dest[maze.index(*c)].is_some())
        .collect();
    cells.sort_by_key(|c| to_dest[maze.index(*c)]);
    let mut ways = vec![0u8; maze.area()];
    for c in cells {
        let here = to_dest[maze.index(c)].unwrap_or(0);
        ways[maze.index(c)] = if here == 0 {
            1
        } else {
            maze.open_neighbors(c)
                .filter(|(_, n)| to_dest[maze.index(*n)] == Some(here - 1))
                .map(|(_, n)| ways[maze.index(n)])
                .fold(0u8, |acc, w| acc.saturating_add(w).min(2))
        };
    }

    Ok(PathSolution {
        length,
        path,
        is_unique: ways[maze.index(maze.start())] == 1,
    })
}

/// Every simple start-to-destination path of at most `max_len` moves, by
/// exhaustive depth-first search in `up, down, left, right` order.
///
/// Branches are cut once the remaining Manhattan distance cannot fit in
/// the length budget; this never removes a qualifying path.
pub fn enumerate_paths(maze: &Maze, max_len: usize) -> Result<Vec<Trajectory>, SolveError> {
    if max_len > ENUMERATION_MAX_LEN || maze.area() > ENUMERATION_MAX_AREA {
        return Err(SolveError::GuardExceeded {
            max_len,
            area: maze.area(),
        });
    }
    let mut out = Vec::new();
    let mut moves = Vec::new();
    let visited = 1u64 << maze.index(maze.start());
    dfs(maze, maze.start(), visited, max_len, &mut moves, &mut out);
    Ok(out)
}

fn dfs(
    maze: &Maze,
    at: Coord,
    visited: u64,
    max_len: usize,
    moves: &mut Vec<Direction>,
    out: &mut Vec<Trajectory>,
) {
    if at == maze.destination() {
        out.push(Trajectory::new(moves.clone()));
        return;
    }
    if moves.len() + at.manhattan(maze.destination()) > max_len {
        return;
    }
    for d in Direction::ALL {
        let Ok(n) = maze.apply_move(at, d) else {
            continue;
        };
        let bit = 1u64 << maze.index(n);
        if visited & bit != 0 {
            continue;
        }
        moves.push(d);
        dfs(maze, n, visited | bit, max_len, moves, out);
        moves.pop();
    }
}

/// Directions that extend `prefix` along some shortest path.
///
/// Returns an empty set when the prefix already ends on the destination.
pub fn optimal_next(maze: &Maze, prefix: &Trajectory) -> Result<BTreeSet<Direction>, SolveError> {
    let to_dest = distance_field(maze, maze.destination());
    let total = to_dest[maze.index(maze.start())].ok_or(SolveError::Unsolvable)?;
    let trace = maze.execute(prefix);
    if trace.first_invalid.is_some() || prefix.len() > total {
        return Err(SolveError::OffOptimalPrefix);
    }
    for (i, p) in trace.positions.iter().enumerate() {
        if to_dest[maze.index(*p)] != Some(total - i) {
            return Err(SolveError::OffOptimalPrefix);
        }
    }
    let at = trace.last_position();
    let here = total - prefix.len();
    if here == 0 {
        return Ok(BTreeSet::new());
    }
    Ok(maze
        .open_neighbors(at)
        .filter(|(_, n)| to_dest[maze.index(*n)] == Some(here - 1))
        .map(|(d, _)| d)
        .collect())
}

/// Number of direction changes between consecutive moves.
pub fn count_turns(traj: &[Direction]) -> usize {
    traj.windows(2)
        .filter(|w| crate::maze::is_turn(w[0], w[1]))
        .count()
}

impl Maze {
    /// Computes the canonical optimal path and turn-point annotation.
    pub fn solved(mut self) -> Result<Maze, SolveError> {
        let sol = shortest_path(&self)?;
        self.set_optimal_path(sol.path);
        let tps = annotate_turnpoints(&self);
        self.set_turn_points(tps);
        Ok(self)
    }
}
