//! Procedural maze generation calibrated by turn frequency.
//!
//! Pipeline per attempt: carve a tree of corridors by randomized
//! depth-first carving, pick a start and a destination whose canonical path
//! has a turn count inside the tier's range, then add dead-end stubs and
//! misleading destinations and annotate turn points. Attempts that find no
//! qualifying destination re-carve, up to the configured budget.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maze::{Coord, Direction, Maze};
use crate::solver::{count_turns, distance_field, shortest_path};

/// Fraction of the grid opened by the carving pass. The remainder leaves
/// room for dead-end injection.
const CARVE_FILL: f64 = 0.45;
/// Longest injected stub, in cells.
const MAX_STUB_LEN: usize = 3;

/// Difficulty subgroup `k >= 1`. Base turn count is `2k - 1` and accepted
/// mazes have between `2k - 1` and `2k + 1` turns on their optimal path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DifficultyTier(u32);

impl DifficultyTier {
    pub const DEFAULT_COUNT: u32 = 6;

    pub fn new(k: u32) -> Result<Self, GenError> {
        if k == 0 {
            return Err(GenError::InvalidConfig("tier index starts at 1".into()));
        }
        Ok(DifficultyTier(k))
    }

    /// Tiers `1..=DEFAULT_COUNT`.
    pub fn defaults() -> impl Iterator<Item = DifficultyTier> {
        (1..=Self::DEFAULT_COUNT).map(DifficultyTier)
    }

    pub fn k(self) -> u32 {
        self.0
    }

    pub fn base_turns(self) -> usize {
        2 * self.0 as usize - 1
    }

    pub fn turn_range(self) -> std::ops::RangeInclusive<usize> {
        let m = self.base_turns();
        m..=m + 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub tier: DifficultyTier,
    pub grid_side: usize,
    pub dead_end_count: usize,
    pub misleading_count: usize,
    pub seed: u64,
    pub max_attempts: usize,
}

impl GenConfig {
    /// Defaults: side `m + 6`, `k` dead ends, `min(k - 1, 3)` misleading destinations.
    pub fn for_tier(tier: DifficultyTier, seed: u64) -> Self {
        let k = tier.k() as usize;
        GenConfig {
            tier,
            grid_side: tier.base_turns() + 6,
            dead_end_count: k,
            misleading_count: (k - 1).min(3),
            seed,
            max_attempts: 200,
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.grid_side < self.tier.base_turns() + 4 {
            return Err(GenError::InvalidConfig(format!(
                "grid side {} is below the tier minimum {}",
                self.grid_side,
                self.tier.base_turns() + 4
            )));
        }
        if self.max_attempts == 0 {
            return Err(GenError::InvalidConfig(
                "max_attempts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("no maze within the turn range after {attempts} attempts")]
    BudgetExhausted { attempts: usize },
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates one maze. Identical configs produce identical mazes.
pub fn generate(cfg: &GenConfig) -> Result<Maze, GenError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let range = cfg.tier.turn_range();
    for _ in 0..cfg.max_attempts {
        let carved = carve(cfg.grid_side, &mut rng);
        let Some(maze) = pick_endpoints(carved, range.clone(), &mut rng) else {
            continue;
        };
        let Ok(sol) = shortest_path(&maze) else {
            continue;
        };
        if !range.contains(&count_turns(&sol.path)) {
            continue;
        }
        let length = sol.length;
        let maze = maze.with_tier(cfg.tier.k()).with_seed(cfg.seed);
        let Ok(maze) = maze.solved() else { continue };

        let maze = inject_dead_ends(&maze, cfg.dead_end_count, &mut rng);
        let maze = place_misleading(&maze, cfg.misleading_count, &mut rng);
        let Ok(maze) = maze.solved() else { continue };
        if maze.optimal_path().len() != length || maze.validate().is_err() {
            continue;
        }
        return Ok(maze);
    }
    Err(GenError::BudgetExhausted {
        attempts: cfg.max_attempts,
    })
}

/// Randomized depth-first carving. A blocked cell may be opened only when
/// its sole open neighbor is the cell being extended, so the open cells
/// always form a tree. Carving stops at the fill target.
fn carve(side: usize, rng: &mut ChaCha8Rng) -> Maze {
    let corner = Coord::new(0, 0);
    let far = Coord::new(side - 1, side - 1);
    let mut maze = Maze::layout(side, side, [], corner, far).expect("side >= 2");
    for r in 0..side {
        for c in 0..side {
            maze.set_passable(Coord::new(r, c), false);
        }
    }

    let target = ((side * side) as f64 * CARVE_FILL).ceil() as usize;
    let root = Coord::new(rng.gen_range(0..side), rng.gen_range(0..side));
    maze.set_passable(root, true);
    let mut opened = 1;
    let mut stack = vec![root];
    while let Some(&top) = stack.last() {
        if opened >= target {
            break;
        }
        let options: Vec<Coord> = Direction::ALL
            .into_iter()
            .filter_map(|d| maze.step(top, d))
            .filter(|n| !maze.is_passable(*n) && maze.open_degree(*n) == 1)
            .collect();
        match options.choose(rng) {
            Some(&n) => {
                maze.set_passable(n, true);
                opened += 1;
                stack.push(n);
            }
            None => {
                stack.pop();
            }
        }
    }
    maze
}

/// Chooses a random start and a destination whose BFS-tree path has a turn
/// count in `range`.
fn pick_endpoints(
    mut maze: Maze,
    range: std::ops::RangeInclusive<usize>,
    rng: &mut ChaCha8Rng,
) -> Option<Maze> {
    let open: Vec<Coord> = maze.passable_cells().collect();
    let start = *open.choose(rng)?;
    maze.set_start(start);

    // Walk the BFS tree from the start, tracking incoming direction and turns.
    let mut info: Vec<Option<(Option<Direction>, usize)>> = vec![None; maze.area()];
    info[maze.index(start)] = Some((None, 0));
    let mut queue = std::collections::VecDeque::from([start]);
    let mut candidates = Vec::new();
    while let Some(c) = queue.pop_front() {
        let (incoming, turns) = info[maze.index(c)].expect("queued cells are labelled");
        if c != start && range.contains(&turns) {
            candidates.push(c);
        }
        for (d, n) in maze.open_neighbors(c).collect::<Vec<_>>() {
            if info[maze.index(n)].is_none() {
                let t = turns + usize::from(incoming.is_some_and(|i| i != d));
                info[maze.index(n)] = Some((Some(d), t));
                queue.push_back(n);
            }
        }
    }
    let dest = *candidates.choose(rng)?;
    maze.set_destination(dest);
    Some(maze)
}

/// Cells on the optimal path where the direction changes, plus junction
/// cells on the path, in path order. Start and destination are excluded.
pub fn annotate_turnpoints(maze: &Maze) -> Vec<Coord> {
    let path = maze.optimal_path();
    let trace = maze.execute(path);
    let mut out = Vec::new();
    for i in 1..trace.positions.len().saturating_sub(1) {
        let cell = trace.positions[i];
        if path[i - 1] != path[i] || maze.is_junction(cell) {
            out.push(cell);
        }
    }
    out
}

/// Injected stubs, one list of cells per stub ordered from the path outward.
pub fn inject_dead_ends_traced(
    maze: &Maze,
    count: usize,
    rng: &mut impl Rng,
) -> (Maze, Vec<Vec<Coord>>) {
    let mut out = maze.clone();
    let mut stubs = Vec::new();
    if count == 0 {
        return (out, stubs);
    }
    let trace = maze.execute(maze.optimal_path());
    let mut anchors: Vec<(Coord, Direction)> = trace
        .positions
        .iter()
        .filter(|p| **p != maze.destination())
        .flat_map(|p| Direction::ALL.into_iter().map(move |d| (*p, d)))
        .collect();
    anchors.shuffle(rng);

    for (anchor, dir) in anchors {
        if stubs.len() >= count {
            break;
        }
        let Some(first) = out.step(anchor, dir) else {
            continue;
        };
        if !can_open(&out, first) {
            continue;
        }
        out.set_passable(first, true);
        let mut cells = vec![first];
        let want = rng.gen_range(1..=MAX_STUB_LEN);
        let mut at = first;
        while cells.len() < want {
            let mut next: Vec<Coord> = Direction::ALL
                .into_iter()
                .filter_map(|d| out.step(at, d))
                .filter(|n| can_open(&out, *n))
                .collect();
            next.sort();
            let Some(&n) = next.choose(rng) else { break };
            out.set_passable(n, true);
            cells.push(n);
            at = n;
        }
        stubs.push(cells);
    }
    (out, stubs)
}

fn can_open(maze: &Maze, c: Coord) -> bool {
    !maze.is_passable(c) && maze.open_degree(c) == 1
}

/// Opens up to `count` corridor stubs off the optimal path. Stubs attach to
/// the open cells through exactly one edge, so no new route to the
/// destination appears and the optimal path is unchanged. Turn points are
/// not recomputed here.
pub fn inject_dead_ends(maze: &Maze, count: usize, rng: &mut impl Rng) -> Maze {
    inject_dead_ends_traced(maze, count, rng).0
}

/// Marks up to `count` reachable cells off the optimal path as misleading
/// destinations, preferring dead-end cells.
pub fn place_misleading(maze: &Maze, count: usize, rng: &mut impl Rng) -> Maze {
    let mut out = maze.clone();
    if count == 0 {
        return out;
    }
    let on_path: BTreeSet<Coord> = maze
        .execute(maze.optimal_path())
        .positions
        .into_iter()
        .collect();
    let reach = distance_field(maze, maze.start());
    let pool: Vec<Coord> = maze
        .passable_cells()
        .filter(|c| {
            reach[maze.index(*c)].is_some()
                && !on_path.contains(c)
                && !maze.misleading().contains(c)
        })
        .collect();
    let (mut ends, mut rest): (Vec<Coord>, Vec<Coord>) =
        pool.into_iter().partition(|c| maze.open_degree(*c) == 1);
    ends.shuffle(rng);
    rest.shuffle(rng);
    let mut chosen = maze.misleading().to_vec();
    chosen.extend(ends.into_iter().chain(rest).take(count));
    out.set_misleading(chosen);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maze::Direction::*;
    use crate::solver::enumerate_paths;

    #[test]
    fn tier_parameters() {
        for k in 1..=6 {
            let t = DifficultyTier::new(k).unwrap();
            assert_eq!(t.base_turns(), 2 * k as usize - 1);
            assert_eq!(*t.turn_range().end(), t.base_turns() + 2);
        }
        assert_eq!(DifficultyTier::new(1).unwrap().turn_range(), 1..=3);
        assert_eq!(DifficultyTier::new(3).unwrap().turn_range(), 5..=7);
        assert!(DifficultyTier::new(0).is_err());
    }

    #[test]
    fn config_validation() {
        let t = DifficultyTier::new(2).unwrap();
        let mut cfg = GenConfig::for_tier(t, 1);
        assert_eq!(cfg.grid_side, 9);
        assert_eq!(cfg.misleading_count, 1);
        cfg.grid_side = 6;
        assert!(cfg.validate().is_err());
        cfg.grid_side = 7;
        cfg.max_attempts = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn generated_mazes_hit_turn_range() {
        for k in [1, 3] {
            let t = DifficultyTier::new(k).unwrap();
            for seed in 0..20 {
                let m = generate(&GenConfig::for_tier(t, seed)).unwrap();
                assert!(
                    t.turn_range().contains(&count_turns(m.optimal_path())),
                    "k={k} seed={seed}"
                );
                m.validate().unwrap();
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GenConfig::for_tier(DifficultyTier::new(4).unwrap(), 99);
        let a = serde_json::to_string(&generate(&cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&generate(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn annotate_examples() {
        let straight = Maze::from_ascii("S...D").unwrap().solved().unwrap();
        assert!(straight.turn_points().is_empty());
        let l = Maze::from_ascii("S##\n.##\n..D").unwrap().solved().unwrap();
        assert_eq!(l.optimal_path().moves(), &[Down, Down, Right, Right]);
        assert_eq!(l.turn_points(), &[Coord::new(2, 0)]);
    }

    #[test]
    fn annotation_covers_direction_changes() {
        let t = DifficultyTier::new(2).unwrap();
        for seed in 0..10 {
            let m = generate(&GenConfig::for_tier(t, seed)).unwrap();
            let path = m.optimal_path();
            let trace = m.execute(path);
            let changes: Vec<Coord> = (1..path.len())
                .filter(|&i| path[i - 1] != path[i])
                .map(|i| trace.positions[i])
                .collect();
            assert_eq!(changes.len(), count_turns(path));
            assert!(changes.iter().all(|c| m.turn_points().contains(c)));
            assert!(m.turn_points().len() >= count_turns(path));
        }
    }

    #[test]
    fn dead_ends_preserve_path_and_terminate() {
        let t = DifficultyTier::new(3).unwrap();
        let mut injected_any = false;
        for seed in 0..15 {
            let cfg = GenConfig {
                dead_end_count: 0,
                ..GenConfig::for_tier(t, seed)
            };
            let m = generate(&cfg).unwrap();
            let before = shortest_path(&m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (after, stubs) = inject_dead_ends_traced(&m, 4, &mut rng);
            let again = shortest_path(&after).unwrap();
            assert_eq!(before, again);
            assert_eq!(count_turns(&again.path), count_turns(&before.path));
            for stub in &stubs {
                injected_any = true;
                let terminal = *stub.last().unwrap();
                assert_eq!(after.open_degree(terminal), 1, "stub {stub:?}");
                assert_ne!(terminal, after.destination());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(inject_dead_ends(&m, 0, &mut rng), m);
        }
        assert!(injected_any);
    }

    #[test]
    fn misleading_cells_are_reachable_and_off_path() {
        let t = DifficultyTier::new(4).unwrap();
        for seed in 0..10 {
            let m = generate(&GenConfig::for_tier(t, seed)).unwrap();
            assert!(!m.misleading().is_empty());
            let reach = distance_field(&m, m.start());
            let path: BTreeSet<Coord> = m.execute(m.optimal_path()).positions.into_iter().collect();
            for c in m.misleading() {
                assert!(reach[m.index(*c)].is_some());
                assert!(!path.contains(c));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            assert_eq!(place_misleading(&m, 0, &mut rng), m);
        }
    }

    #[test]
    fn small_generated_maze_matches_enumeration() {
        let t = DifficultyTier::new(1).unwrap();
        let m = (0..)
            .map(|seed| generate(&GenConfig::for_tier(t, seed)).unwrap())
            .find(|m| m.optimal_path().len() <= 20)
            .unwrap();
        let paths = enumerate_paths(&m, m.optimal_path().len()).unwrap();
        assert_eq!(paths, vec![m.optimal_path().clone()]);
    }

    #[test]
    fn mix_seed_spreads() {
        assert_ne!(mix_seed(1, 1), mix_seed(1, 2));
        assert_eq!(mix_seed(7, 3), mix_seed(7, 3));
    }
}
