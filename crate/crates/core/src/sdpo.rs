//! Segment-level preference pairs: first divergence, segment slicing,
//! synthetic negatives and SFT targets.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maze::{Coord, Direction, Maze, MoveError, Trajectory};
use crate::prompts::{
    render_steps, steps_to_text, summary_line, GlyphTable, PromptError, PromptRenderer, Style,
};
use crate::solver::{distance_field, optimal_next};
use crate::tasks::{Family, Payload, TaskInstance};

pub const DEFAULT_SEGMENT_LEN: usize = 3;

#[derive(Debug, Error)]
pub enum SdpoError {
    #[error("{0} cannot be produced on this maze")]
    Infeasible(ErrorKind),
    #[error("instance {0} is not a route-planning task")]
    NotRoutePlanning(String),
    #[error("segment length must be at least 1")]
    ZeroSegment,
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    ObstacleCollision,
    BoundaryExit,
    NonoptimalBranch,
    PrematureStop,
    WrongTurnAtTp,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 5] = [
        ErrorKind::ObstacleCollision,
        ErrorKind::BoundaryExit,
        ErrorKind::NonoptimalBranch,
        ErrorKind::PrematureStop,
        ErrorKind::WrongTurnAtTp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::ObstacleCollision => "obstacle_collision",
            ErrorKind::BoundaryExit => "boundary_exit",
            ErrorKind::NonoptimalBranch => "nonoptimal_branch",
            ErrorKind::PrematureStop => "premature_stop",
            ErrorKind::WrongTurnAtTp => "wrong_turn_at_tp",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| format!("unknown error kind {s:?}"))
    }
}

/// First index where the sequences differ. When one is a strict prefix of
/// the other the shorter length is returned; identical sequences give `None`.
pub fn divergence_index(output: &[Direction], truth: &[Direction]) -> Option<usize> {
    match output.iter().zip(truth).position(|(o, a)| o != a) {
        Some(i) => Some(i),
        None if output.len() == truth.len() => None,
        None => Some(output.len().min(truth.len())),
    }
}

/// `(output[e..e+len], truth[e..e+len])`, each clipped at its end.
pub fn extract_segments(
    output: &[Direction],
    truth: &[Direction],
    e: usize,
    len: usize,
) -> (Trajectory, Trajectory) {
    let clip = |s: &[Direction]| {
        let from = e.min(s.len());
        let to = e.saturating_add(len).min(s.len());
        Trajectory::new(s[from..to].to_vec())
    };
    (clip(output), clip(truth))
}

#[derive(Debug, Clone)]
pub struct PairOptions {
    pub segment_len: usize,
    pub include_maps: bool,
    pub glyphs: GlyphTable,
    pub renderer: PromptRenderer,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            segment_len: DEFAULT_SEGMENT_LEN,
            include_maps: true,
            glyphs: GlyphTable::ascii(),
            renderer: PromptRenderer::default(),
        }
    }
}

/// DPO-ready pair. `prompt`, `chosen` and `rejected` are the trainer-facing
/// fields; the rest is provenance for audits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub instance_id: String,
    pub maze_ref: String,
    pub divergence_index: usize,
    pub segment_len: usize,
    pub chosen_moves: Trajectory,
    pub rejected_moves: Trajectory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<ErrorKind>,
}

fn segment_text(
    maze: &Maze,
    from: Coord,
    e: usize,
    seq: &[Direction],
    seg: &[Direction],
    opts: &PairOptions,
) -> String {
    let (steps, _) = render_steps(maze, from, e, seg, &opts.glyphs, opts.include_maps);
    let mut text = steps_to_text(&steps, e + 1, &opts.glyphs);
    if e + seg.len() >= seq.len() {
        text.push_str(&summary_line(&Trajectory::new(seq.to_vec())));
    }
    text
}

/// Builds the segment pair for a route-planning output, or `None` when the
/// output equals the ground truth.
pub fn build_pair(
    inst: &TaskInstance,
    output: &Trajectory,
    opts: &PairOptions,
) -> Result<Option<PreferencePair>, SdpoError> {
    if inst.family != Family::RoutePlanning {
        return Err(SdpoError::NotRoutePlanning(inst.id.clone()));
    }
    if opts.segment_len == 0 {
        return Err(SdpoError::ZeroSegment);
    }
    let truth = inst
        .answer_key
        .as_route()
        .ok_or_else(|| SdpoError::NotRoutePlanning(inst.id.clone()))?;
    let Some(e) = divergence_index(output, truth) else {
        return Ok(None);
    };
    let (rejected_moves, chosen_moves) = extract_segments(output, truth, e, opts.segment_len);

    let maze = &inst.maze;
    let (prefix_steps, at) = render_steps(
        maze,
        maze.start(),
        0,
        &truth[..e],
        &opts.glyphs,
        opts.include_maps,
    );
    let mut prompt = opts.renderer.render(inst, Style::Star)?;
    prompt.push_str(&steps_to_text(&prefix_steps, 1, &opts.glyphs));

    Ok(Some(PreferencePair {
        chosen: segment_text(maze, at, e, truth, &chosen_moves, opts),
        rejected: segment_text(maze, at, e, output, &rejected_moves, opts),
        prompt,
        instance_id: inst.id.clone(),
        maze_ref: inst.maze_ref(),
        divergence_index: e,
        segment_len: opts.segment_len,
        chosen_moves,
        rejected_moves,
        error_kind: None,
    }))
}

/// Cells visited by a valid trajectory, start included.
fn positions(maze: &Maze, moves: &[Direction]) -> Vec<Coord> {
    maze.execute(&Trajectory::new(moves.to_vec())).positions
}

/// Greedy descent along the distance field towards the destination.
fn descend(maze: &Maze, from: Coord, dist: &[Option<usize>]) -> Vec<Direction> {
    let mut out = Vec::new();
    let mut at = from;
    while let Some(here @ 1..) = dist[maze.index(at)] {
        let Some((d, n)) = maze
            .open_neighbors(at)
            .find(|(_, n)| dist[maze.index(*n)] == Some(here - 1))
        else {
            break;
        };
        out.push(d);
        at = n;
    }
    out
}

/// Perturbs `truth` so the result shows exactly the failure `kind`.
pub fn synthesize_negative(
    maze: &Maze,
    truth: &Trajectory,
    kind: ErrorKind,
    rng: &mut impl Rng,
) -> Result<Trajectory, SdpoError> {
    let infeasible = || SdpoError::Infeasible(kind);
    let pos = positions(maze, truth);
    if pos.len() != truth.len() + 1 || truth.is_empty() {
        return Err(infeasible());
    }
    let flip = |i: usize, d: Direction| {
        let mut v = truth.to_vec();
        v[i] = d;
        Trajectory::new(v)
    };

    match kind {
        ErrorKind::ObstacleCollision | ErrorKind::BoundaryExit => {
            let mut cands = Vec::new();
            for (i, &p) in pos[..truth.len()].iter().enumerate() {
                for d in Direction::ALL {
                    let hit = match maze.apply_move(p, d) {
                        Err(MoveError::ObstacleCollision { .. }) => {
                            kind == ErrorKind::ObstacleCollision
                        }
                        Err(MoveError::BoundaryExit { .. }) => kind == ErrorKind::BoundaryExit,
                        _ => false,
                    };
                    if hit {
                        cands.push((i, d));
                    }
                }
            }
            let &(i, d) = cands.choose(rng).ok_or_else(infeasible)?;
            Ok(flip(i, d))
        }
        ErrorKind::NonoptimalBranch => {
            let dist = distance_field(maze, maze.destination());
            let mut branches = Vec::new();
            let mut backtracks = Vec::new();
            for (i, &p) in pos[..truth.len()].iter().enumerate() {
                for (d, n) in maze.open_neighbors(p) {
                    if d == truth[i] || dist[maze.index(n)] < dist[maze.index(p)] {
                        continue;
                    }
                    if i > 0 && n == pos[i - 1] {
                        backtracks.push((i, d, n));
                    } else {
                        branches.push((i, d, n));
                    }
                }
            }
            let pool = if branches.is_empty() {
                &backtracks
            } else {
                &branches
            };
            let &(i, d, n) = pool.choose(rng).ok_or_else(infeasible)?;
            let mut v = truth[..i].to_vec();
            v.push(d);
            v.extend(descend(maze, n, &dist));
            Ok(Trajectory::new(v))
        }
        ErrorKind::PrematureStop => {
            let k = if truth.len() > 1 {
                rng.gen_range(1..truth.len())
            } else {
                0
            };
            Ok(truth.prefix(k))
        }
        ErrorKind::WrongTurnAtTp => {
            let mut cands = Vec::new();
            for (i, &p) in pos[..truth.len()].iter().enumerate() {
                if !maze.turn_points().contains(&p) {
                    continue;
                }
                let best = optimal_next(maze, &truth.prefix(i)).unwrap_or_default();
                for (d, _) in maze.open_neighbors(p) {
                    if !best.contains(&d) {
                        cands.push((i, d));
                    }
                }
            }
            let &(i, d) = cands.choose(rng).ok_or_else(infeasible)?;
            Ok(flip(i, d))
        }
    }
}

/// The execute/score check each kind is defined by.
pub fn exhibits(maze: &Maze, truth: &Trajectory, output: &Trajectory, kind: ErrorKind) -> bool {
    if output == truth {
        return false;
    }
    let trace = maze.execute(output);
    match kind {
        ErrorKind::ObstacleCollision => {
            matches!(trace.failure, Some(MoveError::ObstacleCollision { .. }))
        }
        ErrorKind::BoundaryExit => matches!(trace.failure, Some(MoveError::BoundaryExit { .. })),
        ErrorKind::NonoptimalBranch => {
            trace.failure.is_none() && trace.reached_destination && output.len() > truth.len()
        }
        ErrorKind::PrematureStop => output.is_prefix_of(truth) && !trace.reached_destination,
        ErrorKind::WrongTurnAtTp => {
            let Some(e) = divergence_index(output, truth) else {
                return false;
            };
            if e >= output.len() || e >= truth.len() {
                return false;
            }
            let pos = positions(maze, &truth[..e]);
            let at = pos[pos.len() - 1];
            maze.turn_points().contains(&at)
                && maze.apply_move(at, output[e]).is_ok()
                && optimal_next(maze, &truth.prefix(e)).is_ok_and(|s| !s.contains(&output[e]))
        }
    }
}

/// Supervised target for one instance: a STAR-format completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub id: String,
    pub family: Family,
    pub prompt: String,
    pub completion: String,
}

pub fn emit_sft(inst: &TaskInstance, renderer: &PromptRenderer) -> Result<SftRecord, SdpoError> {
    let glyphs = &renderer.glyphs;
    let maze = &inst.maze;
    let completion = match (&inst.payload, &inst.answer_key) {
        (Payload::RoutePlanning, key) => {
            let truth = key
                .as_route()
                .ok_or_else(|| SdpoError::NotRoutePlanning(inst.id.clone()))?;
            let (steps, _) = render_steps(maze, maze.start(), 0, truth, glyphs, true);
            format!(
                "Answer:\n{}{}",
                steps_to_text(&steps, 1, glyphs),
                summary_line(truth)
            )
        }
        (Payload::NextStep { prefix, .. }, key) => {
            let (steps, _) = render_steps(maze, maze.start(), 0, prefix, glyphs, true);
            let next = key
                .as_choice()
                .map(|l| l.direction().to_string())
                .unwrap_or_default();
            format!(
                "Answer:\n{}Now that we have confirmed our current position, let's determine the next optimal move.\nTherefore, the direction of next movement is {next}.\n",
                steps_to_text(&steps, 1, glyphs)
            )
        }
        (_, key) => format!(
            "Answer: {}\n",
            key.as_choice().map(|l| l.as_char()).unwrap_or('?')
        ),
    };
    Ok(SftRecord {
        id: inst.id.clone(),
        family: inst.family,
        prompt: renderer.render(inst, Style::Star)?,
        completion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Direction::*;

    #[test]
    fn divergence_examples() {
        assert_eq!(
            divergence_index(&[Up, Left, Down], &[Up, Right, Down]),
            Some(1)
        );
        assert_eq!(divergence_index(&[Up, Right], &[Up, Right]), None);
        assert_eq!(divergence_index(&[Up], &[Up, Right]), Some(1));
        assert_eq!(divergence_index(&[Up, Right, Down], &[Up]), Some(1));
        assert_eq!(divergence_index(&[], &[Up]), Some(0));
    }

    #[test]
    fn segment_examples() {
        let (r, c) = extract_segments(&[Up, Left, Down], &[Up, Right, Down], 1, 2);
        assert_eq!(
            (r.moves(), c.moves()),
            (&[Left, Down][..], &[Right, Down][..])
        );
        let (r, c) = extract_segments(&[Up, Left, Down], &[Up, Right, Down], 1, 10);
        assert_eq!((r.len(), c.len()), (2, 2));
        let (r, c) = extract_segments(&[Up, Up, Left], &[Up, Up, Right], 2, 3);
        assert_eq!((r.moves(), c.moves()), (&[Left][..], &[Right][..]));
        let (r, c) = extract_segments(&[Up], &[Up, Right], 1, 3);
        assert!(r.is_empty());
        assert_eq!(c.moves(), &[Right]);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ErrorKind::ALL {
            assert_eq!(k.as_str().parse::<ErrorKind>(), Ok(k));
            assert_eq!(serde_json::to_value(k).unwrap(), k.as_str());
        }
    }
}
