//! QA instance builders for the four task families.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maze::{Coord, Direction, Maze, Trajectory};
use crate::solver::{count_turns, distance_field, optimal_next, shortest_path};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    RoutePlanning,
    NextStep,
    Turnpoint,
    Rule,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::RoutePlanning,
        Family::NextStep,
        Family::Turnpoint,
        Family::Rule,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::RoutePlanning => "route_planning",
            Family::NextStep => "next_step",
            Family::Turnpoint => "turnpoint",
            Family::Rule => "rule",
        }
    }

    /// Short id prefix.
    pub fn abbrev(self) -> &'static str {
        match self {
            Family::RoutePlanning => "rp",
            Family::NextStep => "ns",
            Family::Turnpoint => "tc",
            Family::Rule => "ru",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Multiple-choice option letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Letter {
    A,
    B,
    C,
    D,
}

impl Letter {
    pub const ALL: [Letter; 4] = [Letter::A, Letter::B, Letter::C, Letter::D];

    /// Fixed next-step mapping: A=left, B=right, C=up, D=down.
    pub fn direction(self) -> Direction {
        match self {
            Letter::A => Direction::Left,
            Letter::B => Direction::Right,
            Letter::C => Direction::Up,
            Letter::D => Direction::Down,
        }
    }

    pub fn for_direction(d: Direction) -> Letter {
        match d {
            Direction::Left => Letter::A,
            Direction::Right => Letter::B,
            Direction::Up => Letter::C,
            Direction::Down => Letter::D,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Letter::A => 'A',
            Letter::B => 'B',
            Letter::C => 'C',
            Letter::D => 'D',
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Letter {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Letter::A),
            "B" => Ok(Letter::B),
            "C" => Ok(Letter::C),
            "D" => Ok(Letter::D),
            other => Err(TaskError::Malformed(format!(
                "not an option letter: {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(TaskError::Malformed(format!("unknown split {other:?}"))),
        }
    }
}

/// Turnpoint comprehension question kinds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "template", rename_all = "snake_case")]
pub enum TurnpointQuestion {
    /// "Is cell (r, c) a turn point?"
    IsTurnPoint { cell: Coord, truth: bool },
    /// "How many direction changes does the shortest path make?"
    CountTurns { count: usize },
}

/// Fixed constraint statements with their truth values.
pub const CONSTRAINT_STATEMENTS: [(&str, bool); 6] = [
    ("Diagonal movement is allowed.", false),
    ("Moving onto an obstacle cell is allowed.", false),
    ("A move may leave the map across its boundary.", false),
    ("Each move changes the position by exactly one cell.", true),
    (
        "The only permitted moves are left, right, up and down.",
        true,
    ),
    ("An obstacle blocks movement into its cell.", true),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "template", rename_all = "snake_case")]
pub enum RuleProposition {
    MoveValidity { cell: Coord, direction: Direction },
    Constraint { statement: usize },
    Reachability { cell: Coord },
}

/// Family-specific fields. Question text may contain glyph placeholders
/// (`[START]`, `[DEST]`) that are substituted at render time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    RoutePlanning,
    NextStep {
        prefix: Trajectory,
        options: BTreeMap<Letter, Direction>,
    },
    Turnpoint {
        question: TurnpointQuestion,
        text: String,
        options: BTreeMap<Letter, String>,
    },
    Rule {
        proposition: RuleProposition,
        text: String,
        truth: bool,
        options: BTreeMap<Letter, String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerKey {
    Route(Trajectory),
    Choice(Letter),
}

impl AnswerKey {
    pub fn as_route(&self) -> Option<&Trajectory> {
        match self {
            AnswerKey::Route(t) => Some(t),
            AnswerKey::Choice(_) => None,
        }
    }

    pub fn as_choice(&self) -> Option<Letter> {
        match self {
            AnswerKey::Choice(l) => Some(*l),
            AnswerKey::Route(_) => None,
        }
    }
}

/// One QA item with its maze embedded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub family: Family,
    pub tier: u32,
    pub maze: Maze,
    pub payload: Payload,
    pub answer_key: AnswerKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl TaskInstance {
    pub fn maze_ref(&self) -> String {
        self.maze.id()
    }

    /// Option letter to option text, for choice families.
    pub fn options(&self) -> BTreeMap<Letter, String> {
        match &self.payload {
            Payload::RoutePlanning => BTreeMap::new(),
            Payload::NextStep { options, .. } => {
                options.iter().map(|(l, d)| (*l, d.to_string())).collect()
            }
            Payload::Turnpoint { options, .. } | Payload::Rule { options, .. } => options.clone(),
        }
    }

    /// Yes/no or true/false polarity, for the binary templates.
    pub fn binary_truth(&self) -> Option<bool> {
        match &self.payload {
            Payload::Turnpoint {
                question: TurnpointQuestion::IsTurnPoint { truth, .. },
                ..
            } => Some(*truth),
            Payload::Rule { truth, .. } => Some(*truth),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("ambiguous ground truth: several optimal next moves after {0} steps")]
    Skip(usize),
    #[error("prefix length {k} outside 0 < k < {len}")]
    PrefixOutOfRange { k: usize, len: usize },
    #[error("maze has no cell satisfying the requested question")]
    Infeasible,
    #[error("maze is unsolvable")]
    Unsolvable,
    #[error("malformed instance: {0}")]
    Malformed(String),
}

fn yes_no() -> BTreeMap<Letter, String> {
    BTreeMap::from([
        (Letter::A, "Yes".to_string()),
        (Letter::B, "No".to_string()),
    ])
}

fn true_false() -> BTreeMap<Letter, String> {
    BTreeMap::from([
        (Letter::A, "True".to_string()),
        (Letter::B, "False".to_string()),
    ])
}

fn binary_letter(truth: bool) -> Letter {
    if truth {
        Letter::A
    } else {
        Letter::B
    }
}

fn next_step_options() -> BTreeMap<Letter, Direction> {
    Letter::ALL
        .into_iter()
        .map(|l| (l, l.direction()))
        .collect()
}

fn instance(maze: &Maze, family: Family, payload: Payload, answer_key: AnswerKey) -> TaskInstance {
    TaskInstance {
        id: format!("{}-{}", family.abbrev(), maze.id()),
        family,
        tier: maze.tier(),
        maze: maze.clone(),
        payload,
        answer_key,
        split: None,
    }
}

/// Full direction list; the key is the canonical shortest path.
pub fn build_route_planning(maze: &Maze) -> Result<TaskInstance, TaskError> {
    let sol = shortest_path(maze).map_err(|_| TaskError::Unsolvable)?;
    Ok(instance(
        maze,
        Family::RoutePlanning,
        Payload::RoutePlanning,
        AnswerKey::Route(sol.path),
    ))
}

/// Next move after the first `k` moves of the canonical path. Skips when
/// more than one move stays optimal.
pub fn build_next_step(maze: &Maze, k: usize) -> Result<TaskInstance, TaskError> {
    let sol = shortest_path(maze).map_err(|_| TaskError::Unsolvable)?;
    if k == 0 || k >= sol.length {
        return Err(TaskError::PrefixOutOfRange { k, len: sol.length });
    }
    let prefix = sol.path.prefix(k);
    let next = optimal_next(maze, &prefix).map_err(|_| TaskError::Unsolvable)?;
    if next.len() != 1 {
        return Err(TaskError::Skip(k));
    }
    let dir = *next.iter().next().expect("singleton");
    let mut inst = instance(
        maze,
        Family::NextStep,
        Payload::NextStep {
            prefix,
            options: next_step_options(),
        },
        AnswerKey::Choice(Letter::for_direction(dir)),
    );
    inst.id = format!("{}-k{k}", inst.id);
    Ok(inst)
}

/// Next-step instance with `k` drawn uniformly from the valid prefix
/// lengths, retrying other lengths when the drawn one is ambiguous.
pub fn build_next_step_sampled(maze: &Maze, rng: &mut impl Rng) -> Result<TaskInstance, TaskError> {
    let len = maze.optimal_path().len();
    let mut ks: Vec<usize> = (1..len).collect();
    ks.shuffle(rng);
    for k in ks {
        match build_next_step(maze, k) {
            Err(TaskError::Skip(_)) => continue,
            other => return other,
        }
    }
    Err(TaskError::Skip(0))
}

/// Which turnpoint template to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurnpointTemplate {
    IsTurnPoint { positive: bool },
    CountTurns,
}

pub fn build_turnpoint_qa(maze: &Maze, rng: &mut impl Rng) -> Result<TaskInstance, TaskError> {
    let template = if rng.gen_bool(0.5) {
        TurnpointTemplate::IsTurnPoint {
            positive: rng.gen_bool(0.5),
        }
    } else {
        TurnpointTemplate::CountTurns
    };
    build_turnpoint_qa_with(maze, template, rng)
}

pub fn build_turnpoint_qa_with(
    maze: &Maze,
    template: TurnpointTemplate,
    rng: &mut impl Rng,
) -> Result<TaskInstance, TaskError> {
    match template {
        TurnpointTemplate::IsTurnPoint { positive } => {
            let cell = if positive {
                *maze
                    .turn_points()
                    .choose(rng)
                    .ok_or(TaskError::Infeasible)?
            } else {
                let tps: BTreeSet<Coord> = maze.turn_points().iter().copied().collect();
                let pool: Vec<Coord> = maze
                    .passable_cells()
                    .filter(|c| {
                        !tps.contains(c)
                            && *c != maze.start()
                            && *c != maze.destination()
                            && !maze.misleading().contains(c)
                    })
                    .collect();
                *pool.choose(rng).ok_or(TaskError::Infeasible)?
            };
            let text = format!(
                "Is the cell at ({}, {}) a turn point on the shortest path?",
                cell.row, cell.col
            );
            let mut inst = instance(
                maze,
                Family::Turnpoint,
                Payload::Turnpoint {
                    question: TurnpointQuestion::IsTurnPoint {
                        cell,
                        truth: positive,
                    },
                    text,
                    options: yes_no(),
                },
                AnswerKey::Choice(binary_letter(positive)),
            );
            inst.id = format!("{}-is", inst.id);
            Ok(inst)
        }
        TurnpointTemplate::CountTurns => {
            let count = count_turns(maze.optimal_path());
            let mut values: Vec<usize> = (count.saturating_sub(3)..=count + 3)
                .filter(|v| *v != count)
                .collect();
            values.shuffle(rng);
            values.truncate(3);
            values.push(count);
            values.shuffle(rng);
            let options: BTreeMap<Letter, String> = Letter::ALL
                .into_iter()
                .zip(values.iter().map(|v| v.to_string()))
                .collect();
            let key = Letter::ALL[values
                .iter()
                .position(|v| *v == count)
                .expect("count included")];
            let text =
                "How many turn points on the shortest path from [START] to [DEST] require a change of direction?"
                    .to_string();
            let mut inst = instance(
                maze,
                Family::Turnpoint,
                Payload::Turnpoint {
                    question: TurnpointQuestion::CountTurns { count },
                    text,
                    options,
                },
                AnswerKey::Choice(key),
            );
            inst.id = format!("{}-count", inst.id);
            Ok(inst)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleTemplate {
    MoveValidity,
    Constraint,
    Reachability,
}

pub fn build_rule_qa(maze: &Maze, rng: &mut impl Rng) -> Result<TaskInstance, TaskError> {
    let template = *[
        RuleTemplate::MoveValidity,
        RuleTemplate::Constraint,
        RuleTemplate::Reachability,
    ]
    .choose(rng)
    .expect("non-empty");
    let positive = rng.gen_bool(0.5);
    build_rule_qa_with(maze, template, positive, rng)
}

pub fn build_rule_qa_with(
    maze: &Maze,
    template: RuleTemplate,
    positive: bool,
    rng: &mut impl Rng,
) -> Result<TaskInstance, TaskError> {
    let (proposition, text) = match template {
        RuleTemplate::MoveValidity => {
            let pool: Vec<(Coord, Direction)> = maze
                .passable_cells()
                .flat_map(|c| Direction::ALL.into_iter().map(move |d| (c, d)))
                .filter(|(c, d)| maze.apply_move(*c, *d).is_ok() == positive)
                .collect();
            let (cell, direction) = *pool.choose(rng).ok_or(TaskError::Infeasible)?;
            (
                RuleProposition::MoveValidity { cell, direction },
                format!(
                    "Moving {direction} from the cell at ({}, {}) is a valid move.",
                    cell.row, cell.col
                ),
            )
        }
        RuleTemplate::Constraint => {
            let pool: Vec<usize> = (0..CONSTRAINT_STATEMENTS.len())
                .filter(|i| CONSTRAINT_STATEMENTS[*i].1 == positive)
                .collect();
            let statement = *pool.choose(rng).ok_or(TaskError::Infeasible)?;
            (
                RuleProposition::Constraint { statement },
                CONSTRAINT_STATEMENTS[statement].0.to_string(),
            )
        }
        RuleTemplate::Reachability => {
            let reach = distance_field(maze, maze.start());
            let pool: Vec<Coord> = (0..maze.height())
                .flat_map(|r| (0..maze.width()).map(move |c| Coord::new(r, c)))
                .filter(|c| *c != maze.start() && reach[maze.index(*c)].is_some() == positive)
                .collect();
            let cell = *pool.choose(rng).ok_or(TaskError::Infeasible)?;
            (
                RuleProposition::Reachability { cell },
                format!(
                    "The cell at ({}, {}) can be reached from [START] without crossing an obstacle.",
                    cell.row, cell.col
                ),
            )
        }
    };
    let mut inst = instance(
        maze,
        Family::Rule,
        Payload::Rule {
            proposition,
            text,
            truth: positive,
            options: true_false(),
        },
        AnswerKey::Choice(binary_letter(positive)),
    );
    let suffix = match template {
        RuleTemplate::MoveValidity => "move",
        RuleTemplate::Constraint => "constraint",
        RuleTemplate::Reachability => "reach",
    };
    inst.id = format!("{}-{suffix}", inst.id);
    Ok(inst)
}

/// Recomputes the answer key from the embedded maze and payload.
pub fn rederive_key(inst: &TaskInstance) -> Result<AnswerKey, TaskError> {
    let maze = &inst.maze;
    match &inst.payload {
        Payload::RoutePlanning => Ok(AnswerKey::Route(
            shortest_path(maze).map_err(|_| TaskError::Unsolvable)?.path,
        )),
        Payload::NextStep { prefix, options } => {
            let next = optimal_next(maze, prefix).map_err(|_| TaskError::Unsolvable)?;
            if next.len() != 1 {
                return Err(TaskError::Skip(prefix.len()));
            }
            let dir = next.into_iter().next().expect("singleton");
            options
                .iter()
                .find(|(_, d)| **d == dir)
                .map(|(l, _)| AnswerKey::Choice(*l))
                .ok_or_else(|| TaskError::Malformed("no option for the correct move".into()))
        }
        Payload::Turnpoint {
            question, options, ..
        } => match question {
            TurnpointQuestion::IsTurnPoint { cell, .. } => Ok(AnswerKey::Choice(binary_letter(
                maze.turn_points().contains(cell),
            ))),
            TurnpointQuestion::CountTurns { .. } => {
                let want = count_turns(maze.optimal_path()).to_string();
                options
                    .iter()
                    .find(|(_, v)| **v == want)
                    .map(|(l, _)| AnswerKey::Choice(*l))
                    .ok_or_else(|| {
                        TaskError::Malformed("correct count missing from options".into())
                    })
            }
        },
        Payload::Rule { proposition, .. } => {
            let truth = match proposition {
                RuleProposition::MoveValidity { cell, direction } => {
                    maze.apply_move(*cell, *direction).is_ok()
                }
                RuleProposition::Constraint { statement } => {
                    CONSTRAINT_STATEMENTS
                        .get(*statement)
                        .ok_or_else(|| TaskError::Malformed("unknown constraint statement".into()))?
                        .1
                }
                RuleProposition::Reachability { cell } => {
                    maze.in_bounds(*cell)
                        && distance_field(maze, maze.start())[maze.index(*cell)].is_some()
                }
            };
            Ok(AnswerKey::Choice(binary_letter(truth)))
        }
    }
}
