//! Turn-point annotated maze benchmark tooling: generation, exact solving,
//! task construction, prompt rendering, response parsing, scoring and
//! segment-level preference pair construction.

pub mod dataset;
pub mod generator;
pub mod maze;
pub mod metrics;
pub mod parser;
pub mod prompts;
pub mod sdpo;
pub mod solver;
pub mod tasks;

pub use generator::{generate, DifficultyTier, GenConfig, GenError};
pub use maze::{Coord, Direction, ExecutionTrace, Maze, MazeError, MoveError, Trajectory};
pub use metrics::{aggregate, score_choice, score_route, RouteScore, ScoreReport, ScoreRow};
pub use parser::{
    check_consistency, parse_choice, parse_direction_list, parse_star_session, ConsistencyReport,
    ParseError, ParsedResponse, ViolationKind,
};
pub use prompts::{
    render_map, render_prompt, render_star_session, GlyphTable, PromptError, PromptRenderer,
    StarSession, StarStep, Style, TemplateSet,
};
pub use sdpo::{
    build_pair, divergence_index, extract_segments, synthesize_negative, ErrorKind, PreferencePair,
};
pub use solver::{
    count_turns, enumerate_paths, optimal_next, shortest_path, PathSolution, SolveError,
};
pub use tasks::{AnswerKey, Family, Letter, Payload, Split, TaskInstance};
