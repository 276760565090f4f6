//! Answer extraction from model responses and STAR session auditing.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maze::{Coord, Direction, Maze, MoveError, Trajectory};
use crate::prompts::{cell_glyph, GlyphTable, StarSession, StarStep};
use crate::tasks::Letter;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unparseable: {0}")]
    Unparseable(String),
    #[error("invalid token {0:?} in direction list")]
    InvalidToken(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    DirectionList,
    Choice,
    StarSession,
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub kind: ResponseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Trajectory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<Letter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<StarSession>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl ParsedResponse {
    fn unparseable(err: ParseError) -> Self {
        ParsedResponse {
            kind: ResponseKind::Unparseable,
            trajectory: None,
            choice: None,
            session: None,
            diagnostics: vec![err.to_string()],
        }
    }

    pub fn route(text: &str) -> Self {
        match parse_direction_list(text) {
            Ok(t) => ParsedResponse {
                kind: ResponseKind::DirectionList,
                trajectory: Some(t),
                choice: None,
                session: None,
                diagnostics: Vec::new(),
            },
            Err(e) => Self::unparseable(e),
        }
    }

    pub fn choice(text: &str) -> Self {
        match parse_choice(text) {
            Ok(l) => ParsedResponse {
                kind: ResponseKind::Choice,
                trajectory: None,
                choice: Some(l),
                session: None,
                diagnostics: Vec::new(),
            },
            Err(e) => Self::unparseable(e),
        }
    }

    pub fn star(text: &str, glyphs: &GlyphTable) -> Self {
        match parse_star_session(text, glyphs) {
            Ok((session, diagnostics)) => ParsedResponse {
                kind: ResponseKind::StarSession,
                trajectory: Some(session.summary.clone()),
                choice: None,
                session: Some(session),
                diagnostics,
            },
            Err(e) => Self::unparseable(e),
        }
    }
}

static BRACKETS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[([^\[\]]*)\]").unwrap());
static DIRECTION_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(up|down|left|right)\b").unwrap());
static MOVE_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bmove\s+(up|down|left|right)\b").unwrap());
static CHOICE_EXPLICIT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:\b(?:answer|option|choice)\b(?:\s+is)?\s*[:：]?[\s*]*\(?([abcd])\)?(?:[^a-z0-9]|$))|\(([abcd])\)").unwrap()
});
static STEP_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[ \t*]*step\s*(\d+)\s*:[ \t]*(.*)$").unwrap());
static VIOLATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\((invalid:[^)]*)\)").unwrap());

fn is_list_candidate(inner: &str) -> bool {
    let t = inner.trim();
    t.is_empty() || t.contains(['"', '\'', ',']) || t.parse::<Direction>().is_ok()
}

/// The last bracketed list in `text`. Quotes are optional and direction
/// words are case-insensitive. Bracketed single words that are not
/// directions (format hints such as `[direction]`) are not lists.
pub fn parse_direction_list(text: &str) -> Result<Trajectory, ParseError> {
    let inner = BRACKETS
        .captures_iter(text)
        .filter_map(|c| c.get(1))
        .map(|m| m.as_str())
        .filter(|s| is_list_candidate(s))
        .last()
        .ok_or_else(|| ParseError::Unparseable("no bracketed direction list".into()))?;
    let mut moves = Vec::new();
    for raw in inner.split(',') {
        let tok = raw
            .trim()
            .trim_matches(|c: char| c == '"' || c == '\'' || c == '“' || c == '”')
            .trim();
        if tok.is_empty() {
            continue;
        }
        moves.push(
            tok.parse::<Direction>()
                .map_err(|_| ParseError::InvalidToken(tok.to_string()))?,
        );
    }
    Ok(Trajectory::new(moves))
}

/// The final option letter: explicit answer patterns and parenthesised
/// letters anywhere, or a lone letter as the last token of the text.
pub fn parse_choice(text: &str) -> Result<Letter, ParseError> {
    let mut best: Option<(usize, char)> = None;
    for c in CHOICE_EXPLICIT.captures_iter(text) {
        if let Some(m) = c.get(1).or_else(|| c.get(2)) {
            best = Some((m.start(), m.as_str().chars().next().unwrap_or('?')));
        }
    }
    let trailing = text
        .split_whitespace()
        .last()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| {
            t.len() == 1 && matches!(t.to_ascii_uppercase().as_str(), "A" | "B" | "C" | "D")
        });
    if let Some(t) = trailing {
        best = Some((text.len(), t.chars().next().unwrap_or('?')));
    }
    best.and_then(|(_, ch)| ch.to_ascii_uppercase().to_string().parse().ok())
        .ok_or_else(|| ParseError::Unparseable("no option letter".into()))
}

/// Choice for responses that may end with a direction word instead of a
/// letter: letters win, otherwise the last direction word is mapped back.
pub fn parse_choice_or_direction(text: &str) -> Result<Letter, ParseError> {
    parse_choice(text).or_else(|e| {
        DIRECTION_WORD
            .captures_iter(text)
            .last()
            .and_then(|c| c[1].parse::<Direction>().ok())
            .map(Letter::for_direction)
            .ok_or(e)
    })
}

fn is_map_line(line: &str, glyphs: &GlyphTable) -> bool {
    let mut toks = line.split_whitespace().peekable();
    toks.peek().is_some() && toks.all(|t| glyphs.is_known(t))
}

/// Parses step blocks and the closing summary. Returns the session and
/// diagnostics describing anything that had to be tolerated.
pub fn parse_star_session(
    text: &str,
    glyphs: &GlyphTable,
) -> Result<(StarSession, Vec<String>), ParseError> {
    let mut diagnostics = Vec::new();
    let markers: Vec<_> = STEP_MARKER.captures_iter(text).collect();
    let summary_at = text.rfind("Summary of steps");
    let summary = summary_at.map(|i| parse_direction_list(&text[i..]));

    let mut steps = Vec::new();
    for (i, cap) in markers.iter().enumerate() {
        let whole = cap.get(0).map_or(0..0, |m| m.range());
        let number = &cap[1];
        let description = cap[2].trim().to_string();
        let end = markers
            .get(i + 1)
            .and_then(|c| c.get(0))
            .map_or(text.len(), |m| m.start());
        let end = match summary_at {
            Some(s) if s > whole.end && s < end => s,
            _ => end,
        };
        let block = text.get(whole.end..end).unwrap_or("");

        let direction = MOVE_WORD
            .captures(&description)
            .or_else(|| DIRECTION_WORD.captures(&description))
            .and_then(|c| c[1].parse::<Direction>().ok());
        let Some(direction) = direction else {
            diagnostics.push(format!("step{number}: no direction word"));
            continue;
        };

        let mut violation = None;
        let mut map = String::new();
        let mut in_map = false;
        for line in block.lines() {
            let trimmed = line.trim();
            if trimmed.to_ascii_lowercase().starts_with("after step") {
                violation = VIOLATION.captures(trimmed).map(|c| c[1].to_string());
                continue;
            }
            if is_map_line(trimmed, glyphs) {
                in_map = true;
                map.push_str(&trimmed.split_whitespace().collect::<Vec<_>>().join(" "));
                map.push('\n');
            } else if in_map {
                break;
            }
        }
        if map.is_empty() {
            diagnostics.push(format!("step{number}: no map"));
        }
        steps.push(StarStep {
            description,
            direction,
            map_after: (!map.is_empty()).then_some(map),
            violation,
        });
    }

    let summary = match summary {
        Some(Ok(t)) => t,
        Some(Err(e)) if steps.is_empty() => return Err(e),
        None if steps.is_empty() => {
            return Err(ParseError::Unparseable(
                "no step markers and no summary".into(),
            ))
        }
        other => {
            diagnostics.push(match other {
                Some(Err(e)) => format!("summary: {e}"),
                _ => "summary: missing".to_string(),
            });
            steps.iter().map(|s| s.direction).collect()
        }
    };
    Ok((StarSession { steps, summary }, diagnostics))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    LogicalInconsistency,
    ConstraintViolation,
    StructuralCorruption,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Zero-based index into the session's steps.
    pub step: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub violations: Vec<Violation>,
}

impl ConsistencyReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

/// Position implied by a declared move, including invalid ones: an
/// obstacle collision lands on the obstacle, a boundary exit stays put.
pub fn implied_move(maze: &Maze, at: Coord, dir: Direction) -> (Coord, Option<MoveError>) {
    match maze.apply_move(at, dir) {
        Ok(n) => (n, None),
        Err(e @ MoveError::ObstacleCollision { target }) => (target, Some(e)),
        Err(e) => (at, Some(e)),
    }
}

/// Audits each step's declared move and drawn map against the maze.
pub fn check_consistency(
    maze: &Maze,
    session: &StarSession,
    glyphs: &GlyphTable,
) -> ConsistencyReport {
    let mut report = ConsistencyReport::default();
    let mut at = maze.start();
    for (i, step) in session.steps.iter().enumerate() {
        let (next, err) = implied_move(maze, at, step.direction);
        at = next;
        if err.is_some() {
            report.violations.push(Violation {
                step: i,
                kind: ViolationKind::ConstraintViolation,
            });
        }
        let Some(map) = &step.map_after else { continue };
        let grid: Vec<Vec<&str>> = map
            .lines()
            .map(|l| l.split_whitespace().collect())
            .filter(|r: &Vec<&str>| !r.is_empty())
            .collect();

        let icon = grid.iter().enumerate().find_map(|(r, row)| {
            row.iter()
                .position(|t| *t == glyphs.user_icon)
                .map(|c| Coord::new(r, c))
        });
        if icon != Some(at) {
            report.violations.push(Violation {
                step: i,
                kind: ViolationKind::LogicalInconsistency,
            });
        }

        let dims_ok = grid.len() == maze.height() && grid.iter().all(|r| r.len() == maze.width());
        let cells_ok = dims_ok
            && grid.iter().enumerate().all(|(r, row)| {
                row.iter().enumerate().all(|(c, tok)| {
                    let cell = Coord::new(r, c);
                    Some(cell) == icon
                        || (cell == at && *tok == glyphs.user_icon)
                        || *tok == cell_glyph(maze, cell, glyphs, true)
                })
            });
        // The implied cell must show either the icon or its static glyph.
        let implied_ok = !dims_ok
            || !maze.in_bounds(at)
            || Some(at) == icon
            || grid[at.row][at.col] == cell_glyph(maze, at, glyphs, true);
        if !cells_ok || !implied_ok {
            report.violations.push(Violation {
                step: i,
                kind: ViolationKind::StructuralCorruption,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use Direction::*;

    #[test]
    fn direction_list_examples() {
        assert_eq!(
            parse_direction_list(r#"... ["down", "Right"]"#)
                .unwrap()
                .moves(),
            &[Down, Right]
        );
        assert_eq!(
            parse_direction_list(r#"["up","northeast"]"#),
            Err(ParseError::InvalidToken("northeast".into()))
        );
        assert_eq!(
            parse_direction_list(r#"["up"] then ["left", "left"]"#)
                .unwrap()
                .moves(),
            &[Left, Left]
        );
        assert!(matches!(
            parse_direction_list("no list here"),
            Err(ParseError::Unparseable(_))
        ));
        assert_eq!(
            parse_direction_list("[ up, DOWN ] and [direction]")
                .unwrap()
                .moves(),
            &[Up, Down]
        );
        assert!(parse_direction_list("[]").unwrap().is_empty());
    }

    #[test]
    fn choice_examples() {
        assert_eq!(parse_choice("Therefore, the answer is B."), Ok(Letter::B));
        assert_eq!(parse_choice("a"), Ok(Letter::A));
        assert!(parse_choice("the maze is hard").is_err());
        assert_eq!(parse_choice("Answer: C"), Ok(Letter::C));
        assert_eq!(
            parse_choice("I pick (b) over (A), final answer: (D)"),
            Ok(Letter::D)
        );
        assert_eq!(parse_choice("Maybe A... no. D"), Ok(Letter::D));
        assert_eq!(
            parse_choice("A turn point is a cell."),
            Err(ParseError::Unparseable("no option letter".into()))
        );
        assert_eq!(parse_choice("the answer is **c**"), Ok(Letter::C));
    }

    #[test]
    fn direction_fallback() {
        assert_eq!(
            parse_choice_or_direction("the direction of next movement is left."),
            Ok(Letter::A)
        );
        assert_eq!(
            parse_choice_or_direction("Answer: C, then go left"),
            Ok(Letter::C)
        );
    }
}
