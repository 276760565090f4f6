//! Text-grid rendering, prompt templates and STAR step-block sessions.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maze::{Coord, Direction, Maze, MoveError, Trajectory};
use crate::tasks::{Family, Payload, TaskInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Cot,
    Vot,
    Star,
}

impl Style {
    pub const ALL: [Style; 3] = [Style::Cot, Style::Vot, Style::Star];

    pub fn as_str(self) -> &'static str {
        match self {
            Style::Cot => "cot",
            Style::Vot => "vot",
            Style::Star => "star",
        }
    }

    /// Column label used in cross-prompt reports.
    pub fn column_label(self) -> &'static str {
        match self {
            Style::Cot => "+CoT",
            Style::Vot => "+VoT",
            Style::Star => "+Ours",
        }
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Style {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cot" => Ok(Style::Cot),
            "vot" => Ok(Style::Vot),
            "star" | "ours" => Ok(Style::Star),
            other => Err(PromptError::UnknownName(format!("style {other:?}"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no {style} template for the {family} family")]
    UnsupportedCombination { family: Family, style: Style },
    #[error("trajectory is invalid at move {index}: {error}")]
    InvalidTrajectory { index: usize, error: MoveError },
    #[error("invalid glyph table: {0}")]
    InvalidGlyphs(String),
    #[error("unknown {0}")]
    UnknownName(String),
    #[error("cannot read templates from {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Rendering token for each map element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlyphTable {
    pub start: String,
    pub destination: String,
    pub misleading: String,
    pub turn_point: String,
    pub road: String,
    pub obstacle: String,
    pub user_icon: String,
}

impl GlyphTable {
    pub fn ascii() -> Self {
        GlyphTable {
            start: "S".into(),
            destination: "D".into(),
            misleading: "D".into(),
            turn_point: "T".into(),
            road: ".".into(),
            obstacle: "#".into(),
            user_icon: "@".into(),
        }
    }

    pub fn emoji() -> Self {
        GlyphTable {
            start: "🟢".into(),
            destination: "🏁".into(),
            misleading: "🏁".into(),
            turn_point: "🔶".into(),
            road: "⬜".into(),
            obstacle: "⬛".into(),
            user_icon: "🤖".into(),
        }
    }

    /// The bracketed placeholder names themselves, so a rendered template
    /// reads exactly like its fixture file.
    pub fn placeholders() -> Self {
        GlyphTable {
            start: "[START]".into(),
            destination: "[DEST]".into(),
            misleading: "[DEST]".into(),
            turn_point: "[TP]".into(),
            road: "[ROAD]".into(),
            obstacle: "[OBST]".into(),
            user_icon: "[USER_ICON]".into(),
        }
    }

    pub fn pack(name: &str) -> Result<Self, PromptError> {
        match name {
            "ascii" => Ok(Self::ascii()),
            "emoji" => Ok(Self::emoji()),
            "placeholder" | "placeholders" => Ok(Self::placeholders()),
            other => Err(PromptError::UnknownName(format!("glyph pack {other:?}"))),
        }
    }

    /// Glyphs must be non-empty, whitespace-free and pairwise distinct,
    /// except that `misleading` may share the destination glyph.
    pub fn validate(&self) -> Result<(), PromptError> {
        let all = [
            ("start", &self.start),
            ("destination", &self.destination),
            ("misleading", &self.misleading),
            ("turn_point", &self.turn_point),
            ("road", &self.road),
            ("obstacle", &self.obstacle),
            ("user_icon", &self.user_icon),
        ];
        for (name, g) in all {
            if g.is_empty() || g.chars().any(char::is_whitespace) {
                return Err(PromptError::InvalidGlyphs(format!("{name} glyph {g:?}")));
            }
        }
        let distinct = [
            &self.start,
            &self.destination,
            &self.turn_point,
            &self.road,
            &self.obstacle,
            &self.user_icon,
        ];
        for (i, a) in distinct.iter().enumerate() {
            if distinct[i + 1..].contains(a) {
                return Err(PromptError::InvalidGlyphs(format!(
                    "glyph {a:?} used twice"
                )));
            }
        }
        if self.misleading != self.destination && distinct.contains(&&self.misleading) {
            return Err(PromptError::InvalidGlyphs(
                "misleading glyph collides".into(),
            ));
        }
        Ok(())
    }

    pub fn is_known(&self, token: &str) -> bool {
        [
            &self.start,
            &self.destination,
            &self.misleading,
            &self.turn_point,
            &self.road,
            &self.obstacle,
            &self.user_icon,
        ]
        .into_iter()
        .any(|g| g == token)
    }
}

impl Default for GlyphTable {
    fn default() -> Self {
        Self::ascii()
    }
}

/// Static token for a cell, ignoring any position marker.
pub fn cell_glyph<'g>(
    maze: &Maze,
    c: Coord,
    glyphs: &'g GlyphTable,
    show_turn_points: bool,
) -> &'g str {
    if c == maze.start() {
        &glyphs.start
    } else if c == maze.destination() {
        &glyphs.destination
    } else if maze.misleading().contains(&c) {
        &glyphs.misleading
    } else if maze.is_obstacle(c) {
        &glyphs.obstacle
    } else if show_turn_points && maze.turn_points().contains(&c) {
        &glyphs.turn_point
    } else {
        &glyphs.road
    }
}

/// `height` lines of `width` space-separated tokens, row 0 first,
/// newline-terminated. The user icon replaces whatever is at `at`.
pub fn render_map(maze: &Maze, at: Option<Coord>, glyphs: &GlyphTable) -> String {
    render_map_with(maze, at, glyphs, true)
}

pub fn render_map_with(
    maze: &Maze,
    at: Option<Coord>,
    glyphs: &GlyphTable,
    show_turn_points: bool,
) -> String {
    let mut out = String::with_capacity(maze.area() * 2);
    for r in 0..maze.height() {
        for c in 0..maze.width() {
            let cell = Coord::new(r, c);
            if c > 0 {
                out.push(' ');
            }
            if Some(cell) == at {
                out.push_str(&glyphs.user_icon);
            } else {
                out.push_str(cell_glyph(maze, cell, glyphs, show_turn_points));
            }
        }
        out.push('\n');
    }
    out
}

const BUILTIN_TEMPLATES: &[(&str, &str)] = &[
    (
        "map_definition",
        include_str!("../templates/map_definition.txt"),
    ),
    (
        "next_step_context",
        include_str!("../templates/next_step_context.txt"),
    ),
    (
        "next_step_cot",
        include_str!("../templates/next_step_cot.txt"),
    ),
    (
        "next_step_vot",
        include_str!("../templates/next_step_vot.txt"),
    ),
    (
        "next_step_star",
        include_str!("../templates/next_step_star.txt"),
    ),
    (
        "route_planning_context",
        include_str!("../templates/route_planning_context.txt"),
    ),
    (
        "route_planning_cot",
        include_str!("../templates/route_planning_cot.txt"),
    ),
    (
        "route_planning_vot",
        include_str!("../templates/route_planning_vot.txt"),
    ),
    (
        "route_planning_star",
        include_str!("../templates/route_planning_star.txt"),
    ),
    (
        "turnpoint_context",
        include_str!("../templates/turnpoint_context.txt"),
    ),
    (
        "turnpoint_cot",
        include_str!("../templates/turnpoint_cot.txt"),
    ),
    (
        "turnpoint_vot",
        include_str!("../templates/turnpoint_vot.txt"),
    ),
    (
        "turnpoint_star",
        include_str!("../templates/turnpoint_star.txt"),
    ),
    (
        "rule_context",
        include_str!("../templates/rule_context.txt"),
    ),
    ("rule_cot", include_str!("../templates/rule_cot.txt")),
    ("rule_vot", include_str!("../templates/rule_vot.txt")),
    ("rule_star", include_str!("../templates/rule_star.txt")),
];

fn strip_comments(raw: &str) -> String {
    raw.lines()
        .filter(|l| !l.starts_with("%%"))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Template texts keyed by file stem, comments stripped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    files: BTreeMap<String, String>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        TemplateSet {
            files: BUILTIN_TEMPLATES
                .iter()
                .map(|(k, v)| (k.to_string(), strip_comments(v)))
                .collect(),
        }
    }

    /// Built-in set overlaid with every `*.txt` file found in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let io = |source| PromptError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut set = Self::builtin();
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let raw = std::fs::read_to_string(&path).map_err(io)?;
            set.files.insert(stem, strip_comments(&raw));
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.get(name).map(String::as_str)
    }

    pub fn remove(&mut self, name: &str) {
        self.files.remove(name);
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Fills templates for task instances.
#[derive(Debug, Clone, Default)]
pub struct PromptRenderer {
    pub glyphs: GlyphTable,
    pub templates: TemplateSet,
}

impl PromptRenderer {
    pub fn new(glyphs: GlyphTable, templates: TemplateSet) -> Self {
        PromptRenderer { glyphs, templates }
    }

    pub fn render(&self, inst: &TaskInstance, style: Style) -> Result<String, PromptError> {
        let family = inst.family.as_str();
        let body = self
            .templates
            .get(&format!("{family}_{}", style.as_str()))
            .ok_or(PromptError::UnsupportedCombination {
                family: inst.family,
                style,
            })?;
        let context = self.templates.get(&format!("{family}_context")).ok_or(
            PromptError::UnsupportedCombination {
                family: inst.family,
                style,
            },
        )?;

        // Template text first, then glyphs, then data slots.
        let mut text = body
            .replace("[Same Context as CoT]\n", context)
            .replace("[Context]\n", context);
        if let Some(def) = self.templates.get("map_definition") {
            text = text.replace("[Map Definition]", def.trim_end());
        }
        text = self.substitute_glyphs(&text);

        let show_tp = inst.family != Family::Turnpoint;
        let map = render_map_with(&inst.maze, None, &self.glyphs, show_tp);
        let map_block = format!("\n{}", map.trim_end());
        text = text
            .replace(" [Full Grid Layout]", &map_block)
            .replace(" [Grid Layout]", &map_block);

        match &inst.payload {
            Payload::NextStep { prefix, .. } => {
                text = text.replace("[Path List]", &prefix.to_string());
            }
            Payload::Turnpoint {
                text: q, options, ..
            }
            | Payload::Rule {
                text: q, options, ..
            } => {
                let opts: Vec<String> = options.iter().map(|(l, v)| format!("{l}. {v}")).collect();
                text = text
                    .replace("[Question]", &self.substitute_glyphs(q))
                    .replace("[Options]", &opts.join("\n"));
            }
            Payload::RoutePlanning => {}
        }
        Ok(text)
    }

    fn substitute_glyphs(&self, text: &str) -> String {
        let g = &self.glyphs;
        text.replace("[START]", &g.start)
            .replace("[DEST]", &g.destination)
            .replace("[TP]", &g.turn_point)
            .replace("[ROAD]", &g.road)
            .replace("[OBST]", &g.obstacle)
            .replace("[USER_ICON]", &g.user_icon)
    }
}

/// Renders with the built-in templates.
pub fn render_prompt(
    inst: &TaskInstance,
    style: Style,
    glyphs: &GlyphTable,
) -> Result<String, PromptError> {
    PromptRenderer::new(glyphs.clone(), TemplateSet::builtin()).render(inst, style)
}

/// One step block of a STAR session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StarStep {
    /// Text after the `stepN:` marker.
    pub description: String,
    pub direction: Direction,
    /// Map with the user icon at the post-move cell.
    pub map_after: Option<String>,
    /// Inline marker for moves that could not be executed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StarSession {
    pub steps: Vec<StarStep>,
    pub summary: Trajectory,
}

impl StarSession {
    pub fn moves(&self) -> Trajectory {
        self.steps.iter().map(|s| s.direction).collect()
    }

    pub fn to_text(&self, glyphs: &GlyphTable) -> String {
        let mut out = steps_to_text(&self.steps, 1, glyphs);
        out.push_str(&summary_line(&self.summary));
        out
    }
}

pub fn summary_line(summary: &Trajectory) -> String {
    format!("Summary of steps: The shortest path is: {summary}\n")
}

/// Step blocks numbered from `first_number`.
pub fn steps_to_text(steps: &[StarStep], first_number: usize, glyphs: &GlyphTable) -> String {
    let mut out = String::new();
    for (i, s) in steps.iter().enumerate() {
        let n = first_number + i;
        out.push_str(&format!("step{n}: {}\n", s.description));
        out.push_str(&format!(
            "After step{n}: current position: {}",
            glyphs.user_icon
        ));
        if let Some(v) = &s.violation {
            out.push_str(&format!(" ({v})"));
        }
        out.push('\n');
        if let Some(m) = &s.map_after {
            out.push_str(m);
        }
    }
    out
}

fn describe(step_number: usize, dir: Direction, maze: &Maze, landed: Coord) -> String {
    let target = if landed == maze.destination() {
        "destination"
    } else if maze.turn_points().contains(&landed) {
        "turn point"
    } else {
        "next cell"
    };
    if step_number == 1 {
        format!("from the starting point, move {dir} to the {target}.")
    } else {
        format!("move {dir} to the {target}.")
    }
}

/// Step blocks for `moves` executed from `from`, where `done` moves have
/// already been made. Invalid moves are depicted as the model implies them:
/// an obstacle collision puts the icon on the obstacle cell, a boundary exit
/// leaves it clamped in place; both carry a violation marker. Returns the
/// steps and the final implied position.
pub fn render_steps(
    maze: &Maze,
    from: Coord,
    done: usize,
    moves: &[Direction],
    glyphs: &GlyphTable,
    include_maps: bool,
) -> (Vec<StarStep>, Coord) {
    let mut at = from;
    let mut steps = Vec::with_capacity(moves.len());
    for (i, &d) in moves.iter().enumerate() {
        let (landed, violation) = match maze.apply_move(at, d) {
            Ok(n) => (n, None),
            Err(MoveError::ObstacleCollision { target }) => {
                (target, Some("invalid: obstacle collision".to_string()))
            }
            Err(_) => (at, Some("invalid: boundary exit".to_string())),
        };
        at = landed;
        steps.push(StarStep {
            description: describe(done + i + 1, d, maze, landed),
            direction: d,
            map_after: include_maps.then(|| render_map(maze, Some(landed), glyphs)),
            violation,
        });
    }
    (steps, at)
}

/// Chosen-format session for a valid trajectory: one step block per move
/// and a closing summary line.
pub fn render_star_session(
    maze: &Maze,
    traj: &Trajectory,
    glyphs: &GlyphTable,
) -> Result<StarSession, PromptError> {
    let trace = maze.execute(traj);
    if let (Some(index), Some(error)) = (trace.first_invalid, trace.failure) {
        return Err(PromptError::InvalidTrajectory { index, error });
    }
    let (steps, _) = render_steps(maze, maze.start(), 0, traj, glyphs, true);
    Ok(StarSession {
        steps,
        summary: traj.clone(),
    })
}
