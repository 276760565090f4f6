//! Route and choice scoring plus report tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::maze::{Maze, Trajectory};
use crate::parser::{parse_choice_or_direction, ParsedResponse, ResponseKind};
use crate::prompts::{GlyphTable, Style};
use crate::solver::shortest_path;
use crate::tasks::{Family, Letter, TaskInstance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteScore {
    pub valid_steps: usize,
    pub optimal_steps: usize,
    pub cr: f64,
    pub sr: bool,
}

fn optimal_len(maze: &Maze) -> usize {
    if maze.optimal_path().is_empty() {
        shortest_path(maze).map_or(0, |s| s.length)
    } else {
        maze.optimal_path().len()
    }
}

/// CR and SR for one predicted trajectory; `None` is an unparseable answer.
pub fn score_route(maze: &Maze, predicted: Option<&Trajectory>) -> RouteScore {
    let optimal_steps = optimal_len(maze);
    let Some(t) = predicted else {
        return RouteScore {
            valid_steps: 0,
            optimal_steps,
            cr: 0.0,
            sr: false,
        };
    };
    let trace = maze.execute(t);
    let valid_steps = trace.valid_steps();
    let cr = if optimal_steps == 0 {
        0.0
    } else {
        (valid_steps as f64 / optimal_steps as f64).min(1.0)
    };
    let sr =
        trace.first_invalid.is_none() && trace.reached_destination && valid_steps == optimal_steps;
    RouteScore {
        valid_steps,
        optimal_steps,
        cr,
        sr,
    }
}

/// True iff `parsed` equals the instance's answer key.
pub fn score_choice(inst: &TaskInstance, parsed: Option<Letter>) -> bool {
    parsed.is_some() && parsed == inst.answer_key.as_choice()
}

/// Per-instance result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: String,
    pub model: String,
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<Style>,
    pub family: Family,
    pub tier: u32,
    pub parsed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<RouteScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

/// Parses a raw response the way its family and style expect.
pub fn parse_for(
    inst: &TaskInstance,
    style: Style,
    raw: &str,
    glyphs: &GlyphTable,
) -> ParsedResponse {
    match inst.family {
        Family::RoutePlanning => {
            let star = (style == Style::Star).then(|| ParsedResponse::star(raw, glyphs));
            match star {
                Some(p) if p.trajectory.is_some() => p,
                _ => ParsedResponse::route(raw),
            }
        }
        Family::NextStep => match parse_choice_or_direction(raw) {
            Ok(l) => ParsedResponse {
                kind: ResponseKind::Choice,
                trajectory: None,
                choice: Some(l),
                session: None,
                diagnostics: Vec::new(),
            },
            Err(_) => ParsedResponse::choice(raw),
        },
        Family::Turnpoint | Family::Rule => ParsedResponse::choice(raw),
    }
}

/// Scores one raw response.
pub fn score_text(
    inst: &TaskInstance,
    model: &str,
    style: Style,
    raw: &str,
    glyphs: &GlyphTable,
) -> ScoreRow {
    let parsed = parse_for(inst, style, raw, glyphs);
    let mut row = ScoreRow {
        id: inst.id.clone(),
        model: model.to_string(),
        variant: style.column_label().to_string(),
        style: Some(style),
        family: inst.family,
        tier: inst.tier,
        parsed: parsed.trajectory.is_some() || parsed.choice.is_some(),
        route: None,
        correct: None,
    };
    if inst.family == Family::RoutePlanning {
        row.route = Some(score_route(&inst.maze, parsed.trajectory.as_ref()));
    } else {
        row.correct = Some(score_choice(inst, parsed.choice));
    }
    row
}

/// Order-independent mean: values are sorted before summation so any
/// permutation of the input gives the same bits.
fn mean(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    Some(xs.into_iter().sum::<f64>() / n)
}

/// Means as percentages; `None` marks an empty group.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rp_cr: Option<f64>,
    pub rp_sr: Option<f64>,
    pub ns_acc: Option<f64>,
    pub tc_acc: Option<f64>,
    pub ru_acc: Option<f64>,
    pub n: usize,
}

impl Metrics {
    fn from_rows<'a>(rows: impl Iterator<Item = &'a ScoreRow>) -> Metrics {
        let mut cr = Vec::new();
        let mut sr = Vec::new();
        let mut acc: BTreeMap<Family, Vec<f64>> = BTreeMap::new();
        let mut n = 0;
        for r in rows {
            n += 1;
            if let Some(s) = r.route {
                cr.push(s.cr);
                sr.push(if s.sr { 1.0 } else { 0.0 });
            }
            if let Some(c) = r.correct {
                acc.entry(r.family)
                    .or_default()
                    .push(if c { 1.0 } else { 0.0 });
            }
        }
        let pct = |v: Option<f64>| v.map(|x| x * 100.0);
        let mut fam = |f: Family| pct(acc.remove(&f).and_then(mean));
        Metrics {
            ns_acc: fam(Family::NextStep),
            tc_acc: fam(Family::Turnpoint),
            ru_acc: fam(Family::Rule),
            rp_cr: pct(mean(cr)),
            rp_sr: pct(mean(sr)),
            n,
        }
    }

    fn values(&self) -> [Option<f64>; 5] {
        [
            self.rp_cr,
            self.rp_sr,
            self.ns_acc,
            self.tc_acc,
            self.ru_acc,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<u32>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table4Row {
    pub model: String,
    pub metric: String,
    pub cot: Option<f64>,
    pub vot: Option<f64>,
    pub ours: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
    /// One row per (model, variant), all tiers pooled.
    pub summary: Vec<SummaryRow>,
    /// One row per (model, variant, tier).
    pub by_tier: Vec<SummaryRow>,
    /// Cross-prompt layout: CR, SR, Acc per model over the three styles.
    pub table4: Vec<Table4Row>,
}

pub const TABLE1_COLUMNS: [&str; 7] = [
    "Model", "Variant", "RP.CR", "RP.SR", "NS.Acc", "TC.Acc", "RU.Acc",
];
pub const TIER_COLUMNS: [&str; 8] = [
    "Model", "Variant", "Tier", "RP.CR", "RP.SR", "NS.Acc", "TC.Acc", "RU.Acc",
];
pub const TABLE4_COLUMNS: [&str; 5] = ["Model", "Metric", "+CoT", "+VoT", "+Ours"];

fn variant_rank(v: &str) -> (usize, String) {
    let rank = Style::ALL
        .iter()
        .position(|s| s.column_label() == v)
        .unwrap_or(Style::ALL.len());
    (rank, v.to_string())
}

fn pct_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Header line plus one comma-separated line per row, quoting as needed.
pub fn render_csv(header: &[&str], body: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in body {
        out.push_str(
            &row.iter()
                .map(|c| csv_field(c))
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push('\n');
    }
    out
}

/// Column-aligned plain-text table with a dashed rule under the header.
pub fn render_text(header: &[&str], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            // Text columns left-aligned, numbers right-aligned.
            if c.parse::<f64>().is_ok() || *c == "--" {
                let _ = write!(s, "{c:>w$}");
            } else {
                let _ = write!(s, "{c:<w$}");
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("  "),
    );
    out.push('\n');
    for row in body {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

/// (model, ranked variant) grouping key.
type GroupKey = (String, (usize, String));
type Getter = fn(&Metrics) -> Option<f64>;

/// Unweighted per-group means.
pub fn aggregate(rows: &[ScoreRow]) -> ScoreReport {
    let mut groups: BTreeMap<GroupKey, Vec<&ScoreRow>> = BTreeMap::new();
    let mut tiers: BTreeMap<(GroupKey, u32), Vec<&ScoreRow>> = BTreeMap::new();
    let mut styles: BTreeMap<(String, Style), Vec<&ScoreRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.model.clone(), variant_rank(&r.variant)))
            .or_default()
            .push(r);
        tiers
            .entry(((r.model.clone(), variant_rank(&r.variant)), r.tier))
            .or_default()
            .push(r);
        if let Some(s) = r.style {
            styles.entry((r.model.clone(), s)).or_default().push(r);
        }
    }
    let summary = groups
        .into_iter()
        .map(|((model, (_, variant)), rs)| SummaryRow {
            model,
            variant,
            tier: None,
            metrics: Metrics::from_rows(rs.into_iter()),
        })
        .collect();
    let by_tier = tiers
        .into_iter()
        .map(|(((model, (_, variant)), tier), rs)| SummaryRow {
            model,
            variant,
            tier: Some(tier),
            metrics: Metrics::from_rows(rs.into_iter()),
        })
        .collect();

    let mut per_model: BTreeMap<String, BTreeMap<Style, Metrics>> = BTreeMap::new();
    for ((model, style), rs) in styles {
        per_model
            .entry(model)
            .or_default()
            .insert(style, Metrics::from_rows(rs.into_iter()));
    }
    let mut table4 = Vec::new();
    for (model, by_style) in per_model {
        let get = |s: Style, f: Getter| by_style.get(&s).and_then(f);
        let metric_rows: [(&str, Getter); 3] = [
            ("CR", |m| m.rp_cr),
            ("SR", |m| m.rp_sr),
            ("Acc", |m| m.ns_acc),
        ];
        for (name, f) in metric_rows {
            table4.push(Table4Row {
                model: model.clone(),
                metric: name.to_string(),
                cot: get(Style::Cot, f),
                vot: get(Style::Vot, f),
                ours: get(Style::Star, f),
            });
        }
    }

    ScoreReport {
        rows: rows.to_vec(),
        summary,
        by_tier,
        table4,
    }
}

impl ScoreReport {
    fn table1_body(&self) -> Vec<Vec<String>> {
        self.summary
            .iter()
            .map(|s| {
                let mut row = vec![s.model.clone(), s.variant.clone()];
                row.extend(s.metrics.values().map(pct_cell));
                row
            })
            .collect()
    }

    fn tier_body(&self) -> Vec<Vec<String>> {
        self.by_tier
            .iter()
            .map(|s| {
                let mut row = vec![
                    s.model.clone(),
                    s.variant.clone(),
                    s.tier.map(|t| t.to_string()).unwrap_or_default(),
                ];
                row.extend(s.metrics.values().map(pct_cell));
                row
            })
            .collect()
    }

    fn table4_body(&self) -> Vec<Vec<String>> {
        self.table4
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    r.metric.clone(),
                    pct_cell(r.cot),
                    pct_cell(r.vot),
                    pct_cell(r.ours),
                ]
            })
            .collect()
    }

    fn as_text(body: Vec<Vec<String>>, numeric_from: usize) -> Vec<Vec<String>> {
        body.into_iter()
            .map(|row| {
                row.into_iter()
                    .enumerate()
                    .map(|(i, c)| {
                        if i >= numeric_from && c.is_empty() {
                            "--".into()
                        } else {
                            c
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn table1_csv(&self) -> String {
        render_csv(&TABLE1_COLUMNS, &self.table1_body())
    }

    pub fn table1_text(&self) -> String {
        render_text(&TABLE1_COLUMNS, &Self::as_text(self.table1_body(), 2))
    }

    pub fn tier_csv(&self) -> String {
        render_csv(&TIER_COLUMNS, &self.tier_body())
    }

    pub fn tier_text(&self) -> String {
        render_text(&TIER_COLUMNS, &Self::as_text(self.tier_body(), 3))
    }

    pub fn table4_csv(&self) -> String {
        render_csv(&TABLE4_COLUMNS, &self.table4_body())
    }

    pub fn table4_text(&self) -> String {
        render_text(&TABLE4_COLUMNS, &Self::as_text(self.table4_body(), 2))
    }
}
