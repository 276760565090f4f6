use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use futures::stream::{self, StreamExt};
use mazenav_core::dataset::load_split;
use mazenav_core::metrics::{aggregate, score_text, ScoreReport, ScoreRow};
use mazenav_core::{PromptRenderer, Split, Style, TaskInstance};
use serde::{Deserialize, Serialize};

use crate::client::ChatClient;
use crate::config::EndpointConfig;
use crate::HarnessError;

pub const RESPONSES_FILE: &str = "responses.jsonl";
pub const SCORES_FILE: &str = "scores.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    /// Retry budget spent without a response; scored as unparseable.
    Exhausted,
}

/// One dispatched (instance, style) request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub style: Style,
    pub model: String,
    pub raw_text: String,
    pub status: RecordStatus,
    pub latency_ms: u64,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub dataset_dir: PathBuf,
    pub split: Split,
    pub styles: Vec<Style>,
    pub out_dir: PathBuf,
    pub renderer: PromptRenderer,
    /// Only the first `limit` instances of the split, by id.
    pub limit: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct BenchSummary {
    pub dispatched: usize,
    pub resumed: usize,
    pub report: ScoreReport,
}

/// Records already present in a checkpoint. A torn final line from an
/// interrupted write is ignored.
pub fn read_checkpoint(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(HarnessError::io(path, e)),
    };
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        let Ok(rec) = serde_json::from_str::<RunRecord>(&line) else {
            continue;
        };
        if seen.insert((rec.id.clone(), rec.style)) {
            out.push(rec);
        }
    }
    Ok(out)
}

fn select(opts: &BenchOptions) -> Result<Vec<TaskInstance>, HarnessError> {
    let mut instances = load_split(&opts.dataset_dir, opts.split)?;
    instances.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(n) = opts.limit {
        instances.truncate(n);
    }
    Ok(instances)
}

/// Renders, dispatches and checkpoints every pending (instance, style)
/// pair, then scores everything in the checkpoint and writes the reports.
///
/// Quota exhaustion and unreachable endpoints stop the run with an error;
/// records written so far stay in the checkpoint and a later call resumes.
pub async fn run_benchmark(
    opts: &BenchOptions,
    endpoint: &EndpointConfig,
) -> Result<BenchSummary, HarnessError> {
    let instances = select(opts)?;
    let client = ChatClient::new(endpoint.clone())?;
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| HarnessError::io(&opts.out_dir, e))?;
    let ckpt = opts.out_dir.join(RESPONSES_FILE);

    let done: BTreeSet<(String, Style)> = read_checkpoint(&ckpt)?
        .into_iter()
        .map(|r| (r.id, r.style))
        .collect();
    let mut jobs = Vec::new();
    for inst in &instances {
        for &style in &opts.styles {
            if !done.contains(&(inst.id.clone(), style)) {
                jobs.push((inst.id.clone(), style, opts.renderer.render(inst, style)?));
            }
        }
    }
    let resumed = done.len();
    tracing::info!(pending = jobs.len(), resumed, "dispatching");

    let mut sink = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&ckpt)
        .map_err(|e| HarnessError::io(&ckpt, e))?;
    let mut results = stream::iter(jobs)
        .map(|(id, style, prompt)| {
            let client = &client;
            async move {
                let outcome = client.chat(&prompt).await?;
                Ok::<_, HarnessError>(RunRecord {
                    id,
                    style,
                    model: endpoint.model.clone(),
                    raw_text: outcome.text.clone().unwrap_or_default(),
                    status: if outcome.text.is_some() {
                        RecordStatus::Ok
                    } else {
                        RecordStatus::Exhausted
                    },
                    latency_ms: outcome.latency_ms,
                    attempts: outcome.attempts,
                    error: outcome.error,
                })
            }
        })
        .buffer_unordered(endpoint.max_concurrency);

    let mut dispatched = 0;
    while let Some(res) = results.next().await {
        let rec = res?;
        let line = serde_json::to_string(&rec).map_err(|e| HarnessError::Config(e.to_string()))?;
        writeln!(sink, "{line}").map_err(|e| HarnessError::io(&ckpt, e))?;
        sink.flush().map_err(|e| HarnessError::io(&ckpt, e))?;
        dispatched += 1;
    }
    drop(results);

    let records = read_checkpoint(&ckpt)?;
    let report = score_records(&instances, &records, &endpoint.model, &opts.renderer);
    write_reports(&report, &opts.out_dir)?;
    Ok(BenchSummary {
        dispatched,
        resumed,
        report,
    })
}

/// Scores records against their instances. Records for unknown ids are
/// skipped; rows are ordered by (family, tier, style, id).
pub fn score_records(
    instances: &[TaskInstance],
    records: &[RunRecord],
    model: &str,
    renderer: &PromptRenderer,
) -> ScoreReport {
    let by_id: BTreeMap<&str, &TaskInstance> =
        instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut rows: Vec<ScoreRow> = records
        .iter()
        .filter_map(|r| {
            let inst = by_id.get(r.id.as_str())?;
            Some(score_text(
                inst,
                model,
                r.style,
                &r.raw_text,
                &renderer.glyphs,
            ))
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.family, a.tier, a.style, &a.id).cmp(&(b.family, b.tier, b.style, &b.id))
    });
    aggregate(&rows)
}

/// Report layouts written by [`write_reports`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Table1,
    Tiers,
    Table4,
}

impl Layout {
    pub const ALL: [Layout; 3] = [Layout::Table1, Layout::Tiers, Layout::Table4];

    pub fn stem(self) -> &'static str {
        match self {
            Layout::Table1 => "table1",
            Layout::Tiers => "tiers",
            Layout::Table4 => "table4",
        }
    }

    /// `(csv, text)` renderings.
    pub fn render(self, report: &ScoreReport) -> (String, String) {
        match self {
            Layout::Table1 => (report.table1_csv(), report.table1_text()),
            Layout::Tiers => (report.tier_csv(), report.tier_text()),
            Layout::Table4 => (report.table4_csv(), report.table4_text()),
        }
    }
}

/// Writes scores.jsonl plus a CSV and a text file per layout.
pub fn write_reports(report: &ScoreReport, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut scores = String::new();
    for row in &report.rows {
        scores.push_str(
            &serde_json::to_string(row).map_err(|e| HarnessError::Config(e.to_string()))?,
        );
        scores.push('\n');
    }
    let write = |name: String, body: &str| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| HarnessError::io(&p, e))
    };
    write(SCORES_FILE.to_string(), &scores)?;
    for layout in Layout::ALL {
        let (csv, text) = layout.render(report);
        write(format!("{}.csv", layout.stem()), &csv)?;
        write(format!("{}.txt", layout.stem()), &text)?;
    }
    Ok(())
}
