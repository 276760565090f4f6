use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mazenav_cli::checks;
use mazenav_cli::config::GlobalConfig;
use mazenav_core::dataset::{build_dataset, load_all, load_split, read_jsonl, DatasetConfig};
use mazenav_core::generator::mix_seed;
use mazenav_core::metrics::{parse_for, score_text, ScoreRow};
use mazenav_core::parser::{check_consistency, ParsedResponse};
use mazenav_core::sdpo::{
    build_pair, emit_sft, synthesize_negative, ErrorKind, PairOptions, PreferencePair, SdpoError,
};
use mazenav_core::{
    aggregate, generate, score_route, DifficultyTier, Family, GenConfig, GlyphTable,
    PromptRenderer, Split, Style, TaskInstance, TemplateSet,
};
use mazenav_harness::runner::{RESPONSES_FILE, SCORES_FILE};
use mazenav_harness::{
    confidence_margin, margins_table, run_benchmark, write_reports, BenchOptions, ChatClient,
    EndpointConfig, Layout, MarginRow,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Maze-navigation benchmark tooling: mazes, datasets, prompts, parsing,
/// scoring, segment-level preference data and endpoint benchmarking.
#[derive(Debug, Parser)]
#[command(name = "mazenav", version, propagate_version = true)]
struct Cli {
    /// Print one JSON document instead of human-readable text.
    #[arg(long, global = true)]
    json: bool,
    /// Base seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config file. Defaults to ./mazenav.toml when present.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Glyph pack: ascii, emoji or placeholders.
    #[arg(long, global = true)]
    glyphs: Option<String>,
    /// Directory of template overrides (one .txt per template name).
    #[arg(long, global = true, value_name = "DIR")]
    templates: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate mazes per difficulty tier as JSONL.
    Generate(GenerateArgs),
    /// Build the train/val/test QA dataset.
    Dataset(DatasetArgs),
    /// Render the prompt for one instance.
    Render(RenderArgs),
    /// Parse a raw model response.
    Parse(ParseArgs),
    /// Score a responses file and write report tables.
    Score(ScoreArgs),
    /// Segment-level preference data and confidence margins.
    #[command(subcommand)]
    Sdpo(SdpoCommand),
    /// Run a dataset split against a chat-completion endpoint.
    Bench(BenchArgs),
    /// Re-render report tables from a run directory.
    Report(ReportArgs),
    /// Run the oracle-equivalence and round-trip suites.
    Selftest,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Tiers to generate; defaults to the configured tiers.
    #[arg(long = "tier", value_delimiter = ',')]
    tiers: Vec<u32>,
    /// Mazes per tier.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Grid side length override.
    #[arg(long)]
    side: Option<usize>,
    /// Output JSONL file; defaults to <out_dir>/mazes.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DatasetArgs {
    /// Output directory; defaults to <out_dir>/dataset.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    turnpoint: Option<usize>,
    #[arg(long)]
    rule: Option<usize>,
    #[arg(long)]
    structured: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    tiers: Vec<u32>,
    /// Grid side override for every tier.
    #[arg(long)]
    side: Option<usize>,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    id: String,
    /// cot, vot or star.
    #[arg(long, default_value = "star")]
    style: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ParseKind {
    Route,
    Choice,
    Star,
}

#[derive(Debug, Args)]
struct ParseArgs {
    #[arg(long, value_enum)]
    kind: ParseKind,
    /// Response file; `-` or absent reads stdin.
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
    /// With --id, audits the response against that instance's maze.
    #[arg(long, requires = "id")]
    dataset: Option<PathBuf>,
    #[arg(long, requires = "dataset")]
    id: Option<String>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// JSONL with `id`, `raw_text` and optional `style`, `model`.
    #[arg(long)]
    responses: PathBuf,
    /// Report directory; defaults to <out_dir>/scores.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model label for lines without one.
    #[arg(long, default_value = "model")]
    model: String,
    /// Style for lines without one.
    #[arg(long, default_value = "cot")]
    style: String,
}

#[derive(Debug, Subcommand)]
enum SdpoCommand {
    /// Build segment pairs from model responses on route-planning items.
    Pairs(PairsArgs),
    /// Synthesize negatives of chosen error kinds and pair them.
    Synth(SynthArgs),
    /// Write ground-truth STAR completions for supervised training.
    EmitSft(EmitSftArgs),
    /// Confidence margins of an endpoint on labelled pairs.
    Margins(MarginsArgs),
}

#[derive(Debug, Args)]
struct PairsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    responses: PathBuf,
    /// Segment length; defaults to the configured value.
    #[arg(short = 'L', long = "segment-len")]
    segment_len: Option<usize>,
    /// Output JSONL; defaults to <out_dir>/pairs.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit maps from the step blocks.
    #[arg(long)]
    no_maps: bool,
    /// Style for response lines without one.
    #[arg(long, default_value = "star")]
    style: String,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "train")]
    split: String,
    /// Comma-separated error kinds; all kinds when absent.
    #[arg(long, value_delimiter = ',')]
    kinds: Vec<String>,
    #[arg(long, default_value_t = 1)]
    per_maze: usize,
    #[arg(short = 'L', long = "segment-len")]
    segment_len: Option<usize>,
    #[arg(long)]
    no_maps: bool,
    /// Output JSONL; defaults to <out_dir>/synth_pairs.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EmitSftArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "train")]
    split: String,
    /// Output JSONL; defaults to <out_dir>/sft.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MarginsArgs {
    /// Pairs JSONL; pairs without an error kind are skipped.
    #[arg(long)]
    pairs: PathBuf,
    /// Endpoint config (JSON).
    #[arg(long)]
    endpoint: PathBuf,
    /// Output directory; defaults to <out_dir>/margins.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Comma-separated styles; all three when absent.
    #[arg(long, value_delimiter = ',')]
    styles: Vec<String>,
    /// Endpoint config (JSON).
    #[arg(long)]
    endpoint: PathBuf,
    /// Run directory; defaults to <out_dir>/run. Existing responses are resumed.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportLayout {
    Table1,
    Tiers,
    Table4,
    Margins,
    All,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory holding scores.jsonl and/or margins.jsonl.
    #[arg(long)]
    run: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    layout: ReportLayout,
}

/// What a subcommand prints: JSON under `--json`, text otherwise.
struct Output {
    json: Value,
    text: String,
    ok: bool,
}

impl Output {
    fn ok(json: Value, text: impl Into<String>) -> Self {
        Output {
            json,
            text: text.into(),
            ok: true,
        }
    }
}

/// Resolved global settings.
struct Ctx {
    cfg: GlobalConfig,
    templates: Option<PathBuf>,
}

impl Ctx {
    fn renderer(&self) -> Result<PromptRenderer> {
        let templates = match &self.templates {
            Some(dir) => TemplateSet::load_dir(dir)?,
            None => TemplateSet::builtin(),
        };
        Ok(PromptRenderer::new(
            GlyphTable::pack(&self.cfg.glyphs)?,
            templates,
        ))
    }

    fn out_path(&self, explicit: Option<PathBuf>, default: &str) -> PathBuf {
        explicit.unwrap_or_else(|| self.cfg.out_dir.join(default))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let json = cli.json;
    match run(cli) {
        Ok(out) => {
            if json {
                println!("{}", out.json);
            } else {
                print!("{}", out.text);
                if !out.text.is_empty() && !out.text.ends_with('\n') {
                    println!();
                }
            }
            if out.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            let reason = format!("{e:#}").replace('\n', " ");
            if json {
                println!("{}", json!({"ok": false, "error": reason}));
            }
            eprintln!("error: {reason}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<Output> {
    let mut cfg = GlobalConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(g) = cli.glyphs {
        cfg.glyphs = g;
    }
    cfg.validate()?;
    let ctx = Ctx {
        cfg,
        templates: cli.templates,
    };
    match cli.command {
        Command::Generate(a) => cmd_generate(&ctx, a),
        Command::Dataset(a) => cmd_dataset(&ctx, a),
        Command::Render(a) => cmd_render(&ctx, a),
        Command::Parse(a) => cmd_parse(&ctx, a),
        Command::Score(a) => cmd_score(&ctx, a),
        Command::Sdpo(SdpoCommand::Pairs(a)) => cmd_pairs(&ctx, a),
        Command::Sdpo(SdpoCommand::Synth(a)) => cmd_synth(&ctx, a),
        Command::Sdpo(SdpoCommand::EmitSft(a)) => cmd_emit_sft(&ctx, a),
        Command::Sdpo(SdpoCommand::Margins(a)) => cmd_margins(&ctx, a),
        Command::Bench(a) => cmd_bench(&ctx, a),
        Command::Report(a) => cmd_report(a),
        Command::Selftest => cmd_selftest(&ctx),
    }
}

fn tiers(list: &[u32], fallback: &[u32]) -> Result<Vec<DifficultyTier>> {
    let list = if list.is_empty() { fallback } else { list };
    list.iter()
        .map(|&k| DifficultyTier::new(k).map_err(Into::into))
        .collect()
}

fn parse_style(s: &str) -> Result<Style> {
    s.parse().map_err(|e| anyhow!("{e}"))
}

fn parse_split(s: &str) -> Result<Split> {
    Ok(s.parse()?)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut body = Vec::new();
    for item in items {
        serde_json::to_writer(&mut body, item)?;
        body.push(b'\n');
    }
    let mut f =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(&body)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn find_instance(dataset: &Path, id: &str) -> Result<TaskInstance> {
    load_all(dataset)?
        .into_iter()
        .find(|i| i.id == id)
        .ok_or_else(|| anyhow!("no instance {id:?} in {}", dataset.display()))
}

fn cmd_generate(ctx: &Ctx, a: GenerateArgs) -> Result<Output> {
    let tiers = tiers(&a.tiers, &ctx.cfg.tiers)?;
    let out = ctx.out_path(a.out, "mazes.jsonl");
    let mut mazes = Vec::new();
    let mut per_tier = BTreeMap::new();
    for tier in tiers {
        let base = mix_seed(ctx.cfg.seed, u64::from(tier.k()));
        for i in 0..a.count {
            let mut gc = GenConfig::for_tier(tier, mix_seed(base, i as u64));
            if let Some(side) = a.side {
                gc.grid_side = side;
            }
            gc.validate()?;
            mazes.push(generate(&gc).with_context(|| format!("tier {} maze {i}", tier.k()))?);
        }
        per_tier.insert(tier.k().to_string(), a.count);
    }
    write_jsonl(&out, &mazes)?;
    Ok(Output::ok(
        json!({"ok": true, "path": out, "mazes": mazes.len(), "per_tier": per_tier}),
        format!("wrote {} mazes to {}", mazes.len(), out.display()),
    ))
}

fn cmd_dataset(ctx: &Ctx, a: DatasetArgs) -> Result<Output> {
    let cfg = DatasetConfig {
        turnpoint: a.turnpoint.unwrap_or(ctx.cfg.turnpoint),
        rule: a.rule.unwrap_or(ctx.cfg.rule),
        structured: a.structured.unwrap_or(ctx.cfg.structured),
        seed: ctx.cfg.seed,
        tiers: tiers(&a.tiers, &ctx.cfg.tiers)?,
        grid_side: a.side,
        dead_ends: None,
        misleading: None,
    };
    let out = ctx.out_path(a.out, "dataset");
    let manifest = build_dataset(&cfg, &out)?;
    let c = &manifest.counts;
    let splits: BTreeMap<&str, usize> = manifest
        .split_sizes
        .iter()
        .map(|(s, n)| (s.as_str(), *n))
        .collect();
    let text = format!(
        "wrote {} instances to {} (turnpoint {}, rule {}, structured {}; train {}, val {}, test {})",
        c.total,
        out.display(),
        c.turnpoint,
        c.rule,
        c.structured,
        splits.get("train").unwrap_or(&0),
        splits.get("val").unwrap_or(&0),
        splits.get("test").unwrap_or(&0),
    );
    Ok(Output::ok(
        json!({"ok": true, "path": out, "counts": c, "splits": splits, "strata": manifest.strata}),
        text,
    ))
}

fn cmd_render(ctx: &Ctx, a: RenderArgs) -> Result<Output> {
    let inst = find_instance(&a.dataset, &a.id)?;
    let style = parse_style(&a.style)?;
    let prompt = ctx.renderer()?.render(&inst, style)?;
    Ok(Output::ok(
        json!({"ok": true, "id": inst.id, "style": style, "prompt": prompt}),
        prompt,
    ))
}

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
        }
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn cmd_parse(ctx: &Ctx, a: ParseArgs) -> Result<Output> {
    let text = read_input(a.input.as_deref())?;
    let glyphs = GlyphTable::pack(&ctx.cfg.glyphs)?;
    let parsed = match a.kind {
        ParseKind::Route => ParsedResponse::route(&text),
        ParseKind::Choice => ParsedResponse::choice(&text),
        ParseKind::Star => ParsedResponse::star(&text, &glyphs),
    };
    let mut doc = json!({"ok": true, "parsed": parsed});
    let mut lines = vec![format!("kind: {:?}", parsed.kind)];
    if let Some(t) = &parsed.trajectory {
        lines.push(format!("trajectory: {t}"));
    }
    if let Some(l) = parsed.choice {
        lines.push(format!("choice: {}", l.as_char()));
    }
    for d in &parsed.diagnostics {
        lines.push(format!("note: {d}"));
    }
    if let (Some(dir), Some(id)) = (&a.dataset, &a.id) {
        let inst = find_instance(dir, id)?;
        if let Some(session) = &parsed.session {
            let report = check_consistency(&inst.maze, session, &glyphs);
            lines.push(format!("violations: {}", report.violations.len()));
            doc["consistency"] = serde_json::to_value(&report)?;
        }
        if inst.family == Family::RoutePlanning {
            let score = score_route(&inst.maze, parsed.trajectory.as_ref());
            lines.push(format!("CR {:.4}, SR {}", score.cr, score.sr));
            doc["score"] = serde_json::to_value(score)?;
        }
    }
    Ok(Output::ok(doc, lines.join("\n")))
}

/// One line of a responses file given to `score` and `sdpo pairs`.
#[derive(Debug, Deserialize)]
struct ResponseLine {
    id: String,
    raw_text: String,
    #[serde(default)]
    style: Option<Style>,
    #[serde(default)]
    model: Option<String>,
}

fn cmd_score(ctx: &Ctx, a: ScoreArgs) -> Result<Output> {
    let default_style = parse_style(&a.style)?;
    let glyphs = GlyphTable::pack(&ctx.cfg.glyphs)?;
    let instances: BTreeMap<String, TaskInstance> = load_all(&a.dataset)?
        .into_iter()
        .map(|i| (i.id.clone(), i))
        .collect();
    let lines: Vec<ResponseLine> = read_jsonl(&a.responses)?;
    let mut unknown = 0;
    let mut rows: Vec<ScoreRow> = Vec::new();
    for l in &lines {
        let Some(inst) = instances.get(&l.id) else {
            unknown += 1;
            continue;
        };
        let model = l.model.as_deref().unwrap_or(&a.model);
        let style = l.style.unwrap_or(default_style);
        rows.push(score_text(inst, model, style, &l.raw_text, &glyphs));
    }
    rows.sort_by(|x, y| {
        (&x.model, x.family, x.tier, x.style, &x.id)
            .cmp(&(&y.model, y.family, y.tier, y.style, &y.id))
    });
    let report = aggregate(&rows);
    let out = ctx.out_path(a.out, "scores");
    write_reports(&report, &out)?;
    Ok(Output::ok(
        json!({"ok": true, "path": out, "scored": rows.len(), "unknown_ids": unknown, "summary": report.summary}),
        format!(
            "scored {} responses ({} unknown ids) into {}\n{}",
            rows.len(),
            unknown,
            out.display(),
            report.table1_text()
        ),
    ))
}

fn pair_options(ctx: &Ctx, segment_len: Option<usize>, no_maps: bool) -> Result<PairOptions> {
    let renderer = ctx.renderer()?;
    Ok(PairOptions {
        segment_len: segment_len.unwrap_or(ctx.cfg.segment_len),
        include_maps: !no_maps,
        glyphs: renderer.glyphs.clone(),
        renderer,
    })
}

fn cmd_pairs(ctx: &Ctx, a: PairsArgs) -> Result<Output> {
    let opts = pair_options(ctx, a.segment_len, a.no_maps)?;
    let default_style = parse_style(&a.style)?;
    let instances: BTreeMap<String, TaskInstance> = load_all(&a.dataset)?
        .into_iter()
        .map(|i| (i.id.clone(), i))
        .collect();
    let lines: Vec<ResponseLine> = read_jsonl(&a.responses)?;
    let (mut skipped, mut unparseable, mut correct) = (0, 0, 0);
    let mut pairs = Vec::new();
    for l in &lines {
        let Some(inst) = instances
            .get(&l.id)
            .filter(|i| i.family == Family::RoutePlanning)
        else {
            skipped += 1;
            continue;
        };
        let style = l.style.unwrap_or(default_style);
        let Some(traj) = parse_for(inst, style, &l.raw_text, &opts.glyphs).trajectory else {
            unparseable += 1;
            continue;
        };
        match build_pair(inst, &traj, &opts)? {
            Some(p) => pairs.push(p),
            None => correct += 1,
        }
    }
    let out = ctx.out_path(a.out, "pairs.jsonl");
    write_jsonl(&out, &pairs)?;
    Ok(Output::ok(
        json!({"ok": true, "path": out, "pairs": pairs.len(), "correct": correct,
               "unparseable": unparseable, "skipped": skipped}),
        format!(
            "wrote {} pairs to {} ({correct} correct, {unparseable} unparseable, {skipped} not route planning)",
            pairs.len(),
            out.display()
        ),
    ))
}

fn cmd_synth(ctx: &Ctx, a: SynthArgs) -> Result<Output> {
    let opts = pair_options(ctx, a.segment_len, a.no_maps)?;
    let kinds: Vec<ErrorKind> = if a.kinds.is_empty() {
        ErrorKind::ALL.to_vec()
    } else {
        a.kinds
            .iter()
            .map(|k| k.parse().map_err(|e| anyhow!("{e}")))
            .collect::<Result<_>>()?
    };
    let mut instances: Vec<TaskInstance> = load_split(&a.dataset, parse_split(&a.split)?)?
        .into_iter()
        .filter(|i| i.family == Family::RoutePlanning)
        .collect();
    instances.sort_by(|x, y| x.id.cmp(&y.id));
    let mut pairs = Vec::new();
    let mut infeasible: BTreeMap<String, usize> = BTreeMap::new();
    for (n, inst) in instances.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(ctx.cfg.seed, n as u64));
        let truth = inst
            .answer_key
            .as_route()
            .ok_or_else(|| anyhow!("{} has no route key", inst.id))?;
        for &kind in &kinds {
            for _ in 0..a.per_maze {
                let neg = match synthesize_negative(&inst.maze, truth, kind, &mut rng) {
                    Ok(t) => t,
                    Err(SdpoError::Infeasible(_)) => {
                        *infeasible.entry(kind.to_string()).or_default() += 1;
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                if let Some(mut p) = build_pair(inst, &neg, &opts)? {
                    p.error_kind = Some(kind);
                    pairs.push(p);
                }
            }
        }
    }
    let out = ctx.out_path(a.out, "synth_pairs.jsonl");
    write_jsonl(&out, &pairs)?;
    Ok(Output::ok(
        json!({"ok": true, "path": out, "pairs": pairs.len(), "mazes": instances.len(), "infeasible": infeasible}),
        format!(
            "wrote {} pairs from {} mazes to {}",
            pairs.len(),
            instances.len(),
            out.display()
        ),
    ))
}

fn cmd_emit_sft(ctx: &Ctx, a: EmitSftArgs) -> Result<Output> {
    let renderer = ctx.renderer()?;
    let mut instances = load_split(&a.dataset, parse_split(&a.split)?)?;
    instances.sort_by(|x, y| x.id.cmp(&y.id));
    let records = instances
        .iter()
        .map(|i| emit_sft(i, &renderer))
        .collect::<Result<Vec<_>, _>>()?;
    let out = ctx.out_path(a.out, "sft.jsonl");
    write_jsonl(&out, &records)?;
    Ok(Output::ok(
        json!({"ok": true, "path": out, "records": records.len()}),
        format!("wrote {} records to {}", records.len(), out.display()),
    ))
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?)
}

fn cmd_margins(ctx: &Ctx, a: MarginsArgs) -> Result<Output> {
    let endpoint = EndpointConfig::load(&a.endpoint)?;
    let pairs: Vec<PreferencePair> = read_jsonl(&a.pairs)?;
    let labelled: Vec<(&PreferencePair, ErrorKind)> = pairs
        .iter()
        .filter_map(|p| p.error_kind.map(|k| (p, k)))
        .collect();
    if labelled.is_empty() {
        bail!("no pairs with an error kind in {}", a.pairs.display());
    }
    let model = endpoint.model.clone();
    let rows = runtime()?.block_on(async {
        let client = ChatClient::new(endpoint)?;
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
        let mut rows = Vec::new();
        for (p, kind) in &labelled {
            let (margin, mode) = confidence_margin(&client, p, &mut rng).await?;
            rows.push(MarginRow {
                model: model.clone(),
                instance_id: p.instance_id.clone(),
                kind: *kind,
                mode,
                margin,
            });
        }
        Ok::<_, anyhow::Error>(rows)
    })?;
    let out = ctx.out_path(a.out, "margins");
    write_jsonl(&out.join("margins.jsonl"), &rows)?;
    let (csv, text) = margins_table(&rows);
    std::fs::write(out.join("margins.csv"), &csv)?;
    std::fs::write(out.join("margins.txt"), &text)?;
    Ok(Output::ok(
        json!({"ok": true, "path": out, "pairs": rows.len(), "skipped": pairs.len() - rows.len(), "csv": csv}),
        text,
    ))
}

fn cmd_bench(ctx: &Ctx, a: BenchArgs) -> Result<Output> {
    let endpoint = EndpointConfig::load(&a.endpoint)?;
    let styles: Vec<Style> = if a.styles.is_empty() {
        Style::ALL.to_vec()
    } else {
        a.styles
            .iter()
            .map(|s| parse_style(s))
            .collect::<Result<_>>()?
    };
    let opts = BenchOptions {
        dataset_dir: a.dataset,
        split: parse_split(&a.split)?,
        styles,
        out_dir: ctx.out_path(a.out, "run"),
        renderer: ctx.renderer()?,
        limit: a.limit,
    };
    let summary = runtime()?.block_on(run_benchmark(&opts, &endpoint))?;
    Ok(Output::ok(
        json!({"ok": true, "path": opts.out_dir, "dispatched": summary.dispatched,
               "resumed": summary.resumed, "summary": summary.report.summary}),
        format!(
            "dispatched {}, resumed {}; responses in {}\n{}",
            summary.dispatched,
            summary.resumed,
            opts.out_dir.join(RESPONSES_FILE).display(),
            summary.report.table1_text()
        ),
    ))
}

fn cmd_report(a: ReportArgs) -> Result<Output> {
    let mut doc = serde_json::Map::new();
    let mut text = String::new();
    let wants = |l: ReportLayout| a.layout == l || a.layout == ReportLayout::All;
    let scores = a.run.join(SCORES_FILE);
    if [
        ReportLayout::Table1,
        ReportLayout::Tiers,
        ReportLayout::Table4,
    ]
    .into_iter()
    .any(wants)
    {
        let rows: Vec<ScoreRow> = read_jsonl(&scores)?;
        let report = aggregate(&rows);
        for (flag, layout) in [
            (ReportLayout::Table1, Layout::Table1),
            (ReportLayout::Tiers, Layout::Tiers),
            (ReportLayout::Table4, Layout::Table4),
        ] {
            if wants(flag) {
                let (csv, txt) = layout.render(&report);
                doc.insert(layout.stem().into(), json!({"csv": csv, "text": txt}));
                text.push_str(&txt);
                text.push('\n');
            }
        }
    }
    let margins = a.run.join("margins.jsonl");
    if a.layout == ReportLayout::Margins || (a.layout == ReportLayout::All && margins.exists()) {
        let rows: Vec<MarginRow> = read_jsonl(&margins)?;
        let (csv, txt) = margins_table(&rows);
        doc.insert("margins".into(), json!({"csv": csv, "text": txt}));
        text.push_str(&txt);
    }
    doc.insert("ok".into(), Value::Bool(true));
    Ok(Output::ok(Value::Object(doc), text))
}

fn cmd_selftest(ctx: &Ctx) -> Result<Output> {
    let results = checks::all(ctx.cfg.seed);
    let ok = results.iter().all(|r| r.passed());
    let mut text: String = results.iter().map(|r| r.line() + "\n").collect();
    for r in &results {
        for ex in &r.examples {
            text.push_str(&format!("  {}: {ex}\n", r.name));
        }
    }
    text.push_str(if ok {
        "selftest passed\n"
    } else {
        "selftest FAILED\n"
    });
    Ok(Output {
        json: json!({"ok": ok, "suites": results}),
        text,
        ok,
    })
}
