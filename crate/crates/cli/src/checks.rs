//! Seeded self-check suites shared by `mazenav selftest` and the
//! acceptance tests. Each suite returns a [`CheckOutcome`] instead of
//! panicking so callers can report every failure.

use std::collections::BTreeSet;
use std::time::Instant;

use mazenav_core::generator::{generate, mix_seed, GenConfig};
use mazenav_core::metrics::score_route;
use mazenav_core::parser::{check_consistency, parse_star_session};
use mazenav_core::prompts::{render_star_session, render_steps};
use mazenav_core::sdpo::{
    build_pair, divergence_index, exhibits, synthesize_negative, ErrorKind, PairOptions,
};
use mazenav_core::solver::{enumerate_paths, optimal_next, shortest_path, ENUMERATION_MAX_LEN};
use mazenav_core::tasks::build_route_planning;
use mazenav_core::{
    Coord, DifficultyTier, Direction, GlyphTable, Maze, StarSession, Style, Trajectory,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Failures kept per suite; the count is always exact.
const MAX_REPORTED: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub examples: Vec<String>,
    pub elapsed_ms: u128,
}

impl CheckOutcome {
    fn new(name: &'static str) -> Self {
        CheckOutcome {
            name,
            cases: 0,
            failures: 0,
            examples: Vec::new(),
            elapsed_ms: 0,
        }
    }

    fn fail(&mut self, msg: String) {
        self.failures += 1;
        if self.examples.len() < MAX_REPORTED {
            self.examples.push(msg);
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {} cases, {} failures, {} ms",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.failures,
            self.elapsed_ms
        )
    }
}

/// Random solvable maze of at most 6x6 cells, solved and annotated.
pub fn random_small_maze(rng: &mut impl Rng) -> Maze {
    loop {
        let w = rng.gen_range(2..=6usize);
        let h = rng.gen_range(2..=6usize);
        let density = rng.gen_range(0.0..0.4);
        let mut cells: Vec<Coord> = (0..h)
            .flat_map(|r| (0..w).map(move |c| Coord::new(r, c)))
            .collect();
        cells.shuffle(rng);
        let (start, dest) = (cells[0], cells[1]);
        let obstacles: Vec<Coord> = cells[2..]
            .iter()
            .copied()
            .filter(|_| rng.gen_bool(density))
            .collect();
        let Ok(m) = Maze::layout(w, h, obstacles, start, dest) else {
            continue;
        };
        if let Ok(m) = m.solved() {
            return m;
        }
    }
}

/// Tier 1..=3 generated maze for the given seed.
fn generated(seed: u64) -> Maze {
    let k = 1 + (seed % 3) as u32;
    let tier = DifficultyTier::new(k).expect("tier is positive");
    let mut salt = 0;
    loop {
        if let Ok(m) = generate(&GenConfig::for_tier(tier, mix_seed(seed, salt))) {
            return m;
        }
        salt += 1;
    }
}

fn random_walk(m: &Maze, len: usize, rng: &mut impl Rng) -> Trajectory {
    let mut at = m.start();
    let mut t = Trajectory::default();
    for _ in 0..len {
        let opts: Vec<_> = m.open_neighbors(at).collect();
        let Some(&(d, n)) = opts.choose(rng) else {
            break;
        };
        t.push(d);
        at = n;
    }
    t
}

/// BFS shortest length against the brute-force minimum, and `optimal_next`
/// against the moves that extend some enumerated shortest path.
pub fn solver_oracle(cases: usize, seed: u64) -> CheckOutcome {
    let started = Instant::now();
    let mut out = CheckOutcome::new("solver oracle equivalence");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.cases < cases {
        let m = random_small_maze(&mut rng);
        let sol = match shortest_path(&m) {
            Ok(s) => s,
            Err(e) => {
                out.cases += 1;
                out.fail(format!("{}: solver error {e}", m.id()));
                continue;
            }
        };
        // Smallest budget with any enumerated path; independent of BFS.
        let mut found = None;
        for budget in 0..=ENUMERATION_MAX_LEN {
            let paths = enumerate_paths(&m, budget).expect("small maze within guard");
            if !paths.is_empty() {
                found = Some(paths);
                break;
            }
        }
        let Some(paths) = found else {
            // Too long for the oracle; draw another maze.
            continue;
        };
        out.cases += 1;
        let min = paths.iter().map(|p| p.len()).min().unwrap_or(0);
        if sol.length != min || sol.path.len() != min {
            out.fail(format!("{}: bfs {} vs oracle {min}", m.id(), sol.length));
            continue;
        }
        let shortest: Vec<&Trajectory> = paths.iter().filter(|p| p.len() == min).collect();
        if !shortest.contains(&&sol.path) {
            out.fail(format!("{}: canonical path not enumerated", m.id()));
        }
        if sol.is_unique != (shortest.len() == 1) {
            out.fail(format!("{}: uniqueness flag disagrees", m.id()));
        }
        let mut prefixes: BTreeSet<Vec<Direction>> = BTreeSet::new();
        for p in &shortest {
            for k in 0..=p.len() {
                prefixes.insert(p[..k].to_vec());
            }
        }
        for prefix in prefixes {
            let extend: BTreeSet<Direction> = shortest
                .iter()
                .filter(|p| p.len() > prefix.len() && p[..prefix.len()] == prefix[..])
                .map(|p| p[prefix.len()])
                .collect();
            match optimal_next(&m, &Trajectory::new(prefix.clone())) {
                Ok(set) if set == extend => {}
                Ok(set) => out.fail(format!(
                    "{}: optimal_next {set:?} vs oracle {extend:?} after {prefix:?}",
                    m.id()
                )),
                Err(e) => out.fail(format!("{}: optimal_next error {e}", m.id())),
            }
        }
    }
    out.elapsed_ms = started.elapsed().as_millis();
    out
}

const PACKS: [fn() -> GlyphTable; 3] = [
    GlyphTable::ascii,
    GlyphTable::emoji,
    GlyphTable::placeholders,
];

/// Render-then-parse identity on random valid trajectories, plus a clean
/// consistency audit of each maze's ground-truth session.
pub fn star_round_trip(cases: usize, seed: u64) -> CheckOutcome {
    let started = Instant::now();
    let mut out = CheckOutcome::new("STAR round-trip and consistency");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..cases {
        out.cases += 1;
        let m = generated(mix_seed(seed, i as u64));
        let g = PACKS[i % PACKS.len()]();
        let len = rng.gen_range(0..=m.trajectory_cap().min(40));
        let t = random_walk(&m, len, &mut rng);
        let check = |t: &Trajectory| -> Result<StarSession, String> {
            let s = render_star_session(&m, t, &g).map_err(|e| e.to_string())?;
            let (parsed, _) = parse_star_session(&s.to_text(&g), &g).map_err(|e| e.to_string())?;
            if parsed != s || parsed.summary != *t {
                return Err("parse(render) differs".into());
            }
            Ok(parsed)
        };
        if let Err(e) = check(&t) {
            out.fail(format!("{} walk {t}: {e}", m.id()));
        }
        match check(m.optimal_path()) {
            Ok(s) => {
                let report = check_consistency(&m, &s, &g);
                if !report.is_clean() {
                    out.fail(format!("{}: ground truth flagged {:?}", m.id(), report));
                }
            }
            Err(e) => out.fail(format!("{} ground truth: {e}", m.id())),
        }
    }
    out.elapsed_ms = started.elapsed().as_millis();
    out
}

/// Synthetic negatives, cycling through the error kinds. Each must show
/// its kind predicate or a consistency violation, and must not score SR.
pub fn synthetic_negatives(cases: usize, seed: u64) -> CheckOutcome {
    let started = Instant::now();
    let mut out = CheckOutcome::new("synthetic negatives detected");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = GlyphTable::ascii();
    let mut draw = 0u64;
    for i in 0..cases {
        let kind = ErrorKind::ALL[i % ErrorKind::ALL.len()];
        let (m, neg) = loop {
            draw += 1;
            let m = generated(mix_seed(seed, draw));
            if let Ok(neg) = synthesize_negative(&m, m.optimal_path(), kind, &mut rng) {
                break (m, neg);
            }
        };
        out.cases += 1;
        let predicate = exhibits(&m, m.optimal_path(), &neg, kind);
        let (steps, _) = render_steps(&m, m.start(), 0, &neg, &g, true);
        let session = StarSession {
            steps,
            summary: neg.clone(),
        };
        let violated = !check_consistency(&m, &session, &g).is_clean();
        let sr = score_route(&m, Some(&neg)).sr;
        if !(predicate || violated) || sr {
            out.fail(format!(
                "{} {kind}: predicate {predicate}, violation {violated}, sr {sr}",
                m.id()
            ));
        }
    }
    out.elapsed_ms = started.elapsed().as_millis();
    out
}

fn perturb(truth: &[Direction], rng: &mut impl Rng) -> Vec<Direction> {
    let mut v = truth.to_vec();
    match rng.gen_range(0..6) {
        0 => {}
        1 if !v.is_empty() => {
            let i = rng.gen_range(0..v.len());
            v[i] = *Direction::ALL.choose(rng).expect("four directions");
        }
        2 => {
            let i = rng.gen_range(0..=v.len());
            v.insert(i, *Direction::ALL.choose(rng).expect("four directions"));
        }
        3 if !v.is_empty() => {
            let i = rng.gen_range(0..v.len());
            v.remove(i);
        }
        4 => v.truncate(rng.gen_range(0..=v.len())),
        _ => {
            for _ in 0..rng.gen_range(1..4) {
                v.push(*Direction::ALL.choose(rng).expect("four directions"));
            }
        }
    }
    v
}

/// Segment pairs from perturbed outputs: shared prefix, divergence at `e`,
/// verbatim chosen segment, and no pair for identical sequences.
pub fn sdpo_structure(cases: usize, seed: u64) -> CheckOutcome {
    let started = Instant::now();
    let mut out = CheckOutcome::new("SDPO structural properties");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..cases {
        out.cases += 1;
        let m = generated(mix_seed(seed, i as u64));
        let inst = build_route_planning(&m).expect("generated mazes have unique paths");
        let truth = m.optimal_path().to_vec();
        let output = perturb(&truth, &mut rng);
        let len = rng.gen_range(1..=5);
        let opts = PairOptions {
            segment_len: len,
            include_maps: rng.gen_bool(0.5),
            ..PairOptions::default()
        };
        let pair = match build_pair(&inst, &Trajectory::new(output.clone()), &opts) {
            Ok(p) => p,
            Err(e) => {
                out.fail(format!("{}: {e}", inst.id));
                continue;
            }
        };
        let mut problems = Vec::new();
        match (pair, output == truth) {
            (None, true) => {}
            (Some(_), true) => problems.push("pair for identical sequences".to_string()),
            (None, false) => problems.push("no pair for differing sequences".to_string()),
            (Some(p), false) => {
                let e = p.divergence_index;
                if divergence_index(&output, &truth) != Some(e) {
                    problems.push("divergence index disagrees".into());
                }
                if output.get(..e) != truth.get(..e) {
                    problems.push(format!("prefix differs before {e}"));
                }
                if e < output.len().min(truth.len()) && output[e] == truth[e] {
                    problems.push(format!("no divergence at {e}"));
                }
                if e > output.len().min(truth.len()) {
                    problems.push(format!("index {e} beyond both sequences"));
                }
                let end = (e + len).min(truth.len());
                if p.chosen_moves.moves() != &truth[e.min(end)..end] {
                    problems.push("chosen is not the truth window".into());
                }
                let end = (e + len).min(output.len());
                if p.rejected_moves.moves() != &output[e.min(end)..end] {
                    problems.push("rejected is not the output window".into());
                }
                let template = opts.renderer.render(&inst, Style::Star).unwrap_or_default();
                let blocks = p
                    .prompt
                    .strip_prefix(template.as_str())
                    .map(|ctx| ctx.matches("After step").count());
                if blocks != Some(e) {
                    problems.push(format!(
                        "prompt context has {blocks:?} step blocks, want {e}"
                    ));
                }
                if !p.chosen_moves.is_empty() && !p.chosen.starts_with(&format!("step{}:", e + 1)) {
                    problems.push("chosen text misnumbered".into());
                }
            }
        }
        for msg in problems {
            out.fail(format!("{} output {:?}: {msg}", inst.id, output));
        }
    }
    out.elapsed_ms = started.elapsed().as_millis();
    out
}

/// Every suite at the sizes used by `selftest`.
pub fn all(seed: u64) -> Vec<CheckOutcome> {
    vec![
        solver_oracle(200, seed),
        star_round_trip(500, mix_seed(seed, 1)),
        synthetic_negatives(500, mix_seed(seed, 2)),
        sdpo_structure(1000, mix_seed(seed, 3)),
    ]
}
