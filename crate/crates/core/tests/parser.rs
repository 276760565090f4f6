use mazenav_core::generator::{generate, GenConfig};
use mazenav_core::parser::{
    check_consistency, implied_move, parse_star_session, ParsedResponse, ResponseKind,
    ViolationKind,
};
use mazenav_core::prompts::render_map;
use mazenav_core::{render_star_session, DifficultyTier, Direction, GlyphTable, Maze, Trajectory};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn maze_for(seed: u64, k: u32) -> Maze {
    generate(&GenConfig::for_tier(DifficultyTier::new(k).unwrap(), seed)).unwrap()
}

fn random_walk(m: &Maze, len: usize, rng: &mut impl Rng) -> Trajectory {
    let mut at = m.start();
    let mut t = Trajectory::default();
    for _ in 0..len {
        let opts: Vec<_> = m.open_neighbors(at).collect();
        if opts.is_empty() {
            break;
        }
        let (d, n) = opts[rng.gen_range(0..opts.len())];
        t.push(d);
        at = n;
    }
    t
}

fn sample() -> (Maze, GlyphTable, String) {
    let m = Maze::from_ascii("S . . # .\n# # . # .\n. . . . .\n. # # # D")
        .unwrap()
        .solved()
        .unwrap();
    let g = GlyphTable::ascii();
    let text = render_star_session(&m, m.optimal_path(), &g)
        .unwrap()
        .to_text(&g);
    (m, g, text)
}

#[test]
fn ground_truth_session_is_clean() {
    let (m, g, text) = sample();
    let (s, diags) = parse_star_session(&text, &g).unwrap();
    assert!(diags.is_empty(), "{diags:?}");
    assert_eq!(&s.summary, m.optimal_path());
    assert!(check_consistency(&m, &s, &g).is_clean());
}

#[test]
fn move_left_drawn_right_is_logical_inconsistency() {
    let (m, g, _) = sample();
    // Step 2 is "right"; redeclare it as "left" but keep the map.
    let mut s = render_star_session(&m, m.optimal_path(), &g).unwrap();
    s.steps[1].direction = Direction::Left;
    s.steps[1].description = "move left to the turn point.".into();
    let text = s.to_text(&g);
    let (parsed, _) = parse_star_session(&text, &g).unwrap();
    let report = check_consistency(&m, &parsed, &g);
    assert!(
        report
            .violations
            .iter()
            .any(|v| v.step == 1 && v.kind == ViolationKind::LogicalInconsistency),
        "{report:?}"
    );
}

#[test]
fn moved_obstacle_is_structural_corruption() {
    let (m, g, text) = sample();
    // First map line of step 1 is "S @ T # ."; move the obstacle left.
    let corrupted = text.replacen("S @ T # .", "S @ # . .", 1);
    let (s, _) = parse_star_session(&corrupted, &g).unwrap();
    let report = check_consistency(&m, &s, &g);
    assert_eq!(report.violations.len(), 1);
    assert_eq!(report.violations[0].step, 0);
    assert_eq!(
        report.violations[0].kind,
        ViolationKind::StructuralCorruption
    );
}

#[test]
fn obstacle_step_is_constraint_violation() {
    let (m, g, _) = sample();
    let (steps, _) =
        mazenav_core::prompts::render_steps(&m, m.start(), 0, &[Direction::Down], &g, true);
    let s = mazenav_core::StarSession {
        steps,
        summary: vec![Direction::Down].into(),
    };
    let (parsed, _) = parse_star_session(&s.to_text(&g), &g).unwrap();
    assert_eq!(parsed, s);
    let report = check_consistency(&m, &parsed, &g);
    assert_eq!(report.violations.len(), 1);
    assert_eq!(
        report.violations[0].kind,
        ViolationKind::ConstraintViolation
    );
}

#[test]
fn summary_without_maps() {
    let g = GlyphTable::ascii();
    let text = "step1: from the starting point, move right to the next cell.\nstep2: move down to the destination.\nSummary of steps: The shortest path is: [\"right\", \"down\"]\n";
    let (s, diags) = parse_star_session(text, &g).unwrap();
    assert_eq!(s.summary.moves(), &[Direction::Right, Direction::Down]);
    assert_eq!(diags.len(), 2);
    assert!(diags.iter().all(|d| d.contains("no map")));

    let only_summary = "Summary of steps: The shortest path is: [\"up\"]";
    assert_eq!(
        parse_star_session(only_summary, &g)
            .unwrap()
            .0
            .summary
            .moves(),
        &[Direction::Up]
    );
    assert!(parse_star_session("nothing here", &g).is_err());
}

#[test]
fn truncated_final_map() {
    let (_, g, text) = sample();
    let cut = text.find("step4:").unwrap();
    let after = text[cut..].find("@").unwrap() + cut + 20;
    let (s, diags) = parse_star_session(&text[..after], &g).unwrap();
    assert_eq!(s.steps.len(), 4);
    assert!(diags.iter().any(|d| d.contains("summary")));
    let full = parse_star_session(&text, &g).unwrap().0;
    assert_eq!(s.steps[..3], full.steps[..3]);
}

#[test]
fn parsed_response_json() {
    let p = ParsedResponse::route(r#"["up", "left"]"#);
    let v = serde_json::to_value(&p).unwrap();
    assert_eq!(v["kind"], "direction_list");
    assert_eq!(v["trajectory"], serde_json::json!(["up", "left"]));
    assert_eq!(
        ParsedResponse::choice("???").kind,
        ResponseKind::Unparseable
    );
    assert_eq!(
        ParsedResponse::choice("(c)").choice,
        Some(mazenav_core::Letter::C)
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn star_round_trip(seed in any::<u64>(), k in 1u32..=3, len in 0usize..30, pack in 0usize..3) {
        let m = maze_for(seed, k);
        let g = [GlyphTable::ascii(), GlyphTable::emoji(), GlyphTable::placeholders()][pack].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_walk(&m, len, &mut rng);
        let s = render_star_session(&m, &t, &g).unwrap();
        let (parsed, _) = parse_star_session(&s.to_text(&g), &g).unwrap();
        prop_assert_eq!(&parsed.summary, &t);
        prop_assert_eq!(&parsed, &s);
        prop_assert!(check_consistency(&m, &parsed, &g).is_clean());
    }

    #[test]
    fn consistency_matches_oracle(seed in any::<u64>(), moves in proptest::collection::vec(0usize..4, 0..12), corrupt in proptest::option::of((0usize..12, 0usize..64))) {
        let m = maze_for(seed, 1);
        let g = GlyphTable::ascii();
        let dirs: Vec<Direction> = moves.iter().map(|i| Direction::ALL[*i]).collect();
        let (mut steps, _) = mazenav_core::prompts::render_steps(&m, m.start(), 0, &dirs, &g, true);
        if let Some((si, cell)) = corrupt {
            if let Some(step) = steps.get_mut(si) {
                let map = step.map_after.take().unwrap();
                let mut toks: Vec<String> = map.split_whitespace().map(String::from).collect();
                let i = cell % toks.len();
                toks[i] = if toks[i] == "#" { ".".into() } else { "#".into() };
                let w = m.width();
                step.map_after = Some(toks.chunks(w).map(|r| r.join(" ") + "\n").collect());
            }
        }
        let session = mazenav_core::StarSession { steps, summary: dirs.clone().into() };
        // Oracle: every move valid and every map equal to a fresh rendering.
        let mut at = m.start();
        let mut clean = true;
        for s in &session.steps {
            let (n, err) = implied_move(&m, at, s.direction);
            at = n;
            clean &= err.is_none() && s.map_after.as_deref() == Some(render_map(&m, Some(at), &g).as_str());
        }
        prop_assert_eq!(check_consistency(&m, &session, &g).is_clean(), clean);
    }

    #[test]
    fn parsers_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
        let text = String::from_utf8_lossy(&bytes);
        let g = GlyphTable::ascii();
        let _ = ParsedResponse::route(&text);
        let _ = ParsedResponse::choice(&text);
        let _ = ParsedResponse::star(&text, &g);
    }

    #[test]
    fn structured_noise_never_panics(parts in proptest::collection::vec(prop_oneof![
        Just("step1: move up"), Just("After step2: current position: @ (invalid: x"), Just("S . # @"),
        Just("["), Just("]"), Just("\"left\","), Just("Summary of steps: ["), Just("\n"), Just("step99:"),
        Just("answer: ("), Just("🤖 ⬛"),
    ], 0..40)) {
        let text: String = parts.concat();
        let g = GlyphTable::ascii();
        if let Ok((s, _)) = parse_star_session(&text, &g) {
            let m = maze_for(1, 1);
            let _ = check_consistency(&m, &s, &g);
        }
    }
}
