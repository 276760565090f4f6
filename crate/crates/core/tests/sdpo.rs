use mazenav_core::generator::{generate, GenConfig};
use mazenav_core::metrics::score_route;
use mazenav_core::parser::{check_consistency, parse_star_session};
use mazenav_core::prompts::render_steps;
use mazenav_core::sdpo::{
    build_pair, divergence_index, emit_sft, exhibits, synthesize_negative, ErrorKind, PairOptions,
};
use mazenav_core::tasks::{build_next_step, build_route_planning};
use mazenav_core::{
    render_prompt, DifficultyTier, Direction, GlyphTable, Maze, PromptRenderer, StarSession, Style,
    Trajectory,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn maze_for(seed: u64, k: u32) -> Maze {
    generate(&GenConfig::for_tier(DifficultyTier::new(k).unwrap(), seed)).unwrap()
}

fn small() -> Maze {
    Maze::from_ascii("S . . # .\n# # . # .\n. . . . .\n. # # # D")
        .unwrap()
        .solved()
        .unwrap()
}

#[test]
fn correct_output_gives_no_pair() {
    let inst = build_route_planning(&small()).unwrap();
    let truth = inst.answer_key.as_route().unwrap().clone();
    assert!(build_pair(&inst, &truth, &PairOptions::default())
        .unwrap()
        .is_none());
}

#[test]
fn error_at_step_two() {
    let m = small();
    let inst = build_route_planning(&m).unwrap();
    let truth = inst.answer_key.as_route().unwrap().clone();
    let mut out = truth.to_vec();
    out[1] = Direction::Down; // (0,1) down is an obstacle
    let out = Trajectory::new(out);
    let opts = PairOptions::default();
    let pair = build_pair(&inst, &out, &opts).unwrap().unwrap();
    assert_eq!(pair.divergence_index, 1);

    let template = render_prompt(&inst, Style::Star, &opts.glyphs).unwrap();
    let context = pair.prompt.strip_prefix(&template).unwrap();
    assert_eq!(context.matches("After step").count(), 1);
    assert!(context.starts_with("step1: from the starting point, move right"));
    assert!(pair.chosen.starts_with("step2: move right"));
    assert!(pair.rejected.starts_with("step2: move down"));
    assert!(pair.rejected.contains("(invalid: obstacle collision)"));
    assert_eq!(pair.chosen_moves.moves(), &truth[1..4]);

    let json = serde_json::to_value(&pair).unwrap();
    for key in ["prompt", "chosen", "rejected"] {
        assert!(json[key].is_string());
    }

    let bare = build_pair(
        &inst,
        &out,
        &PairOptions {
            include_maps: false,
            ..PairOptions::default()
        },
    )
    .unwrap()
    .unwrap();
    assert!(!bare.chosen.contains(". #"));
}

#[test]
fn pair_contexts_share_prefix() {
    let g = GlyphTable::ascii();
    for seed in 0..20u64 {
        let m = maze_for(seed, 2);
        let inst = build_route_planning(&m).unwrap();
        let truth = inst.answer_key.as_route().unwrap().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for kind in ErrorKind::ALL {
            let Ok(out) = synthesize_negative(&m, &truth, kind, &mut rng) else {
                continue;
            };
            let pair = build_pair(&inst, &out, &PairOptions::default())
                .unwrap()
                .unwrap();
            let template = render_prompt(&inst, Style::Star, &g).unwrap();
            let ctx = &pair.prompt[template.len()..];
            let (c, _) = parse_star_session(&format!("{ctx}{}", pair.chosen), &g).unwrap();
            let (r, _) = parse_star_session(&format!("{ctx}{}", pair.rejected), &g).unwrap();
            let e = pair.divergence_index;
            assert_eq!(c.steps[..e], r.steps[..e]);
            assert_eq!(c.moves()[..e], truth[..e]);
        }
    }
}

#[test]
fn synthetic_negatives_exhibit_their_kind() {
    let g = GlyphTable::ascii();
    let mut made = [0usize; 5];
    for seed in 0..40u64 {
        let m = maze_for(seed, 1 + (seed % 4) as u32);
        let truth = m.optimal_path().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (ki, kind) in ErrorKind::ALL.into_iter().enumerate() {
            let out = match synthesize_negative(&m, &truth, kind, &mut rng) {
                Ok(o) => o,
                Err(_) => continue,
            };
            made[ki] += 1;
            assert_ne!(out, truth);
            assert!(exhibits(&m, &truth, &out, kind), "{kind} seed {seed}");
            let s = score_route(&m, Some(&out));
            assert!(!s.sr);
            match kind {
                ErrorKind::NonoptimalBranch => assert_eq!(s.cr, 1.0),
                ErrorKind::ObstacleCollision | ErrorKind::BoundaryExit => {
                    let (steps, _) = render_steps(&m, m.start(), 0, &out, &g, true);
                    let session = StarSession {
                        steps,
                        summary: out.clone(),
                    };
                    assert!(!check_consistency(&m, &session, &g).is_clean());
                }
                _ => {}
            }
        }
    }
    assert!(made.iter().all(|&n| n > 0), "{made:?}");
}

#[test]
fn premature_stop_is_prefix() {
    let m = small();
    let t = m.optimal_path().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let out = synthesize_negative(&m, &t, ErrorKind::PrematureStop, &mut rng).unwrap();
        assert!(out.len() < t.len() && out.is_prefix_of(&t));
        assert!(!m.execute(&out).reached_destination);
    }
}

#[test]
fn infeasible_kinds() {
    // A straight corridor offers no branch and no turn point.
    let m = Maze::from_ascii("S . . D").unwrap().solved().unwrap();
    let t = m.optimal_path().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(synthesize_negative(&m, &t, ErrorKind::ObstacleCollision, &mut rng).is_err());
    assert!(synthesize_negative(&m, &t, ErrorKind::WrongTurnAtTp, &mut rng).is_err());
    assert!(synthesize_negative(&m, &t, ErrorKind::BoundaryExit, &mut rng).is_ok());
    // Backtracking is still a valid detour.
    assert!(synthesize_negative(&m, &t, ErrorKind::NonoptimalBranch, &mut rng).is_ok());
}

#[test]
fn sft_targets() {
    let m = small();
    let r = PromptRenderer::default();
    let rp = emit_sft(&build_route_planning(&m).unwrap(), &r).unwrap();
    let (s, _) = parse_star_session(&rp.completion, &r.glyphs).unwrap();
    assert_eq!(&s.summary, m.optimal_path());
    assert!(check_consistency(&m, &s, &r.glyphs).is_clean());

    let ns = build_next_step(&m, 2).unwrap();
    let rec = emit_sft(&ns, &r).unwrap();
    assert!(rec
        .completion
        .ends_with("the direction of next movement is down.\n"));
    let letter = mazenav_core::parser::parse_choice_or_direction(&rec.completion).unwrap();
    assert_eq!(Some(letter), ns.answer_key.as_choice());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn structural_properties(truth in proptest::collection::vec(0usize..4, 0..15), edits in proptest::collection::vec((0usize..16, 0usize..5), 0..4), len in 1usize..6) {
        let truth: Vec<Direction> = truth.into_iter().map(|i| Direction::ALL[i]).collect();
        let mut out = truth.clone();
        for (i, op) in edits {
            match op {
                4 => { out.truncate(i.min(out.len())); }
                d => if i < out.len() { out[i] = Direction::ALL[d] } else { out.push(Direction::ALL[d]) },
            }
        }
        match divergence_index(&out, &truth) {
            None => prop_assert_eq!(&out, &truth),
            Some(e) => {
                prop_assert_eq!(&out[..e], &truth[..e]);
                if e < out.len() && e < truth.len() {
                    prop_assert_ne!(out[e], truth[e]);
                } else {
                    prop_assert_eq!(e, out.len().min(truth.len()));
                }
                let (_, c) = mazenav_core::extract_segments(&out, &truth, e, len);
                prop_assert_eq!(c.moves(), &truth[e..(e + len).min(truth.len())]);
            }
        }
    }
}

#[test]
fn random_draws_are_reproducible() {
    let m = maze_for(9, 3);
    let t = m.optimal_path().clone();
    let a = synthesize_negative(
        &m,
        &t,
        ErrorKind::WrongTurnAtTp,
        &mut ChaCha8Rng::seed_from_u64(1),
    )
    .unwrap();
    let b = synthesize_negative(
        &m,
        &t,
        ErrorKind::WrongTurnAtTp,
        &mut ChaCha8Rng::seed_from_u64(1),
    )
    .unwrap();
    assert_eq!(a, b);
}
