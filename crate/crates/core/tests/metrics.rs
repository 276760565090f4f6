use mazenav_core::metrics::{
    aggregate, score_choice, score_route, score_text, ScoreRow, TABLE1_COLUMNS, TABLE4_COLUMNS,
};
use mazenav_core::solver::enumerate_paths;
use mazenav_core::tasks::build_rule_qa_with;
use mazenav_core::tasks::RuleTemplate;
use mazenav_core::{
    Coord, Direction, Family, GlyphTable, Letter, Maze, RouteScore, Style, Trajectory,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use Direction::*;

fn open(w: usize, h: usize) -> Maze {
    Maze::layout(w, h, [], Coord::new(0, 0), Coord::new(h - 1, w - 1))
        .unwrap()
        .solved()
        .unwrap()
}

#[test]
fn canonical_and_unparseable() {
    let m = open(3, 3);
    let s = score_route(&m, Some(m.optimal_path()));
    assert_eq!(
        s,
        RouteScore {
            valid_steps: 4,
            optimal_steps: 4,
            cr: 1.0,
            sr: true
        }
    );
    let s = score_route(&m, None);
    assert_eq!(
        s,
        RouteScore {
            valid_steps: 0,
            optimal_steps: 4,
            cr: 0.0,
            sr: false
        }
    );
}

#[test]
fn detour_is_capped_and_fails() {
    let m = Maze::from_ascii("S . .\n. . .\n. . D")
        .unwrap()
        .solved()
        .unwrap();
    let detour = enumerate_paths(&m, 6)
        .unwrap()
        .into_iter()
        .find(|p| p.len() == 6)
        .unwrap();
    let s = score_route(&m, Some(&detour));
    assert_eq!((s.valid_steps, s.cr, s.sr), (6, 1.0, false));
}

#[test]
fn open_grid_formula_cases() {
    let m = open(4, 4); // optimal 6
    let cases: [(Vec<Direction>, usize, f64, bool); 6] = [
        (vec![Down, Down, Down], 3, 0.5, false),
        (vec![Down, Up, Down, Left, Down], 3, 0.5, false),
        (vec![Up], 0, 0.0, false),
        (vec![Right, Right, Right, Down, Down, Down], 6, 1.0, true),
        (
            vec![Right, Right, Right, Down, Down, Down, Up],
            7,
            1.0,
            false,
        ),
        (
            vec![Down, Right, Down, Right, Down, Right, Right],
            6,
            1.0,
            false,
        ),
    ];
    for (moves, valid, cr, sr) in cases {
        let s = score_route(&m, Some(&Trajectory::new(moves.clone())));
        assert_eq!((s.valid_steps, s.cr, s.sr), (valid, cr, sr), "{moves:?}");
    }
    let m = open(5, 1); // optimal 4
    let s = score_route(&m, Some(&vec![Right].into()));
    assert_eq!(s.cr, 0.25);
}

fn choice_row(model: &str, family: Family, correct: bool) -> ScoreRow {
    ScoreRow {
        id: "x".into(),
        model: model.into(),
        variant: "+CoT".into(),
        style: Some(Style::Cot),
        family,
        tier: 1,
        parsed: true,
        route: None,
        correct: Some(correct),
    }
}

#[test]
fn choice_scoring() {
    let m = open(3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inst = build_rule_qa_with(&m, RuleTemplate::Constraint, true, &mut rng).unwrap();
    let key = inst.answer_key.as_choice().unwrap();
    assert!(score_choice(&inst, Some(key)));
    assert!(!score_choice(&inst, None));
    let other = [Letter::A, Letter::B]
        .into_iter()
        .find(|l| *l != key)
        .unwrap();
    assert!(!score_choice(&inst, Some(other)));

    let rows: Vec<_> = (0..10)
        .map(|i| choice_row("m", Family::NextStep, i < 7))
        .collect();
    let r = aggregate(&rows);
    assert_eq!(r.summary[0].metrics.ns_acc, Some(70.0));
    assert!(r.table1_csv().contains(",70.00,"));
}

#[test]
fn single_perfect_route() {
    let m = open(3, 3);
    let inst = mazenav_core::tasks::build_route_planning(&m).unwrap();
    let row = score_text(
        &inst,
        "oracle",
        Style::Cot,
        &m.optimal_path().to_string(),
        &GlyphTable::ascii(),
    );
    let r = aggregate(&[row]);
    let csv = r.table1_csv();
    assert_eq!(
        csv,
        "Model,Variant,RP.CR,RP.SR,NS.Acc,TC.Acc,RU.Acc\noracle,+CoT,100.00,100.00,,,\n"
    );
    let text = r.table1_text();
    assert!(
        text.lines()
            .nth(2)
            .unwrap()
            .contains("100.00  100.00      --"),
        "{text}"
    );
}

#[test]
fn formats_two_decimals() {
    // 2927 of 10000 successful routes.
    let rows: Vec<_> = (0..10000)
        .map(|i| ScoreRow {
            route: Some(RouteScore {
                valid_steps: 1,
                optimal_steps: 1,
                cr: 1.0,
                sr: i < 2927,
            }),
            correct: None,
            family: Family::RoutePlanning,
            ..choice_row("m", Family::RoutePlanning, true)
        })
        .collect();
    assert!(aggregate(&rows).table1_csv().contains(",100.00,29.27,"));
}

#[test]
fn empty_and_table4_layouts() {
    let r = aggregate(&[]);
    assert_eq!(r.table1_csv(), TABLE1_COLUMNS.join(",") + "\n");
    assert_eq!(r.table4_csv(), TABLE4_COLUMNS.join(",") + "\n");

    let mut rows = vec![];
    for (style, ok) in [(Style::Cot, true), (Style::Star, false)] {
        rows.push(ScoreRow {
            style: Some(style),
            variant: style.column_label().into(),
            ..choice_row("gpt", Family::NextStep, ok)
        });
    }
    let r = aggregate(&rows);
    let csv = r.table4_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines,
        [
            "Model,Metric,+CoT,+VoT,+Ours",
            "gpt,CR,,,",
            "gpt,SR,,,",
            "gpt,Acc,100.00,,0.00"
        ]
    );
    assert_eq!(
        r.summary
            .iter()
            .map(|s| s.variant.as_str())
            .collect::<Vec<_>>(),
        ["+CoT", "+Ours"]
    );
}

proptest! {
    #[test]
    fn cr_bounds_and_monotone(moves in proptest::collection::vec(0usize..4, 0..20)) {
        let m = Maze::from_ascii("S . . #\n# . # .\n. . . .\n. # . D").unwrap().solved().unwrap();
        let t: Vec<Direction> = moves.iter().map(|i| Direction::ALL[*i]).collect();
        let mut last = 0;
        for k in 0..=t.len() {
            let s = score_route(&m, Some(&Trajectory::new(t[..k].to_vec())));
            prop_assert!((0.0..=1.0).contains(&s.cr));
            prop_assert!(!s.sr || (s.cr == 1.0 && s.valid_steps == s.optimal_steps));
            prop_assert!(s.valid_steps >= last);
            last = s.valid_steps;
        }
    }

    #[test]
    fn aggregation_matches_mean_oracle(vals in proptest::collection::vec((0usize..8, 1usize..8, any::<bool>()), 1..60), seed in any::<u64>()) {
        let rows: Vec<ScoreRow> = vals.iter().map(|&(v, o, c)| {
            let v = v.min(o);
            ScoreRow {
                route: Some(RouteScore { valid_steps: v, optimal_steps: o, cr: v as f64 / o as f64, sr: v == o }),
                correct: None,
                family: Family::RoutePlanning,
                ..choice_row("m", Family::RoutePlanning, c)
            }
        }).collect();
        let r = aggregate(&rows);
        let oracle: f64 = rows.iter().map(|r| r.route.unwrap().cr).sum::<f64>() / rows.len() as f64 * 100.0;
        prop_assert!((r.summary[0].metrics.rp_cr.unwrap() - oracle).abs() < 1e-9);

        let mut shuffled = rows.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(aggregate(&shuffled).summary, r.summary);
    }
}
