use std::path::Path;
use std::process::{Command, Output};

use mazenav_core::dataset::load_split;
use mazenav_core::{PromptRenderer, Split, Style};
use mazenav_harness::oracle::oracle_responder;
use mazenav_harness::stub::{StubConfig, StubServer};
use mazenav_harness::EndpointConfig;
use serde_json::Value;

fn mazenav(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mazenav"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs with `--json`, asserts success and one JSON document on stdout.
fn json(dir: &Path, args: &[&str]) -> Value {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let out = mazenav(dir, &all);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        out.status.success(),
        "{args:?} failed: {stdout} {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value =
        serde_json::from_str(&stdout).unwrap_or_else(|e| panic!("{args:?}: {e}: {stdout}"));
    assert_eq!(v["ok"], Value::Bool(true), "{v}");
    v
}

fn small_dataset(dir: &Path, name: &str) -> Value {
    json(
        dir,
        &[
            "--seed",
            "5",
            "dataset",
            "--out",
            name,
            "--turnpoint",
            "40",
            "--rule",
            "40",
            "--structured",
            "80",
            "--tiers",
            "1,2",
        ],
    )
}

fn first_id(dir: &Path, family: &str) -> String {
    load_split(&dir.join("ds"), Split::Test)
        .unwrap()
        .into_iter()
        .find(|i| i.family.as_str() == family)
        .unwrap()
        .id
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mazenav(tmp.path(), &["frobnicate"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unrecognized subcommand"), "{err}");
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn runtime_errors_are_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mazenav(tmp.path(), &["render", "--dataset", "missing", "--id", "x"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "));

    let out = mazenav(tmp.path(), &["--json", "--glyphs", "nope", "selftest"]);
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["ok"], Value::Bool(false));
}

#[test]
fn selftest_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json(tmp.path(), &["selftest"]);
    let suites = v["suites"].as_array().unwrap();
    assert_eq!(suites.len(), 4);
    assert!(suites.iter().all(|s| s["failures"] == 0));
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for name in ["a", "b"] {
        json(
            d,
            &[
                "--seed",
                "3",
                "generate",
                "--tier",
                "1,2",
                "--count",
                "5",
                "--out",
                &format!("{name}.jsonl"),
            ],
        );
    }
    json(
        d,
        &[
            "--seed", "4", "generate", "--tier", "1,2", "--count", "5", "--out", "c.jsonl",
        ],
    );
    let read = |f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
    assert_eq!(
        String::from_utf8(read("a.jsonl")).unwrap().lines().count(),
        10
    );

    small_dataset(d, "ds1");
    small_dataset(d, "ds2");
    for f in ["train.jsonl", "val.jsonl", "test.jsonl", "manifest.json"] {
        assert_eq!(read(&format!("ds1/{f}")), read(&format!("ds2/{f}")), "{f}");
    }
    for out in ["s1.jsonl", "s2.jsonl"] {
        json(
            d,
            &[
                "--seed",
                "8",
                "sdpo",
                "synth",
                "--dataset",
                "ds1",
                "--out",
                out,
            ],
        );
    }
    assert_eq!(read("s1.jsonl"), read("s2.jsonl"));
}

#[test]
fn config_file_then_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("mazenav.toml"),
        "seed = 3\nout_dir = \"work\"\ntiers = [2]\n",
    )
    .unwrap();
    let v = json(d, &["generate", "--count", "2"]);
    assert_eq!(v["per_tier"], serde_json::json!({"2": 2}));
    assert!(d.join("work/mazes.jsonl").exists());
    json(
        d,
        &[
            "--seed",
            "3",
            "generate",
            "--count",
            "2",
            "--out",
            "flag.jsonl",
        ],
    );
    json(
        d,
        &[
            "--seed",
            "9",
            "generate",
            "--count",
            "2",
            "--out",
            "other.jsonl",
        ],
    );
    let read = |f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read("work/mazes.jsonl"), read("flag.jsonl"));
    assert_ne!(read("flag.jsonl"), read("other.jsonl"));

    std::fs::write(d.join("bad.toml"), "segment_len = 0\n").unwrap();
    let out = mazenav(d, &["--config", "bad.toml", "selftest"]);
    assert!(!out.status.success());
}

#[test]
fn offline_pipeline_emits_json() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let v = small_dataset(d, "ds");
    assert_eq!(v["counts"]["total"], 160);

    let rp = first_id(d, "route_planning");
    let v = json(
        d,
        &["render", "--dataset", "ds", "--id", &rp, "--style", "star"],
    );
    assert!(v["prompt"].as_str().unwrap().contains("Summary of steps"));
    let ascii = mazenav(d, &["render", "--dataset", "ds", "--id", &rp]);
    let emoji = mazenav(
        d,
        &[
            "--glyphs",
            "emoji",
            "render",
            "--dataset",
            "ds",
            "--id",
            &rp,
        ],
    );
    assert!(ascii.status.success() && emoji.status.success());
    assert_ne!(ascii.stdout, emoji.stdout);
    assert!(!String::from_utf8_lossy(&emoji.stdout).contains(" # "));

    std::fs::write(d.join("answer.txt"), "so the path is [\"up\", \"left\"]").unwrap();
    let v = json(
        d,
        &[
            "parse",
            "--kind",
            "route",
            "--in",
            "answer.txt",
            "--dataset",
            "ds",
            "--id",
            &rp,
        ],
    );
    assert_eq!(v["parsed"]["trajectory"], serde_json::json!(["up", "left"]));
    assert!(v["score"]["cr"].is_number());
    let v = json(d, &["parse", "--kind", "choice", "--in", "answer.txt"]);
    assert!(v["parsed"]["choice"].is_null());

    // Ground truth for every test item, in each item's own style.
    let renderer = PromptRenderer::default();
    let mut lines = String::new();
    for inst in load_split(&d.join("ds"), Split::Test).unwrap() {
        let sft = mazenav_core::sdpo::emit_sft(&inst, &renderer).unwrap();
        lines.push_str(
            &serde_json::json!({"id": inst.id, "raw_text": sft.completion, "style": "star"})
                .to_string(),
        );
        lines.push('\n');
    }
    std::fs::write(d.join("resp.jsonl"), lines).unwrap();
    let v = json(
        d,
        &[
            "score",
            "--dataset",
            "ds",
            "--responses",
            "resp.jsonl",
            "--out",
            "run",
            "--model",
            "gt",
        ],
    );
    let summary = &v["summary"][0]["metrics"];
    for k in ["rp_cr", "rp_sr", "ns_acc", "tc_acc", "ru_acc"] {
        assert_eq!(summary[k], 100.0, "{k}");
    }
    let v = json(d, &["report", "--run", "run", "--layout", "table4"]);
    assert!(v["table4"]["csv"]
        .as_str()
        .unwrap()
        .starts_with("Model,Metric,+CoT,+VoT,+Ours\n"));
    let v = json(d, &["report", "--run", "run"]);
    for key in ["table1", "tiers", "table4"] {
        assert!(v[key]["text"].is_string(), "{key}");
    }

    let v = json(
        d,
        &[
            "sdpo",
            "pairs",
            "--dataset",
            "ds",
            "--responses",
            "resp.jsonl",
            "-L",
            "2",
            "--out",
            "pairs.jsonl",
        ],
    );
    assert_eq!(v["pairs"], 0);
    assert!(v["correct"].as_u64().unwrap() > 0);
    let v = json(
        d,
        &[
            "sdpo",
            "synth",
            "--dataset",
            "ds",
            "--kinds",
            "premature_stop,boundary_exit",
            "--out",
            "synth.jsonl",
        ],
    );
    assert!(v["pairs"].as_u64().unwrap() > 0);
    let v = json(
        d,
        &[
            "sdpo",
            "emit-sft",
            "--dataset",
            "ds",
            "--split",
            "val",
            "--out",
            "sft.jsonl",
        ],
    );
    assert_eq!(v["records"], 16);
}

#[test]
fn bench_and_margins_against_stub() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_dataset(d, "ds");
    let test = load_split(&d.join("ds"), Split::Test).unwrap();
    let responder = oracle_responder(&test, &Style::ALL, &PromptRenderer::default()).unwrap();

    let rt = tokio::runtime::Runtime::new().unwrap();
    let stub = rt
        .block_on(StubServer::spawn(StubConfig::new(responder)))
        .unwrap();
    let endpoint = EndpointConfig::new(stub.base_url(), "oracle");
    std::fs::write(
        d.join("endpoint.json"),
        serde_json::to_string(&endpoint).unwrap(),
    )
    .unwrap();

    let v = json(
        d,
        &[
            "bench",
            "--dataset",
            "ds",
            "--endpoint",
            "endpoint.json",
            "--out",
            "run",
            "--styles",
            "cot,star",
        ],
    );
    assert_eq!(v["dispatched"], test.len() * 2);
    assert_eq!(v["summary"].as_array().unwrap().len(), 2);
    let v = json(
        d,
        &[
            "bench",
            "--dataset",
            "ds",
            "--endpoint",
            "endpoint.json",
            "--out",
            "run",
            "--styles",
            "cot,star",
        ],
    );
    assert_eq!(v["dispatched"], 0);
    assert_eq!(v["resumed"], test.len() * 2);

    json(
        d,
        &[
            "sdpo",
            "synth",
            "--dataset",
            "ds",
            "--split",
            "test",
            "--out",
            "synth.jsonl",
        ],
    );
    let v = json(
        d,
        &[
            "sdpo",
            "margins",
            "--pairs",
            "synth.jsonl",
            "--endpoint",
            "endpoint.json",
            "--out",
            "m",
        ],
    );
    assert!(v["csv"]
        .as_str()
        .unwrap()
        .starts_with("Error Kind,oracle\n"));
    let v = json(d, &["report", "--run", "m", "--layout", "margins"]);
    assert!(v["margins"]["text"].is_string());
    drop(stub);
}
