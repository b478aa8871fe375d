//! End-to-end behaviour of the `namelink` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn namelink(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_namelink"))
        .current_dir(dir)
        .env_remove("NAMELINK_CONFIG")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = namelink(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Two entities with disjoint names. Entity A has T = 0.625.
const TWO_ENTITIES: &str = r#"{"mention_id":"a1","surface":"Alpha Beta","gold_entity_id":"A","source":"t","embedding":[1,0,0]}
{"mention_id":"a2","surface":"Beta","gold_entity_id":"A","source":"t","embedding":[0.625,0.7806247497997998,0]}
{"mention_id":"b1","surface":"Gamma","gold_entity_id":"B","source":"t","embedding":[0,0,1]}
{"mention_id":"b2","surface":"Gamma","gold_entity_id":"B","source":"t","embedding":[0,0.6,0.8]}
"#;

fn synth_dir(tmp: &TempDir, seed: &str) -> PathBuf {
    ok(tmp.path(), &["synth", "--seed", seed, "--out", "data"]);
    tmp.path().join("data")
}

#[test]
fn build_reports_counts() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "m.jsonl", TWO_ENTITIES);
    let out = ok(
        tmp.path(),
        &["build", "m.jsonl", "--min-mentions", "2", "--out", "kb.json"],
    );
    let err = stderr(&out);
    assert!(err.contains("entities: 2"), "{err}");
    assert!(err.contains("rejected groups: 0"), "{err}");
    assert!(err.contains("entity threshold T"), "{err}");
    let kb = json(&tmp.path().join("kb.json"));
    assert_eq!(kb["format_version"], 1);
    assert_eq!(kb["entities"].as_array().unwrap().len(), 2);

    let out = ok(
        tmp.path(),
        &["build", "m.jsonl", "--min-mentions", "3", "--out", "kb3.json"],
    );
    assert!(stderr(&out).contains("rejected groups: 2"));
}

#[test]
fn build_empty_file_warns() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "m.jsonl", "");
    let out = ok(tmp.path(), &["build", "m.jsonl", "--out", "kb.json"]);
    assert!(stderr(&out).contains("warning"));
    assert!(stderr(&out).contains("entities: 0"));
    assert_eq!(json(&tmp.path().join("kb.json"))["entities"], Value::Array(vec![]));
}

#[test]
fn build_dimension_mismatch_names_line() {
    let tmp = TempDir::new().unwrap();
    let text = format!(
        "{}{}\n",
        TWO_ENTITIES, r#"{"mention_id":"x","surface":"X","gold_entity_id":"X","source":"t","embedding":[1,0]}"#
    );
    write(tmp.path(), "m.jsonl", &text);
    let out = namelink(tmp.path(), &["build", "m.jsonl", "--out", "kb.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 5"), "{}", stderr(&out));
}

#[test]
fn missing_out_is_usage_error() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "m.jsonl", TWO_ENTITIES);
    assert_eq!(namelink(tmp.path(), &["build", "m.jsonl"]).status.code(), Some(2));
}

#[test]
fn adjust_zero_conflict_only_sets_flag() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "m.jsonl", TWO_ENTITIES);
    ok(
        tmp.path(),
        &["build", "m.jsonl", "--min-mentions", "2", "--out", "kb.json"],
    );
    let out = ok(tmp.path(), &["adjust", "kb.json", "--out", "adj.json"]);
    assert!(stderr(&out).contains("pass 1: 0 changes"));
    let mut before = json(&tmp.path().join("kb.json"));
    let mut after = json(&tmp.path().join("adj.json"));
    assert_eq!(before["adjusted"], false);
    assert_eq!(after["adjusted"], true);
    before["adjusted"] = Value::Null;
    after["adjusted"] = Value::Null;
    assert_eq!(before, after);
}

#[test]
fn adjust_invalid_mode_exits_2() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "m.jsonl", TWO_ENTITIES);
    ok(
        tmp.path(),
        &["build", "m.jsonl", "--min-mentions", "2", "--out", "kb.json"],
    );
    let out = namelink(
        tmp.path(),
        &["adjust", "kb.json", "--adjust-mode", "sideways", "--out", "o.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = namelink(
        tmp.path(),
        &["adjust", "kb.json", "--adjust-c", "0.9", "--out", "o.json"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn adjust_corrupt_kb_is_data_error() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "kb.json", "{\"format_version\": 1}");
    let out = namelink(tmp.path(), &["adjust", "kb.json", "--out", "o.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn rotation_keeps_originals_and_undo_restores() {
    let tmp = TempDir::new().unwrap();
    let data = synth_dir(&tmp, "2");
    let kb_mentions = data.join("kb_mentions.jsonl");
    let kb_mentions = kb_mentions.to_str().unwrap();
    ok(
        tmp.path(),
        &["build", kb_mentions, "--min-mentions", "5", "--out", "kb.json"],
    );
    let out = ok(
        tmp.path(),
        &["adjust", "kb.json", "--adjust-mode", "rotation", "--out", "rot.json"],
    );
    assert!(!stderr(&out).contains("pass 1: 0 changes"));
    let rot = json(&tmp.path().join("rot.json"));
    let rotated = rot["entities"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e.get("original_embeddings").is_some_and(|o| !o.is_null()))
        .count();
    assert!(rotated > 0);

    ok(tmp.path(), &["adjust", "rot.json", "--undo", "--out", "undone.json"]);
    let before = json(&tmp.path().join("kb.json"));
    let undone = json(&tmp.path().join("undone.json"));
    for (a, b) in before["entities"]
        .as_array()
        .unwrap()
        .iter()
        .zip(undone["entities"].as_array().unwrap())
    {
        let ea = a["embeddings"].as_array().unwrap();
        let eb = b["embeddings"].as_array().unwrap();
        for (va, vb) in ea.iter().zip(eb) {
            for (x, y) in va.as_array().unwrap().iter().zip(vb.as_array().unwrap()) {
                assert!((x.as_f64().unwrap() - y.as_f64().unwrap()).abs() <= 1e-12);
            }
        }
        assert_eq!(a["entity_threshold"], b["entity_threshold"]);
    }
}

#[test]
fn link_outputs_one_line_per_mention_in_order() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "m.jsonl", TWO_ENTITIES);
    ok(
        tmp.path(),
        &["build", "m.jsonl", "--min-mentions", "2", "--out", "kb.json"],
    );
    write(
        tmp.path(),
        "q.jsonl",
        r#"{"mention_id":"q2","surface":"Alpha","source":"t","embedding":[2,0,0]}
{"mention_id":"q1","surface":"Beta","source":"t","embedding":[0,-1,0]}
{"mention_id":"q3","surface":"Nobody","source":"t","embedding":[1,1,1]}
"#,
    );
    let out = ok(tmp.path(), &["link", "kb.json", "q.jsonl", "--link-threshold", "1.02"]);
    let lines: Vec<Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["mention_id"], "q2");
    assert_eq!(lines[0]["outcome"], "linked");
    assert_eq!(lines[0]["entity_id"], "A");
    assert!((lines[0]["similarity"].as_f64().unwrap() - 1.6).abs() < 1e-12);
    assert_eq!(lines[1]["mention_id"], "q1");
    assert_eq!(lines[1]["outcome"], "unlinked");
    assert_eq!(lines[1]["candidates"], 1);
    assert_eq!(lines[2]["outcome"], "unlinked");
    assert_eq!(lines[2]["candidates"], 0);
    assert!(lines[2].get("similarity").is_none());

    ok(tmp.path(), &["link", "kb.json", "q.jsonl", "--out", "links.jsonl"]);
    assert_eq!(
        fs::read_to_string(tmp.path().join("links.jsonl"))
            .unwrap()
            .lines()
            .count(),
        3
    );
}

#[test]
fn evaluate_writes_csv_and_json() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "m.jsonl", TWO_ENTITIES);
    ok(
        tmp.path(),
        &["build", "m.jsonl", "--min-mentions", "2", "--out", "kb.json"],
    );
    write(
        tmp.path(),
        "e.jsonl",
        r#"{"mention_id":"f","surface":"Alpha","gold_entity_id":"A","source":"t","embedding":[1,0,0]}
{"mention_id":"s","surface":"Gamma","gold_entity_id":"Z","source":"t","embedding":[0,0,1]}
"#,
    );
    let out = ok(tmp.path(), &["evaluate", "kb.json", "e.jsonl"]);
    let csv = stdout(&out);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "variant,min_mentions,max_embeddings,link_threshold,kb_size,n_familiar,n_stranger,\
         n_familiar_wrong,n_familiar_unlinked,n_stranger_linked,f_fw,f_fn,f_sl"
    );
    assert_eq!(lines.next().unwrap(), "clean,2,4,0.85,2,1,1,0,0,1,0.0,0.0,1.0");

    ok(tmp.path(), &["evaluate", "kb.json", "e.jsonl", "--out", "rep"]);
    let rep = json(&tmp.path().join("rep/evaluate.json"));
    assert_eq!(rep["n_stranger_linked"], 1);
    assert!(tmp.path().join("rep/evaluate.csv").exists());

    // A mention with neither gold id nor stranger mark is a data error.
    write(
        tmp.path(),
        "bad.jsonl",
        r#"{"mention_id":"u","surface":"Alpha","source":"t","embedding":[1,0,0]}"#,
    );
    assert_eq!(
        namelink(tmp.path(), &["evaluate", "kb.json", "bad.jsonl"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn evaluate_empty_stranger_set_leaves_fraction_blank() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "m.jsonl", TWO_ENTITIES);
    ok(
        tmp.path(),
        &["build", "m.jsonl", "--min-mentions", "2", "--out", "kb.json"],
    );
    write(
        tmp.path(),
        "e.jsonl",
        r#"{"mention_id":"f","surface":"Alpha","gold_entity_id":"A","source":"t","embedding":[1,0,0]}"#,
    );
    let out = ok(tmp.path(), &["evaluate", "kb.json", "e.jsonl"]);
    assert!(stdout(&out).lines().nth(1).unwrap().ends_with(",0.0,0.0,"));
}

#[test]
fn sweep_default_grid_has_18_rows() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), &["sweep", "--seed", "1"]);
    let csv = stdout(&out);
    assert_eq!(csv.lines().count(), 19);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("clean,")));
}

#[test]
fn sweep_pollute_adjust_three_variants_per_point() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &["sweep", "--seed", "1", "--pollute", "--adjust", "--out", "rep"],
    );
    let csv = fs::read_to_string(tmp.path().join("rep/sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 54);
    let mut points = std::collections::BTreeMap::new();
    for r in &rows {
        points.entry((r[1], r[2], r[3])).or_insert_with(Vec::new).push(r[0]);
    }
    assert_eq!(points.len(), 18);
    for variants in points.values() {
        let mut v = variants.clone();
        v.sort();
        assert_eq!(v, ["adjusted", "clean", "polluted"]);
    }
    let rep = json(&tmp.path().join("rep/sweep.json"));
    assert_eq!(rep["seed"], 1);
    assert_eq!(rep["rows"].as_array().unwrap().len(), 54);
}

#[test]
fn sweep_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let a = ok(tmp.path(), &["sweep", "--seed", "7", "--pollute", "--adjust"]);
    let b = ok(tmp.path(), &["sweep", "--seed", "7", "--pollute", "--adjust"]);
    assert_eq!(a.stdout, b.stdout);
    let c = ok(tmp.path(), &["sweep", "--seed", "8", "--pollute", "--adjust"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn sweep_from_files_matches_synthetic_sweep() {
    let tmp = TempDir::new().unwrap();
    let data = synth_dir(&tmp, "4");
    let p = |n: &str| data.join(n).to_str().unwrap().to_string();
    let from_files = ok(
        tmp.path(),
        &[
            "sweep",
            "--seed",
            "4",
            "--pollute",
            "--kb-mentions",
            &p("kb_mentions.jsonl"),
            "--eval-mentions",
            &p("eval_mentions.jsonl"),
            "--wrong-pool",
            &p("wrong_pool.jsonl"),
        ],
    );
    let direct = ok(tmp.path(), &["sweep", "--seed", "4", "--pollute"]);
    assert_eq!(stdout(&from_files), stdout(&direct));

    let out = namelink(
        tmp.path(),
        &[
            "sweep",
            "--pollute",
            "--kb-mentions",
            &p("kb_mentions.jsonl"),
            "--eval-mentions",
            &p("eval_mentions.jsonl"),
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pollute_adds_relabelled_mentions() {
    let tmp = TempDir::new().unwrap();
    let data = synth_dir(&tmp, "3");
    let p = |n: &str| data.join(n).to_str().unwrap().to_string();
    let out = ok(
        tmp.path(),
        &[
            "pollute",
            &p("kb_mentions.jsonl"),
            &p("wrong_pool.jsonl"),
            "--seed",
            "3",
            "--out",
            "polluted.jsonl",
        ],
    );
    assert!(stderr(&out).contains("added"));
    let original = fs::read_to_string(data.join("kb_mentions.jsonl")).unwrap();
    let polluted = fs::read_to_string(tmp.path().join("polluted.jsonl")).unwrap();
    let added: Vec<Value> = polluted
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|v| v["source"] == "polluted")
        .collect();
    assert!(!added.is_empty());
    assert_eq!(polluted.lines().count(), original.lines().count() + added.len());
    for m in &added {
        let host = m["mention_id"].as_str().unwrap().split('/').next().unwrap();
        assert_eq!(m["gold_entity_id"], host);
    }

    let none = ok(
        tmp.path(),
        &[
            "pollute",
            &p("kb_mentions.jsonl"),
            &p("wrong_pool.jsonl"),
            "--pollute-entity-frac",
            "0",
        ],
    );
    assert_eq!(stdout(&none).lines().count(), original.lines().count());
}

#[test]
fn synth_writes_three_files() {
    let tmp = TempDir::new().unwrap();
    let data = synth_dir(&tmp, "0");
    for name in ["kb_mentions.jsonl", "eval_mentions.jsonl", "wrong_pool.jsonl"] {
        assert!(
            fs::read_to_string(data.join(name)).unwrap().lines().count() > 0,
            "{name}"
        );
    }
    let eval = fs::read_to_string(data.join("eval_mentions.jsonl")).unwrap();
    assert_eq!(eval.lines().count(), 400);
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = TempDir::new().unwrap();
    let data = synth_dir(&tmp, "5");
    let kb_mentions = data.join("kb_mentions.jsonl");
    let kb_mentions = kb_mentions.to_str().unwrap();
    write(tmp.path(), "run.toml", "min_mentions = 16\n");

    let count = |out: &Output| -> usize {
        let err = stderr(out);
        let line = err.lines().find(|l| l.starts_with("entities: ")).unwrap();
        line["entities: ".len()..].parse().unwrap()
    };
    let defaults = count(&ok(tmp.path(), &["build", kb_mentions, "--out", "a.json"]));
    let from_file = count(&ok(
        tmp.path(),
        &["--config", "run.toml", "build", kb_mentions, "--out", "b.json"],
    ));
    let from_flag = count(&ok(
        tmp.path(),
        &[
            "--config",
            "run.toml",
            "build",
            kb_mentions,
            "--min-mentions",
            "2",
            "--out",
            "c.json",
        ],
    ));
    assert!(from_file < defaults, "{from_file} vs {defaults}");
    assert!(from_flag > defaults, "{from_flag} vs {defaults}");

    let from_env = Command::new(env!("CARGO_BIN_EXE_namelink"))
        .current_dir(tmp.path())
        .env("NAMELINK_CONFIG", "run.toml")
        .args(["build", kb_mentions, "--out", "d.json"])
        .output()
        .unwrap();
    assert!(from_env.status.success());
    assert_eq!(count(&from_env), from_file);
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "typo.toml", "min_mention = 3\n");
    assert_eq!(
        namelink(tmp.path(), &["--config", "typo.toml", "synth", "--out", "d"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        namelink(tmp.path(), &["--config", "absent.toml", "synth", "--out", "d"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        namelink(tmp.path(), &["synth", "--out", "d", "--max-embeddings", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(namelink(tmp.path(), &["frobnicate"]).status.code(), Some(2));
}
