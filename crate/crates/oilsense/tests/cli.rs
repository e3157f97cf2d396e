use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use oilsense::REFERENCE_RULES;

fn oilsense(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oilsense")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = oilsense(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const TINY_NET: &str = r#"{"grid": 28, "conv1_filters": 2, "conv2_filters": 4, "fc1_width": 8, "fc2_width": 8}"#;

/// Small corpus, tiny relation net, rule params, pipeline config.
fn workspace(dir: &Path) {
    fs::write(dir.join("gen.json"), r#"{"seed": 5, "distractor_prob": 1.0}"#).unwrap();
    fs::write(dir.join("oil.rules"), REFERENCE_RULES).unwrap();
    fs::write(
        dir.join("rel.json"),
        format!(r#"{{"network": {TINY_NET}, "train": {{"epochs": 2, "batch_size": 16, "seed": 1}}, "init_seed": 3}}"#),
    )
    .unwrap();
    fs::write(dir.join("rt.json"), r#"{"steps": 20}"#).unwrap();
    ok(dir, &["gen", "scenes", "--config", "gen.json", "--out", "scenes", "--count", "12"]);
    ok(dir, &["gen", "pairs", "--config", "gen.json", "--out", "data", "--count", "60"]);
    ok(dir, &["train-rel", "--pairs", "data/pairs.jsonl", "--config", "rel.json", "--out", "models/relnet.json"]);
    ok(
        dir,
        &[
            "train-rules", "--rules", "oil.rules", "--scenes", "scenes", "--relnet", "models/relnet.json", "--out",
            "models/params.json", "--config", "rt.json",
        ],
    );
    fs::write(
        dir.join("models/pipeline.json"),
        format!(
            r#"{{"rules": "../oil.rules", "relnet": "relnet.json", "params": "params.json", "seed": 4,
                "ablation": {{"train_pairs": "../data/pairs.jsonl", "network": {TINY_NET},
                              "train": {{"epochs": 1, "batch_size": 16}}}}}}"#
        ),
    )
    .unwrap();
}

#[test]
fn full_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    workspace(dir);

    assert_eq!(fs::read_dir(dir.join("scenes")).unwrap().count(), 12);
    assert_eq!(fs::read_to_string(dir.join("data/pairs.jsonl")).unwrap().lines().count(), 60);
    let log = fs::read_to_string(dir.join("models/relnet.loss.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,loss,train_acc"));
    assert_eq!(log.lines().count(), 3);
    assert_eq!(fs::read_to_string(dir.join("models/params.loss.csv")).unwrap().lines().count(), 22);

    let out = ok(dir, &["infer", "--config", "models/pipeline.json", "--scene", "scenes/scene_00000.json"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let p = report["leak_probability"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(report["seed"], 4);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);

    let out = ok(dir, &["eval", "--config", "models/pipeline.json", "--scenes", "scenes", "--ablations", "--out", "eval.json"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("relations + rules") && text.contains("confidence threshold"), "{text}");
    assert!(text.contains("position + type + contour"), "{text}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["scenes"], 12);
    assert_eq!(report["relation_ablation"].as_array().unwrap().len(), 3);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    workspace(a.path());
    workspace(b.path());
    for file in ["scenes/scene_00007.json", "data/pairs.jsonl", "models/relnet.json", "models/params.json"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
    let args = ["eval", "--config", "models/pipeline.json", "--scenes", "scenes", "--out", "eval.json"];
    ok(a.path(), &args);
    ok(b.path(), &args);
    assert_eq!(fs::read(a.path().join("eval.json")).unwrap(), fs::read(b.path().join("eval.json")).unwrap());
}

#[test]
fn enhance_writes_image_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut pgm = b"P5\n16 8\n255\n".to_vec();
    pgm.extend((0..128u32).map(|i| 90 + (i % 16) as u8 * 2));
    fs::write(dir.join("in.pgm"), &pgm).unwrap();
    ok(dir, &["enhance", "in.pgm", "--out", "out.pgm", "--weights", "1,0.5,0.2", "--report"]);
    let out = fs::read(dir.join("out.pgm")).unwrap();
    assert!(out.starts_with(b"P5\n16 8\n255\n"));
    assert_eq!(out.len(), pgm.len());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("out.json")).unwrap()).unwrap();
    assert!(report["split"].as_u64().unwrap() <= 254);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("in.pgm"), b"P5\n2 1\n255\n\x10\x20").unwrap();

    assert_eq!(code(&oilsense(dir, &[])), 1);
    assert_eq!(code(&oilsense(dir, &["--help"])), 0);
    assert_eq!(code(&oilsense(dir, &["enhance", "in.pgm", "--out", "o.pgm", "--weights", "1,2"])), 1);
    assert_eq!(code(&oilsense(dir, &["enhance", "in.pgm", "--out", "o.pgm", "--weights", "-1,1,1"])), 1);
    assert_eq!(code(&oilsense(dir, &["gen", "scenes", "--config", "missing.json", "--out", "s"])), 1);

    fs::write(dir.join("bad.pgm"), b"P5\n4 4\n255\n\x00").unwrap();
    assert_eq!(code(&oilsense(dir, &["enhance", "bad.pgm", "--out", "o.pgm"])), 2);

    fs::write(dir.join("gen.json"), r#"{"blob_radius": {"min": 0.3, "max": 0.1}}"#).unwrap();
    assert_eq!(code(&oilsense(dir, &["gen", "scenes", "--config", "gen.json", "--out", "s"])), 1);
    fs::write(dir.join("gen.json"), r#"{"unknown": "#).unwrap();
    assert_eq!(code(&oilsense(dir, &["gen", "scenes", "--config", "gen.json", "--out", "s"])), 1);

    fs::write(dir.join("p.json"), r#"{"rules": "nope.rules", "relnet": "nope.json"}"#).unwrap();
    fs::write(dir.join("scene.json"), "{}").unwrap();
    let out = oilsense(dir, &["infer", "--config", "p.json", "--scene", "scene.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.rules"));
}

#[test]
fn bad_scene_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    workspace(dir);
    fs::write(dir.join("broken.json"), r#"{"width": 10, "height": 10, "objects": [{"id": 0, "class": "tree",
        "score": 0.5, "bbox": [0, 0, 1, 1], "polygon": [[0, 0], [1, 0], [1, 1]]}]}"#)
    .unwrap();
    let out = oilsense(dir, &["infer", "--config", "models/pipeline.json", "--scene", "broken.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("objects[0].class"));

    let out = oilsense(dir, &["eval", "--config", "models/pipeline.json", "--scenes", "data"]);
    assert_eq!(code(&out), 2);
}
