use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use photobook::logstore::write_corpus;
use photobook::synth::{scripted_game, ScriptConfig};
use photobook::{GameLog, GameSchema, LogStore, Variant};
use serde_json::{json, Value};

fn photobook(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_photobook")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "photobook {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn annotations(path: &Path) {
    let mut lines = Vec::new();
    for (k, (a, b)) in [("dog", "frisbee"), ("bus", "car")].iter().enumerate() {
        for i in 0..25 {
            lines.push(
                json!({
                    "source_id": format!("{k}{i:03}"),
                    "width": 640, "height": 480, "color": true,
                    "objects": [{"category": a, "area": 40000.0}, {"category": b, "area": 20000.0}]
                })
                .to_string(),
            );
        }
    }
    // Excluded: portrait.
    lines.push(json!({"source_id": "p", "width": 10, "height": 20, "color": true, "objects": []}).to_string());
    fs::write(path, lines.join("\n")).unwrap();
}

fn games() -> Vec<GameLog> {
    let schema = GameSchema::canonical();
    (0..8u64)
        .map(|k| {
            let set = k as u32 % 2 + 1;
            let variant = Variant::BOTH[(k / 2) as usize % 2];
            let spec = schema
                .game_spec(format!("set{set:02}-v{}-{k:06}", variant.number()), set, variant)
                .shuffled(k);
            scripted_game(&spec, &ScriptConfig { seed: k, ..Default::default() }).log(["P00001", "P00002"])
        })
        .collect()
}

#[test]
fn corpus_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    annotations(&d("ann.jsonl"));
    let s = |p: std::path::PathBuf| p.to_str().unwrap().to_owned();

    photobook(&["gameset", "--annotations", &s(d("ann.jsonl")), "--seed", "4", "--out", &s(d("gamesets.json")), "--sets", "2"]);
    let sets = read_json(&d("gamesets.json"));
    assert_eq!(sets["sets"].as_array().unwrap().len(), 2);

    write_corpus(d("corpus"), &games()).unwrap();
    let verified = photobook(&["logstore", "verify", "--logs", &s(d("corpus"))]);
    assert!(String::from_utf8_lossy(&verified.stdout).contains("8 games verified, 0 failures"));
    let report = stdout_json(&photobook(&["logstore", "import", "--path", &s(d("corpus")), "--out", &s(d("copy"))]));
    assert_eq!(report["games"], 8);
    assert_eq!(report["utterances"].as_u64(), Some(games().iter().map(|g| g.utterances() as u64).sum()));
    assert_eq!(fs::read_dir(d("copy").join("logs")).unwrap().count(), 8);
    assert!(d("copy").join("index.json").exists());

    photobook(&[
        "chains", "extract", "--logs", &s(d("corpus")), "--gamesets", &s(d("gamesets.json")), "--out", &s(d("chains.json")),
    ]);
    let chains = read_json(&d("chains.json"));
    assert_eq!(chains["games"], 8);
    let first = &chains["chains"][0];
    assert!(first["category_pair"].is_string(), "{first}");
    let stats = stdout_json(&photobook(&["chains", "stats", "--chains", &s(d("chains.json"))]));
    assert_eq!(stats["chains"], chains["chains"].as_array().unwrap().len());
    photobook(&["chains", "split", "--chains", &s(d("chains.json")), "--seed", "1", "--out", &s(d("splits.json"))]);
    let splits = read_json(&d("splits.json"));
    assert_eq!(splits["assignment"].as_object().unwrap().len(), chains["chains"].as_array().unwrap().len());

    photobook(&["stats", "--logs", &s(d("corpus")), "--report", &s(d("report.json"))]);
    let r = read_json(&d("report.json"));
    assert_eq!(r["games"], 8);
    assert_eq!(r["rounds"]["rounds"].as_array().unwrap().len(), 5);
}

#[test]
fn export_from_store() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GameSchema::canonical().game_spec("set01-v1-000001", 1, Variant::One);
    let g = scripted_game(&spec, &ScriptConfig::default());
    {
        let mut store = LogStore::open(dir.path().join("store")).unwrap();
        store.create_game(&spec, ["w1", "w2"], g.started_ms).unwrap();
        for e in &g.events {
            store.append_event(&spec.game_id, e).unwrap();
        }
        store.close_game(&spec.game_id).unwrap();
    }
    let store = dir.path().join("store");
    let out = dir.path().join("out");
    photobook(&["logstore", "export", "--log-dir", store.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let doc = read_json(&out.join("set01-v1-000001.json"));
    assert_eq!(doc["rounds"].as_array().unwrap().len(), 5);
    assert!(!doc.to_string().contains("w1"));
}

#[test]
fn bad_input_fails_cleanly() {
    let out = Command::new(env!("CARGO_BIN_EXE_photobook"))
        .args(["chains", "stats", "--chains", "/nonexistent/chains.json"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/chains.json"));
}
