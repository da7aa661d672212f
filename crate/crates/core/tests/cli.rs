use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ctsynth::phantom::{degrade, phantom_features, phantom_set, write_set, PhantomSpec};
use ctsynth::stratified::{Baseline, EvaluationReport, Metric};

fn ctsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctsynth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    real: PathBuf,
    synth: PathBuf,
    real_feats: PathBuf,
    synth_feats: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let spec = PhantomSpec {
        volumes: 4,
        slices_per_volume: 30,
        rows: 32,
        cols: 32,
        seed: 3,
    };
    let real = phantom_set("real", &spec).unwrap();
    let synth = degrade(&real, 0.05, 9, "synth").unwrap();
    let real_path = write_set(&real, &root).unwrap();
    let synth_path = write_set(&synth, &root).unwrap();
    let real_feats = root.join("real.feat");
    let synth_feats = root.join("synth.feat");
    phantom_features(&real).save(&real_feats).unwrap();
    phantom_features(&synth).save(&synth_feats).unwrap();
    Fixture {
        _dir: dir,
        root,
        real: real_path,
        synth: synth_path,
        real_feats,
        synth_feats,
    }
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = ctsynth(&["eval", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn help_documents_subcommands() {
    let out = ctsynth(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["ingest-check", "baseline", "eval", "spectra", "survey"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    let out = ctsynth(&["survey", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["make", "serve", "stats"] {
        assert!(text.contains(cmd));
    }
}

#[test]
fn domain_error_names_kind() {
    let out = ctsynth(&["ingest-check", "/nonexistent/set.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: IoError:"), "{err}");
    assert!(err.contains("/nonexistent/set.json"));
}

#[test]
fn ingest_check_summarizes() {
    let f = fixture();
    let out = ctsynth(&["ingest-check", s(&f.real)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("4 volumes, 120 slices"), "{text}");
    assert!(text.contains("per layer [12 12 12 12 12 12 12 12 12 12]"), "{text}");
}

#[test]
fn baseline_then_eval_writes_outputs() {
    let f = fixture();
    let base = f.root.join("base.json");
    let out = ctsynth(&[
        "baseline",
        "--real",
        s(&f.real),
        "--real-features",
        s(&f.real_feats),
        "--seed",
        "5",
        "--out",
        s(&base),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let b = Baseline::load(&base).unwrap();
    assert_eq!(b.set_a, "real-holdout");
    assert_eq!(b.set_b, "real-rest");
    assert!(b.entries.iter().any(|e| e.metric == Metric::Fid));

    let dir = f.root.join("out");
    let args = [
        "eval",
        "--real",
        s(&f.real),
        "--synth",
        s(&f.synth),
        "--baseline",
        s(&base),
        "--real-features",
        s(&f.real_feats),
        "--synth-features",
        s(&f.synth_feats),
        "--out",
        s(&dir),
    ];
    let out = ctsynth(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "fid.svg",
            "histcorr.svg",
            "histinter.svg",
            "kl256.svg",
            "kl3.svg",
            "report.json",
            "scores.csv",
            "spectcorr.svg"
        ]
    );
    let report = EvaluationReport::load(dir.join("report.json")).unwrap();
    assert_eq!(report.per_layer.len(), 60);
    assert!(report.per_layer.iter().all(|s| s.normalized.is_some()));

    let first = std::fs::read(dir.join("report.json")).unwrap();
    let dir2 = f.root.join("out2");
    let mut args2 = args;
    args2[12] = s(&dir2);
    let out = ctsynth(&[&["--threads", "1"], &args2[..]].concat());
    assert!(out.status.success());
    assert_eq!(first, std::fs::read(dir2.join("report.json")).unwrap());
    assert_eq!(
        std::fs::read(dir.join("scores.csv")).unwrap(),
        std::fs::read(dir2.join("scores.csv")).unwrap()
    );
}

#[test]
fn eval_rejects_half_feature_pair() {
    let f = fixture();
    let out = ctsynth(&[
        "eval",
        "--real",
        s(&f.real),
        "--synth",
        s(&f.synth),
        "--real-features",
        s(&f.real_feats),
        "--out",
        s(&f.root.join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("InvalidParameter"));
}

#[test]
fn spectra_per_layer() {
    let f = fixture();
    let dir = f.root.join("spectra");
    let out = ctsynth(&["spectra", "--set", s(&f.real), "--out", s(&dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for l in 1..=10 {
        assert!(dir.join(format!("layer_{l:02}.png")).exists());
        assert!(dir.join(format!("layer_{l:02}.json")).exists());
    }
}

#[test]
fn survey_make_is_deterministic() {
    let f = fixture();
    let make = |out: &Path| {
        let o = ctsynth(&[
            "survey",
            "make",
            "--real",
            s(&f.real),
            "--synth",
            s(&f.synth),
            "--n-real",
            "10",
            "--n-synth",
            "10",
            "--seed",
            "7",
            "--out",
            s(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let line = String::from_utf8(o.stdout).unwrap();
        line.split_whitespace().next().unwrap().to_string()
    };
    let a = make(&f.root.join("sa"));
    let b = make(&f.root.join("sb"));
    assert_eq!(a, b);
    let da = std::fs::read(f.root.join("sa").join(&a).join("survey.json")).unwrap();
    let db = std::fs::read(f.root.join("sb").join(&b).join("survey.json")).unwrap();
    assert_eq!(da, db);
    let def: serde_json::Value = serde_json::from_slice(&da).unwrap();
    assert_eq!(def["items"].as_array().unwrap().len(), 20);
}

#[test]
fn survey_stats_from_logs() {
    let f = fixture();
    let o = ctsynth(&[
        "survey", "make", "--real", s(&f.real), "--synth", s(&f.synth), "--seed", "1", "--out", s(&f.root),
    ]);
    assert!(o.status.success());
    let id = String::from_utf8(o.stdout).unwrap().split_whitespace().next().unwrap().to_string();
    let dir = f.root.join(&id);
    let truth: std::collections::BTreeMap<String, String> =
        serde_json::from_slice(&std::fs::read(dir.join("truth.json")).unwrap()).unwrap();
    let mut log = String::new();
    for (item, t) in &truth {
        let judgment = if t == "real" { 1 } else { 2 };
        log.push_str(&format!(
            "{{\"survey_id\":\"{id}\",\"rater_id\":\"r1\",\"item_id\":\"{item}\",\"judgment\":{judgment},\"rationale\":null,\"ts\":\"2024-01-01T00:00:00Z\"}}\n"
        ));
    }
    std::fs::write(dir.join("responses.jsonl"), log).unwrap();
    let o = ctsynth(&["survey", "stats", s(&dir), "--labels", "Survey 1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let row = &v["accuracy"]["rows"][0];
    assert_eq!(row["label"], "Survey 1");
    assert_eq!(row["real_only"], 100.0);
    assert_eq!(row["synth_only"], 0.0);
    assert_eq!(row["n_indeterminable"], 10);
    assert_eq!(v["tests"].as_array().unwrap().len(), 2);
}
