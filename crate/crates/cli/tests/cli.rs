use std::path::Path;
use std::process::{Command, Output};

fn dsp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsp"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = dsp(args, cwd);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], cwd: &Path) -> String {
    let out = dsp(args, cwd);
    assert!(!out.status.success(), "{args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

fn small_data(cwd: &Path) {
    ok(
        &[
            "gen-data",
            "--out",
            "data",
            "--images-per-domain",
            "6",
            "--heldout",
            "6",
            "--size",
            "16",
        ],
        cwd,
    );
}

#[test]
fn pipeline_artifacts_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    small_data(cwd);
    assert_eq!(std::fs::read_dir(cwd.join("data/train")).unwrap().count(), 24);
    ok(
        &[
            "extract",
            "--images",
            "data/train",
            "--features",
            "f.dtns",
            "--styles",
            "s.dtns",
            "--channels",
            "4",
        ],
        cwd,
    );
    ok(&["ffs", "--styles", "s.dtns", "--k", "3", "--out", "base.json"], cwd);
    let base: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cwd.join("base.json")).unwrap()).unwrap();
    assert_eq!(base["indices"].as_array().unwrap().len(), 3);
    assert_eq!(base["indices"][0], 0);
    ok(
        &[
            "stylize",
            "--features",
            "f.dtns",
            "--base",
            "base.json",
            "--out",
            "st.dtns",
        ],
        cwd,
    );
    let tags: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cwd.join("st.dtns.tags.json")).unwrap()).unwrap();
    assert_eq!(tags["domain"].as_array().unwrap().len(), 72);
    ok(
        &[
            "train-dsp",
            "--stylized",
            "st.dtns",
            "--k",
            "3",
            "--iters",
            "40",
            "--out",
            "m.model",
        ],
        cwd,
    );
    ok(
        &[
            "assign-labels",
            "--model",
            "m.model",
            "--features",
            "f.dtns",
            "--out",
            "l.jsonl",
        ],
        cwd,
    );
    let labels = std::fs::read_to_string(cwd.join("l.jsonl")).unwrap();
    assert_eq!(labels.lines().count(), 24);
    let stdout = ok(
        &[
            "train-dal",
            "--data",
            "data/manifest.json",
            "--labels",
            "l.jsonl",
            "--epochs",
            "2",
            "--out",
            "dal",
        ],
        cwd,
    );
    assert!(stdout.contains("held-out accuracy"), "{stdout}");
    ok(
        &[
            "train-dal",
            "--data",
            "data/manifest.json",
            "--epochs",
            "1",
            "--out",
            "dal0",
        ],
        cwd,
    );
}

#[test]
fn scg_augment_writes_variants() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    small_data(cwd);
    ok(
        &[
            "scg-augment",
            "--in",
            "data/heldout",
            "--out",
            "aug",
            "--per-image",
            "3",
            "--alpha",
            "0.5",
        ],
        cwd,
    );
    let names: Vec<String> = std::fs::read_dir(cwd.join("aug"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.len(), 18);
    assert!(names.iter().all(|n| n.contains("_scg") && n.ends_with(".png")));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    small_data(cwd);
    ok(
        &[
            "extract",
            "--images",
            "data/train",
            "--features",
            "f.dtns",
            "--styles",
            "s.dtns",
            "--channels",
            "4",
        ],
        cwd,
    );

    fails(&["extract", "--images", "missing", "--features", "x.dtns"], cwd);
    fails(&["ffs", "--styles", "s.dtns", "--k", "0", "--out", "b.json"], cwd);
    fails(&["ffs", "--styles", "s.dtns", "--k", "25", "--out", "b.json"], cwd);
    fails(
        &[
            "ffs", "--styles", "s.dtns", "--k", "2", "--start", "nowhere", "--out", "b.json",
        ],
        cwd,
    );
    fails(
        &["scg-augment", "--in", "data/train", "--out", "aug", "--beta", "1.5"],
        cwd,
    );
    fails(&["gen-data", "--out", "d2", "--classes", "1"], cwd);

    std::fs::write(cwd.join("garbage.jsonl"), "not json\n").unwrap();
    fails(
        &[
            "train-dal",
            "--data",
            "data/manifest.json",
            "--labels",
            "garbage.jsonl",
            "--out",
            "o",
        ],
        cwd,
    );
    std::fs::write(cwd.join("short.jsonl"), "").unwrap();
    fails(
        &[
            "train-dal",
            "--data",
            "data/manifest.json",
            "--labels",
            "short.jsonl",
            "--out",
            "o",
        ],
        cwd,
    );

    std::fs::write(cwd.join("bad.toml"), "methods = [\"nonsense\"]\n").unwrap();
    let err = fails(&["experiment", "--config", "bad.toml", "--out", "e"], cwd);
    assert!(err.contains("bad.toml"), "{err}");
    std::fs::write(cwd.join("typo.toml"), "epochz = 3\n").unwrap();
    fails(&["experiment", "--config", "typo.toml", "--out", "e"], cwd);
}

#[test]
fn experiment_report_lists_every_run() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    std::fs::write(
        cwd.join("exp.toml"),
        "methods = [\"deepall\", \"dann_dsp\"]\nseeds = [3]\nimages_per_domain = 10\nheldout_images = 10\nepochs = 2\ndsp_iterations = 30\n",
    )
    .unwrap();
    let stdout = ok(&["experiment", "--config", "exp.toml", "--out", "exp"], cwd);
    assert!(stdout.contains("deepall") && stdout.contains("dann_dsp"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cwd.join("exp/report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    assert!(cwd.join("exp/dann_dsp/seed3/labels.jsonl").exists());
    assert!(cwd.join("exp/deepall/seed3/trace.csv").exists());
}
