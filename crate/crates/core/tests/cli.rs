use std::path::Path;
use std::process::{Command, Output};

fn keyframe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keyframe"))
        .args(args)
        .output()
        .expect("spawn keyframe")
}

fn ok(args: &[&str]) -> String {
    let out = keyframe(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scores_csv() -> String {
    format!("{}/data/published_scores.csv", env!("CARGO_MANIFEST_DIR"))
}

fn small_dataset(dir: &Path) {
    ok(&[
        "gen-synthetic",
        "--out",
        s(dir),
        "--seed",
        "5",
        "--train-key",
        "10",
        "--train-ordinary",
        "10",
        "--test-key",
        "5",
        "--test-ordinary",
        "5",
        "--dim",
        "4",
    ]);
}

#[test]
fn exit_codes() {
    assert_eq!(keyframe(&["--help"]).status.code(), Some(0));
    assert_eq!(keyframe(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(keyframe(&["evaluate"]).status.code(), Some(1));
    assert_eq!(
        keyframe(&["evaluate", "--from-scores", "/nonexistent/scores.csv"])
            .status
            .code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.kff");
    std::fs::write(&bad, b"NOPE").unwrap();
    let heads = dir.path().join("heads");
    std::fs::create_dir(&heads).unwrap();
    assert_eq!(
        keyframe(&["predict", "--features", s(&bad), "--heads", s(&heads)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn score_replay_prints_tables_and_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&[
        "evaluate",
        "--from-scores",
        &scores_csv(),
        "--out",
        s(dir.path()),
        "--delta",
        "extra=fusion/Ensemble Model:pretrained/Xception",
    ]);
    assert!(text.contains("Published"));
    assert!(text.contains("fusion/Ensemble Model vs fusion: +3.027"));
    assert!(text.contains("extra: +"));
    for f in ["report.txt", "report.csv", "report.json"] {
        assert!(dir.path().join(f).is_file());
    }
    let csv = ok(&[
        "report",
        "--input",
        s(&dir.path().join("report.json")),
        "--format",
        "csv",
    ]);
    assert_eq!(
        csv,
        std::fs::read_to_string(dir.path().join("report.csv")).unwrap()
    );
    assert_eq!(
        keyframe(&[
            "report",
            "--input",
            s(&dir.path().join("report.json")),
            "--format",
            "xml"
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn gen_synthetic_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    small_dataset(a.path());
    small_dataset(b.path());
    for rel in [
        "manifest.csv",
        "features/synth_train.kff",
        "features/synth_test.kff",
        "labels/synth_test.labels",
    ] {
        assert_eq!(
            std::fs::read(a.path().join(rel)).unwrap(),
            std::fs::read(b.path().join(rel)).unwrap(),
            "{rel}"
        );
    }
}

#[test]
fn file_to_file_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_dataset(d);
    let manifest = d.join("manifest.csv");
    let fused = d.join("fused");
    ok(&[
        "fuse",
        "--manifest",
        s(&manifest),
        "--features",
        s(&d.join("features")),
        "--out",
        s(&fused),
        "--k",
        "3",
    ]);
    assert!(fused.join("synth_test.kff").is_file());
    let heads = d.join("heads");
    ok(&[
        "train",
        "--manifest",
        s(&manifest),
        "--features",
        s(&fused),
        "--out",
        s(&heads),
        "--members",
        "3",
        "--epochs",
        "30",
        "--lr",
        "0.01",
    ]);
    assert!(heads.join("member_2.kfh").is_file());
    let preds = d.join("preds.csv");
    ok(&[
        "predict",
        "--features",
        s(&fused.join("synth_test.kff")),
        "--heads",
        s(&heads),
        "--out",
        s(&preds),
    ]);
    let text = std::fs::read_to_string(&preds).unwrap();
    assert!(text.starts_with("frame_id,score,label,member_0,member_1,member_2\n"));
    assert_eq!(text.lines().count(), 11);

    let run_file = d.join("ensemble.run");
    std::fs::write(&run_file, "features=fused/synth_test.kff\nthreshold=0.5\nmember=heads/member_0.kfh\nmember=heads/member_1.kfh\nmember=heads/member_2.kfh\n").unwrap();
    let via_run = ok(&["predict", "--run", s(&run_file)]);
    assert_eq!(via_run, text);

    let report = d.join("report");
    let printed = ok(&[
        "evaluate",
        "--manifest",
        s(&manifest),
        "--features",
        s(&fused),
        "--heads",
        s(&heads),
        "--out",
        s(&report),
    ]);
    assert!(printed.contains("test/ensemble"));
    let rendered = ok(&["report", "--input", s(&report.join("report.json"))]);
    assert_eq!(rendered, printed);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_dataset(d);
    std::fs::write(
        d.join("run.cfg"),
        "manifest=manifest.csv\nfeatures=features\nout=cfg_out\nmembers=2\nepochs=5\nk=2\n",
    )
    .unwrap();
    ok(&["train", "--config", s(&d.join("run.cfg"))]);
    assert!(d.join("cfg_out/member_1.kfh").is_file());
    assert!(!d.join("cfg_out/member_2.kfh").exists());
    ok(&[
        "train",
        "--config",
        s(&d.join("run.cfg")),
        "--members",
        "3",
        "--out",
        s(&d.join("flag_out")),
    ]);
    assert!(d.join("flag_out/member_2.kfh").is_file());
}
