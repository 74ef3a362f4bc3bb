use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xautoml"))
}

fn data(f: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(f)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn profile_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let o = run(&[
        "profile",
        s(&data("mini.csv")),
        "--out",
        s(&out),
        "--seed",
        "1",
        "--jobs",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let profile = std::fs::read_to_string(out.join("profile.csv")).unwrap();
    assert!(profile.contains("n_rows,200"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("200 rows"));

    let summary_dir = dir.path().join("s");
    let o = run(&["report", s(&out), "--out", s(&summary_dir)]);
    assert_eq!(code(&o), 0);
    assert!(summary_dir.join("summary.txt").exists());
    std::fs::write(out.join("profile.csv"), "tampered").unwrap();
    assert_eq!(code(&run(&["report", s(&out)])), 3);
}

#[test]
fn full_run_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg = data("mini_config.json");
    let oa = run(&["run", "--config", s(&cfg), "--out", s(&a), "--jobs", "1"]);
    assert_eq!(code(&oa), 0, "{}", String::from_utf8_lossy(&oa.stderr));
    let ob = run(&["run", "--config", s(&cfg), "--out", s(&b), "--jobs", "4"]);
    assert_eq!(code(&ob), 0);
    for f in [
        "cast_solution.json",
        "rfe_curve.csv",
        "anomaly.csv",
        "study_trace.jsonl",
        "importance.csv",
        "model.json",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(code(&run(&["report", s(&a)])), 0);

    let c = dir.path().join("c");
    assert_eq!(
        code(&run(&["run", "--config", s(&cfg), "--out", s(&c), "--seed", "99"])),
        0
    );
    assert_ne!(
        std::fs::read(a.join("study_trace.jsonl")).unwrap(),
        std::fs::read(c.join("study_trace.jsonl")).unwrap()
    );
}

#[test]
fn staged_commands_chain_through_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("mini_config.json");
    let ext = dir.path().join("ext");
    let o = run(&[
        "extract",
        "--data",
        s(&data("mini.csv")),
        "--config",
        s(&cfg),
        "--out",
        s(&ext),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ext.join("features.csv").exists());

    let sel = dir.path().join("sel");
    let o = run(&["select", "--features", s(&ext), "--config", s(&cfg), "--out", s(&sel)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(sel.join("selected.csv").exists() && sel.join("rfe_curve.csv").exists());

    let det = dir.path().join("det");
    let o = run(&["detect", "--features", s(&sel), "--stem", "selected", "--out", s(&det)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(det.join("anomaly.csv").exists());

    let cls = dir.path().join("cls");
    let o = run(&[
        "classify",
        "--features",
        s(&sel),
        "--stem",
        "selected",
        "--exclude",
        s(&det.join("anomaly.csv")),
        "--config",
        s(&cfg),
        "--out",
        s(&cls),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(cls.join("importance.csv").exists() && cls.join("best_so_far.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_cfg = dir.path().join("bad.json");
    std::fs::write(
        &bad_cfg,
        r#"{"input": {"format": "csv", "path": "x.csv"}, "stages": ["ingest", "classify"]}"#,
    )
    .unwrap();
    assert_eq!(code(&run(&["run", "--config", s(&bad_cfg)])), 2);
    std::fs::write(&bad_cfg, r#"{"input": {"format": "csv", "path": "x.csv"}, "typo": 1}"#).unwrap();
    assert_eq!(code(&run(&["run", "--config", s(&bad_cfg)])), 2);
    assert_eq!(code(&run(&["run"])), 2);

    let out = dir.path().join("o");
    assert_eq!(
        code(&run(&["profile", s(&dir.path().join("nope.csv")), "--out", s(&out)])),
        3
    );

    let one_class = dir.path().join("one.csv");
    let mut text = String::from("a,b,label\n");
    for i in 0..30 {
        text.push_str(&format!("{i},{},-1\n", i % 7));
    }
    std::fs::write(&one_class, text).unwrap();
    let o = run(&["extract", "--data", s(&one_class), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let o = run(&["select", "--features", s(&out), "--out", s(&dir.path().join("sel"))]);
    assert_eq!(code(&o), 4);
    assert!(dir.path().join("sel/run_report.json").exists());
}
