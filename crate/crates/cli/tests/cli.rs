use std::path::Path;
use std::process::{Command, Output};

fn lshknn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lshknn"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = lshknn(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn pipeline(dir: &Path) {
    ok(
        &[
            "gen-synthetic",
            "--n",
            "1000",
            "--d",
            "10",
            "--m",
            "10",
            "--seed",
            "4",
            "--out",
            "syn",
        ],
        dir,
    );
    ok(
        &[
            "truth",
            "--input",
            "syn.data.fvecs",
            "--queries",
            "syn.queries.fvecs",
            "--k",
            "10",
            "--out",
            "syn.truth.ivecs",
        ],
        dir,
    );
    ok(
        &[
            "build",
            "--input",
            "syn.data.fvecs",
            "--space",
            "8M",
            "--recall",
            "0.9",
            "--seed",
            "3",
            "--out",
            "syn.lshidx",
        ],
        dir,
    );
}

#[test]
fn end_to_end_pipeline_meets_target() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let stdout = ok(
        &[
            "query",
            "--index",
            "syn.lshidx",
            "--queries",
            "syn.queries.fvecs",
            "--k",
            "10",
            "--truth",
            "syn.truth.ivecs",
            "--report",
            "report.csv",
        ],
        dir.path(),
    );
    assert!(stdout.contains("qps:"));
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next(),
        Some("query,recall,depth,reps_at_depth,candidates,distance_computations")
    );
    let rows: Vec<&str> = lines.clone().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 10);
    let mean: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("# mean_recall "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(mean >= 0.9, "mean recall {mean}");
}

#[test]
fn reports_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        pipeline(dir);
        ok(
            &[
                "query",
                "--index",
                "syn.lshidx",
                "--queries",
                "syn.queries.fvecs",
                "--truth",
                "syn.truth.ivecs",
                "--report",
                "r.csv",
            ],
            dir,
        );
    }
    for file in ["syn.data.fvecs", "syn.truth.ivecs", "syn.lshidx", "r.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(file)).unwrap(),
            std::fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn query_without_truth_omits_recall() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let stdout = ok(
        &[
            "query",
            "--index",
            "syn.lshidx",
            "--queries",
            "syn.queries.fvecs",
            "--report",
            "plain.csv",
        ],
        dir.path(),
    );
    assert!(stdout.contains("qps:"));
    assert!(!stdout.contains("mean recall"));
    let report = std::fs::read_to_string(dir.path().join("plain.csv")).unwrap();
    assert_eq!(
        report.lines().next(),
        Some("query,depth,reps_at_depth,candidates,distance_computations")
    );
    assert!(!report.contains("recall"));
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lshknn(&["build", "--space", "1M", "--out", "x.lshidx"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--input"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("v.txt"), "1 0\n0 1\n0.5 0.5\n").unwrap();
    // budget too small to hold a single repetition
    let out = lshknn(
        &[
            "build", "--input", "v.txt", "--format", "text", "--space", "100", "--out", "x",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    let out = lshknn(
        &[
            "query",
            "--index",
            "missing.lshidx",
            "--queries",
            "v.txt",
            "--report",
            "r",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn text_format_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "gen-synthetic",
            "--n",
            "300",
            "--d",
            "4",
            "--m",
            "5",
            "--format",
            "text",
            "--out",
            "t",
        ],
        dir.path(),
    );
    let stdout = ok(
        &[
            "bench",
            "--input",
            "t.data.txt",
            "--queries",
            "t.queries.txt",
            "--format",
            "text",
            "--space",
            "4M",
            "--recalls",
            "0.5,0.9",
        ],
        dir.path(),
    );
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[1], "target,recall,qps,distance_computations");
    assert!(lines[2].starts_with("0.5,") && lines[3].starts_with("0.9,"));
}
