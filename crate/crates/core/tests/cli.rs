use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gasket(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gasket"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn gasket_depth_one_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = gasket(&["gasket", "--depth", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let cells = fs::read_to_string(dir.path().join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 4);
    let vertices = fs::read_to_string(dir.path().join("vertices.csv")).unwrap();
    assert_eq!(vertices.lines().count(), 10);
    let junctions = fs::read_to_string(dir.path().join("junctions.csv")).unwrap();
    assert_eq!(junctions.lines().count(), 4);
}

#[test]
fn reruns_are_byte_identical() {
    for args in [
        &["measure", "--depth", "3"][..],
        &["vfield", "--depth", "5", "--samples", "200", "--seed", "3"],
        &[
            "sample",
            "--depth",
            "7",
            "--samples",
            "100",
            "--format",
            "jsonl",
        ],
        &["lyapunov", "--samples", "20", "--length", "50"],
    ] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        assert_eq!(gasket(args, a.path()).status.code(), Some(0), "{args:?}");
        assert_eq!(gasket(args, b.path()).status.code(), Some(0), "{args:?}");
        assert_eq!(
            read_dir_sorted(a.path()),
            read_dir_sorted(b.path()),
            "{args:?}"
        );
    }
}

#[test]
fn jsonl_rows_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = gasket(
        &[
            "measure", "--depth", "2", "--seed", "5", "--format", "jsonl",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("measure.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 9);
    for line in text.lines() {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(row["depth"], 2);
        assert_eq!(row["seed"], 5);
        assert_eq!(row["c"], 0.5);
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "depth = 2\nseed = 4\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = gasket(
        &["measure", "--config", cfg.to_str().unwrap(), "--seed", "8"],
        &out_dir,
    );
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(out_dir.join("measure.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("2,8,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let usage = gasket(&["measure", "--depth", "21"], dir.path());
    assert_eq!(usage.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&usage.stderr).contains("depth"));
    assert_eq!(gasket(&["nonsense"], dir.path()).status.code(), Some(2));
    assert_eq!(
        gasket(&["measure", "--norm-c", "-1"], dir.path())
            .status
            .code(),
        Some(2)
    );

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let io = gasket(&["measure", "--depth", "1"], &blocker.join("sub"));
    assert_eq!(io.status.code(), Some(3));
}

#[test]
fn verify_subset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = gasket(
        &["verify", "--only", "beta,pushforward,lyapunov_sum"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let report = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);
    assert!(report.lines().skip(1).all(|l| l.contains(",pass,")));
}

#[test]
fn verify_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = gasket(&["verify", "--only", "theta_mass"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta_mass"));
}
