use std::fs;
use std::process::Command;

fn gaugekit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gaugekit"))
}

const SMALL: &str = "\
[domain]
kind = unit_ball_3d
[mesh]
n_radial = 6
n_angular = 8
[potential]
family = constant
lambda = 1
[run]
timing = false
probes = 4
";

#[test]
fn solve_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out");
    let status = gaugekit()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "3", "--threads", "1"])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert!(row.contains(",converged,"), "{row}");
    assert!(row.split(',').nth(8) == Some("3"));
    assert!(out.join("report.json").exists());
}

#[test]
fn sweep_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.cfg");
    fs::write(&cfg, SMALL.replace("probes = 4", "probes = 4\nstages = solve, conditions")).unwrap();
    let cache = dir.path().join("cache");
    let run = |out: &str| {
        gaugekit()
            .args(["sweep", "--axis", "lambda", "--values", "1,12", "--formats", "csv", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(out))
            .arg("--cache-dir")
            .arg(&cache)
            .status()
            .unwrap()
    };
    assert!(run("cold").success());
    assert!(run("warm").success());
    let cold = fs::read(dir.path().join("cold/report.csv")).unwrap();
    let warm = fs::read(dir.path().join("warm/report.csv")).unwrap();
    assert_eq!(cold, warm);
    let text = String::from_utf8(cold).unwrap();
    assert!(text.lines().nth(2).unwrap().contains(",diverged,"));

    let stat = gaugekit().args(["cache", "stat", "--cache-dir"]).arg(&cache).output().unwrap();
    assert!(String::from_utf8_lossy(&stat.stdout).contains("2 files"));
    let clear = gaugekit().args(["cache", "clear", "--cache-dir"]).arg(&cache).output().unwrap();
    assert!(clear.status.success());
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 0);
}

#[test]
fn config_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[potential]\nfamily = hardy_boundary\na = 0.1\n").unwrap();
    let out = gaugekit().arg("solve").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn failed_stage_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.cfg");
    fs::write(&cfg, SMALL.replace("lambda = 1", "lambda = 12")).unwrap();
    let status = gaugekit()
        .arg("riccati")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    assert!(dir.path().join("report.csv").exists());
}
