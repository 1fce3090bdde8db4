use std::fs;
use std::process::Command;

fn mpia() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mpia"))
}

#[test]
fn run_single_with_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mpia()
        .args([
            "run-single",
            "--K",
            "3",
            "--N",
            "4",
            "--M",
            "4",
            "--d",
            "2",
            "--max-outer-iters",
            "3",
            "--output-dir",
        ])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mpia: final leakage"));
}

#[test]
fn config_file_with_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.cfg");
    fs::write(
        &cfg,
        format!(
            "num_realizations = 4\nmax_outer_iters = 50\nalgorithm = ilm\noutput_dir = {}\n",
            tmp.path().display()
        ),
    )
    .unwrap();
    let out = mpia()
        .args(["run-montecarlo", "--config"])
        .arg(&cfg)
        .args(["--max-outer-iters", "2"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(tmp.path().join("final.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows
        .iter()
        .all(|r| r.contains(",ilm,") && r.contains(",2,")));
    assert!(tmp.path().join("aggregate.json").exists());
}

#[test]
fn distsim_report_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mpia()
        .args(["distsim-report", "--schedule", "ilm", "--output-dir"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("1200 over-the-air"));
    assert!(tmp.path().join("traffic.csv").exists());
}

#[test]
fn errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["run-single", "--K", "zero"],
        vec!["run-single", "--algorithm", "gradient"],
        vec!["run-montecarlo", "--num-realizations", "0"],
        vec!["run-single", "--config", "/nonexistent/exp.cfg"],
        vec!["distsim-report", "--schedule", "/nonexistent/schedule.txt"],
        vec!["no-such-command"],
    ] {
        let out = mpia().current_dir(tmp.path()).args(&args).output().unwrap();
        assert!(!out.status.success(), "{args:?} should fail");
    }
}
