use std::fs;
use std::process::Command;

const SMALL: &str = "p = 120\ns = 4\nn = 400\nholdout_rows = 40\ngamma = 3.0\ntrials = 4\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pgdebias"))
}

#[test]
fn run_writes_outputs_and_flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--trials", "3", "--jobs", "2", "--seed", "5", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let trials = fs::read_to_string(out.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 4);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["p"], 120);
    assert_eq!(summary["config"]["seed"], 5);
    assert_eq!(summary["config"]["holdout_rows"], 40);
    assert_eq!(summary["trials"], 3);
    assert!(out.join("timings.csv").exists());
    assert!(out.join("intervals_trial2.csv").exists());
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, SMALL).unwrap();
    let mut files = Vec::new();
    for (k, jobs) in ["1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("out{k}"));
        let status = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--jobs", jobs, "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        files.push(fs::read(out.join("trials.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "q = 0.7\n").unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("q=0.7"));

    fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert!(!bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .status()
        .unwrap()
        .success());
}

#[test]
fn tune_and_scalars_print_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = bin()
        .args(["tune", "--with-w", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["w"].as_f64().unwrap() > 0.0);
    assert!(v["lambda_pg"].as_f64().unwrap() > 0.0);

    let holdout = dir.path().join("holdout.txt");
    fs::write(&holdout, "4\n6\n5\n5\n").unwrap();
    let out = bin()
        .args(["estimate-scalars", "--holdout"])
        .arg(&holdout)
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["mu_hat"], 5.0);
    assert_eq!(v["v_hat"], 1.0);
}

#[test]
fn tune_reads_design_files() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("a.csv");
    let response = dir.path().join("y.csv");
    let rows: Vec<String> = (0..200)
        .map(|i| {
            (0..3)
                .map(|j| if (i * 7 + j * 3) % 4 == 0 { "1" } else { "0" })
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    fs::write(&design, rows.join("\n") + "\n").unwrap();
    let ys: Vec<String> = (0..200).map(|i| ((i % 5) + 1).to_string()).collect();
    fs::write(&response, ys.join("\n") + "\n").unwrap();
    let out = bin()
        .args(["tune", "--mu", "4", "--design"])
        .arg(&design)
        .arg("--response")
        .arg(&response)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["d_easy"].as_f64().unwrap() > 0.0);
}
