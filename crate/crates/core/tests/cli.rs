mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::data_path;

fn randchan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_randchan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data(name: &str) -> String {
    data_path(name).display().to_string()
}

fn assert_rectangular_csv(text: &str) {
    let mut lines = text.lines();
    let width = lines.next().expect("header row").split(',').count();
    for l in lines {
        assert_eq!(l.split(',').count(), width, "row {l:?}");
    }
}

#[test]
fn stirling_numbers() {
    for (k, n, want) in [("4", "2", "7"), ("3", "3", "1"), ("2", "5", "0")] {
        let o = randchan(&["stirling", "--k", k, "--n", n]);
        assert!(o.status.success());
        assert_eq!(stdout(&o).trim(), want);
    }
    assert_eq!(randchan(&["stirling", "--k", "4"]).status.code(), Some(2));
}

#[test]
fn span_prob_table() {
    let o = randchan(&["span-prob", "--n", "2", "--kmax", "3"]);
    let text = stdout(&o);
    assert_eq!(
        text.lines().next().unwrap(),
        "n,k,p_exact_num,p_exact_den,p_float"
    );
    assert_eq!(text.lines().last().unwrap(), "2,3,3,4,0.75");
    assert_rectangular_csv(&text);

    let o = randchan(&["span-prob", "--n", "3", "--kmax", "2"]);
    assert!(stdout(&o).lines().skip(1).all(|l| l.ends_with(",0")));

    let o = randchan(&[
        "span-prob",
        "--n",
        "2,3,4,10",
        "--kmax",
        "120",
        "--format",
        "json",
    ]);
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 480);
}

#[test]
fn mean_span_values() {
    let o = randchan(&["mean-span", "--n", "2,5,8"]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("n=2: 3.00000000 "));
    assert!(lines[1].starts_with("n=5: 71.0486111 "));
    assert!(lines[2].starts_with("n=8: 262.510567 "));
    assert_eq!(randchan(&["mean-span", "--n", "1"]).status.code(), Some(2));
}

#[test]
fn check_verdicts() {
    let o = randchan(&[
        "check",
        "--system",
        &data("overlapping_channels.json"),
        "--mode",
        "rcc",
    ]);
    assert!(stdout(&o).starts_with("RCC: yes ("));
    let o = randchan(&[
        "check",
        "--system",
        &data("shared_channel.json"),
        "--mode",
        "rcc",
    ]);
    assert!(stdout(&o).starts_with("RCC: no; counterexample γ=(2,2,1)"));
    let o = randchan(&[
        "check",
        "--system",
        &data("diagonal_3_zero_mode.json"),
        "--mode",
        "rcc",
        "--exact",
    ]);
    let text = stdout(&o);
    assert!(text.starts_with("RCC: no"));
    assert!(text.contains("warning: A is singular"));
    let o = randchan(&[
        "check",
        "--system",
        &data("shared_channel_repeated_mode.json"),
        "--mode",
        "kalman",
    ]);
    assert!(stdout(&o).contains("controllable: no"));
    let o = randchan(&[
        "check",
        "--system",
        &data("diagonal_3.json"),
        "--mode",
        "rco",
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["holds"], true);
}

#[test]
fn cap_exceeded_exit_code() {
    let o = Command::new(env!("CARGO_BIN_EXE_randchan"))
        .args([
            "check",
            "--system",
            &data("diagonal_3.json"),
            "--mode",
            "rcc",
        ])
        .env("RANDCHAN_CAP", "5")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn span_fraction_reports() {
    let o = randchan(&[
        "span-fraction",
        "--system",
        &data("diagonal_3.json"),
        "--k",
        "3",
        "--exact",
    ]);
    assert_eq!(stdout(&o).trim(), "6/27 = formula 6/27: equality");
    let o = randchan(&[
        "span-fraction",
        "--system",
        &data("shared_channel.json"),
        "--k",
        "4",
        "--exact",
    ]);
    assert!(stdout(&o).trim().ends_with(": strict"));
    let o = randchan(&[
        "span-fraction",
        "--system",
        &data("diagonal_3.json"),
        "--k",
        "2",
        "--exact",
    ]);
    assert!(stdout(&o).starts_with("0/"));
    // randomized mode needs a seed
    let o = randchan(&[
        "span-fraction",
        "--system",
        &data("diagonal_3.json"),
        "--k",
        "3",
        "--trials",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn steering_output_and_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("diag.json");
    std::fs::write(&sys, r#"{"A": [[2, 0], [0, 3]], "B": [[1, 0], [0, 1]]}"#).unwrap();
    let s = sys.to_str().unwrap();
    let o = randchan(&[
        "steer", "--system", s, "--gamma", "1,2", "--x0", "0,0", "--xf", "2,3",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "u = 1, 3; residual 0");
    let o = randchan(&[
        "steer", "--system", s, "--gamma", "2,1,2", "--x0", "0,0", "--xf", "0,0",
    ]);
    assert_eq!(stdout(&o).trim(), "u = 0, 0, 0; residual 0");
    let o = randchan(&[
        "steer",
        "--system",
        &data("shared_channel.json"),
        "--gamma",
        "2,2,1",
        "--x0",
        "0,0,0",
        "--xf",
        "0,1,-1",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("target not reached"));
    let o = randchan(&[
        "steer", "--system", s, "--gamma", "3", "--x0", "0,0", "--xf", "0,0",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let cfg = data("switching_feedback.json");
    let o = randchan(&[
        "simulate",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "step,x1,x2,x3,active_channels"
    );
    assert_eq!(text.lines().count(), 27);
    assert_rectangular_csv(&text);
    assert!(dir.path().join("traj.csv.manifest.json").exists());
    assert_eq!(
        randchan(&["simulate", "--config", &cfg]).status.code(),
        Some(2)
    );
}

fn ensemble(dir: &Path, name: &str, cfg: &str, extra: &[&str]) -> Vec<u8> {
    let out = dir.join(name);
    let mut args = vec!["ensemble", "--config", cfg, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = randchan(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read(out).unwrap()
}

#[test]
fn ensemble_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("switching_feedback.json");
    let tiny = ensemble(
        dir.path(),
        "tiny.csv",
        &cfg,
        &["--trials", "2", "--seed", "1"],
    );
    let tiny = String::from_utf8(tiny).unwrap();
    assert_eq!(tiny.lines().next().unwrap(), "step,coord,mean,var");
    assert!(tiny.lines().skip(1).all(|l| l
        .split(',')
        .nth(3)
        .unwrap()
        .parse::<f64>()
        .unwrap()
        .is_finite()));

    let args = ["--trials", "300", "--seed", "42", "--percentiles"];
    let a = ensemble(dir.path(), "a.csv", &cfg, &args);
    let b = ensemble(dir.path(), "b.csv", &cfg, &args);
    let c = ensemble(
        dir.path(),
        "c.csv",
        &cfg,
        &[&args[..], &["--threads", "1"]].concat(),
    );
    let d = ensemble(
        dir.path(),
        "d.csv",
        &cfg,
        &[&args[..], &["--threads", "5"]].concat(),
    );
    assert!(a == b && a == c && a == d);
    assert_rectangular_csv(std::str::from_utf8(&a).unwrap());

    // rerun from the manifest alone
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("a.csv.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "ensemble");
    let replay_cfg = dir.path().join("replay.json");
    std::fs::write(&replay_cfg, manifest["input"].to_string()).unwrap();
    let p = &manifest["parameters"];
    let trials = p["trials"].to_string();
    let seed = p["seed"].to_string();
    let digits = p["digits"].to_string();
    let mut replay = vec!["--trials", &trials, "--seed", &seed, "--digits", &digits];
    if p["percentiles"] == true {
        replay.push("--percentiles");
    }
    let r = ensemble(
        dir.path(),
        "replay.csv",
        replay_cfg.to_str().unwrap(),
        &replay,
    );
    assert_eq!(r, a);
}

#[test]
fn ensemble_keeps_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("kept.csv");
    let cfg = data("switching_feedback.json");
    ensemble(
        dir.path(),
        "stats.csv",
        &cfg,
        &[
            "--trials",
            "10",
            "--seed",
            "2",
            "--keep",
            "4",
            "--trajectories",
            traj.to_str().unwrap(),
        ],
    );
    let text = std::fs::read_to_string(traj).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 26);
    assert_rectangular_csv(&text);
}
