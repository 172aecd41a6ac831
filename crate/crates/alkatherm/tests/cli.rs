use std::process::{Command, Output};

use alkatherm::lpv_io;
use alkatherm::report::read_rows;
use alkatherm_core::lpv::build_table;
use alkatherm_core::params::{Preset, SystemParameters};
use alkatherm_core::scenario::LogRow;

fn alkatherm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alkatherm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().parse().unwrap()))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

#[test]
fn steady_reports_the_full_load_opening() {
    let o = alkatherm(&["steady", "--preset", "lab-5nm3", "--current-a", "720"]);
    assert!(o.status.success(), "{o:?}");
    let u = field(&stdout(&o), "opening");
    assert!((0.08..=0.14).contains(&u), "{u}");
}

#[test]
fn neutral_point_of_both_presets() {
    let lab = stdout(&alkatherm(&["neutral-point", "--preset", "lab-5nm3"]));
    assert!((field(&lab, "load_fraction") - 0.7).abs() <= 0.1);
    let mw = stdout(&alkatherm(&["neutral-point", "--preset", "mw-500nm3"]));
    assert!((0.2..=0.4).contains(&field(&mw, "load_fraction")));
}

#[test]
fn simulate_writes_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "controller = \"mpc\"\nduration_s = 7200.0\nlog_interval_s = 120.0\n",
    )
    .unwrap();
    let csv = dir.path().join("run.csv");
    let o = alkatherm(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("overshoot"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), LogRow::COLUMNS.join(","));
    let rows = read_rows(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 61);
    assert_eq!(rows[60][0], 7200.0);
    assert!(!dir.path().join("run.qp.txt").exists());
}

#[test]
fn seeded_runs_repeat_and_stay_in_range() {
    let run = |seed: &str| {
        let o = alkatherm(&[
            "simulate",
            "--preset",
            "mw-500nm3",
            "--controller",
            "pid-i",
            "--seed",
            seed,
        ]);
        assert!(o.status.success(), "{o:?}");
        o.stdout
    };
    let a = run("7");
    assert_eq!(a, run("7"));
    assert_ne!(a, run("8"));
    let rows = read_rows(a.as_slice()).unwrap();
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r[6])));
}

#[test]
fn compare_lists_every_controller() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "duration_s = 7200.0\n").unwrap();
    let out = dir.path().join("cmp.csv");
    let o = alkatherm(&[
        "compare",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    let table = std::fs::read_to_string(out).unwrap();
    let names: Vec<&str> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(names, ["pid", "pid-i", "mpc"]);
}

#[test]
fn lpv_table_export_matches_a_fresh_build() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("table.txt");
    let o = alkatherm(&[
        "lpv-table",
        "--preset",
        "lab-5nm3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    let t = lpv_io::import(&std::fs::read_to_string(out).unwrap()).unwrap();
    let fresh = build_table(
        &SystemParameters::lab_5nm3(),
        70.0,
        10,
        120.0,
        Preset::Lab5Nm3.ambient(),
    )
    .unwrap();
    assert_eq!(t, fresh);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "t_set = 70.0\n").unwrap();
    for args in [
        vec!["simulate", "--config", bad.to_str().unwrap()],
        vec!["simulate", "--config", "/nonexistent/run.toml"],
        vec!["steady", "--preset", "big"],
        vec!["steady", "--controller", "lqr"],
        vec![
            "steady",
            "--preset",
            "lab-5nm3",
            "--config",
            bad.to_str().unwrap(),
        ],
    ] {
        let o = alkatherm(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {o:?}");
    }
}

#[test]
fn numerical_failures_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cold.toml");
    // Cooling water at 23 degC cannot hold the stack at 25 degC under full load.
    std::fs::write(&cfg, "t_set_c = 25.0\n").unwrap();
    let o = alkatherm(&[
        "steady",
        "--config",
        cfg.to_str().unwrap(),
        "--current-a",
        "720",
    ]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("numerical failure"));
}

#[test]
fn tune_setpoint_reports_each_controller() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.toml");
    std::fs::write(&cfg, "duration_s = 10800.0\ncontroller = \"pid-i\"\n").unwrap();
    let o = alkatherm(&[
        "tune-setpoint",
        "--config",
        cfg.to_str().unwrap(),
        "--controller",
        "pid-i",
        "--limit-c",
        "72",
    ]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert!(text.starts_with("pid-i"), "{text}");
}

#[test]
fn readme_config_example_parses() {
    let readme = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    let start = readme.find("```toml\n").expect("toml block") + "```toml\n".len();
    let end = start + readme[start..].find("```").unwrap();
    let s = alkatherm::config::parse_config(&readme[start..end]).unwrap();
    assert_eq!(s.config.schedule.segments().len(), 2);
    assert_eq!(s.config.settings.mpc.r, 300.0);
}
