//! End-to-end tests of the `mms` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn mms(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mms"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn mms")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = mms(dir, args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

#[test]
fn create_sizes() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["create", "--out", "d.mms"]);
    assert_eq!(fs::metadata(dir.path().join("d.mms")).unwrap().len(), 56 + 5 * 2719 * 8);
    ok(
        dir.path(),
        &["create", "--epsilon", "0.1", "--confidence", "0.5", "--out", "s.mms"],
    );
    assert_eq!(fs::metadata(dir.path().join("s.mms")).unwrap().len(), 56 + 28 * 8);
}

#[test]
fn create_rejects_bad_params() {
    let dir = TempDir::new().unwrap();
    let o = mms(dir.path(), &["create", "--epsilon", "0", "--out", "s.mms"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("epsilon"));
    assert!(o.stdout.is_empty());
    assert!(!dir.path().join("s.mms").exists());

    let o = mms(dir.path(), &["create", "--out", "missing-dir/s.mms"]);
    assert!(!o.status.success());
}

#[test]
fn add_mask_literals_are_equivalent() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["create", "--out", "a.mms"]);
    ok(dir.path(), &["create", "--out", "b.mms"]);
    ok(dir.path(), &["add", "--sketch", "a.mms", "--key", "abc", "--mask", "6"]);
    ok(
        dir.path(),
        &["add", "--sketch", "b.mms", "--key", "abc", "--mask", "0b110"],
    );
    let a = fs::read(dir.path().join("a.mms")).unwrap();
    let b = fs::read(dir.path().join("b.mms")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn add_zero_leaves_cells_and_bumps_counter() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["create", "--out", "s.mms"]);
    ok(dir.path(), &["add", "--sketch", "s.mms", "--key", "abc", "--mask", "6"]);
    let before = fs::read(dir.path().join("s.mms")).unwrap();
    ok(dir.path(), &["add", "--sketch", "s.mms", "--key", "xyz", "--mask", "0"]);
    let after = fs::read(dir.path().join("s.mms")).unwrap();
    assert_eq!(before[56..], after[56..]);
    assert_eq!(u64::from_le_bytes(before[48..56].try_into().unwrap()), 1);
    assert_eq!(u64::from_le_bytes(after[48..56].try_into().unwrap()), 2);

    // idempotent re-add: cells unchanged, counter still moves
    ok(dir.path(), &["add", "--sketch", "s.mms", "--key", "abc", "--mask", "6"]);
    let again = fs::read(dir.path().join("s.mms")).unwrap();
    assert_eq!(after[56..], again[56..]);
    assert_eq!(u64::from_le_bytes(again[48..56].try_into().unwrap()), 3);
}

#[test]
fn add_errors() {
    let dir = TempDir::new().unwrap();
    let o = mms(
        dir.path(),
        &["add", "--sketch", "nope.mms", "--key", "k", "--mask", "1"],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nope.mms"));

    ok(dir.path(), &["create", "--out", "s.mms"]);
    for bad in ["six", "0b12", "-1", "0x1_0000_0000_0000_0000"] {
        let o = mms(dir.path(), &["add", "--sketch", "s.mms", "--key", "k", "--mask", bad]);
        assert!(!o.status.success(), "{bad}");
    }

    fs::write(
        dir.path().join("reg.txt"),
        "bit=0 name=a kind=private\nbit=1 name=b kind=private\n",
    )
    .unwrap();
    let o = mms(
        dir.path(),
        &[
            "add",
            "--sketch",
            "s.mms",
            "--key",
            "k",
            "--mask",
            "4",
            "--registry",
            "reg.txt",
        ],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("bit 2"), "{}", stderr(&o));
    ok(
        dir.path(),
        &[
            "add",
            "--sketch",
            "s.mms",
            "--key",
            "k",
            "--mask",
            "3",
            "--registry",
            "reg.txt",
        ],
    );
}

#[test]
fn get_formats() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["create", "--out", "s.mms"]);
    assert_eq!(ok(dir.path(), &["get", "--sketch", "s.mms", "--key", "abc"]), "0\n");
    ok(dir.path(), &["add", "--sketch", "s.mms", "--key", "abc", "--mask", "2"]);
    assert_eq!(ok(dir.path(), &["get", "--sketch", "s.mms", "--key", "abc"]), "2\n");
    assert_eq!(
        ok(
            dir.path(),
            &["get", "--sketch", "s.mms", "--key", "abc", "--format", "bits"]
        ),
        "10\n"
    );

    fs::write(
        dir.path().join("reg.txt"),
        "bit=0 name=bt_private kind=private\nbit=1 name=bs_private kind=private\nbit=2 name=hr_private kind=private\n",
    )
    .unwrap();
    assert_eq!(
        ok(
            dir.path(),
            &[
                "get",
                "--sketch",
                "s.mms",
                "--key",
                "abc",
                "--format",
                "bits",
                "--registry",
                "reg.txt"
            ]
        ),
        "010\n"
    );
    assert_eq!(
        ok(
            dir.path(),
            &["get", "--sketch", "s.mms", "--key", "abc", "--estimator", "and"]
        ),
        "2\n"
    );
    assert!(!mms(dir.path(), &["get", "--sketch", "missing.mms", "--key", "abc"])
        .status
        .success());
}

#[test]
fn get_rejects_corrupt_file() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("junk.mms"), b"JUNKJUNKJUNK").unwrap();
    let o = mms(dir.path(), &["get", "--sketch", "junk.mms", "--key", "abc"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("magic"), "{}", stderr(&o));
}

#[test]
fn compare_outputs() {
    let dir = TempDir::new().unwrap();
    let single = ok(dir.path(), &["compare", "--max-changes", "1", "--csv", "-"]);
    assert_eq!(single, "changes,log_bytes,sketch_bytes\n1,43,108816\n");

    let summary = ok(dir.path(), &["compare"]);
    assert!(summary.contains("crossover_changes=2531\n"), "{summary}");
    assert!(summary.contains("overhead_ratio=0.1875\n"));

    let custom = ok(dir.path(), &["compare", "--model", "custom", "--log-entry-bytes", "86"]);
    assert!(custom.contains("crossover_changes=1266\n"), "{custom}");

    let o = mms(dir.path(), &["compare", "--log-entry-bytes", "86"]);
    assert!(!o.status.success());
    let o = mms(dir.path(), &["compare", "--model", "custom", "--log-entry-bytes", "0"]);
    assert!(!o.status.success());
    let o = mms(dir.path(), &["compare", "--max-changes", "0"]);
    assert!(!o.status.success());
}

#[test]
fn measure_single_insert() {
    let dir = TempDir::new().unwrap();
    let out = ok(
        dir.path(),
        &["measure", "--inserts", "1", "--seeds", "1", "--csv", "m.csv"],
    );
    assert!(out.contains("extra_bit_rate=0\n"), "{out}");
    assert!(out.contains("superset_violations=0\n"));
    let csv = fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(csv, "seed,extra_bit_rate,any_extra_fraction\n0,0,0\n");
    assert!(!mms(dir.path(), &["measure", "--inserts", "0"]).status.success());
    assert!(!mms(dir.path(), &["measure", "--seeds", "0"]).status.success());
}

#[test]
fn measure_widening_does_not_increase_error() {
    let dir = TempDir::new().unwrap();
    let rate = |eps: &str| -> f64 {
        let out = ok(
            dir.path(),
            &["measure", "--epsilon", eps, "--inserts", "2000", "--seeds", "10"],
        );
        out.lines()
            .find_map(|l| l.strip_prefix("extra_bit_rate="))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(rate("0.005") <= rate("0.01"));
}

#[test]
fn demo_health_empty_and_malformed() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("empty.csv"), "time,heart_rate,blood_sugar,body_temp\n").unwrap();
    fs::write(dir.path().join("sched.log"), "2024-03-01T06:00:00 2\n").unwrap();
    let out = ok(
        dir.path(),
        &["demo-health", "--csv", "empty.csv", "--schedule", "sched.log"],
    );
    assert!(out.starts_with("time,log_mask"));
    assert!(out.contains("# records=0 "));

    fs::write(
        dir.path().join("bad.csv"),
        "time,heart_rate,blood_sugar,body_temp\n2024-03-01T06:00:00,70,90,98.6\n2024-03-01T06:00:03,70,ninety,98.6\n",
    )
    .unwrap();
    let o = mms(
        dir.path(),
        &["demo-health", "--csv", "bad.csv", "--policy-schedule", "sched.log"],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn demo_health_exercise_policy() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("h.csv"),
        "time,heart_rate,blood_sugar,body_temp\n2024-03-01T07:00:00,140,95,99.1\n2024-03-01T07:00:03,142,95,99.2\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("sched.log"),
        "2024-03-01T06:00:00 7\n2024-03-01T07:00:00 0b010\n",
    )
    .unwrap();
    let out = ok(
        dir.path(),
        &["demo-health", "--csv", "h.csv", "--schedule", "sched.log"],
    );
    let row = out.lines().nth(1).unwrap();
    assert_eq!(row, "2024-03-01T07:00:00,010,010,010,exact,share,withhold,share");
}

#[test]
fn commands_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let gen = |tag: &str| {
        ok(
            dir.path(),
            &[
                "gen-health",
                "--rows",
                "300",
                "--csv-out",
                &format!("{tag}.csv"),
                "--schedule-out",
                &format!("{tag}.log"),
            ],
        );
        (
            fs::read(dir.path().join(format!("{tag}.csv"))).unwrap(),
            fs::read(dir.path().join(format!("{tag}.log"))).unwrap(),
        )
    };
    assert_eq!(gen("a"), gen("b"));
    let demo = || {
        ok(
            dir.path(),
            &[
                "demo-health",
                "--csv",
                "a.csv",
                "--schedule",
                "a.log",
                "--epsilon",
                "0.05",
            ],
        )
    };
    assert_eq!(demo(), demo());
    let measure = || ok(dir.path(), &["measure", "--inserts", "500", "--seeds", "4"]);
    assert_eq!(measure(), measure());
}

#[test]
fn no_bit_clearing_command_exists() {
    let dir = TempDir::new().unwrap();
    for cmd in ["remove", "delete", "clear", "set"] {
        let o = mms(dir.path(), &[cmd, "--sketch", "s.mms", "--key", "k"]);
        assert!(!o.status.success(), "{cmd}");
    }
}
