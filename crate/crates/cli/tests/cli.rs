use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ectsim(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ectsim")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn check_corpus_and_bad_file() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&ectsim(tmp.path(), &["check", "moby28462.csp"])), 0);
    fs::write(tmp.path().join("bad.csp"), "func main() { send }\n").unwrap();
    let o = ectsim(tmp.path(), &["check", "bad.csp"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("bad.csp:1"), "{}", stdout(&o));
    assert_eq!(code(&ectsim(tmp.path(), &["check", "missing.csp"])), 1);
}

#[test]
fn run_sieve_prints_primes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ectsim(tmp.path(), &["run", "primesieve.csp", "--policy", "fifo", "--seed", "0", "--arg0", "4", "--out", "out", "--id", "s"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).lines().any(|l| l == "outputs: 2 3 5 7"), "{}", stdout(&o));
    for f in ["events.csv", "stack_frames.csv", "arguments.csv", "meta.json"] {
        assert!(tmp.path().join("out/s").join(f).is_file());
    }
}

#[test]
fn bug_runs_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ectsim(tmp.path(), &["run", "send_no_receiver.csp", "--arg0", "0", "--out", "out", "--id", "d"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("GLOBAL_DEADLOCK"));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&ectsim(tmp.path(), &["run", "moby28462.csp", "--bogus"])), 1);
    assert_eq!(code(&ectsim(tmp.path(), &["run", "moby28462.csp", "--policy", "lifo", "--out", "o", "--id", "x"])), 1);
    assert_eq!(code(&ectsim(tmp.path(), &["frobnicate"])), 1);
    assert_eq!(code(&ectsim(tmp.path(), &["analyze", "nowhere", "x"])), 1);
    assert_eq!(code(&ectsim(tmp.path(), &["--help"])), 0);
}

#[test]
fn fuzz_moby_names_leak() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["fuzz", "moby28462.csp", "--iters", "1000", "--seed", "1", "--p", "0.25", "--d", "5", "--out", "fz"];
    let o = ectsim(tmp.path(), &args);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("LEAK"));
    let csv = fs::read_to_string(tmp.path().join("fz/fuzz_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1001);
    let report = fs::read_to_string(tmp.path().join("fz/fuzz_report.txt")).unwrap();
    assert_eq!(report, stdout(&o));
    let first = report.lines().find_map(|l| l.strip_prefix("first bug: iteration ")).unwrap();
    let run_id = first.split("(run ").nth(1).unwrap().trim_end_matches(')');
    assert!(tmp.path().join("fz").join(run_id).join("events.csv").is_file());

    let o = ectsim(tmp.path(), &["analyze", "fz", run_id, "--leaks", "--waitfor", "--dot", "fz/w.dot", "--lanes"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("Monitor: blocked LOCK on M1"), "{}", stdout(&o));
}

#[test]
fn fuzz_without_bug_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ectsim(tmp.path(), &["fuzz", "moby28462.csp", "--iters", "1", "--p", "0", "--out", "fz"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("first bug: none"));
}

#[test]
fn analyze_and_coverage_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    for (id, seed) in [("a", "1"), ("b", "2")] {
        ectsim(tmp.path(), &["run", "moby28462.csp", "--policy", "random", "--seed", seed, "--out", "out", "--id", id]);
    }
    let o = ectsim(tmp.path(), &["analyze", "out", "a", "--shiviz", "out/a.log", "--critical-points", "out/a.cp"]);
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(tmp.path().join("out/a.log")).unwrap().starts_with("g0 RUN_BEGIN@"));
    let cps = fs::read_to_string(tmp.path().join("out/a.cp")).unwrap();
    assert!(cps.lines().all(|l| l.starts_with("moby28462.csp:")));

    let o = ectsim(tmp.path(), &["run", "moby28462.csp", "--policy", "delay", "--critical-points", "out/a.cp", "--out", "out", "--id", "c"]);
    assert!(matches!(code(&o), 0 | 2));

    let o = ectsim(tmp.path(), &["coverage", "out", "a", "b", "c", "--csv", "out/cov.csv"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("merged: sync_pairs="));
    assert!(stdout(&o).lines().any(|l| l.starts_with("growth: ")));
    assert!(fs::read_to_string(tmp.path().join("out/cov.csv")).unwrap().starts_with("metric,loc_a,loc_b\n"));
}

#[test]
fn repeated_commands_are_identical_and_stay_under_out() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["run", "select_race.csp", "--policy", "random", "--seed", "7", "--out", "out", "--id", "r"];
    let first = ectsim(tmp.path(), &args);
    let events = fs::read(tmp.path().join("out/r/events.csv")).unwrap();
    let second = ectsim(tmp.path(), &args);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(events, fs::read(tmp.path().join("out/r/events.csv")).unwrap());
    let entries: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries, vec!["out"]);
}

#[test]
fn bench_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ectsim(tmp.path(), &["bench"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with("PASS")).count(), 7);
}
