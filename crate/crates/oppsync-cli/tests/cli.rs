//! Behavior of the binary itself: exit codes, output file sets, config
//! file layering and output directory resolution.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oppsync::sim::{render_log, DeclaredRole, LogRecord, TimedRecord};
use oppsync::vv;
use oppsync::ReplicaId;

/// Command for the compiled binary, with the out-dir environment cleared
/// so tests control resolution explicitly.
fn oppsync() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_oppsync"));
    cmd.env_remove("OPPSYNC_OUT_DIR");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawning the binary")
}

fn assert_code(out: &Output, want: i32) {
    assert_eq!(
        out.status.code(),
        Some(want),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Generates a small churn scenario and simulates it, returning the run
/// directory holding log.txt and summary.json.
fn small_run(root: &Path) -> PathBuf {
    let inputs = root.join("inputs");
    let out = run(oppsync()
        .args(["gen", "--shape", "churn", "--seed", "5"])
        .args(["--duration-s", "600", "--update-until-s", "300"])
        .arg("--out-dir")
        .arg(&inputs));
    assert_code(&out, 0);
    let run_dir = root.join("run");
    let out = run(oppsync()
        .arg("sim")
        .arg("--trace")
        .arg(inputs.join("trace.txt"))
        .arg("--app")
        .arg(inputs.join("app.txt"))
        .args(["--relay-ratio", "0.5", "--validate"])
        .arg("--out-dir")
        .arg(&run_dir));
    assert_code(&out, 0);
    run_dir
}

#[test]
fn pipeline_produces_the_full_file_set() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = small_run(dir.path());
    assert!(run_dir.join("log.txt").is_file());
    assert!(run_dir.join("summary.json").is_file());

    let out = run(oppsync().arg("report").arg(&run_dir));
    assert_code(&out, 0);
    for name in [
        "latency.csv",
        "distance.csv",
        "store_hist.csv",
        "transfer_hist.csv",
    ] {
        assert!(run_dir.join(name).is_file(), "report did not write {name}");
    }
    // The summary written by sim and the one recomputed by report come from
    // the same log, so they must agree byte for byte.
    let sim_summary = std::fs::read(run_dir.join("summary.json")).unwrap();
    let out = run(oppsync().arg("check").arg(&run_dir));
    assert_code(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok:"));
    let report_summary = std::fs::read(run_dir.join("summary.json")).unwrap();
    assert_eq!(sim_summary, report_summary);
}

#[test]
fn usage_problems_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(oppsync().arg("frobnicate"));
    assert_code(&out, 1);

    let out = run(oppsync().arg("gen").arg("--out-dir").arg(dir.path()));
    assert_code(&out, 1);
    assert!(stderr_of(&out).contains("--shape"));

    let out = run(oppsync().arg("sim").arg("--out-dir").arg(dir.path()));
    assert_code(&out, 1);
    assert!(stderr_of(&out).contains("--trace"));

    // A ratio outside [0, 1] is rejected before anything runs.
    let run_dir = small_run(dir.path());
    let out = run(oppsync()
        .arg("sim")
        .arg("--trace")
        .arg(dir.path().join("inputs/trace.txt"))
        .arg("--app")
        .arg(dir.path().join("inputs/app.txt"))
        .args(["--relay-ratio", "1.5"])
        .arg("--out-dir")
        .arg(&run_dir));
    assert_code(&out, 1);
    assert!(stderr_of(&out).contains("ratio"));
}

#[test]
fn broken_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(oppsync()
        .arg("sim")
        .arg("--trace")
        .arg(dir.path().join("missing.txt"))
        .arg("--app")
        .arg(dir.path().join("missing.txt"))
        .arg("--out-dir")
        .arg(dir.path()));
    assert_code(&out, 2);

    let garbled = dir.path().join("trace.txt");
    std::fs::write(&garbled, "0 zz what\n").unwrap();
    let app = dir.path().join("app.txt");
    std::fs::write(&app, "100 up a\n").unwrap();
    let out = run(oppsync()
        .arg("sim")
        .arg("--trace")
        .arg(&garbled)
        .arg("--app")
        .arg(&app)
        .arg("--out-dir")
        .arg(dir.path()));
    assert_code(&out, 2);

    // check on a directory with no log at all.
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = run(oppsync().arg("check").arg(&empty));
    assert_code(&out, 2);
}

#[test]
fn invariant_violations_exit_three() {
    // A log whose replica vector jumps past the global vector: structurally
    // valid, semantically impossible in a real run.
    let bad = render_log(&[
        TimedRecord {
            at_ms: 0,
            record: LogRecord::NodeStart {
                id: ReplicaId::new("a"),
                role: DeclaredRole::Rep,
            },
        },
        TimedRecord {
            at_ms: 100,
            record: LogRecord::Update {
                id: ReplicaId::new("a"),
                global: vv!["a" => 1],
            },
        },
        TimedRecord {
            at_ms: 200,
            record: LogRecord::ReplicaVv {
                id: ReplicaId::new("a"),
                vv: vv!["a" => 2],
            },
        },
    ]);
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("log.txt"), bad).unwrap();
    let out = run(oppsync().arg("check").arg(dir.path()));
    assert_code(&out, 3);
    assert!(stderr_of(&out).contains("replica-behind-global"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "shape = \"churn\"\nseed = 3\nduration_s = 600\nupdate_until_s = 300\n",
    )
    .unwrap();

    let from_file = dir.path().join("from-file");
    let out = run(oppsync()
        .arg("gen")
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&from_file));
    assert_code(&out, 0);

    let from_flags = dir.path().join("from-flags");
    let out = run(oppsync()
        .args(["gen", "--shape", "churn", "--seed", "3"])
        .args(["--duration-s", "600", "--update-until-s", "300"])
        .arg("--out-dir")
        .arg(&from_flags));
    assert_code(&out, 0);
    assert_eq!(
        std::fs::read(from_file.join("trace.txt")).unwrap(),
        std::fs::read(from_flags.join("trace.txt")).unwrap(),
        "config file values must act exactly like the flags"
    );

    let overridden = dir.path().join("overridden");
    let out = run(oppsync()
        .arg("gen")
        .arg("--config")
        .arg(&cfg)
        .args(["--seed", "4"])
        .arg("--out-dir")
        .arg(&overridden));
    assert_code(&out, 0);
    assert_ne!(
        std::fs::read(from_file.join("trace.txt")).unwrap(),
        std::fs::read(overridden.join("trace.txt")).unwrap(),
        "an explicit flag must override the config file"
    );

    let out = run(oppsync()
        .arg("gen")
        .arg("--config")
        .arg(dir.path().join("no-such.toml"))
        .arg("--out-dir")
        .arg(dir.path()));
    assert_code(&out, 2);
}

#[test]
fn out_dir_env_var_is_the_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let via_env = dir.path().join("via-env");
    let out = run(oppsync()
        .env("OPPSYNC_OUT_DIR", &via_env)
        .args(["gen", "--shape", "churn", "--seed", "2"])
        .args(["--duration-s", "300", "--update-until-s", "200"]));
    assert_code(&out, 0);
    assert!(via_env.join("trace.txt").is_file());

    // An explicit flag beats the environment.
    let via_flag = dir.path().join("via-flag");
    let out = run(oppsync()
        .env("OPPSYNC_OUT_DIR", &via_env)
        .args(["gen", "--shape", "churn", "--seed", "2"])
        .args(["--duration-s", "300", "--update-until-s", "200"])
        .arg("--out-dir")
        .arg(&via_flag));
    assert_code(&out, 0);
    assert!(via_flag.join("trace.txt").is_file());
}

#[test]
fn check_and_report_default_to_the_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = small_run(dir.path());
    let out = run(oppsync().arg("check").arg("--out-dir").arg(&run_dir));
    assert_code(&out, 0);
    let out = run(oppsync().arg("report").arg("--out-dir").arg(&run_dir));
    assert_code(&out, 0);
    assert!(run_dir.join("latency.csv").is_file());
}
