use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use starris_cli::config::ExperimentConfig;
use starris_cli::run::{self, RunFlags, CSV_HEADER};
use starris_cli::Scheme;

fn starris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starris")).args(args).output().expect("binary runs")
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// Cheap schemes only; the contract does not depend on the solver.
const SMALL: &str = r#"
trials = 5
base_seed = 11
protocols = ["ts", "ro"]

[sweep]
var = "power_dbm"
values = [10.0, 20.0, 30.0]

[system]
m_elements = 4

[solver]
ts_inner_max_iter = 5
tau_grid_step = 0.25
tau_refine_rounds = 1
"#;

#[test]
fn shipped_configs_are_valid() {
    for name in ["default.toml", "desk_power_unicast.toml", "desk_elements_ts.toml", "desk_power_broadcast.toml", "paper_m30.toml"] {
        let path = shipped(name);
        let out = starris(&["validate-config", "--config", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stdout));
        assert!(String::from_utf8_lossy(&out.stdout).contains("valid"));
    }
}

#[test]
fn row_count_is_sweep_times_protocols_times_trials() {
    let config = ExperimentConfig::from_toml(SMALL).unwrap();
    let results = run::execute(&config, &config.protocols, RunFlags { jobs: 1, timing: false }).unwrap();
    let csv = run::csv(&config, &results);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len() - 1, 30);
    // Sweep point, then protocol, then trial.
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&first[..6], &["power_dbm", "10", "TS", "unicast", "0", "11"]);
    let sixth: Vec<&str> = lines[6].split(',').collect();
    assert_eq!(&sixth[..6], &["power_dbm", "10", "RO", "unicast", "0", "11"]);
}

#[test]
fn parallel_runs_write_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "small.toml", SMALL);
    let mut outputs = Vec::new();
    for (name, jobs) in [("one.csv", "1"), ("two.csv", "2"), ("four.csv", "4")] {
        let out = dir.path().join(name);
        let status = starris(&["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs]);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        outputs.push(std::fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn seed_override_changes_the_draws() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "small.toml", SMALL);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert!(starris(&["run", "--config", config.to_str().unwrap(), "--out", a.to_str().unwrap()]).status.success());
    let out = starris(&["run", "--config", config.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "99"]);
    assert!(out.status.success());
    let b = std::fs::read_to_string(b).unwrap();
    assert_ne!(std::fs::read_to_string(a).unwrap(), b);
    assert!(b.lines().nth(1).unwrap().split(',').nth(5) == Some("99"));
}

#[test]
fn compare_serves_only_the_reflection_side_without_transmission() {
    let mut config = ExperimentConfig::from_toml(SMALL).unwrap();
    config.trials = 2;
    config.solver.bcd_max_iter = 2;
    config.solver.ccp_max_iter = 1;
    let results = run::execute(&config, &Scheme::COMPARE, RunFlags { jobs: 1, timing: false }).unwrap();
    assert_eq!(results.len(), 3 * 4 * 2);
    for r in results.iter().filter(|r| r.cell.scheme == Scheme::Ro) {
        assert_eq!(r.report.rates.t, 0.0);
        assert!(r.report.rates.r > 0.0);
    }
    let csv = run::csv(&config, &results);
    for line in csv.lines().filter(|l| l.split(',').nth(2) == Some("RO")) {
        assert_eq!(line.split(',').nth(7), Some("0"));
    }
}

#[test]
fn verify_flag_recomputes_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("v.csv");
    let res = starris(&["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--verify"]);
    assert!(res.status.success());
    let stdout = String::from_utf8_lossy(&res.stdout);
    let line = stdout.lines().find(|l| l.starts_with("verify:")).expect("verify line");
    assert!(line.contains("10 rows"), "{line}");
    let err: f64 = line.rsplit("= ").next().unwrap().trim().parse().unwrap();
    assert!(err <= 1e-9);
}

#[test]
fn timing_fills_wall_clock_column() {
    let mut config = ExperimentConfig::from_toml(SMALL).unwrap();
    config.trials = 1;
    let plain = run::execute(&config, &[Scheme::Ts], RunFlags { jobs: 1, timing: false }).unwrap();
    assert!(plain.iter().all(|r| r.wall_ms == 0.0));
    let timed = run::execute(&config, &[Scheme::Ts], RunFlags { jobs: 1, timing: true }).unwrap();
    assert!(timed.iter().all(|r| r.wall_ms > 0.0));
}

#[test]
fn validate_config_names_violated_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("trials = 0\nbase_seed = 0\n", "trials"),
        ("trials = 1\nbase_seed = 0\n[system]\nweights = [0.5, 0.4]\n", "weights"),
        ("trials = 1\nbase_seed = 0\n[system]\nm_elements = 0\n", "system.m_elements"),
        ("trials = 1\nbase_seed = 0\n[sweep]\nvar = \"power_dbm\"\nvalues = []\n", "sweep.values"),
    ];
    for (i, (text, field)) in cases.iter().enumerate() {
        let path = write(dir.path(), &format!("c{i}.toml"), text);
        let out = starris(&["validate-config", "--config", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(1), "{text}");
        let report = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
        assert!(report.contains(field), "{text}: {report}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "small.toml", SMALL);
    let good = good.to_str().unwrap();

    let bad_type = write(dir.path(), "bad_type.toml", "trials = 1\nbase_seed = 0\n[system]\npower_dbm = \"loud\"\n");
    let out = starris(&["run", "--config", bad_type.to_str().unwrap(), "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("system.power_dbm"));

    let unknown = write(dir.path(), "unknown.toml", "trials = 1\nbase_seed = 0\ntrails = 3\n");
    assert_eq!(starris(&["validate-config", "--config", unknown.to_str().unwrap()]).status.code(), Some(1));

    let invalid = write(dir.path(), "invalid.toml", "trials = 0\nbase_seed = 0\n");
    assert_eq!(starris(&["run", "--config", invalid.to_str().unwrap()]).status.code(), Some(1));

    let missing = dir.path().join("missing.toml");
    assert_eq!(starris(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(3));

    let unwritable = dir.path().join("no/such/dir/out.csv");
    assert_eq!(starris(&["run", "--config", good, "--out", unwritable.to_str().unwrap()]).status.code(), Some(3));

    let ok = dir.path().join("ok.csv");
    assert_eq!(starris(&["run", "--config", good, "--out", ok.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn solver_failure_exits_with_two() {
    // Passes the config checks but leaves the receive covariance numerically
    // indefinite.
    let dir = tempfile::tempdir().unwrap();
    let text = "trials = 1\nbase_seed = 0\nprotocols = [\"ts\"]\n[system]\nm_elements = 4\nnoise_dbm = -600.0\npower_dbm = 300.0\n";
    let path = write(dir.path(), "extreme.toml", text);
    let out_path = dir.path().join("x.csv");
    let out = starris(&["run", "--config", path.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver error"));
}
