use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn cli(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_platoon-san"));
    c.args(args).env_remove("PLATOON_SAN_SEED");
    c
}

fn run(c: &mut Command) -> (Option<i32>, String, String) {
    let Output { status, stdout, stderr } = c.output().unwrap();
    (status.code(), String::from_utf8(stdout).unwrap(), String::from_utf8(stderr).unwrap())
}

fn write_scenario(dir: &tempfile::TempDir, edit: impl Fn(String) -> String) -> PathBuf {
    let text = std::fs::read_to_string(scenario("urban_convoy.toml")).unwrap();
    let path = dir.path().join("scenario.toml");
    std::fs::write(&path, edit(text)).unwrap();
    path
}

#[test]
fn validate_accepts_reference() {
    let path = scenario("urban_convoy.toml");
    let (code, out, err) = run(&mut cli(&["validate", path.to_str().unwrap()]));
    assert_eq!(code, Some(0), "{err}");
    assert!(out.starts_with("valid: Convoy_Urban"));
    assert!(err.is_empty());
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(&dir, |t| t.replace("structure = \"Congregation\"", "structure = \"Team\""));
    let (code, out, err) = run(&mut cli(&["eval", path.to_str().unwrap()]));
    assert_eq!(code, Some(1));
    assert!(out.is_empty());
    assert!(err.contains("step 1: STRUCTURE_AREA_MISMATCH"), "{err}");
}

#[test]
fn parse_errors_exit_one_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(&dir, |t| t.replace("mech_mttr = 1.0", "mech_mttr = ["));
    let (code, _, err) = run(&mut cli(&["validate", path.to_str().unwrap()]));
    assert_eq!(code, Some(1));
    assert!(err.contains("PARSE_ERROR") && err.contains("line"), "{err}");
}

#[test]
fn runtime_errors_exit_two() {
    let path = scenario("urban_convoy.toml");
    let (code, out, err) = run(&mut cli(&["eval", path.to_str().unwrap(), "--method", "analytic", "--state-limit", "3"]));
    assert_eq!(code, Some(2));
    assert!(out.is_empty());
    assert!(err.contains("step 7: STATE_LIMIT_EXCEEDED"), "{err}");
}

#[test]
fn sweep_without_block_is_an_error() {
    let path = scenario("urban_convoy.toml");
    let (code, _, err) = run(&mut cli(&["sweep", path.to_str().unwrap()]));
    assert_eq!(code, Some(1));
    assert!(err.contains("INVALID_SWEEP"), "{err}");
}

#[test]
fn generate_dumps_san_and_ctmc() {
    let path = scenario("urban_convoy.toml");
    let (code, out, _) = run(&mut cli(&["generate", path.to_str().unwrap(), "--dump-san"]));
    assert_eq!(code, Some(0));
    let san: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(san["places"].as_array().unwrap().len(), 3);
    assert_eq!(san["activities"].as_array().unwrap().len(), 4);

    let (code, out, _) = run(&mut cli(&["generate", path.to_str().unwrap(), "--dump-ctmc"]));
    assert_eq!(code, Some(0));
    assert!(out.starts_with("%%MatrixMarket"));
    assert!(out.lines().any(|l| l == "8 8 20"));
}

#[test]
fn out_file_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("rows.json");
    let path = scenario("mttr_sweep.toml");
    let (code, out, _) =
        run(&mut cli(&["sweep", path.to_str().unwrap(), "--json", "--out", target.to_str().unwrap()]));
    assert_eq!(code, Some(0));
    assert!(out.is_empty());
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(target).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 25);
    assert_eq!(rows[16]["value"], 0.5);
}

fn sim_rows(out: &str) -> Vec<String> {
    out.lines().filter(|l| l.contains(",simulation,")).map(str::to_owned).collect()
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let unseeded = write_scenario(&dir, |t| t.replace("seed = 42\n", "").replace("replications = 10000", "replications = 500"));
    let p = unseeded.to_str().unwrap();
    let default = run(&mut cli(&["eval", p])).1;
    let explicit_42 = run(&mut cli(&["eval", p, "--seed", "42"])).1;
    let from_env = run(cli(&["eval", p]).env("PLATOON_SAN_SEED", "7")).1;
    let flag_over_env = run(cli(&["eval", p, "--seed", "42"]).env("PLATOON_SAN_SEED", "7")).1;
    let flag_7 = run(&mut cli(&["eval", p, "--seed", "7"])).1;
    assert_eq!(default, explicit_42);
    assert_eq!(from_env, flag_7);
    assert_eq!(flag_over_env, explicit_42);
    assert_ne!(sim_rows(&default), sim_rows(&from_env));

    // A seed in the file beats the environment.
    let seeded = write_scenario(&dir, |t| t.replace("replications = 10000", "replications = 500"));
    let file = run(cli(&["eval", seeded.to_str().unwrap()]).env("PLATOON_SAN_SEED", "7")).1;
    assert_eq!(file, explicit_42);
}

#[test]
fn bad_seed_env_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(&dir, |t| t.replace("seed = 42\n", ""));
    let (code, _, err) = run(cli(&["validate", path.to_str().unwrap()]).env("PLATOON_SAN_SEED", "abc"));
    assert_eq!(code, Some(1));
    assert!(err.contains("INVALID_SEED"), "{err}");
}
