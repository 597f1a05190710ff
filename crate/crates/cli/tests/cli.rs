use std::process::{Command, Output};

fn hlk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlk")).args(args).output().expect("run hlk")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn typecheck_prints_the_double_type() {
    let o = hlk(&["typecheck", "-n", "2", "E[3,0]*Phi^-1*P^-2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["tau"], 0);
    assert_eq!(v["s"], 2);
    assert_eq!(v["prefix"], "1");
}

#[test]
fn typecheck_weighted_term() {
    let o = hlk(&["typecheck", "-n", "2", "GammaStar^-1*E[2,0]*Phi^-1*P^-2"]);
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!((v["tau"].as_i64(), v["s"].as_i64()), (Some(-1), Some(1)));
}

#[test]
fn parse_errors_exit_two_with_a_caret() {
    let o = hlk(&["typecheck", "-n", "2", "E[3,0]*Phi^-1*Q"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("byte 14"), "{err}");
    let caret = err.lines().last().unwrap();
    assert_eq!(caret.find('^'), Some(2 + 14));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(hlk(&["verify", "bmk", "--domain", "nowhere"]).status.code(), Some(2));
    assert_eq!(hlk(&["verify", "bmk", "--domain", "disc", "--q", "1"]).status.code(), Some(2));
    assert_eq!(hlk(&["map", "-j", "1", "-n", "2", "-p", "1/2"]).status.code(), Some(2));
    assert_eq!(hlk(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn map_reports_threshold_and_binding_rule() {
    let o = hlk(&["map", "-j", "1", "-n", "2", "-p", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["threshold"], "6/5");
    assert!(v["binding_rule"].is_string());
}

#[test]
fn replay_exit_codes_follow_certification() {
    let o = hlk(&["replay", "derM_iv"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim_end().ends_with("certified"));
    assert_eq!(hlk(&["replay", "mlemma_i"]).status.code(), Some(1));
    assert_eq!(hlk(&["replay", "no_such_script"]).status.code(), Some(2));
    let list = stdout(&hlk(&["replay", "--list"]));
    assert!(list.lines().any(|l| l == "derM_iv"));
}

#[test]
fn derive_applies_a_field() {
    let o = hlk(&["derive", "-n", "2", "--field", "X", "Phi^-1*P^-2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(v["result"].as_str().is_some_and(|r| !r.is_empty()));
}

#[test]
fn reports_are_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let out = out.to_str().unwrap();
    let args = [
        "verify", "bmk", "--domain", "ball", "--form", "zbar1", "--N", "4000", "--seed", "7", "--tol", "1", "--out",
        out,
    ];
    assert_eq!(hlk(&args).status.code(), Some(0));
    let first = std::fs::read(out).unwrap();
    assert_eq!(hlk(&args).status.code(), Some(0));
    assert_eq!(first, std::fs::read(out).unwrap());
}

#[test]
fn failed_verification_exits_one() {
    let o = hlk(&["verify", "bmk", "--domain", "ball", "--form", "zbar1", "--N", "500", "--tol", "1e-12"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn config_file_and_report_rendering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("r.json");
    std::fs::write(&cfg, "# phi symmetry\ndomain = pinched\nN = 100\nseed = 4\n").unwrap();
    let o =
        hlk(&["verify", "phisymm", "--config", cfg.to_str().unwrap(), "--seed", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["config"]["run"]["seed"], "5");
    assert_eq!(v["config"]["run"]["N"], "100");
    assert_eq!(v["pass"], true);
    let r = hlk(&["report", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    assert!(stdout(&r).starts_with("verify phisymm"));
    std::fs::write(&cfg, "unknown = 1\n").unwrap();
    assert_eq!(hlk(&["verify", "phisymm", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn geom_and_integrate() {
    let o = hlk(&["geom", "--domain", "ball", "--point", "0.5,0", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!((v["estimates"][0]["re"].as_f64().unwrap() + 0.75).abs() < 1e-12, "{v}");
    let dir = tempfile::tempdir().unwrap();
    let o = hlk(&["integrate", "--domain", "disc", "--N", "20000", "--json", "--cache", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let area = v["estimates"][0]["re"].as_f64().unwrap();
    assert!((area - std::f64::consts::PI).abs() < 0.1, "{area}");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}
