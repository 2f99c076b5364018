use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mdl-meta"))
}

const SMALL: &str = r#"
setups = ["F50-T50", "F90-T10", "Ours-G-25"]
repeats = 2
seed = 3
grid = 6
train_count = 16
test_count = 4

[domain_a]
contrast = 3.0
noise_sigma = 0.5

[domain_b]
contrast = 1.0
noise_sigma = 1.0

[model]
hidden = [4]
activation = "tanh"

[training]
eta = 0.5
batch_size = 4
steps = 20
split_ratio = 0.5
prior_alpha = 5.0
prior_beta = 5.0
loss = "bce_plus_dice"
"#;

fn error_line(stderr: &[u8]) -> serde_json::Value {
    let text = String::from_utf8_lossy(stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).expect("error line is JSON")
}

#[test]
fn run_writes_results_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    fs::write(&config, SMALL).unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--repeats", "1", "--seed", "11"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(results.starts_with("setup,domain,metric,mean,sd,gain_mu,gain_sigma,n_runs\n"));
    assert_eq!(results.lines().count(), 1 + 3 * 4);
    assert!(out.join("lambda_traj_Ours-G-25_11.csv").exists());
    assert!(!out.join("lambda_traj_Ours-G-25_3.csv").exists());
}

#[test]
fn bad_config_fails_with_machine_readable_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, SMALL.replace("repeats = 2", "repeats = 2\nunknown_key = 1")).unwrap();
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = error_line(&output.stderr);
    assert_eq!(err["error"]["kind"], "toml");

    let missing = bin()
        .args(["run", "--config", "/nonexistent/x.toml", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!missing.status.success());
    assert_eq!(error_line(&missing.stderr)["error"]["kind"], "io");
}

#[test]
fn gain_without_baseline_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("nobase.toml");
    fs::write(&config, SMALL.replace("\"F50-T50\", ", "")).unwrap();
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert_eq!(error_line(&output.stderr)["error"]["kind"], "config");
}

#[test]
fn map_check_passes() {
    let output = bin().args(["map-check", "--cases", "50"]).output().unwrap();
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("50 cases"));
}

#[test]
fn taylor_check_prints_ratio_table() {
    let output = bin()
        .args(["taylor-check", "--eta-sweep", "1e-2,5e-3,2.5e-3", "--instances", "3"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert_eq!(text.lines().count(), 1 + 3 + 1);
    assert!(text.contains("sign agreement 3/3"));

    let bad = bin().args(["taylor-check", "--eta-sweep", "1e-2"]).output().unwrap();
    assert!(!bad.status.success());
    assert_eq!(error_line(&bad.stderr)["error"]["kind"], "usage");
}

#[test]
fn bad_arguments_give_a_json_error_line() {
    let output = bin().args(["run", "--out", "x"]).output().unwrap();
    assert!(!output.status.success());
    assert_eq!(error_line(&output.stderr)["error"]["kind"], "usage");
    assert!(bin().arg("--help").output().unwrap().status.success());
}
