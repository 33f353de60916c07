use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_covert-keyx");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(o: &Output, key: &str) -> String {
    let prefix = format!("{key} = ");
    stdout(o).lines().find_map(|l| l.strip_prefix(&prefix).map(str::to_string)).unwrap()
}

#[test]
fn analyze_echoes_resolved_parameters() {
    let o = run(&["analyze", "--nbar", "1e-6", "--eps", "0.1", "--D", "100000"]);
    assert_eq!(o.status.code(), Some(0));
    for key in ["nbar", "eps", "d", "d_policy", "alpha_max", "D", "M", "M_policy", "beta", "p0", "p_c"] {
        field(&o, key);
    }
    assert_eq!(field(&o, "D_policy"), "given");
    let o = run(&["analyze", "--nbar", "1e-4", "--eps", "0.1", "--d", "3", "--alpha-max", "0.05"]);
    assert_eq!(field(&o, "d_policy"), "fixed");
    assert_eq!(field(&o, "alpha_max"), "0.05");
    assert_eq!(field(&o, "D"), "500");
}

#[test]
fn sweep_to_file_and_stdout_agree() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let o = run(&["sweep", "--points", "5", "--eps", "0.1", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(field(&o, "rows"), "5");
    let file = std::fs::read_to_string(&path).unwrap();
    let direct = run(&["sweep", "--points", "5", "--eps", "0.1"]);
    assert_eq!(file, stdout(&direct));
}

#[test]
fn sweep_rejects_bad_spec_and_bad_path() {
    assert_eq!(run(&["sweep", "--nbar-min", "1e-2", "--nbar-max", "1e-3"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--points", "1"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--eps", "0.6"]).status.code(), Some(2));
    let o = run(&["sweep", "--points", "2", "--out", "/nonexistent-dir/x.csv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_reports() {
    let o = run(&["verify", "--N", "4", "--q", "0.25", "--nbar", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(field(&o, "filter_bound_holds"), "true");
    assert_eq!(field(&o, "secrecy_holds"), "true");
    assert_eq!(field(&o, "eps_k[0]"), "0");
    let residual: f64 = field(&o, "decomposition_residual").parse().unwrap();
    assert!(residual < 1e-9);

    let o = run(&["verify", "--N", "2", "--nbar", "0.2", "--priors", "0.9,0.1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(field(&o, "priors"), "0.9,0.1");

    let o = run(&["verify", "--N", "9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap"));
}

#[test]
fn simulate_noiseless_and_example() {
    let o = run(&["simulate", "--pc", "0", "--D", "64", "--trials", "2000"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(field(&o, "collisions"), "0");
    assert_eq!(field(&o, "symbol_errors"), "0");

    let o = run(&["simulate", "--D", "100", "--pc", "0.01", "--trials", "100000", "--seed", "1"]);
    let z: f64 = field(&o, "z_score").parse().unwrap();
    let rate: f64 = field(&o, "collision_rate").parse().unwrap();
    assert!(z.abs() < 4.0);
    assert!((rate - 0.6303).abs() < 0.01);

    assert_eq!(run(&["simulate", "--D", "4"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--pc", "1.5"]).status.code(), Some(2));
}

fn session(mode: &str, config: &str, seed: &str) -> Output {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.cfg");
    std::fs::write(&path, config).unwrap();
    run(&["session", "--mode", mode, "--config", path.to_str().unwrap(), "--seed", seed])
}

#[test]
fn session_outcomes() {
    let noiseless = "# noiseless channel\nnbar = 0\neps = 0.1\nD = 16\nM = 4\nk0_bits = 128\nnew_key_bits = 1024\n";
    let o = session("computational", noiseless, "3");
    assert_eq!(o.status.code(), Some(0));
    let t: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(t["ledger"]["net_bits"], 896);
    assert_eq!(t["status"], "completed");

    let square = "nbar = 1e-4\neps = 0.1\nD = 64\nM = 64\nruns = 10\n";
    let o = session("info-theoretic", square, "3");
    assert_eq!(o.status.code(), Some(0));
    let t: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(t["reliable"]["raw_net_bits_per_run"], 0.0);
    assert_eq!(t["ledger"]["net_bits"], 0);

    let short_key = "nbar = 1e-4\neps = 0.1\nD = 64\nM = 64\nruns = 10\nshared_key = abc\n";
    let o = session("info-theoretic", short_key, "3");
    assert_eq!(o.status.code(), Some(1));
    let t: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(t["status"], "aborted");
    assert_eq!(t["runs"], 2);

    let noisy = "nbar = 0.01\neps = 0.1\nD = 128\nM = 1\nnew_key_bits = 700\n";
    let o = session("computational", noisy, "3");
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn session_config_errors_carry_lines() {
    let o = session("computational", "nbar = 0\neps = 0.1\nD = 16\nwidth = 3\n", "0");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
    let o = session("computational", "nbar = 0\neps = x\nD = 16\nM = 4\n", "0");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let o = session("computational", "nbar = 0\neps = 0.1\nD = 12\nM = 4\n", "0");
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["session", "--mode", "computational", "--config", "/no/such/file"]);
    assert_eq!(o.status.code(), Some(3));
}
