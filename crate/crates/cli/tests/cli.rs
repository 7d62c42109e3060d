use std::process::Command;

use ffd_cli::{cmd_converge, cmd_params, cmd_solve, cmd_stabmap, CliError, RunConfig};

fn run(cmd: fn(&RunConfig, &mut Vec<u8>) -> Result<(), CliError>, config: &RunConfig) -> String {
    let mut buf = Vec::new();
    cmd(config, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn records(text: &str) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().clone();
    let rows = r.records().map(Result::unwrap).collect();
    (header, rows)
}

fn column(header: &csv::StringRecord, name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

fn small() -> RunConfig {
    RunConfig {
        h_target: 0.4,
        tau_target: 0.1,
        ref_modes: 256,
        ref_dt: 1e-2,
        ref_tol: 1e-6,
        ..RunConfig::default()
    }
}

#[test]
fn config_text_parses_with_comments_and_overrides() {
    let mut c = RunConfig::parse("# run\nepsilon = 1e-3  # small\nmode = mu-zero\nh_list = 0.4, 0.2\n")
        .unwrap();
    assert_eq!(c.epsilon, 1e-3);
    assert_eq!(c.h_list, vec![0.4, 0.2]);
    c.override_with("epsilon=0.5").unwrap();
    assert_eq!(c.epsilon, 0.5);
    c.validate().unwrap();
}

#[test]
fn malformed_config_is_a_config_error() {
    for text in ["epsilon 3", "nonsense = 1", "epsilon = abc", "epsilon = 1\nepsilon = 2"] {
        let err = RunConfig::parse(text).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{text:?}");
    }
    let mut c = RunConfig::default();
    c.x_max = c.x_min;
    assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    c = RunConfig::default();
    c.tau_target = f64::NAN;
    assert_eq!(c.validate().unwrap_err().exit_code(), 2);
}

#[test]
fn params_residuals_vanish() {
    let c = RunConfig::default();
    let (h, rows) = records(&run(|c, w| cmd_params(c, w), &c));
    assert_eq!(rows.len(), 2);
    for row in &rows {
        for key in ["res1", "res2"] {
            let v: f64 = row[column(&h, key)].parse().unwrap();
            assert!(v.abs() <= 1e-12, "{key} = {v}");
        }
        assert_eq!(&row[column(&h, "stable")], "true");
    }
}

#[test]
fn solve_is_deterministic() {
    let c = small();
    let a = run(|c, w| cmd_solve(c, w), &c);
    let b = run(|c, w| cmd_solve(c, w), &c);
    assert_eq!(a, b);
    let (h, rows) = records(&a);
    let finals: Vec<_> = rows.iter().filter(|r| &r[column(&h, "kind")] == "final").collect();
    assert_eq!(finals.len(), 2);
    for row in finals {
        let e: f64 = row[column(&h, "err_linf")].parse().unwrap();
        assert!(e.is_finite() && e > 0.0 && e < 0.1, "{e}");
    }
}

#[test]
fn zero_profiles_give_zero_errors() {
    let mut c = small();
    c.profiles = ffd_cli::Profiles::Zero;
    let (h, rows) = records(&run(|c, w| cmd_solve(c, w), &c));
    for row in rows.iter().filter(|r| &r[column(&h, "kind")] == "final") {
        for key in ["max_norm", "err_linf", "err_wiener", "err_velocity"] {
            let v: f64 = row[column(&h, key)].parse().unwrap();
            assert_eq!(v, 0.0, "{key}");
        }
    }
}

#[test]
fn empty_sweeps_write_only_headers() {
    let mut c = small();
    c.eps_list.clear();
    let text = run(|c, w| cmd_converge(c, w), &c);
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("epsilon,h,tau"));

    let mut c = small();
    c.k_min = Some(3);
    c.k_max = Some(2);
    let text = run(|c, w| cmd_stabmap(c, w), &c);
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("k,c1,c2"));
}

#[test]
fn stabmap_is_unitary() {
    let c = small();
    let (h, rows) = records(&run(|c, w| cmd_stabmap(c, w), &c));
    assert!(!rows.is_empty());
    for row in &rows {
        for key in ["abs_lambda_plus", "abs_lambda_minus"] {
            let v: f64 = row[column(&h, key)].parse().unwrap();
            assert!((v - 1.0).abs() < 1e-12, "{key} = {v}");
        }
    }
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_ffd");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "epsilon 3\n").unwrap();
    let status = Command::new(bin).args(["params", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let status = Command::new(bin)
        .args(["solve", "--set", "rho=1e-9"])
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(3));

    let out = dir.path().join("params.csv");
    let status = Command::new(bin).args(["params", "--output"]).arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("branch,epsilon"));
    assert_eq!(text.lines().count(), 3);
}
