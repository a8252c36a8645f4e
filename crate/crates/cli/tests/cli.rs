//! End-to-end behaviour of the command-line tool.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ssoc_core::certify::Certificate;
use tempfile::TempDir;

fn tool(args: &[&str], out: Option<&Path>, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ssoc-certify"));
    cmd.args(args);
    if let Some(dir) = out {
        cmd.arg("--out-dir").arg(dir);
    }
    cmd.env_remove("SSOC_CERTIFY_THREADS");
    if let Some(t) = threads {
        cmd.env("SSOC_CERTIFY_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read(dir: &TempDir, name: &str) -> String {
    fs::read_to_string(dir.path().join(name)).unwrap()
}

#[test]
fn list_prints_sorted_problems_and_schemes() {
    let out = tool(&["list"], None, None);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let problems: Vec<&str> = text
        .lines()
        .skip_while(|l| *l != "problems:")
        .skip(1)
        .take_while(|l| l.starts_with("  "))
        .map(str::trim)
        .collect();
    assert!(problems.contains(&"quadrotor"));
    assert!(problems.contains(&"double-integrator-lq"));
    let mut sorted = problems.clone();
    sorted.sort_unstable();
    assert_eq!(problems, sorted);
    assert!(text.contains("hermite-simpson") && text.contains("trapezoidal"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let cases: [&[&str]; 7] = [
        &[
            "certify",
            "--problem",
            "double-integrator-lq",
            "--n",
            "8",
            "--bogus",
        ],
        &["certify", "--problem", "no-such-problem", "--n", "8"],
        &["certify", "--problem", "double-integrator-lq"],
        &["certify", "--problem", "double-integrator-lq", "--n", "0"],
        &[
            "certify",
            "--problem",
            "double-integrator-lq",
            "--n",
            "8",
            "--tol",
            "-1",
        ],
        &["sweep", "--problem", "double-integrator-lq", "--n", "10,5"],
        &[
            "refine",
            "--problem",
            "stiff-lq",
            "--n",
            "4",
            "--fraction",
            "0",
        ],
    ];
    for args in cases {
        let out = tool(args, Some(dir.path()), None);
        assert_eq!(code(&out), 1, "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(code(&tool(&["frobnicate"], None, None)), 1);
    assert_eq!(code(&tool(&["--help"], None, None)), 0);
}

#[test]
fn invalid_thread_count_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = tool(
        &["sweep", "--problem", "double-integrator-lq", "--n", "5,10"],
        Some(dir.path()),
        Some("zero"),
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn accepted_certificate_exits_zero_and_writes_artifacts() {
    let dir = TempDir::new().unwrap();
    let out = tool(
        &["certify", "--problem", "double-integrator-lq", "--n", "20"],
        Some(dir.path()),
        None,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cert: Certificate = serde_json::from_str(&read(&dir, "certificate.json")).unwrap();
    assert!(cert.accepted);
    assert_eq!(cert.provenance.intervals, 20);
    let traj = read(&dir, "trajectory.csv");
    assert_eq!(traj.lines().next().unwrap(), "t,x1,x2,u1,p1,p2");
    assert_eq!(traj.lines().count(), 1 + 20 * 10 + 1);
    let residuals = read(&dir, "residuals.csv");
    assert_eq!(
        residuals.lines().next().unwrap(),
        "k,t_k,t_k1,dyn_l2,stat_l2"
    );
    assert_eq!(residuals.lines().count(), 21);
}

#[test]
fn rejected_certificate_exits_two() {
    let dir = TempDir::new().unwrap();
    let out = tool(
        &["certify", "--problem", "stiff-lq", "--n", "4"],
        Some(dir.path()),
        None,
    );
    assert_eq!(code(&out), 2);
    let cert: Certificate = serde_json::from_str(&read(&dir, "certificate.json")).unwrap();
    assert!(!cert.accepted);
    assert!(!cert.rejection_reasons.is_empty());
}

#[test]
fn outputs_are_byte_identical_and_round_trip() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let args = [
        "certify",
        "--problem",
        "quadrotor",
        "--n",
        "12",
        "--seed",
        "3",
    ];
    for dir in [&a, &b] {
        assert_eq!(code(&tool(&args, Some(dir.path()), None)), 2);
    }
    for name in ["certificate.json", "trajectory.csv", "residuals.csv"] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
    let text = read(&a, "certificate.json");
    let cert: Certificate = serde_json::from_str(&text).unwrap();
    let mut again = serde_json::to_string_pretty(&cert).unwrap();
    again.push('\n');
    assert_eq!(again, text);
    assert_eq!(cert.provenance.seed, 3);
}

#[test]
fn non_finite_values_round_trip() {
    let dir = TempDir::new().unwrap();
    let args = [
        "certify",
        "--problem",
        "double-integrator-lq",
        "--n",
        "10",
        "--inject-alpha-hat",
        "-1",
    ];
    assert_eq!(code(&tool(&args, Some(dir.path()), None)), 2);
    let text = read(&dir, "certificate.json");
    let cert: Certificate = serde_json::from_str(&text).unwrap();
    let mut again = serde_json::to_string_pretty(&cert).unwrap();
    again.push('\n');
    assert_eq!(again, text);
}

#[test]
fn sweep_rows_follow_request_order_for_any_thread_count() {
    let (one, many) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let args = [
        "sweep",
        "--problem",
        "double-integrator-lq",
        "--n",
        "5,10,20,40",
    ];
    assert_eq!(code(&tool(&args, Some(one.path()), Some("1"))), 0);
    assert_eq!(code(&tool(&args, Some(many.path()), Some("4"))), 0);
    let table = read(&one, "convergence.csv");
    assert_eq!(table, read(&many, "convergence.csv"));
    let mut rows = csv::Reader::from_reader(table.as_bytes());
    let ns: Vec<usize> = rows
        .records()
        .map(|r| r.unwrap()[0].parse().unwrap())
        .collect();
    assert_eq!(ns, [5, 10, 20, 40]);
}

#[test]
fn sweep_with_a_rejected_row_exits_two() {
    let dir = TempDir::new().unwrap();
    let out = tool(
        &["sweep", "--problem", "stiff-lq", "--n", "4,40"],
        Some(dir.path()),
        None,
    );
    assert_eq!(code(&out), 2);
    let table = read(&dir, "convergence.csv");
    let statuses: Vec<String> = csv::Reader::from_reader(table.as_bytes())
        .records()
        .map(|r| r.unwrap()[6].to_string())
        .collect();
    assert_eq!(statuses, ["rejected", "accepted"]);
}

#[test]
fn refine_reports_history() {
    let dir = TempDir::new().unwrap();
    let out = tool(
        &[
            "refine",
            "--problem",
            "stiff-lq",
            "--n",
            "4",
            "--max-rounds",
            "0",
        ],
        Some(dir.path()),
        None,
    );
    assert_eq!(code(&out), 2);
    let report: serde_json::Value = serde_json::from_str(&read(&dir, "report.json")).unwrap();
    assert_eq!(report["refine"]["termination"], "max-rounds");
    assert_eq!(report["refine"]["history"].as_array().unwrap().len(), 1);

    let out = tool(
        &["refine", "--problem", "stiff-lq", "--n", "4"],
        Some(dir.path()),
        None,
    );
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_str(&read(&dir, "report.json")).unwrap();
    assert_eq!(report["refine"]["termination"], "accepted");
    assert!(report["refine"]["history"].as_array().unwrap().len() > 1);
}

#[test]
fn non_convergence_exits_one_with_solver_report() {
    let dir = TempDir::new().unwrap();
    let args = [
        "certify",
        "--problem",
        "double-integrator-lq",
        "--n",
        "5",
        "--tol",
        "1e-300",
    ];
    let out = tool(&args, Some(dir.path()), None);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("solver did not converge"));
    assert!(stderr.contains("\"converged\": false"));
    assert!(!dir.path().join("certificate.json").exists());
}

#[test]
fn loose_solve_raises_the_residual() {
    let (tight, loose) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let base = ["certify", "--problem", "quadrotor", "--n", "20"];
    tool(&base, Some(tight.path()), None);
    let mut args = base.to_vec();
    args.extend(["--tol", "1e-2"]);
    tool(&args, Some(loose.path()), None);
    let e = |dir: &TempDir| {
        serde_json::from_str::<Certificate>(&read(dir, "certificate.json"))
            .unwrap()
            .e_n2
    };
    assert!(e(&loose) > e(&tight));
}

#[test]
fn single_element_sweep_writes_one_row() {
    let dir = TempDir::new().unwrap();
    let out = tool(
        &["sweep", "--problem", "double-integrator-lq", "--n", "10"],
        Some(dir.path()),
        None,
    );
    assert_eq!(code(&out), 0);
    assert_eq!(read(&dir, "convergence.csv").lines().count(), 2);
}
