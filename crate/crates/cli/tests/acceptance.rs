//! Exit-gate criteria for the tool, one PASS/FAIL line each.
//!
//! Every criterion is evaluated even when an earlier one fails; the target
//! exits non-zero if any criterion fails.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use ssoc_core::certify::Certificate;
use ssoc_core::numerics::{sigma_min, sym_eig_min};
use ssoc_core::pipeline::{run_pipeline, PipelineOptions};
use ssoc_core::problems::{builtin_names, builtin_problem};
use ssoc_core::reconstruction::reconstruct;
use ssoc_core::residuals::residual_relation_check;
use ssoc_core::solver::{solve, SolverOptions};
use ssoc_core::{Error, Mesh, Scheme};
use tempfile::TempDir;

const REPORTED_ALPHA_HAT: f64 = 6.29e-4;

/// Named sub-checks of one criterion.
#[derive(Default)]
struct Checks {
    /// `None` marks an informational line.
    items: Vec<(String, Option<bool>)>,
}

impl Checks {
    fn check(&mut self, label: impl Into<String>, ok: bool) {
        self.items.push((label.into(), Some(ok)));
    }

    fn note(&mut self, label: impl Into<String>) {
        self.items.push((label.into(), None));
    }

    fn passed(&self) -> bool {
        self.items.iter().all(|(_, ok)| *ok != Some(false))
    }

    fn detail(&self) -> String {
        let mut out = String::new();
        for (label, ok) in &self.items {
            let tag = match ok {
                Some(true) => " ok ",
                Some(false) => "FAIL",
                None => "info",
            };
            let _ = write!(out, "\n    [{tag}] {label}");
        }
        out
    }
}

struct Run {
    code: i32,
    elapsed: Duration,
}

fn tool(args: &[&str], out: &Path) -> Run {
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_ssoc-certify"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("SSOC_CERTIFY_THREADS")
        .output()
        .expect("binary runs");
    Run {
        code: status.status.code().unwrap_or(-1),
        elapsed: start.elapsed(),
    }
}

fn certificate(dir: &Path) -> Certificate {
    serde_json::from_str(&fs::read_to_string(dir.join("certificate.json")).unwrap()).unwrap()
}

fn node_residual(cert: &Certificate) -> f64 {
    let r = &cert.diagnostics.node_residuals;
    [r.dynamics, r.stationarity, r.adjoint, r.constraints]
        .into_iter()
        .fold(0.0, f64::max)
}

fn quadrotor_certificate() -> (Run, Certificate) {
    let dir = TempDir::new().unwrap();
    let args = [
        "certify",
        "--problem",
        "quadrotor",
        "--n",
        "35",
        "--scheme",
        "hermite-simpson",
        "--tol",
        "1e-12",
    ];
    let run = tool(&args, dir.path());
    (run, certificate(dir.path()))
}

fn quadrotor_end_to_end(c: &mut Checks) {
    let (run, cert) = quadrotor_certificate();
    c.note(format!("exit code {}", run.code));
    c.check(
        format!("solver converged = {}", cert.solver_converged),
        cert.solver_converged,
    );
    let ratio = cert.alpha_hat / REPORTED_ALPHA_HAT;
    c.check(
        format!(
            "alpha_hat = {:.4e} ({ratio:.2} x 6.29e-4, need within factor 5)",
            cert.alpha_hat
        ),
        (0.2..=5.0).contains(&ratio),
    );
    c.note(format!(
        "alpha_hat (Euclidean) = {:.4e}",
        cert.alpha_hat_euclidean
    ));
    let node = node_residual(&cert);
    c.check(
        format!("node KKT residual = {node:.3e} (<= 1e-10)"),
        node <= 1e-10,
    );
    c.check(
        format!("E_N2 = {:.4e} (<= 1e-6)", cert.e_n2),
        cert.e_n2 <= 1e-6,
    );
    c.check(
        format!("alpha_cont = {:.4e} (> 0)", cert.alpha_cont),
        cert.alpha_cont > 0.0,
    );
    c.check(format!("accepted = {}", cert.accepted), cert.accepted);
    c.check(
        format!("proximity = {}", cert.proximity.ok),
        cert.proximity.ok,
    );
    let secs = run.elapsed.as_secs_f64();
    c.check(format!("runtime = {secs:.2} s (<= 60 s)"), secs <= 60.0);
    for reason in &cert.rejection_reasons {
        c.note(format!("rejection reason: {reason}"));
    }
}

fn reported_chain(c: &mut Checks) {
    let dir = TempDir::new().unwrap();
    let args = [
        "certify",
        "--problem",
        "quadrotor",
        "--n",
        "35",
        "--paper-constants",
        "--inject-e-n2",
        "3.27e-14",
        "--inject-e-inf",
        "7.05e-14",
        "--inject-alpha-hat",
        "6.29e-4",
    ];
    let run = tool(&args, dir.path());
    let cert = certificate(dir.path());
    c.check(format!("exit code {} (0)", run.code), run.code == 0);
    c.check(
        format!("threshold = {:.4e} (in [3.2e-11, 4.7e-11])", cert.threshold),
        (3.2e-11..=4.7e-11).contains(&cert.threshold),
    );
    let shown = format!("{:.2e}", cert.alpha_cont);
    c.check(
        format!("alpha_cont = {} (6.29e-4 to 3 s.f.)", cert.alpha_cont),
        shown == "6.29e-4",
    );
    let r = cert.trust_radius.unwrap_or(f64::NAN);
    c.check(
        format!("r = {r:.6e} (2.885e-4 +- 1e-7)"),
        (r - 2.885e-4).abs() <= 1e-7,
    );
    let product = cert.proximity.c_close_e_inf;
    c.check(
        format!("C_close * E_inf = {product:.6e} (4.18e-12 +- 1e-14)"),
        (product - 4.18e-12).abs() <= 1e-14,
    );
    c.check(format!("accepted = {}", cert.accepted), cert.accepted);
}

fn mesh_sweep(c: &mut Checks) {
    let dir = TempDir::new().unwrap();
    let run = tool(
        &[
            "sweep",
            "--problem",
            "quadrotor",
            "--n",
            "10,15,20,25,30,35",
        ],
        dir.path(),
    );
    c.note(format!(
        "exit code {}, {:.1} s",
        run.code,
        run.elapsed.as_secs_f64()
    ));
    let table = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let mut rows = Vec::new();
    for record in csv::Reader::from_reader(table.as_bytes()).records() {
        let record = record.unwrap();
        let n: usize = record[0].parse().unwrap();
        let e: f64 = record[1].parse().unwrap_or(f64::NAN);
        let accepted = &record[5] == "true";
        c.note(format!(
            "N = {n:2}: E_N2 = {e:.4e}, alpha_hat = {}, {}",
            &record[3], &record[6]
        ));
        rows.push((n, e, accepted));
    }
    c.check(
        "six rows in request order",
        rows.iter().map(|r| r.0).eq([10, 15, 20, 25, 30, 35]),
    );
    c.check("accepted on every row", rows.iter().all(|r| r.2));
    c.check(
        "E_N2 non-increasing within 10%",
        rows.windows(2).all(|w| w[1].1 <= 1.1 * w[0].1),
    );
}

fn constants_reproduction(c: &mut Checks) {
    let (_, cert) = quadrotor_certificate();
    let k = &cert.constants;
    let (lo, hi) = (1.87e-2 / 1.15, 1.87e-2 * 1.15);
    c.check(
        format!(
            "sigma_min(M_h) = {:.4e} (in [{lo:.4e}, {hi:.4e}])",
            k.sigma_min_mh
        ),
        (lo..=hi).contains(&k.sigma_min_mh),
    );
    c.check(format!("C_geo = {:.4e} (<= 65)", k.c_geo), k.c_geo <= 65.0);
    c.check(
        format!("M2f = {:.4} (in [16, 20])", k.m2f),
        (16.0..=20.0).contains(&k.m2f),
    );
    c.check(
        format!("L21_f = {:.4} (in [0.9, 1.6])", k.l21_f),
        (0.9..=1.6).contains(&k.l21_f),
    );
    c.note(format!("Lambda = {:.4e} (reported only)", k.lambda));
    c.note(format!("C_close = {:.4e} (reported only)", k.c_close_inf));
}

fn oracle_equivalence(c: &mut Checks) {
    let (w, j, m, alpha) = oracles::lq_system(20);
    let sampled = oracles::sampled_minimum(&w, &j, &m, 1);
    c.check(
        format!("(a) pencil eigenvalue {alpha:.12} <= sampled minimum {sampled:.12}"),
        alpha <= sampled + 1e-12,
    );
    c.check(
        format!("(a) gap {:.3e} (<= 1e-6)", sampled - alpha),
        sampled - alpha <= 1e-6,
    );

    let mut rng = StdRng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let a = DMatrix::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
        worst = worst.max((sigma_min(&a) * oracles::inverse_norm(&a) - 1.0).abs());
    }
    c.check(
        format!("(b) max |sigma_min * |A^-1| - 1| = {worst:.3e} (<= 1e-8)"),
        worst <= 1e-8,
    );

    let mut rng = StdRng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let a = DMatrix::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
        let s = (&a + a.transpose()) * 0.5;
        worst = worst.max((sym_eig_min(&s).unwrap() - oracles::smallest_char_root(&s)).abs());
    }
    c.check(
        format!("(c) max |eig_min - char. root| = {worst:.3e} (<= 1e-8)"),
        worst <= 1e-8,
    );
}

fn derivative_correctness(c: &mut Checks) {
    for (i, name) in builtin_names().into_iter().enumerate() {
        let worst = oracles::derivative_errors(name, 11 + i as u64);
        c.check(
            format!(
                "{name}: {} points, gradient {:.2e} (<= 1e-6), Hessian {:.2e} (<= 1e-4)",
                oracles::DERIVATIVE_POINTS,
                worst.grad,
                worst.hess
            ),
            worst.grad <= 1e-6 && worst.hess <= 1e-4,
        );
    }
}

fn analytic_solution(c: &mut Checks) {
    let (state, costate, control) = oracles::lq_node_errors(20);
    c.check(format!("node states {state:.3e} (<= 1e-6)"), state <= 1e-6);
    c.check(
        format!("node costates {costate:.3e} (<= 1e-6)"),
        costate <= 1e-6,
    );
    c.note(format!(
        "node controls {control:.3e} (second order in h, not gated)"
    ));
    let prob = builtin_problem("double-integrator-lq").unwrap();
    let mesh = Mesh::uniform(1.0, 20).unwrap();
    let (dkkt, _) = solve(
        &prob,
        &mesh,
        Scheme::hermite_simpson(),
        &SolverOptions::default(),
        None,
    )
    .unwrap();
    let rec = reconstruct(&prob, &dkkt).unwrap();
    let (_, p_err) = oracles::lq_reconstruction_errors(&rec, 400);
    c.check(
        format!("reconstructed costate {p_err:.3e} (<= 1e-5)"),
        p_err <= 1e-5,
    );
}

fn residual_identities(c: &mut Checks) {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    let mut runs = 0;
    let mut relation_ok = true;
    for name in builtin_names() {
        let prob = builtin_problem(name).unwrap();
        for scheme in [Scheme::trapezoidal(), Scheme::hermite_simpson()] {
            for n in [4, 9, 12, 16] {
                let mesh = Mesh::uniform(prob.horizon, n).unwrap();
                let options = PipelineOptions {
                    scheme,
                    ..PipelineOptions::default()
                };
                let r = run_pipeline(&prob, &mesh, &options, None)
                    .unwrap()
                    .certificate
                    .residuals;
                runs += 1;
                relation_ok &= residual_relation_check(&r, prob.horizon);
                let sq = |f: fn(&ssoc_core::residuals::IntervalResidual) -> f64| {
                    r.per_interval.iter().map(|i| f(i).powi(2)).sum::<f64>()
                };
                worst = worst
                    .max(rel(sq(|i| i.dyn_l2), r.e_dyn_l2.powi(2)))
                    .max(rel(sq(|i| i.stat_l2), r.e_stat_l2.powi(2)))
                    .max(rel(sq(|i| i.adj_l2), r.e_adj_l2.powi(2)));
            }
        }
    }
    c.check(
        format!("decomposition sums: worst rel. {worst:.2e} (<= 1e-12)"),
        worst <= 1e-12,
    );
    c.check(
        format!("E_N2 <= sqrt(T) E_inf + e_bc on {runs} pipeline runs"),
        relation_ok,
    );

    let prob = builtin_problem("double-integrator-lq").unwrap();
    let mesh = Mesh::uniform(1.0, 8).unwrap();
    let (dkkt, _) = solve(
        &prob,
        &mesh,
        Scheme::hermite_simpson(),
        &SolverOptions::default(),
        None,
    )
    .unwrap();
    let rec = reconstruct(&prob, &dkkt).unwrap();
    let response = oracles::perturbation_response(&prob, &rec, 1e-2);
    let dev = response
        .dynamics
        .iter()
        .chain(&response.stationarity)
        .map(|v| rel(*v, response.oracle))
        .fold(0.0, f64::max);
    c.check(
        format!("perturbation linearity: worst rel. {dev:.2e} (<= 1e-8)"),
        dev <= 1e-8,
    );
}

fn negative_controls(c: &mut Checks) {
    let mut flipped_any = false;
    for (problem, n) in [
        ("double-integrator-lq", "20"),
        ("stiff-lq", "40"),
        ("quadrotor", "35"),
    ] {
        let (base_dir, pert_dir) = (TempDir::new().unwrap(), TempDir::new().unwrap());
        tool(
            &["certify", "--problem", problem, "--n", n],
            base_dir.path(),
        );
        tool(
            &[
                "certify",
                "--problem",
                problem,
                "--n",
                n,
                "--perturb-controls",
                "1e-2",
            ],
            pert_dir.path(),
        );
        let (base, pert) = (certificate(base_dir.path()), certificate(pert_dir.path()));
        let flipped = base.accepted && !pert.accepted;
        let dropped = base.alpha_cont > 0.0 && pert.alpha_cont <= 0.5 * base.alpha_cont;
        let line = format!(
            "(i) {problem} N={n}: accepted {} -> {}, alpha_cont {:.3e} -> {:.3e}",
            base.accepted, pert.accepted, base.alpha_cont, pert.alpha_cont
        );
        if base.accepted {
            c.check(line, flipped || dropped);
            flipped_any |= flipped || dropped;
        } else {
            c.note(format!("{line} (baseline rejected, not gated)"));
        }
    }
    c.check("(i) at least one accepted baseline flipped", flipped_any);

    let prob = oracles::duplicated_terminal_problem();
    let mesh = Mesh::uniform(1.0, 6).unwrap();
    let outcome = run_pipeline(&prob, &mesh, &PipelineOptions::default(), None);
    let ok = matches!(outcome, Err(Error::ConstraintQualification { .. }));
    let what = match &outcome {
        Ok(_) => "a certificate".to_string(),
        Err(e) => e.to_string(),
    };
    c.check(
        format!("(ii) rank-deficient constraint Jacobian: {what}"),
        ok,
    );
}

type Criterion = (&'static str, fn(&mut Checks));

fn main() {
    let criteria: [Criterion; 9] = [
        ("quadrotor end-to-end", quadrotor_end_to_end),
        ("reported arithmetic chain", reported_chain),
        ("quadrotor mesh sweep", mesh_sweep),
        ("constants reproduction", constants_reproduction),
        ("oracle equivalence", oracle_equivalence),
        ("derivative correctness", derivative_correctness),
        ("analytic regulator solution", analytic_solution),
        ("residual identities", residual_identities),
        ("negative controls", negative_controls),
    ];
    let mut failed = Vec::new();
    for (i, (title, criterion)) in criteria.iter().enumerate() {
        let mut checks = Checks::default();
        let result = catch_unwind(AssertUnwindSafe(|| criterion(&mut checks)));
        if let Err(panic) = result {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            checks.check(format!("aborted: {msg}"), false);
        }
        let verdict = if checks.passed() { "PASS" } else { "FAIL" };
        println!(
            "criterion {}: {verdict} - {title}{}",
            i + 1,
            checks.detail()
        );
        if !checks.passed() {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
