mod args;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Parser;
use serde::Serialize;
use ssoc_core::certify::Certificate;
use ssoc_core::pipeline::{certify_discrete_point, PipelineOptions, PipelineOutput};
use ssoc_core::problems::{builtin_names, builtin_problem};
use ssoc_core::refine::{certify_loop, RefinePolicy, RefineReport};
use ssoc_core::solver::solve;
use ssoc_core::{Mesh, OcpProblem};

use args::{Cli, Command, RunArgs};
use output::SweepRow;

pub const EXIT_ACCEPTED: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_REJECTED: u8 = 2;

pub const THREADS_ENV: &str = "SSOC_CERTIFY_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] ssoc_core::Error),
    #[error("solver did not converge\n{0}")]
    NotConverged(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn verdict_code(accepted: bool) -> u8 {
    if accepted {
        EXIT_ACCEPTED
    } else {
        EXIT_REJECTED
    }
}

fn prepare(run: &RunArgs) -> Result<(OcpProblem, PipelineOptions), CliError> {
    run.validate().map_err(CliError::Usage)?;
    let prob = builtin_problem(&run.problem)?;
    fs::create_dir_all(&run.out_dir).map_err(|e| CliError::io(&run.out_dir, e))?;
    Ok((prob, run.pipeline_options()))
}

fn uniform_mesh(prob: &OcpProblem, n: usize) -> Result<Mesh, CliError> {
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    Ok(Mesh::uniform(prob.horizon, n)?)
}

/// Solve and certify once; a non-converged solve carries its report.
fn certify_once(
    prob: &OcpProblem,
    mesh: &Mesh,
    options: &PipelineOptions,
) -> Result<PipelineOutput, CliError> {
    let (dkkt, report) = solve(prob, mesh, options.scheme, &options.solver, None)?;
    if !report.converged {
        return Err(CliError::NotConverged(serde_json::to_string_pretty(
            &report,
        )?));
    }
    Ok(certify_discrete_point(prob, dkkt, report, options)?)
}

fn summarize(cert: &Certificate) -> String {
    format!(
        "{} N={} alpha_hat={:.3e} E_N2={:.3e} threshold={:.3e} alpha_cont={:.3e} accepted={} proximity={}",
        cert.provenance.problem,
        cert.provenance.intervals,
        cert.alpha_hat,
        cert.e_n2,
        cert.threshold,
        cert.alpha_cont,
        cert.accepted,
        cert.proximity.ok
    )
}

fn cmd_list() -> u8 {
    println!("problems:");
    for name in builtin_names() {
        println!("  {name}");
    }
    println!("schemes:");
    println!("  hermite-simpson");
    println!("  trapezoidal");
    EXIT_ACCEPTED
}

fn cmd_certify(n: usize, run: &RunArgs) -> Result<u8, CliError> {
    let (prob, options) = prepare(run)?;
    let mesh = uniform_mesh(&prob, n)?;
    let out = certify_once(&prob, &mesh, &options)?;
    output::write_json(&run.out_dir.join("certificate.json"), &out.certificate)?;
    output::write_trajectory(&run.out_dir.join("trajectory.csv"), &out.reconstruction)?;
    output::write_residuals(
        &run.out_dir.join("residuals.csv"),
        &out.certificate.residuals,
    )?;
    println!("{}", summarize(&out.certificate));
    for reason in &out.certificate.rejection_reasons {
        println!("  rejected: {reason}");
    }
    Ok(verdict_code(out.certificate.accepted))
}

/// Worker count: the environment cap if set, else the available cores.
fn thread_count(jobs: usize) -> Result<usize, CliError> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(c) if c > 0 => c,
            _ => {
                return Err(CliError::Usage(format!(
                    "{THREADS_ENV} must be a positive integer, got {v:?}"
                )))
            }
        },
        Err(_) => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    };
    Ok(cap.min(jobs).max(1))
}

fn cmd_sweep(ns: &[usize], run: &RunArgs) -> Result<u8, CliError> {
    if ns.is_empty() {
        return Err(CliError::Usage("--n needs at least one value".into()));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
        return Err(CliError::Usage(
            "--n values must be positive and strictly ascending".into(),
        ));
    }
    let (prob, options) = prepare(run)?;
    let threads = thread_count(ns.len())?;
    let slots: Vec<Mutex<Option<SweepRow>>> = ns.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= ns.len() {
                    break;
                }
                let n = ns[i];
                let row = match uniform_mesh(&prob, n)
                    .and_then(|mesh| certify_once(&prob, &mesh, &options))
                {
                    Ok(out) => {
                        let status = if out.certificate.accepted {
                            "accepted"
                        } else {
                            "rejected"
                        };
                        SweepRow {
                            n,
                            cert: Some(out.certificate),
                            status: status.into(),
                        }
                    }
                    Err(e) => SweepRow {
                        n,
                        cert: None,
                        status: format!(
                            "error: {}",
                            e.to_string().lines().next().unwrap_or_default()
                        ),
                    },
                };
                *slots[i].lock().expect("sweep slot poisoned") = Some(row);
            });
        }
    });
    let rows: Vec<SweepRow> = slots
        .into_iter()
        .map(|s| {
            s.into_inner()
                .expect("sweep slot poisoned")
                .expect("every sweep row is filled")
        })
        .collect();
    output::write_convergence(&run.out_dir.join("convergence.csv"), &rows)?;
    for row in &rows {
        match &row.cert {
            Some(c) => println!("{}", summarize(c)),
            None => println!("{} N={} {}", prob.name, row.n, row.status),
        }
    }
    let code = if rows.iter().any(|r| r.cert.is_none()) {
        EXIT_ERROR
    } else {
        verdict_code(
            rows.iter()
                .all(|r| r.cert.as_ref().is_some_and(|c| c.accepted)),
        )
    };
    Ok(code)
}

#[derive(Serialize)]
struct RunReport<'a> {
    problem: &'a str,
    initial_intervals: usize,
    options: &'a PipelineOptions,
    refine: &'a RefineReport,
}

fn cmd_refine(n: usize, policy: RefinePolicy, run: &RunArgs) -> Result<u8, CliError> {
    let (prob, options) = prepare(run)?;
    let mesh = uniform_mesh(&prob, n)?;
    let report = certify_loop(&prob, &mesh, &options, &policy)?;
    output::write_json(
        &run.out_dir.join("report.json"),
        &RunReport {
            problem: &prob.name,
            initial_intervals: n,
            options: &options,
            refine: &report,
        },
    )?;
    for round in &report.history {
        println!(
            "round {} N={} E_N2={:.3e} alpha_hat={:.3e} threshold={:.3e} accepted={}",
            round.round,
            round.intervals,
            round.e_n2,
            round.alpha_hat,
            round.threshold,
            round.accepted
        );
    }
    println!("termination: {:?}", report.termination);
    if let Some(err) = &report.error {
        eprintln!("error: {err}");
        return Ok(EXIT_ERROR);
    }
    Ok(verdict_code(report.accepted()))
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::List => Ok(cmd_list()),
        Command::Certify { n, run } => cmd_certify(n, &run),
        Command::Sweep { n, run } => cmd_sweep(&n, &run),
        Command::Refine {
            n,
            fraction,
            max_rounds,
            max_intervals,
            run,
        } => cmd_refine(
            n,
            args::refine_policy(fraction, max_rounds, max_intervals),
            &run,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_ERROR
            } else {
                EXIT_ACCEPTED
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
