//! Certify-or-refine loop with top-fraction interval bisection.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::certify::Certificate;
use crate::error::{Error, Result};
use crate::model::OcpProblem;
use crate::pipeline::{run_pipeline, PipelineOptions};
use crate::reconstruction::interpolate_onto;
use crate::residuals::worst_intervals;
use crate::transcription::{assemble, Mesh};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinePolicy {
    /// Fraction of intervals bisected per round.
    pub fraction: f64,
    /// Refinement rounds allowed after the initial certification.
    pub max_rounds: usize,
    pub max_intervals: usize,
}

impl Default for RefinePolicy {
    fn default() -> Self {
        RefinePolicy {
            fraction: 0.3,
            max_rounds: 8,
            max_intervals: 400,
        }
    }
}

impl RefinePolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidInput(
                "refinement fraction must lie in (0, 1]".into(),
            ));
        }
        if self.max_intervals == 0 {
            return Err(Error::InvalidInput(
                "interval budget must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub intervals: usize,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub e_n2: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub e_inf: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub alpha_hat: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub threshold: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub alpha_cont: f64,
    pub accepted: bool,
    pub solver_iterations: usize,
    /// Intervals bisected after this round.
    pub bisected: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Accepted,
    MaxRounds,
    MaxIntervals,
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub policy: RefinePolicy,
    pub termination: Termination,
    pub history: Vec<RoundSummary>,
    /// Certificate of the last completed round.
    pub certificate: Option<Certificate>,
    /// Stage error that ended the loop, if any.
    pub error: Option<String>,
}

impl RefineReport {
    pub fn accepted(&self) -> bool {
        self.termination == Termination::Accepted
    }
}

fn summary(round: usize, cert: &Certificate) -> RoundSummary {
    RoundSummary {
        round,
        intervals: cert.provenance.intervals,
        e_n2: cert.e_n2,
        e_inf: cert.e_inf,
        alpha_hat: cert.alpha_hat,
        threshold: cert.threshold,
        alpha_cont: cert.alpha_cont,
        accepted: cert.accepted,
        solver_iterations: cert.provenance.solver.iterations,
        bisected: Vec::new(),
    }
}

/// Certifies on `initial_mesh`; on rejection bisects the worst `⌈qN⌉`
/// intervals and repeats, warm-starting from the previous reconstruction.
///
/// Invalid inputs are errors; a stage failure after round zero ends the loop
/// with `Termination::SolverFailure` and the history so far. A failure in
/// round zero is returned as the error itself.
pub fn certify_loop(
    prob: &OcpProblem,
    initial_mesh: &Mesh,
    options: &PipelineOptions,
    policy: &RefinePolicy,
) -> Result<RefineReport> {
    policy.validate()?;
    let mut mesh = initial_mesh.clone();
    let mut history = Vec::new();
    let mut output = run_pipeline(prob, &mesh, options, None)?;
    let mut round = 0;
    loop {
        history.push(summary(round, &output.certificate));
        let termination = if output.certificate.accepted {
            Some(Termination::Accepted)
        } else if round >= policy.max_rounds {
            Some(Termination::MaxRounds)
        } else {
            None
        };
        if let Some(termination) = termination {
            return Ok(RefineReport {
                policy: *policy,
                termination,
                history,
                certificate: Some(output.certificate),
                error: None,
            });
        }
        let worst = worst_intervals(&output.certificate.residuals, policy.fraction)?;
        if mesh.intervals() + worst.len() > policy.max_intervals {
            return Ok(RefineReport {
                policy: *policy,
                termination: Termination::MaxIntervals,
                history,
                certificate: Some(output.certificate),
                error: None,
            });
        }
        let mut bisected = worst.clone();
        bisected.sort_unstable();
        if let Some(last) = history.last_mut() {
            last.bisected = bisected;
        }
        let next_mesh = mesh.bisect(&worst)?;
        let layout = assemble(prob, &next_mesh, options.scheme)?;
        let guess = interpolate_onto(&output.reconstruction, &layout)?;
        match run_pipeline(prob, &next_mesh, options, Some(&guess)) {
            Ok(next) => {
                output = next;
                mesh = next_mesh;
                round += 1;
            }
            Err(e) => {
                return Ok(RefineReport {
                    policy: *policy,
                    termination: Termination::SolverFailure,
                    history,
                    certificate: Some(output.certificate),
                    error: Some(alloc::format!("{e}")),
                });
            }
        }
    }
}
