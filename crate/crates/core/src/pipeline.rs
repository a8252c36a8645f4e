//! Single pass solve → reconstruct → residuals → constants → certificate.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::certify::{
    discrete_reduced_curvature, finalize_certificate, Certificate, Injections, Provenance,
    ReconstructionDiagnostics, TOOL_VERSION,
};
use crate::constants::{
    estimate_c_geo, estimate_curvature_bounds, ConstantsBundle, ConstantsOptions, TubeSpec,
};
use crate::error::{Error, Result};
use crate::model::OcpProblem;
use crate::reconstruction::{reconstruct, Reconstruction};
use crate::residuals::{
    compute_residuals, node_residuals, residual_relation_check, DEFAULT_QUAD_POINTS,
};
use crate::solver::{solve, SolveReport, SolverOptions};
use crate::transcription::{DiscreteKkt, Mesh, Scheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub scheme: Scheme,
    pub quad_points: usize,
    pub tube: TubeSpec,
    pub constants: ConstantsOptions,
    pub solver: SolverOptions,
    /// Substitute the benchmark's reported constants for the estimated ones.
    pub reported_constants: bool,
    pub injections: Injections,
    /// Recorded for reproducibility; the pipeline itself is deterministic.
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            scheme: Scheme::hermite_simpson(),
            quad_points: DEFAULT_QUAD_POINTS,
            tube: TubeSpec::default(),
            constants: ConstantsOptions::default(),
            solver: SolverOptions::default(),
            reported_constants: false,
            injections: Injections::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub certificate: Certificate,
    pub reconstruction: Reconstruction,
    pub discrete: DiscreteKkt,
}

/// Runs the full certification once on `mesh`.
///
/// A solve that stops short of the KKT tolerance is an error carrying the
/// solver report, not a rejected certificate.
pub fn run_pipeline(
    prob: &OcpProblem,
    mesh: &Mesh,
    options: &PipelineOptions,
    initial_guess: Option<&[f64]>,
) -> Result<PipelineOutput> {
    options.tube.validate()?;
    let (dkkt, report) = solve(prob, mesh, options.scheme, &options.solver, initial_guess)?;
    if !report.converged {
        return Err(Error::NotConverged {
            iterations: report.iterations,
            residual: report.kkt_residual,
        });
    }
    certify_discrete_point(prob, dkkt, report, options)
}

/// Certifies an already converged discrete KKT point.
pub fn certify_discrete_point(
    prob: &OcpProblem,
    dkkt: DiscreteKkt,
    report: SolveReport,
    options: &PipelineOptions,
) -> Result<PipelineOutput> {
    let mut rec = reconstruct(prob, &dkkt)?;
    if let Some(eps) = options.injections.control_perturbation {
        if !eps.is_finite() {
            return Err(Error::InvalidInput(
                "control perturbation must be finite".into(),
            ));
        }
        let horizon = rec.horizon();
        let m = prob.m;
        rec = rec.with_control_perturbation(|t| {
            let v = eps * libm::sin(core::f64::consts::PI * t / horizon);
            alloc::vec![v; m]
        })?;
    }
    let residuals = compute_residuals(prob, &rec, options.quad_points)?;
    let nodes = node_residuals(prob, &dkkt, &rec)?;
    let curvature = discrete_reduced_curvature(prob, &dkkt)?;
    let bounds =
        estimate_curvature_bounds(prob, &rec, &options.tube, options.constants.safety_factor)?;
    let geometry = estimate_c_geo(prob, &dkkt, &options.constants)?;
    let mut constants = ConstantsBundle::assemble(
        &bounds,
        &geometry,
        &options.scheme,
        &rec.mesh,
        &options.tube,
        &options.constants,
    )?;
    if options.reported_constants {
        constants = constants.with_reported_constants();
    }
    let diagnostics = ReconstructionDiagnostics {
        costate_anchor_shift: rec.anchor_shift,
        costate_node_jump: rec.costate_jump,
        node_residuals: nodes,
        residual_relation_holds: residual_relation_check(&residuals, rec.horizon()),
        terminal_target_gap: terminal_target_gap(prob, &rec)?,
    };
    let provenance = Provenance {
        problem: String::from(prob.name.as_str()),
        intervals: rec.mesh.intervals(),
        mesh: rec.mesh.clone(),
        scheme: options.scheme,
        solver: report,
        tool_version: String::from(TOOL_VERSION),
        seed: options.seed,
        injections: options.injections,
    };
    let certificate =
        finalize_certificate(curvature, constants, residuals, diagnostics, provenance);
    Ok(PipelineOutput {
        certificate,
        reconstruction: rec,
        discrete: dkkt,
    })
}

fn terminal_target_gap(prob: &OcpProblem, rec: &Reconstruction) -> Result<Option<f64>> {
    let Some(target) = &prob.terminal_target else {
        return Ok(None);
    };
    let xt = rec.x.eval(rec.horizon())?;
    let weighted: f64 = xt
        .iter()
        .zip(&target.state)
        .zip(&target.weight)
        .map(|((x, s), w)| w * (x - s) * (x - s))
        .sum();
    Ok(Some(libm::sqrt(weighted)))
}

/// One sampled point of a reconstruction: `(t, x, u, p)`.
pub type TrajectoryRow = (f64, Vec<f64>, Vec<f64>, Vec<f64>);

/// `(t, x, u, p)` rows on `per_interval` uniform samples per mesh interval
/// plus the final time.
pub fn sample_trajectory(rec: &Reconstruction, per_interval: usize) -> Result<Vec<TrajectoryRow>> {
    if per_interval == 0 {
        return Err(Error::InvalidInput(
            "at least one sample per interval is required".into(),
        ));
    }
    let nodes = rec.mesh.nodes();
    let mut rows = Vec::with_capacity(per_interval * rec.mesh.intervals() + 1);
    for k in 0..rec.mesh.intervals() {
        let (a, b) = (nodes[k], nodes[k + 1]);
        for i in 0..per_interval {
            let t = a + (b - a) * (i as f64) / (per_interval as f64);
            rows.push((t, rec.x.eval(t)?, rec.u.eval(t)?, rec.p.eval(t)?));
        }
    }
    let t = rec.horizon();
    rows.push((t, rec.x.eval(t)?, rec.u.eval(t)?, rec.p.eval(t)?));
    Ok(rows)
}
