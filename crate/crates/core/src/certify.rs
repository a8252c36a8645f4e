//! Discrete reduced curvature, the acceptance test and the certificate.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constants::ConstantsBundle;
use crate::error::{Error, Result};
use crate::model::OcpProblem;
use crate::numerics::{cholesky_lower, nullspace_basis, sym_eig_min, DenseMatrix};
use crate::residuals::{NodeResiduals, ResidualReport};
use crate::solver::SolveReport;
use crate::transcription::{CollocationNlp, DiscreteKkt, Mesh, NlpLayout, Scheme};

/// Crate version recorded in certificates.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `C_T·E_N2` at or below which the simplified test may be used.
pub const SIMPLIFIED_TEST_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    /// Smallest eigenvalue of `ZᵀWZ` relative to `ZᵀMZ`.
    pub alpha_hat: f64,
    /// Smallest eigenvalue of `ZᵀWZ` in Euclidean coordinates.
    pub alpha_hat_euclidean: f64,
    pub null_space_dim: usize,
}

/// Smallest eigenvalue of the pencil `ZᵀWZ v = λ ZᵀMZ v` with `Z` an
/// orthonormal basis of `ker J`.
pub fn reduced_curvature(
    w: &DenseMatrix,
    j: &DenseMatrix,
    mass: &DenseMatrix,
) -> Result<CurvatureEstimate> {
    let z = nullspace_basis(j)?;
    if z.ncols() == 0 {
        return Err(Error::Contract(
            "constraint null space is trivial; no curvature to measure".into(),
        ));
    }
    let reduced = z.transpose() * w * &z;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let gram = z.transpose() * mass * &z;
    let gram = (&gram + gram.transpose()) * 0.5;
    let l = cholesky_lower(&gram)
        .ok_or_else(|| Error::Contract("reduced mass matrix is not positive definite".into()))?;
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(l.nrows(), l.nrows()))
        .ok_or_else(|| Error::Contract("reduced mass factor is singular".into()))?;
    let transformed = &l_inv * &reduced * l_inv.transpose();
    let transformed = (&transformed + transformed.transpose()) * 0.5;
    Ok(CurvatureEstimate {
        alpha_hat: sym_eig_min(&transformed)?,
        alpha_hat_euclidean: sym_eig_min(&reduced)?,
        null_space_dim: z.ncols(),
    })
}

/// Diagonal Gram matrix of the variation norm
/// `‖δx‖²_{L²} + ‖δu‖²_{L²} + |δx(0)|² + |δx(T)|²` with the running-cost
/// quadrature weights.
pub fn variation_mass_matrix(layout: &NlpLayout) -> DenseMatrix {
    let weights = layout.quadrature_weights();
    let mut mass = DMatrix::zeros(layout.n_z, layout.n_z);
    for (j, &w) in weights.iter().enumerate() {
        for i in layout.state_range(j).chain(layout.control_range(j)) {
            mass[(i, i)] = w;
        }
    }
    for i in layout
        .state_range(0)
        .chain(layout.state_range(layout.n_points - 1))
    {
        mass[(i, i)] += 1.0;
    }
    mass
}

/// Reduced curvature of the collocation NLP at a discrete KKT point.
pub fn discrete_reduced_curvature(
    prob: &OcpProblem,
    dkkt: &DiscreteKkt,
) -> Result<CurvatureEstimate> {
    let layout = &dkkt.layout;
    let nlp = CollocationNlp::new(prob, layout);
    let data = nlp.point_data(&dkkt.z)?;
    let w = nlp
        .hessian_with(&dkkt.z, &dkkt.multipliers, &data)?
        .to_dense();
    let j = nlp.jacobian_with(&dkkt.z, &data)?.to_dense();
    reduced_curvature(&w, &j, &variation_mass_matrix(layout))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceTest {
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub lhs: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub threshold: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub ct_e: f64,
    /// `1 - C_T·E_N2 > 0`.
    pub projection_stable: bool,
    /// The exact inequality `α̂(1 - C_T·E)² > Γ_tot·E`; it always governs.
    pub exact_passed: bool,
    /// Whether `C_T·E_N2 ≤ 0.1` allowed the simplified test.
    pub simplified_used: bool,
    pub simplified_passed: Option<bool>,
}

pub fn acceptance_test(alpha_hat: f64, bundle: &ConstantsBundle, e_n2: f64) -> AcceptanceTest {
    let ct_e = bundle.c_t * e_n2;
    let factor = 1.0 - ct_e;
    let lhs = alpha_hat * factor * factor;
    let threshold = bundle.gamma_tot * e_n2;
    let projection_stable = factor > 0.0;
    let simplified_used = ct_e <= SIMPLIFIED_TEST_LIMIT;
    AcceptanceTest {
        lhs,
        threshold,
        ct_e,
        projection_stable,
        exact_passed: projection_stable && lhs > threshold,
        simplified_used,
        simplified_passed: simplified_used.then_some(alpha_hat > threshold),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proximity {
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub c_close_e_inf: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub e_inf: f64,
    pub ok: bool,
}

/// Residual or curvature values substituted before the acceptance test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Injections {
    pub e_n2: Option<f64>,
    pub e_inf: Option<f64>,
    pub alpha_hat: Option<f64>,
    /// Amplitude of `ε·sin(πt/T)` added to every control before certification.
    pub control_perturbation: Option<f64>,
}

impl Injections {
    pub fn any(&self) -> bool {
        self.e_n2.is_some()
            || self.e_inf.is_some()
            || self.alpha_hat.is_some()
            || self.control_perturbation.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub problem: String,
    pub intervals: usize,
    pub mesh: Mesh,
    pub scheme: Scheme,
    pub solver: SolveReport,
    pub tool_version: String,
    pub seed: u64,
    pub injections: Injections,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionDiagnostics {
    pub costate_anchor_shift: f64,
    pub costate_node_jump: f64,
    pub node_residuals: NodeResiduals,
    pub residual_relation_holds: bool,
    /// `‖X(T) − x_f‖_K` for problems with a quadratic terminal target; not
    /// part of the certified residual.
    #[serde(with = "crate::serde_ext::extended_f64_option")]
    pub terminal_target_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub alpha_hat: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub alpha_hat_euclidean: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub e_n2: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub e_inf: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub threshold: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub lhs: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub alpha_cont: f64,
    /// `α_cont / (2Λ)`; absent unless `α_cont > 0`, and absent with
    /// `trust_radius_unbounded` when `Λ = 0`.
    #[serde(with = "crate::serde_ext::extended_f64_option")]
    pub trust_radius: Option<f64>,
    pub trust_radius_unbounded: bool,
    pub test: AcceptanceTest,
    pub proximity: Proximity,
    pub solver_converged: bool,
    pub accepted: bool,
    /// Accepted and the proximity check passed.
    pub quadratic_growth_certified: bool,
    pub simplified_test_used: bool,
    pub rejection_reasons: Vec<String>,
    pub switch_inflation: Option<f64>,
    pub residuals: ResidualReport,
    pub constants: ConstantsBundle,
    pub diagnostics: ReconstructionDiagnostics,
    pub provenance: Provenance,
}

/// Applies the curvature transfer, trust radius and proximity check.
pub fn finalize_certificate(
    curvature: CurvatureEstimate,
    constants: ConstantsBundle,
    residuals: ResidualReport,
    diagnostics: ReconstructionDiagnostics,
    provenance: Provenance,
) -> Certificate {
    let injections = provenance.injections;
    let alpha_hat = injections.alpha_hat.unwrap_or(curvature.alpha_hat);
    let e_n2 = injections.e_n2.unwrap_or(residuals.e_n2);
    let e_inf = injections.e_inf.unwrap_or(residuals.e_inf);
    let test = acceptance_test(alpha_hat, &constants, e_n2);
    let alpha_cont = test.lhs - test.threshold;

    let (trust_radius, trust_radius_unbounded) = if alpha_cont > 0.0 {
        if constants.lambda > 0.0 {
            (Some(alpha_cont / (2.0 * constants.lambda)), false)
        } else {
            (None, true)
        }
    } else {
        (None, false)
    };
    let c_close_e_inf = constants.c_close_inf * e_inf;
    let proximity_ok = trust_radius_unbounded || trust_radius.is_some_and(|r| c_close_e_inf <= r);
    let solver_converged = provenance.solver.converged;
    let rho_ok = constants.rho > 0.0;

    let mut rejection_reasons = Vec::new();
    if !solver_converged {
        rejection_reasons.push("solver did not converge".into());
    }
    if !rho_ok {
        rejection_reasons.push("strengthened Legendre condition fails".into());
    }
    if !test.projection_stable {
        rejection_reasons.push("projection stability lost (C_T * E_N2 >= 1)".into());
    } else if !test.exact_passed {
        rejection_reasons.push("curvature does not exceed the residual threshold".into());
    }
    if !(alpha_cont > 0.0) && test.exact_passed {
        rejection_reasons.push("transferred curvature is not positive".into());
    }
    let accepted = test.exact_passed && alpha_cont > 0.0 && solver_converged && rho_ok;

    Certificate {
        alpha_hat,
        alpha_hat_euclidean: curvature.alpha_hat_euclidean,
        e_n2,
        e_inf,
        threshold: test.threshold,
        lhs: test.lhs,
        alpha_cont,
        trust_radius,
        trust_radius_unbounded,
        test,
        proximity: Proximity {
            c_close_e_inf,
            e_inf,
            ok: proximity_ok,
        },
        solver_converged,
        accepted,
        quadratic_growth_certified: accepted && proximity_ok,
        simplified_test_used: test.simplified_used,
        rejection_reasons,
        switch_inflation: None,
        residuals,
        constants,
        diagnostics,
        provenance,
    }
}
