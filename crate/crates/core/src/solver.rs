//! Globalized Newton-KKT (SQP) iteration for the equality-constrained
//! collocation NLP.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::OcpProblem;
use crate::numerics::{check_full_row_rank, SaddleFactorization, SparseMatrix};
use crate::transcription::{assemble, CollocationNlp, DiscreteKkt, Mesh, Scheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
    /// First nonzero primal regularization tried on an inertia failure.
    pub regularization: f64,
    pub max_regularization: f64,
    pub armijo: f64,
    pub backtrack: f64,
    /// Minimum margin of the ℓ1 penalty over the multiplier magnitude.
    pub penalty_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kkt_tolerance: 1e-12,
            max_iterations: 200,
            regularization: 1e-8,
            max_regularization: 1e6,
            armijo: 1e-4,
            backtrack: 0.5,
            penalty_margin: 1e-4,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.kkt_tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidInput(
                "solver tolerance must be positive and max_iterations at least 1".into(),
            ));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0)
            || !(self.armijo > 0.0 && self.armijo < 0.5)
        {
            return Err(Error::InvalidInput("invalid line-search parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `max(‖∇_z L‖_∞, ‖c‖_∞)` at the returned point.
    pub kkt_residual: f64,
    pub stationarity: f64,
    pub constraint_violation: f64,
    pub converged: bool,
    pub final_regularization: f64,
    pub initial_guess: String,
    pub merit_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NewtonStep {
    pub dz: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub regularization: f64,
    pub factorization: SaddleFactorization,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn one_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

/// Solves `[[W + δI, Jᵀ], [J, 0]] [Δz; ν] = -[grad; c]`.
///
/// Starts unregularized and escalates `δ` (first to `delta0`, then ×10)
/// whenever the factorization is singular or the step has non-positive
/// curvature `Δzᵀ(W + δI)Δz`. A rank-deficient `J` is reported as a
/// constraint-qualification failure rather than a breakdown.
pub fn newton_step(
    w: &SparseMatrix,
    j: &SparseMatrix,
    grad: &[f64],
    c: &[f64],
    delta0: f64,
    max_delta: f64,
    keys: Option<&[f64]>,
) -> Result<NewtonStep> {
    let nz = w.nrows();
    let nc = j.nrows();
    if grad.len() != nz || c.len() != nc || j.ncols() != nz {
        return Err(Error::DimensionMismatch {
            what: "Newton system",
            expected: nz + nc,
            found: grad.len() + c.len(),
        });
    }
    let default_keys;
    let keys = match keys {
        Some(k) => k,
        None => {
            default_keys = (0..nz + nc).map(|i| i as f64).collect::<Vec<_>>();
            &default_keys
        }
    };
    let mut rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
    rhs.extend(c.iter().map(|v| -v));
    let w_scale = w.iter().fold(0.0_f64, |m, e| m.max(e.2.abs())).max(1.0);

    let mut delta = 0.0;
    loop {
        if let Some(fact) = SaddleFactorization::new(w, j, delta, keys) {
            let sol = fact.solve(&rhs);
            if sol.iter().all(|v| v.is_finite()) {
                let dz = sol[..nz].to_vec();
                let wd = w.mul_vec(&dz);
                let curvature = dot(&dz, &wd) + delta * dot(&dz, &dz);
                let dn = dot(&dz, &dz);
                if dn == 0.0 || curvature > 1e-14 * w_scale * dn {
                    return Ok(NewtonStep {
                        dz,
                        multipliers: sol[nz..].to_vec(),
                        regularization: delta,
                        factorization: fact,
                    });
                }
            }
        }
        delta = if delta == 0.0 { delta0 } else { delta * 10.0 };
        if delta > max_delta {
            // primal regularization cannot repair dependent constraints
            check_full_row_rank(&j.to_dense())?;
            return Err(Error::SolverBreakdown {
                regularization: delta,
            });
        }
    }
}

/// Linear interpolation `x0 → x_f` with the nominal control.
pub fn default_initial_guess(prob: &OcpProblem, mesh: &Mesh, scheme: Scheme) -> Result<Vec<f64>> {
    let layout = assemble(prob, mesh, scheme)?;
    let x0 = prob
        .initial_state
        .clone()
        .unwrap_or_else(|| vec![0.0; prob.n]);
    let xf = prob
        .terminal_target
        .as_ref()
        .map(|t| t.state.clone())
        .unwrap_or_else(|| x0.clone());
    let states: Vec<Vec<f64>> = layout
        .point_times()
        .iter()
        .map(|&t| {
            let s = t / prob.horizon;
            x0.iter().zip(&xf).map(|(a, b)| a + s * (b - a)).collect()
        })
        .collect();
    let controls = vec![prob.nominal_control.clone(); layout.n_points];
    layout.pack(&states, &controls)
}

struct Evaluation {
    grad: Vec<f64>,
    c: Vec<f64>,
    jac: SparseMatrix,
    data: crate::transcription::PointData,
}

fn evaluate(nlp: &CollocationNlp<'_>, z: &[f64]) -> Result<Evaluation> {
    let data = nlp.point_data(z)?;
    Ok(Evaluation {
        grad: nlp.objective_gradient(z, &data)?,
        c: nlp.constraints_with(z, &data)?,
        jac: nlp.jacobian_with(z, &data)?,
        data,
    })
}

fn merit(nlp: &CollocationNlp<'_>, z: &[f64], penalty: f64) -> Option<f64> {
    let f = nlp.objective(z).ok()?;
    let c = nlp.eval_defects(z).ok()?;
    let v = f + penalty * one_norm(&c);
    v.is_finite().then_some(v)
}

pub fn solve(
    prob: &OcpProblem,
    mesh: &Mesh,
    scheme: Scheme,
    options: &SolverOptions,
    initial_guess: Option<&[f64]>,
) -> Result<(DiscreteKkt, SolveReport)> {
    options.validate()?;
    let layout = assemble(prob, mesh, scheme)?;
    let nlp = CollocationNlp::new(prob, &layout);
    let (mut z, guess_label) = match initial_guess {
        Some(g) => {
            if g.len() != layout.n_z {
                return Err(Error::DimensionMismatch {
                    what: "initial guess",
                    expected: layout.n_z,
                    found: g.len(),
                });
            }
            (g.to_vec(), String::from("user-supplied"))
        }
        None => (
            default_initial_guess(prob, mesh, scheme)?,
            String::from("linear state interpolation x0 -> x_f, nominal control"),
        ),
    };
    let keys = layout.kkt_ordering_keys();
    let mut nu = vec![0.0; layout.n_c];
    let mut penalty = 1.0_f64;
    let mut report = SolveReport {
        iterations: 0,
        kkt_residual: f64::INFINITY,
        stationarity: f64::INFINITY,
        constraint_violation: f64::INFINITY,
        converged: false,
        final_regularization: 0.0,
        initial_guess: guess_label,
        merit_history: Vec::new(),
    };

    let mut eval = evaluate(&nlp, &z)?;
    for iter in 0..=options.max_iterations {
        let mut lag_grad = eval.grad.clone();
        for (g, v) in lag_grad.iter_mut().zip(eval.jac.transpose_mul_vec(&nu)) {
            *g += v;
        }
        report.stationarity = inf_norm(&lag_grad);
        report.constraint_violation = inf_norm(&eval.c);
        report.kkt_residual = report.stationarity.max(report.constraint_violation);
        report.iterations = iter;
        if report.kkt_residual <= options.kkt_tolerance {
            report.converged = true;
            break;
        }
        if iter == options.max_iterations {
            break;
        }

        let w = nlp.hessian_with(&z, &nu, &eval.data)?;
        let step = newton_step(
            &w,
            &eval.jac,
            &eval.grad,
            &eval.c,
            options.regularization,
            options.max_regularization,
            Some(&keys),
        )?;
        report.final_regularization = step.regularization;
        let dz = &step.dz;

        // ℓ1 penalty large enough for descent
        let c1 = one_norm(&eval.c);
        let gd = dot(&eval.grad, dz);
        let mut needed = inf_norm(&step.multipliers) + options.penalty_margin;
        if c1 > 0.0 {
            let wd = dot(dz, &w.mul_vec(dz)).max(0.0);
            needed = needed.max((gd + 0.5 * wd) / (0.9 * c1));
        }
        if penalty < needed {
            penalty = (2.0 * needed).max(penalty);
        }
        let phi0 = merit(&nlp, &z, penalty).ok_or_else(|| Error::EvaluationDomain {
            t: f64::NAN,
            component: "merit at current iterate".into(),
        })?;
        if report.merit_history.is_empty() {
            report.merit_history.push(phi0);
        }
        let slope = gd - penalty * c1;
        // rounding allowance on the merit comparison
        let noise = 16.0 * f64::EPSILON * (phi0.abs() + 1.0);

        let trial = |alpha: f64, extra: Option<&[f64]>| -> Vec<f64> {
            let mut zt: Vec<f64> = z.iter().zip(dz).map(|(a, b)| a + alpha * b).collect();
            if let Some(e) = extra {
                for (a, b) in zt.iter_mut().zip(e) {
                    *a += b;
                }
            }
            zt
        };

        let mut accepted: Option<(Vec<f64>, f64, f64)> = None;
        let full = trial(1.0, None);
        match merit(&nlp, &full, penalty) {
            Some(phi) if phi <= phi0 + options.armijo * slope.min(0.0) + noise => {
                accepted = Some((full, 1.0, phi));
            }
            _ => {
                // second-order correction against the Maratos effect
                if let Ok(c_full) = nlp.eval_defects(&full) {
                    let mut rhs = vec![0.0; layout.n_z];
                    rhs.extend(c_full.iter().map(|v| -v));
                    let sol = step.factorization.solve(&rhs);
                    let soc = &sol[..layout.n_z];
                    if soc.iter().all(|v| v.is_finite()) {
                        let zc = trial(1.0, Some(soc));
                        if let Some(phi) = merit(&nlp, &zc, penalty) {
                            if phi <= phi0 + options.armijo * slope.min(0.0) + noise {
                                accepted = Some((zc, 1.0, phi));
                            }
                        }
                    }
                }
                if accepted.is_none() {
                    let mut alpha = options.backtrack;
                    while alpha > 1e-12 {
                        let zt = trial(alpha, None);
                        if let Some(phi) = merit(&nlp, &zt, penalty) {
                            if phi <= phi0 + options.armijo * alpha * slope.min(0.0) + noise {
                                accepted = Some((zt, alpha, phi));
                                break;
                            }
                        }
                        alpha *= options.backtrack;
                    }
                }
            }
        }
        let Some((znew, alpha, phi)) = accepted else {
            // line search stalled: the iterate is as good as the merit can tell
            break;
        };
        for (v, vn) in nu.iter_mut().zip(&step.multipliers) {
            *v += alpha * (vn - *v);
        }
        z = znew;
        report.merit_history.push(phi);
        eval = evaluate(&nlp, &z)?;
    }

    if !report.kkt_residual.is_finite() {
        return Err(Error::EvaluationDomain {
            t: f64::NAN,
            component: format!("KKT residual after {} iterations", report.iterations),
        });
    }
    let dkkt = DiscreteKkt::new(prob, layout, z, nu, report.converged)?;
    Ok((dkkt, report))
}
