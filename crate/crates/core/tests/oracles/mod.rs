//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the kernels under test: eigenvalues come from Jacobi
//! rotations or characteristic-polynomial roots, derivatives from central
//! differences, curvature from sampled Rayleigh quotients and the regulator
//! solution from a matrix exponential.

#![allow(dead_code, clippy::needless_range_loop)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use ssoc_core::ad::Jet;
use ssoc_core::certify::{discrete_reduced_curvature, variation_mass_matrix};
use ssoc_core::problems::builtin_problem;
use ssoc_core::reconstruction::Reconstruction;
use ssoc_core::residuals::compute_residuals;
use ssoc_core::solver::solve;
use ssoc_core::transcription::CollocationNlp;
use ssoc_core::{Mesh, OcpFunctions, OcpProblem, Scheme};

// ---------------------------------------------------------------- linear algebra

/// Cyclic Jacobi rotations until the off-diagonal mass vanishes.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Smallest root of `det(A - λI)`: first sign change on a fine grid above a
/// Gershgorin lower bound, then bisection.
pub fn smallest_char_root(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let charpoly = |l: f64| (a - DMatrix::identity(n, n) * l).determinant();
    let radius = |i: usize| {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| a[(i, j)].abs())
            .sum::<f64>()
    };
    let lo = (0..n)
        .map(|i| a[(i, i)] - radius(i))
        .fold(f64::INFINITY, f64::min)
        - 1e-3;
    let hi = (0..n)
        .map(|i| a[(i, i)] + radius(i))
        .fold(f64::NEG_INFINITY, f64::max)
        + 1e-3;
    let steps = 20_000;
    let mut left = lo;
    let sign0 = charpoly(lo).signum();
    let mut right = hi;
    for s in 1..=steps {
        let l = lo + (hi - lo) * s as f64 / steps as f64;
        if charpoly(l).signum() != sign0 {
            right = l;
            break;
        }
        left = l;
    }
    for _ in 0..200 {
        let mid = 0.5 * (left + right);
        if charpoly(mid).signum() == sign0 {
            left = mid;
        } else {
            right = mid;
        }
    }
    0.5 * (left + right)
}

/// `‖A⁻¹‖₂` from the explicit inverse and the Jacobi spectrum of `A⁻ᵀA⁻¹`.
pub fn inverse_norm(a: &DMatrix<f64>) -> f64 {
    let inv = a.clone().try_inverse().expect("matrix is invertible");
    jacobi_eigenvalues(&(inv.transpose() * &inv))
        .last()
        .unwrap()
        .sqrt()
}

// ---------------------------------------------------------------- curvature

pub const RAYLEIGH_SAMPLES: usize = 10_000;

/// Projector onto `ker J` built from the normal equations.
pub fn projector(j: &DMatrix<f64>) -> DMatrix<f64> {
    let jjt = j * j.transpose();
    let inv = jjt.cholesky().expect("full row rank").inverse();
    DMatrix::identity(j.ncols(), j.ncols()) - j.transpose() * inv * j
}

pub fn rayleigh(w: &DMatrix<f64>, m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(w * v)) / v.dot(&(m * v))
}

/// Minimizing Ritz vector of the pencil `(W, M)` over the span of `basis`.
fn ritz_min(w: &DMatrix<f64>, m: &DMatrix<f64>, basis: &[DVector<f64>]) -> Option<DVector<f64>> {
    // Euclidean Gram-Schmidt, dropping directions lost to cancellation
    let mut q: Vec<DVector<f64>> = Vec::new();
    for b in basis {
        let mut v = b.clone();
        for _ in 0..2 {
            for e in &q {
                v -= e * e.dot(&v);
            }
        }
        let nv = v.norm();
        if nv > 1e-10 * b.norm() && nv > 0.0 {
            q.push(v / nv);
        }
    }
    let k = q.len();
    let a = DMatrix::from_fn(k, k, |r, c| q[r].dot(&(w * &q[c])));
    let b = DMatrix::from_fn(k, k, |r, c| q[r].dot(&(m * &q[c])));
    let l = b.cholesky()?.l();
    let l_inv = l.try_inverse()?;
    let eig = (&l_inv * a * l_inv.transpose()).symmetric_eigen();
    let i = eig.eigenvalues.imin();
    let y = l_inv.transpose() * eig.eigenvectors.column(i);
    Some(
        q.iter()
            .zip(y.iter())
            .fold(DVector::zeros(w.nrows()), |acc, (e, c)| acc + e * *c),
    )
}

/// Minimum Rayleigh quotient over `RAYLEIGH_SAMPLES` evaluations: random
/// feasible starts each followed by projected Ritz steps over the gradient,
/// its preconditioned variant and the previous step.
pub fn sampled_minimum(w: &DMatrix<f64>, j: &DMatrix<f64>, m: &DMatrix<f64>, seed: u64) -> f64 {
    let p = projector(j);
    let m_inv = DMatrix::from_diagonal(&m.diagonal().map(|d| 1.0 / d));
    let mut rng = StdRng::seed_from_u64(seed);
    let (starts, steps) = (100, RAYLEIGH_SAMPLES / 100 - 1);
    let mut best = f64::INFINITY;
    for _ in 0..starts {
        let mut v = &p * DVector::from_fn(w.nrows(), |_, _| rng.gen_range(-1.0..1.0));
        v /= v.norm();
        let mut previous: Option<DVector<f64>> = None;
        best = best.min(rayleigh(w, m, &v));
        for _ in 0..steps {
            let rho = rayleigh(w, m, &v);
            let r = w * &v - m * &v * rho;
            // constrained gradient plus its mass-preconditioned variant
            let mut basis = vec![v.clone(), &p * &r, &p * (&m_inv * &r)];
            if let Some(prev) = &previous {
                basis.push(prev.clone());
            }
            let Some(next) = ritz_min(w, m, &basis) else {
                break;
            };
            let next = &p * next;
            let next = &next / next.norm();
            previous = Some(&p * (&next - &v * v.dot(&next)));
            v = next;
            best = best.min(rayleigh(w, m, &v));
        }
    }
    best
}

/// Lagrangian Hessian, constraint Jacobian, variation mass matrix and the
/// library's curvature for the regulator on `n` intervals.
pub fn lq_system(n: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, f64) {
    let prob = builtin_problem("double-integrator-lq").unwrap();
    let mesh = Mesh::uniform(1.0, n).unwrap();
    let (dkkt, _) = solve(
        &prob,
        &mesh,
        Scheme::hermite_simpson(),
        &Default::default(),
        None,
    )
    .unwrap();
    let nlp = CollocationNlp::new(&prob, &dkkt.layout);
    let data = nlp.point_data(&dkkt.z).unwrap();
    let w = nlp
        .hessian_with(&dkkt.z, &dkkt.multipliers, &data)
        .unwrap()
        .to_dense();
    let j = nlp.jacobian_with(&dkkt.z, &data).unwrap().to_dense();
    let m = variation_mass_matrix(&dkkt.layout);
    let alpha = discrete_reduced_curvature(&prob, &dkkt).unwrap().alpha_hat;
    (w, j, m, alpha)
}

// ---------------------------------------------------------------- derivatives

pub const GRAD_STEP: f64 = 1e-6;
pub const HESS_STEP: f64 = 1e-4;
pub const DERIVATIVE_POINTS: usize = 100;

pub fn rel_err(exact: f64, approx: f64) -> f64 {
    (exact - approx).abs() / approx.abs().max(1.0)
}

pub fn gradient_fd(f: &dyn Fn(&[f64]) -> f64, z: &[f64]) -> Vec<f64> {
    (0..z.len())
        .map(|i| {
            let (mut a, mut b) = (z.to_vec(), z.to_vec());
            a[i] += GRAD_STEP;
            b[i] -= GRAD_STEP;
            (f(&a) - f(&b)) / (2.0 * GRAD_STEP)
        })
        .collect()
}

pub fn hessian_fd(f: &dyn Fn(&[f64]) -> f64, z: &[f64]) -> Vec<Vec<f64>> {
    let d = z.len();
    let h = HESS_STEP;
    let shifted = |i: usize, si: f64, j: usize, sj: f64| {
        let mut w = z.to_vec();
        w[i] += si * h;
        w[j] += sj * h;
        f(&w)
    };
    let mut out = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            out[i][j] = if i == j {
                let mut a = z.to_vec();
                let mut b = z.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - 2.0 * f(z) + f(&b)) / (h * h)
            } else {
                (shifted(i, 1.0, j, 1.0) - shifted(i, 1.0, j, -1.0) - shifted(i, -1.0, j, 1.0)
                    + shifted(i, -1.0, j, -1.0))
                    / (4.0 * h * h)
            };
        }
    }
    out
}

pub fn random_point(rng: &mut StdRng, prob: &OcpProblem) -> (f64, Vec<f64>, Vec<f64>) {
    let t = rng.gen_range(0.0..prob.horizon);
    let x = (0..prob.n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let u = prob
        .nominal_control
        .iter()
        .map(|c| c + rng.gen_range(-3.0..3.0))
        .collect();
    (t, x, u)
}

/// Largest relative gradient and Hessian errors seen.
pub struct Worst {
    pub grad: f64,
    pub hess: f64,
}

impl Worst {
    fn record(
        &mut self,
        exact_grad: &[f64],
        fd_grad: &[f64],
        exact_hess: &dyn Fn(usize, usize) -> f64,
        fd_hess: &[Vec<f64>],
    ) {
        for (a, b) in exact_grad.iter().zip(fd_grad) {
            self.grad = self.grad.max(rel_err(*a, *b));
        }
        for (i, row) in fd_hess.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                self.hess = self.hess.max(rel_err(exact_hess(i, j), *v));
            }
        }
    }
}

/// Dynamics, running cost and endpoint cost derivatives of a builtin at
/// `DERIVATIVE_POINTS` random points against central differences.
pub fn derivative_errors(name: &str, seed: u64) -> Worst {
    let prob = builtin_problem(name).unwrap();
    let n = prob.n;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = Worst {
        grad: 0.0,
        hess: 0.0,
    };
    for _ in 0..DERIVATIVE_POINTS {
        let (t, x, u) = random_point(&mut rng, &prob);
        let mut z = x.clone();
        z.extend_from_slice(&u);

        let fd = prob.dynamics_derivatives(t, &x, &u).unwrap();
        for i in 0..n {
            let fi = |w: &[f64]| prob.eval_dynamics(t, &w[..n], &w[n..]).unwrap()[i];
            let row: Vec<f64> = fd.jacobian.row(i).iter().copied().collect();
            worst.record(
                &row,
                &gradient_fd(&fi, &z),
                &|a, b| fd.hessians[i][(a, b)],
                &hessian_fd(&fi, &z),
            );
        }

        let ld = prob.running_cost_derivatives(t, &x, &u).unwrap();
        let l = |w: &[f64]| prob.eval_running_cost(t, &w[..n], &w[n..]).unwrap();
        worst.record(
            ld.gradient.as_slice(),
            &gradient_fd(&l, &z),
            &|a, b| ld.hessian[(a, b)],
            &hessian_fd(&l, &z),
        );

        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let xt: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut e = x0.clone();
        e.extend_from_slice(&xt);
        let terms = prob
            .eval_endpoint_terms(&x0, &xt, &vec![0.0; prob.n_b])
            .unwrap();
        let k = |w: &[f64]| {
            prob.functions()
                .endpoint_cost(&Jet::constants(&w[..n]), &Jet::constants(&w[n..]))
                .value()
        };
        let grad: Vec<f64> = terms
            .k_x0
            .iter()
            .chain(terms.k_xt.iter())
            .copied()
            .collect();
        worst.record(
            &grad,
            &gradient_fd(&k, &e),
            &|a, b| terms.k_hess[(a, b)],
            &hessian_fd(&k, &e),
        );
    }
    worst
}

// ---------------------------------------------------------------- regulator

/// `e^A` by scaling and squaring of a 30-term Taylor series.
pub fn expm(a: &Matrix4<f64>) -> Matrix4<f64> {
    let squarings = 6;
    let scaled = a / f64::from(1 << squarings);
    let mut term = Matrix4::identity();
    let mut sum = Matrix4::identity();
    for k in 1..30 {
        term = term * scaled / k as f64;
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// Closed-form optimal trajectory of the double-integrator regulator.
///
/// With `u = -p₂` the optimality system is `ż = H z`, `z = (x, p)`,
/// `H = [[A, -BBᵀ], [-Q, -Aᵀ]]`, with `x(0) = x₀` and `p(T) = x(T)`. The
/// missing `p(0)` follows from the transition matrix `e^{HT}`.
pub struct LqAnalytic {
    h: Matrix4<f64>,
    z0: Vector4<f64>,
}

impl LqAnalytic {
    pub fn new() -> Self {
        #[rustfmt::skip]
        let h = Matrix4::new(
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 0.0, -1.0,
            -1.0, 0.0, 0.0, 0.0,
            0.0, -1.0, -1.0, 0.0,
        );
        let phi = expm(&h);
        let block =
            |r: usize, c: usize| -> Matrix2<f64> { phi.fixed_view::<2, 2>(r, c).into_owned() };
        let x0 = Vector2::new(1.0, 0.0);
        // p(T) = x(T): (Φ22 - Φ12) p0 = (Φ11 - Φ21) x0
        let p0 = (block(2, 2) - block(0, 2))
            .lu()
            .solve(&((block(0, 0) - block(2, 0)) * x0))
            .unwrap();
        LqAnalytic {
            h,
            z0: Vector4::new(x0[0], x0[1], p0[0], p0[1]),
        }
    }

    /// `(x₁, x₂, p₁, p₂)` at time `t`; the optimal control is `-p₂`.
    pub fn at(&self, t: f64) -> Vector4<f64> {
        expm(&(self.h * t)) * self.z0
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest node errors of a regulator solve: states, costates, controls.
pub fn lq_node_errors(n: usize) -> (f64, f64, f64) {
    let prob = builtin_problem("double-integrator-lq").unwrap();
    let sol = LqAnalytic::new();
    let mesh = Mesh::uniform(1.0, n).unwrap();
    let (dkkt, report) = solve(
        &prob,
        &mesh,
        Scheme::hermite_simpson(),
        &Default::default(),
        None,
    )
    .unwrap();
    assert!(report.converged);
    let (mut state, mut costate, mut control) = (0.0_f64, 0.0_f64, 0.0_f64);
    for (k, &t) in mesh.nodes().iter().enumerate() {
        let j = dkkt.layout.node_point(k);
        let z = sol.at(t);
        state = state.max(max_abs_diff(&dkkt.states[j], &[z[0], z[1]]));
        costate = costate.max(max_abs_diff(&dkkt.costates[j], &[z[2], z[3]]));
        control = control.max((dkkt.controls[j][0] + z[3]).abs());
    }
    (state, costate, control)
}

/// Largest reconstruction errors of state and costate on a dense grid.
pub fn lq_reconstruction_errors(rec: &Reconstruction, samples: usize) -> (f64, f64) {
    let sol = LqAnalytic::new();
    let (mut state, mut costate) = (0.0_f64, 0.0_f64);
    for i in 0..=samples {
        let t = i as f64 / samples as f64;
        let z = sol.at(t);
        state = state.max(max_abs_diff(&rec.x.eval(t).unwrap(), &[z[0], z[1]]));
        costate = costate.max(max_abs_diff(&rec.p.eval(t).unwrap(), &[z[2], z[3]]));
    }
    (state, costate)
}

// ---------------------------------------------------------------- residuals

/// Second differences of the squared dynamics and stationarity residuals in
/// the amplitude of `ε·sin(πt)` added to the controls, at steps `ε` and
/// `2ε`, next to `∫ (I sin(π·))²` for the piecewise-linear interpolant `I`
/// through the control points.
pub struct PerturbationResponse {
    pub dynamics: [f64; 2],
    pub stationarity: [f64; 2],
    pub oracle: f64,
}

pub fn perturbation_response(
    prob: &OcpProblem,
    rec: &Reconstruction,
    eps: f64,
) -> PerturbationResponse {
    let bump = |t: f64| (std::f64::consts::PI * t).sin();
    let squared = |a: f64| {
        let perturbed = rec
            .with_control_perturbation(|t| vec![a * bump(t)])
            .unwrap();
        let r = compute_residuals(prob, &perturbed, 5).unwrap();
        (r.e_dyn_l2.powi(2), r.e_stat_l2.powi(2))
    };
    let (d0, s0) = squared(0.0);
    let mut dynamics = [0.0; 2];
    let mut stationarity = [0.0; 2];
    for (i, e) in [eps, 2.0 * eps].into_iter().enumerate() {
        let (dp, sp) = squared(e);
        let (dm, sm) = squared(-e);
        dynamics[i] = (dp + dm - 2.0 * d0) / (2.0 * e * e);
        stationarity[i] = (sp + sm - 2.0 * s0) / (2.0 * e * e);
    }
    // Simpson per piece is exact for the squared linear interpolant
    let oracle = rec
        .point_times
        .windows(2)
        .map(|w| {
            let (a, b) = (bump(w[0]), bump(w[1]));
            let mid = 0.5 * (a + b);
            (w[1] - w[0]) / 6.0 * (a * a + 4.0 * mid * mid + b * b)
        })
        .sum();
    PerturbationResponse {
        dynamics,
        stationarity,
        oracle,
    }
}

// ---------------------------------------------------------------- degenerate problem

/// Double integrator with the terminal condition imposed twice.
pub struct DuplicatedTerminal;

impl OcpFunctions for DuplicatedTerminal {
    fn dynamics(&self, _t: f64, x: &[Jet], u: &[Jet]) -> Vec<Jet> {
        vec![x[1].clone(), u[0].clone()]
    }

    fn running_cost(&self, _t: f64, _x: &[Jet], u: &[Jet]) -> Jet {
        0.5 * u[0].square()
    }

    fn endpoint_cost(&self, _x0: &[Jet], _xt: &[Jet]) -> Jet {
        Jet::constant(0.0)
    }

    fn boundary(&self, _x0: &[Jet], xt: &[Jet]) -> Vec<Jet> {
        let gap = &xt[0] - 1.0;
        vec![gap.clone(), 2.0 * gap]
    }
}

pub fn duplicated_terminal_problem() -> OcpProblem {
    OcpProblem::new(
        "duplicated-terminal",
        2,
        1,
        2,
        1.0,
        Arc::new(DuplicatedTerminal),
    )
    .unwrap()
    .with_initial_state(vec![0.0, 0.0])
    .unwrap()
}
