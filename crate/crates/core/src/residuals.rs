//! Continuous KKT residuals of a reconstruction.
//!
//! L² terms integrate the squared pointwise residuals by composite
//! Gauss–Legendre quadrature on every piece between reconstruction
//! breakpoints; L∞ terms take the maximum over the quadrature points plus a
//! uniform sample grid on each interval.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::OcpProblem;
use crate::reconstruction::Reconstruction;
use crate::transcription::{CollocationNlp, DiscreteKkt};

/// Uniform samples per interval added to the quadrature points for L∞ norms.
pub const UNIFORM_SAMPLES_PER_INTERVAL: usize = 20;

pub const DEFAULT_QUAD_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalResidual {
    pub k: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub dyn_l2: f64,
    pub stat_l2: f64,
    pub adj_l2: f64,
}

impl IntervalResidual {
    /// Local squared residual used to rank intervals for refinement.
    pub fn squared_sum(&self) -> f64 {
        self.dyn_l2 * self.dyn_l2 + self.stat_l2 * self.stat_l2
    }
}

/// Residuals of the discrete KKT system sampled at the collocation points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeResiduals {
    /// `max_j |Ẋ(t_j) - f(t_j, x_j, u_j)|`.
    pub dynamics: f64,
    /// `max_j |∇_{u_j} ℒ| / w_j`, the transformed control stationarity.
    pub stationarity: f64,
    /// `max_j |∇_{x_j} ℒ| / w_j`, the transformed discrete adjoint equation.
    pub adjoint: f64,
    /// Largest discrete constraint violation.
    pub constraints: f64,
}

impl NodeResiduals {
    pub fn max(&self) -> f64 {
        self.dynamics
            .max(self.stationarity)
            .max(self.adjoint)
            .max(self.constraints)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub quad_points: usize,
    pub e_dyn_l2: f64,
    pub e_stat_l2: f64,
    pub e_adj_l2: f64,
    /// `|b(X(0), X(T))| + |X(0) - x0|`.
    pub e_bc: f64,
    /// `|P(T) - K_xT - b_xTᵀλ|`.
    pub e_terminal_costate: f64,
    /// `e_dyn_l2 + e_stat_l2 + e_bc`.
    pub e_n2: f64,
    pub e_dyn_inf: f64,
    pub e_adj_inf: f64,
    pub e_stat_inf: f64,
    /// Diagnostic indicator without the adjoint residual: `e_dyn_inf + e_stat_inf + e_bc`.
    pub e_inf_diagnostic: f64,
    /// Indicator used by the proximity estimate:
    /// `e_dyn_inf + e_adj_inf + e_stat_inf + e_bc + e_terminal_costate`.
    pub e_inf: f64,
    pub per_interval: Vec<IntervalResidual>,
    pub node: Option<NodeResiduals>,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    let pi = core::f64::consts::PI;
    for i in 0..q.div_ceil(2) {
        let mut x = libm::cos(pi * (i as f64 + 0.75) / (q as f64 + 0.5));
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(q, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(q, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[q - 1 - i] = x;
        weights[i] = w;
        weights[q - 1 - i] = w;
    }
    if q % 2 == 1 {
        nodes[q / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(q: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if q == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=q {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = q as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

struct Pointwise {
    dynamics: f64,
    stationarity: f64,
    adjoint: f64,
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    libm::sqrt(v.map(|a| a * a).sum::<f64>())
}

/// Residual norms at `t` using the X/P piece `kx` and the U piece `ku`.
fn pointwise(
    prob: &OcpProblem,
    rec: &Reconstruction,
    kx: usize,
    ku: usize,
    t: f64,
) -> Result<Pointwise> {
    let x = rec.x.eval_in(kx, t);
    let xd = rec.x.derivative_in(kx, t);
    let u = rec.u.eval_in(ku, t);
    let p = rec.p.eval_in(kx, t);
    let pd = rec.p.derivative_in(kx, t);
    let f = prob.eval_dynamics(t, &x, &u)?;
    let h = prob.eval_hamiltonian(t, &x, &u, &p)?;
    Ok(Pointwise {
        dynamics: norm(xd.iter().zip(&f).map(|(a, b)| a - b)),
        stationarity: norm(h.h_u.iter().copied()),
        adjoint: norm(pd.iter().zip(h.h_x.iter()).map(|(a, b)| -a - b)),
    })
}

/// Sub-interval end points of mesh interval `k` at every breakpoint of the reconstruction.
fn pieces(rec: &Reconstruction, k: usize) -> Vec<f64> {
    let (a, b) = (rec.mesh.nodes()[k], rec.mesh.nodes()[k + 1]);
    let mut cuts = vec![a];
    for &t in rec.u.breakpoints() {
        if t > a && t < b {
            cuts.push(t);
        }
    }
    cuts.push(b);
    cuts
}

pub fn compute_residuals(
    prob: &OcpProblem,
    rec: &Reconstruction,
    quad_points: usize,
) -> Result<ResidualReport> {
    if quad_points < 3 {
        return Err(Error::InvalidInput(
            "at least 3 quadrature points per interval are required".into(),
        ));
    }
    let (gl_nodes, gl_weights) = gauss_legendre(quad_points);
    let mut per_interval = Vec::with_capacity(rec.mesh.intervals());
    let (mut dyn_inf, mut stat_inf, mut adj_inf) = (0.0_f64, 0.0_f64, 0.0_f64);
    for k in 0..rec.mesh.intervals() {
        let (ta, tb) = (rec.mesh.nodes()[k], rec.mesh.nodes()[k + 1]);
        let cuts = pieces(rec, k);
        let (mut dyn2, mut stat2, mut adj2) = (0.0, 0.0, 0.0);
        let mut track = |r: &Pointwise| {
            dyn_inf = dyn_inf.max(r.dynamics);
            stat_inf = stat_inf.max(r.stationarity);
            adj_inf = adj_inf.max(r.adjoint);
        };
        for w in cuts.windows(2) {
            let (sa, sb) = (w[0], w[1]);
            let ku = rec.u.locate(0.5 * (sa + sb));
            let half = 0.5 * (sb - sa);
            let centre = 0.5 * (sa + sb);
            for (xi, wi) in gl_nodes.iter().zip(&gl_weights) {
                let t = centre + half * xi;
                let r = pointwise(prob, rec, k, ku, t)?;
                dyn2 += half * wi * r.dynamics * r.dynamics;
                stat2 += half * wi * r.stationarity * r.stationarity;
                adj2 += half * wi * r.adjoint * r.adjoint;
                track(&r);
            }
        }
        let samples = UNIFORM_SAMPLES_PER_INTERVAL;
        for i in 0..samples {
            let t = ta + (tb - ta) * (i as f64) / ((samples - 1) as f64);
            for w in cuts.windows(2) {
                if t >= w[0] && t <= w[1] {
                    let ku = rec.u.locate(0.5 * (w[0] + w[1]));
                    track(&pointwise(prob, rec, k, ku, t)?);
                }
            }
        }
        per_interval.push(IntervalResidual {
            k,
            t_start: ta,
            t_end: tb,
            dyn_l2: libm::sqrt(dyn2),
            stat_l2: libm::sqrt(stat2),
            adj_l2: libm::sqrt(adj2),
        });
    }
    let global = |sel: fn(&IntervalResidual) -> f64| {
        libm::sqrt(per_interval.iter().map(|r| sel(r) * sel(r)).sum())
    };
    let e_dyn_l2 = global(|r| r.dyn_l2);
    let e_stat_l2 = global(|r| r.stat_l2);
    let e_adj_l2 = global(|r| r.adj_l2);

    let horizon = rec.mesh.horizon();
    let x0 = rec.x.eval(0.0)?;
    let xt = rec.x.eval(horizon)?;
    let mut e_bc = norm(prob.eval_boundary(&x0, &xt)?.into_iter());
    if let Some(fixed) = &prob.initial_state {
        e_bc += norm(x0.iter().zip(fixed).map(|(a, b)| a - b));
    }
    let e_terminal_costate = rec.terminal_costate_residual;
    let e_n2 = e_dyn_l2 + e_stat_l2 + e_bc;
    Ok(ResidualReport {
        quad_points,
        e_dyn_l2,
        e_stat_l2,
        e_adj_l2,
        e_bc,
        e_terminal_costate,
        e_n2,
        e_dyn_inf: dyn_inf,
        e_adj_inf: adj_inf,
        e_stat_inf: stat_inf,
        e_inf_diagnostic: dyn_inf + stat_inf + e_bc,
        e_inf: dyn_inf + adj_inf + stat_inf + e_bc + e_terminal_costate,
        per_interval,
        node: None,
    })
}

/// Discrete KKT residuals at the collocation points, in the transformed
/// (quadrature-weight scaled) form comparable with the continuous residuals.
pub fn node_residuals(
    prob: &OcpProblem,
    dkkt: &DiscreteKkt,
    rec: &Reconstruction,
) -> Result<NodeResiduals> {
    let layout = &dkkt.layout;
    let nlp = CollocationNlp::new(prob, layout);
    let data = nlp.point_data(&dkkt.z)?;
    let mut grad = nlp.objective_gradient(&dkkt.z, &data)?;
    let jac = nlp.jacobian_with(&dkkt.z, &data)?;
    for (g, v) in grad
        .iter_mut()
        .zip(jac.transpose_mul_vec(&dkkt.multipliers))
    {
        *g += v;
    }
    let weights = layout.quadrature_weights();
    let mut out = NodeResiduals::default();
    for (j, &t) in layout.point_times().iter().enumerate() {
        let w = weights[j];
        let gx = norm(layout.state_range(j).map(|i| grad[i]));
        let gu = norm(layout.control_range(j).map(|i| grad[i]));
        out.adjoint = out.adjoint.max(gx / w);
        out.stationarity = out.stationarity.max(gu / w);
        let f = prob.eval_dynamics(t, &dkkt.states[j], &dkkt.controls[j])?;
        let kx = rec.x.locate(t);
        let xd = rec.x.derivative_in(kx, t);
        out.dynamics = out
            .dynamics
            .max(norm(xd.iter().zip(&f).map(|(a, b)| a - b)));
    }
    let c = nlp.constraints_with(&dkkt.z, &data)?;
    out.constraints = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(out)
}

/// `E_N2 ≤ √T·E_inf + e_bc`, with the diagnostic `E_inf` that excludes the
/// adjoint residual.
pub fn residual_relation_check(report: &ResidualReport, horizon: f64) -> bool {
    report.e_n2 <= libm::sqrt(horizon) * report.e_inf_diagnostic + report.e_bc + 1e-12
}

/// Indices of the `⌈q·N⌉` intervals with the largest local squared residual,
/// descending, ties broken by lower index.
pub fn worst_intervals(report: &ResidualReport, q: f64) -> Result<Vec<usize>> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidInput(
            "refinement fraction must lie in (0, 1]".into(),
        ));
    }
    let n = report.per_interval.len();
    let count = libm::ceil(q * n as f64) as usize;
    let mut order: Vec<(f64, usize)> = report
        .per_interval
        .iter()
        .map(|r| (r.squared_sum(), r.k))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(order
        .into_iter()
        .take(count.min(n))
        .map(|(_, k)| k)
        .collect())
}
