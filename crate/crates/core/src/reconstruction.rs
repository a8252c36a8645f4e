//! Continuous reconstruction `(X, U, P)` of a discrete KKT point.
//!
//! States and costates are cubic Hermite interpolants on the mesh nodes with
//! slopes taken from the dynamics and the adjoint equation; controls are
//! piecewise linear through every control sample.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::OcpProblem;
use crate::transcription::{CollocationNlp, DiscreteKkt, Mesh, NlpLayout, Scheme, SchemeKind};

/// Piecewise polynomial in the local variable `s = t - t_k` on each interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePoly {
    breakpoints: Vec<f64>,
    dim: usize,
    degree: usize,
    /// `[interval][component][power]`, flattened.
    coeffs: Vec<f64>,
}

impl PiecewisePoly {
    pub fn from_coefficients(
        breakpoints: Vec<f64>,
        dim: usize,
        degree: usize,
        coeffs: Vec<f64>,
    ) -> Result<Self> {
        Mesh::new(breakpoints.clone())?;
        let intervals = breakpoints.len() - 1;
        if coeffs.len() != intervals * dim * (degree + 1) {
            return Err(Error::DimensionMismatch {
                what: "polynomial coefficients",
                expected: intervals * dim * (degree + 1),
                found: coeffs.len(),
            });
        }
        Ok(PiecewisePoly {
            breakpoints,
            dim,
            degree,
            coeffs,
        })
    }

    /// Cubic Hermite interpolant through `values` with `slopes` at the breakpoints.
    pub fn cubic_hermite(
        breakpoints: Vec<f64>,
        values: &[Vec<f64>],
        slopes: &[Vec<f64>],
    ) -> Result<Self> {
        let nb = breakpoints.len();
        if values.len() != nb || slopes.len() != nb {
            return Err(Error::DimensionMismatch {
                what: "Hermite data",
                expected: nb,
                found: values.len().min(slopes.len()),
            });
        }
        let dim = values[0].len();
        let mut coeffs = Vec::with_capacity((nb - 1) * dim * 4);
        for k in 0..nb - 1 {
            let h = breakpoints[k + 1] - breakpoints[k];
            for i in 0..dim {
                let (y0, y1) = (values[k][i], values[k + 1][i]);
                let (d0, d1) = (slopes[k][i], slopes[k + 1][i]);
                let delta = (y1 - y0) / h;
                coeffs.push(y0);
                coeffs.push(d0);
                coeffs.push((3.0 * delta - 2.0 * d0 - d1) / h);
                coeffs.push((d0 + d1 - 2.0 * delta) / (h * h));
            }
        }
        PiecewisePoly::from_coefficients(breakpoints, dim, 3, coeffs)
    }

    pub fn piecewise_linear(breakpoints: Vec<f64>, values: &[Vec<f64>]) -> Result<Self> {
        let nb = breakpoints.len();
        if values.len() != nb {
            return Err(Error::DimensionMismatch {
                what: "linear interpolation data",
                expected: nb,
                found: values.len(),
            });
        }
        let dim = values[0].len();
        let mut coeffs = Vec::with_capacity((nb - 1) * dim * 2);
        for k in 0..nb - 1 {
            let h = breakpoints[k + 1] - breakpoints[k];
            for i in 0..dim {
                coeffs.push(values[k][i]);
                coeffs.push((values[k + 1][i] - values[k][i]) / h);
            }
        }
        PiecewisePoly::from_coefficients(breakpoints, dim, 1, coeffs)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn intervals(&self) -> usize {
        self.breakpoints.len() - 1
    }

    fn domain_check(&self, t: f64) -> Result<f64> {
        let lo = self.breakpoints[0];
        let hi = self.breakpoints[self.breakpoints.len() - 1];
        let slack = 1e-13 * (hi - lo).abs().max(1.0);
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(Error::OutsideDomain { t, lo, hi });
        }
        Ok(t.clamp(lo, hi))
    }

    /// Interval used at `t`: right interval at breakpoints, left one at `T`.
    pub fn locate(&self, t: f64) -> usize {
        let n = self.intervals();
        match self.breakpoints.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }

    fn coeff(&self, k: usize, i: usize, d: usize) -> f64 {
        self.coeffs[(k * self.dim + i) * (self.degree + 1) + d]
    }

    /// Value using the polynomial of interval `k` (no domain clamping).
    pub fn eval_in(&self, k: usize, t: f64) -> Vec<f64> {
        let s = t - self.breakpoints[k];
        (0..self.dim)
            .map(|i| {
                let mut acc = 0.0;
                for d in (0..=self.degree).rev() {
                    acc = acc * s + self.coeff(k, i, d);
                }
                acc
            })
            .collect()
    }

    pub fn derivative_in(&self, k: usize, t: f64) -> Vec<f64> {
        let s = t - self.breakpoints[k];
        (0..self.dim)
            .map(|i| {
                let mut acc = 0.0;
                for d in (1..=self.degree).rev() {
                    acc = acc * s + (d as f64) * self.coeff(k, i, d);
                }
                acc
            })
            .collect()
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let t = self.domain_check(t)?;
        Ok(self.eval_in(self.locate(t), t))
    }

    pub fn eval_derivative(&self, t: f64) -> Result<Vec<f64>> {
        let t = self.domain_check(t)?;
        Ok(self.derivative_in(self.locate(t), t))
    }

    /// Largest value mismatch between neighbouring pieces at interior breakpoints.
    pub fn max_continuity_gap(&self) -> f64 {
        let mut gap = 0.0_f64;
        for k in 1..self.intervals() {
            let t = self.breakpoints[k];
            let left = self.eval_in(k - 1, t);
            let right = self.eval_in(k, t);
            for (a, b) in left.iter().zip(&right) {
                gap = gap.max((a - b).abs());
            }
        }
        gap
    }
}

/// Costates at the collocation points together with the node consistency gap.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateExtraction {
    pub costates: Vec<Vec<f64>>,
    /// Largest disagreement between the left and right interval estimates at
    /// interior nodes (the state-stationarity residual there).
    pub node_mismatch: f64,
}

/// Costates at every collocation point from the raw defect multipliers.
///
/// Every interval contributes a term `g_k(t_j)` to the Lagrangian gradient
/// with respect to each node state it touches. The node costate is the left
/// contribution of the following interval (equivalently minus the right
/// contribution of the preceding one), so the chain telescopes to
/// `p(0) = -K_x0 - η` and `p(T) = K_xT + b_xTᵀλ` exactly at a KKT point.
/// Hermite–Simpson midpoints take `-ν_k`, the value that makes the midpoint
/// control stationarity read `L_u + f_uᵀ p = 0`.
pub fn discrete_costates(
    prob: &OcpProblem,
    layout: &NlpLayout,
    z: &[f64],
    multipliers: &[f64],
) -> Result<CostateExtraction> {
    let n = layout.n;
    let data = CollocationNlp::new(prob, layout).point_data(z)?;
    let intervals = layout.mesh.intervals();
    let mut left = Vec::with_capacity(intervals);
    let mut right = Vec::with_capacity(intervals);
    let mut costates = vec![vec![0.0; n]; layout.n_points];
    for k in 0..intervals {
        let h = layout.mesh.step(k);
        let (a, b) = (layout.node_point(k), layout.node_point(k + 1));
        let end_weight = match layout.scheme.kind {
            SchemeKind::Trapezoidal => 0.5 * h,
            SchemeKind::HermiteSimpson => h / 6.0,
        };
        let mut ga: Vec<f64> = data.running[a]
            .gradient
            .rows(0, n)
            .iter()
            .map(|v| end_weight * v)
            .collect();
        let mut gb: Vec<f64> = data.running[b]
            .gradient
            .rows(0, n)
            .iter()
            .map(|v| end_weight * v)
            .collect();
        let rows = layout.defect_rows(k);
        for (s, stencil) in layout.stencils(k).iter().enumerate() {
            let nu = &multipliers[rows.start + s * n..rows.start + (s + 1) * n];
            for &(point, coef, beta) in &stencil.terms {
                let target = if point == a {
                    &mut ga
                } else if point == b {
                    &mut gb
                } else {
                    continue;
                };
                let fx = &data.dynamics[point].jacobian;
                for c in 0..n {
                    let mut acc = coef * nu[c];
                    for r in 0..n {
                        acc += beta * fx[(r, c)] * nu[r];
                    }
                    target[c] += acc;
                }
            }
        }
        if layout.scheme.kind == SchemeKind::HermiteSimpson {
            costates[2 * k + 1] = nu_slice(multipliers, rows.start, n)
                .iter()
                .map(|v| -v)
                .collect();
        }
        left.push(ga);
        right.push(gb);
    }
    let mut node_mismatch = 0.0_f64;
    costates[layout.node_point(0)] = left[0].clone();
    for k in 1..intervals {
        let (l, r) = (&left[k], &right[k - 1]);
        for i in 0..n {
            node_mismatch = node_mismatch.max((l[i] + r[i]).abs());
        }
        costates[layout.node_point(k)] = l.iter().zip(r).map(|(a, b)| 0.5 * (a - b)).collect();
    }
    costates[layout.node_point(intervals)] = right[intervals - 1].iter().map(|v| -v).collect();
    Ok(CostateExtraction {
        costates,
        node_mismatch,
    })
}

fn nu_slice(multipliers: &[f64], start: usize, n: usize) -> &[f64] {
    &multipliers[start..start + n]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub x: PiecewisePoly,
    pub u: PiecewisePoly,
    pub p: PiecewisePoly,
    pub lambda: Vec<f64>,
    pub mesh: Mesh,
    pub scheme: Scheme,
    /// Collocation point times with the discrete (pre-anchoring) costates.
    pub point_times: Vec<f64>,
    pub discrete_costates: Vec<Vec<f64>>,
    /// `|p_N - (K_xT + b_xTᵀλ)|` absorbed at `t = T`.
    pub anchor_shift: f64,
    /// Largest left/right costate disagreement at interior nodes before averaging.
    pub costate_jump: f64,
    /// `|P(T) - K_xT - b_xTᵀλ|` after anchoring.
    pub terminal_costate_residual: f64,
}

impl Reconstruction {
    pub fn horizon(&self) -> f64 {
        self.mesh.horizon()
    }

    /// Copy whose control samples are shifted by `delta(t)`, still piecewise
    /// linear through the same breakpoints.
    pub fn with_control_perturbation(
        &self,
        delta: impl Fn(f64) -> Vec<f64>,
    ) -> Result<Reconstruction> {
        let mut samples = Vec::with_capacity(self.point_times.len());
        for &t in &self.point_times {
            let u = self.u.eval(t)?;
            let d = delta(t);
            if d.len() != u.len() {
                return Err(Error::DimensionMismatch {
                    what: "control perturbation",
                    expected: u.len(),
                    found: d.len(),
                });
            }
            samples.push(u.iter().zip(&d).map(|(a, b)| a + b).collect::<Vec<f64>>());
        }
        let mut out = self.clone();
        out.u = PiecewisePoly::piecewise_linear(self.point_times.clone(), &samples)?;
        Ok(out)
    }
}

pub fn reconstruct(prob: &OcpProblem, dkkt: &DiscreteKkt) -> Result<Reconstruction> {
    if !dkkt.converged {
        return Err(Error::Contract(
            "refusing to reconstruct a non-converged discrete point".into(),
        ));
    }
    let layout = &dkkt.layout;
    let mesh = layout.mesh.clone();
    let nodes = mesh.nodes().to_vec();
    let n_nodes = nodes.len();

    let node_x: Vec<Vec<f64>> = (0..n_nodes)
        .map(|k| dkkt.states[layout.node_point(k)].clone())
        .collect();
    let node_u: Vec<Vec<f64>> = (0..n_nodes)
        .map(|k| dkkt.controls[layout.node_point(k)].clone())
        .collect();
    let mut slopes = Vec::with_capacity(n_nodes);
    for k in 0..n_nodes {
        slopes.push(prob.eval_dynamics(nodes[k], &node_x[k], &node_u[k])?);
    }
    let x = PiecewisePoly::cubic_hermite(nodes.clone(), &node_x, &slopes)?;
    let u = PiecewisePoly::piecewise_linear(layout.point_times(), &dkkt.controls)?;

    let discrete = dkkt.costates.clone();
    let jump = dkkt.costate_mismatch;
    let mut node_p: Vec<Vec<f64>> = (0..n_nodes)
        .map(|k| discrete[layout.node_point(k)].clone())
        .collect();
    let lambda = dkkt.boundary_multipliers.clone();
    let (x0, xt) = (&node_x[0], &node_x[n_nodes - 1]);
    let ends = prob.eval_endpoint_terms(x0, xt, &lambda)?;
    let anchored =
        &ends.k_xt + ends.b_xt.transpose() * nalgebra::DVector::from_column_slice(&lambda);
    let last = n_nodes - 1;
    let anchor_shift = node_p[last]
        .iter()
        .zip(anchored.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();
    let anchor_shift = libm::sqrt(anchor_shift);
    node_p[last] = anchored.as_slice().to_vec();

    let mut p_slopes = Vec::with_capacity(n_nodes);
    for k in 0..n_nodes {
        let h = prob.eval_hamiltonian(nodes[k], &node_x[k], &node_u[k], &node_p[k])?;
        p_slopes.push(h.h_x.iter().map(|v| -v).collect::<Vec<f64>>());
    }
    let p = PiecewisePoly::cubic_hermite(nodes, &node_p, &p_slopes)?;

    let pt = p.eval(mesh.horizon())?;
    let terminal_costate_residual = pt
        .iter()
        .zip(anchored.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();
    let terminal_costate_residual = libm::sqrt(terminal_costate_residual);

    Ok(Reconstruction {
        x,
        u,
        p,
        lambda,
        mesh,
        scheme: layout.scheme,
        point_times: layout.point_times(),
        discrete_costates: discrete,
        anchor_shift,
        costate_jump: jump,
        terminal_costate_residual,
    })
}

/// Samples the reconstruction at the collocation points of another layout,
/// for warm starts after refinement.
pub fn interpolate_onto(rec: &Reconstruction, layout: &NlpLayout) -> Result<Vec<f64>> {
    let mut states = Vec::with_capacity(layout.n_points);
    let mut controls = Vec::with_capacity(layout.n_points);
    for t in layout.point_times() {
        states.push(rec.x.eval(t)?);
        controls.push(rec.u.eval(t)?);
    }
    layout.pack(&states, &controls)
}

pub fn describe(rec: &Reconstruction) -> alloc::string::String {
    format!(
        "reconstruction on {} intervals ({:?}), anchor shift {:.3e}",
        rec.mesh.intervals(),
        rec.scheme.kind,
        rec.anchor_shift
    )
}
