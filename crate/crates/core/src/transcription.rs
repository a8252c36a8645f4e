//! Collocation transcription of a Bolza problem into an equality-constrained NLP.
//!
//! The decision vector is ordered by collocation point: `[x_0, u_0, x_1, u_1, …]`,
//! where for Hermite–Simpson the points alternate between mesh nodes and
//! interval midpoints. Constraint rows are grouped per interval (Simpson rows
//! then Hermite midpoint rows), followed by boundary rows and fixed
//! initial-state rows.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{OcpProblem, ScalarDerivatives, VectorDerivatives};
use crate::numerics::SparseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    nodes: Vec<f64>,
}

impl Mesh {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidMesh("at least one interval required".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidMesh(format!(
                "first node must be 0, got {}",
                nodes[0]
            )));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidMesh(format!(
                    "nodes must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        Ok(Mesh { nodes })
    }

    pub fn uniform(horizon: f64, intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::InvalidMesh("at least one interval required".into()));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidMesh(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let mut nodes: Vec<f64> = (0..=intervals)
            .map(|k| horizon * (k as f64) / (intervals as f64))
            .collect();
        nodes[intervals] = horizon;
        Mesh::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn step(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    pub fn max_step(&self) -> f64 {
        (0..self.intervals())
            .map(|k| self.step(k))
            .fold(0.0, f64::max)
    }

    /// Interval containing `t`; breakpoints belong to the right interval except `T`.
    pub fn locate(&self, t: f64) -> usize {
        let n = self.intervals();
        match self.nodes.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }

    /// Bisects the listed intervals at their midpoints.
    pub fn bisect(&self, intervals: &[usize]) -> Result<Mesh> {
        let mut marked = vec![false; self.intervals()];
        for &k in intervals {
            if k >= self.intervals() {
                return Err(Error::InvalidMesh(format!("interval {k} out of range")));
            }
            marked[k] = true;
        }
        let mut nodes = Vec::with_capacity(self.nodes.len() + intervals.len());
        for k in 0..self.intervals() {
            nodes.push(self.nodes[k]);
            if marked[k] {
                nodes.push(0.5 * (self.nodes[k] + self.nodes[k + 1]));
            }
        }
        nodes.push(self.horizon());
        Mesh::new(nodes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Trapezoidal,
    HermiteSimpson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    pub kind: SchemeKind,
    /// Degree of the state reconstruction.
    pub degree: u32,
    /// Lebesgue constant of the interpolation.
    pub lebesgue: f64,
}

impl Scheme {
    pub fn trapezoidal() -> Self {
        Scheme {
            kind: SchemeKind::Trapezoidal,
            degree: 1,
            lebesgue: 2.0,
        }
    }

    pub fn hermite_simpson() -> Self {
        Scheme {
            kind: SchemeKind::HermiteSimpson,
            degree: 3,
            lebesgue: 2.0,
        }
    }

    pub fn from_kind(kind: SchemeKind) -> Self {
        match kind {
            SchemeKind::Trapezoidal => Scheme::trapezoidal(),
            SchemeKind::HermiteSimpson => Scheme::hermite_simpson(),
        }
    }

    /// Collocation points per interval beyond the left node.
    pub fn points_per_interval(&self) -> usize {
        match self.kind {
            SchemeKind::Trapezoidal => 1,
            SchemeKind::HermiteSimpson => 2,
        }
    }

    pub fn defects_per_interval(&self) -> usize {
        self.points_per_interval()
    }
}

/// One block of defect rows: `Σ_p a_p x_p + β_p f(t_p, x_p, u_p) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectStencil {
    pub terms: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlpLayout {
    pub n: usize,
    pub m: usize,
    pub n_b: usize,
    pub mesh: Mesh,
    pub scheme: Scheme,
    pub fixed_initial: bool,
    pub n_points: usize,
    pub n_z: usize,
    pub n_c: usize,
}

impl NlpLayout {
    pub fn point_time(&self, j: usize) -> f64 {
        let per = self.scheme.points_per_interval();
        let k = j / per;
        let r = j % per;
        if r == 0 {
            self.mesh.nodes()[k]
        } else {
            let t0 = self.mesh.nodes()[k];
            t0 + self.mesh.step(k) * (r as f64) / (per as f64)
        }
    }

    pub fn point_times(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.point_time(j)).collect()
    }

    /// Point index of mesh node `k`.
    pub fn node_point(&self, k: usize) -> usize {
        k * self.scheme.points_per_interval()
    }

    pub fn is_node_point(&self, j: usize) -> bool {
        j.is_multiple_of(self.scheme.points_per_interval())
    }

    pub fn state_range(&self, j: usize) -> Range<usize> {
        let base = j * (self.n + self.m);
        base..base + self.n
    }

    pub fn control_range(&self, j: usize) -> Range<usize> {
        let base = j * (self.n + self.m) + self.n;
        base..base + self.m
    }

    pub fn defect_rows(&self, k: usize) -> Range<usize> {
        let per = self.scheme.defects_per_interval() * self.n;
        k * per..(k + 1) * per
    }

    pub fn boundary_rows(&self) -> Range<usize> {
        let start = self.mesh.intervals() * self.scheme.defects_per_interval() * self.n;
        start..start + self.n_b
    }

    pub fn initial_rows(&self) -> Range<usize> {
        let start = self.boundary_rows().end;
        if self.fixed_initial {
            start..start + self.n
        } else {
            start..start
        }
    }

    /// Defect stencils for interval `k`, in row order.
    pub fn stencils(&self, k: usize) -> Vec<DefectStencil> {
        let h = self.mesh.step(k);
        match self.scheme.kind {
            SchemeKind::Trapezoidal => vec![DefectStencil {
                terms: vec![(k, -1.0, -0.5 * h), (k + 1, 1.0, -0.5 * h)],
            }],
            SchemeKind::HermiteSimpson => {
                let (a, mid, b) = (2 * k, 2 * k + 1, 2 * k + 2);
                vec![
                    DefectStencil {
                        terms: vec![
                            (a, -1.0, -h / 6.0),
                            (mid, 0.0, -4.0 * h / 6.0),
                            (b, 1.0, -h / 6.0),
                        ],
                    },
                    DefectStencil {
                        terms: vec![(a, -0.5, -h / 8.0), (mid, 1.0, 0.0), (b, -0.5, h / 8.0)],
                    },
                ]
            }
        }
    }

    /// Quadrature weight of each collocation point for the running cost.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_points];
        for k in 0..self.mesh.intervals() {
            let h = self.mesh.step(k);
            match self.scheme.kind {
                SchemeKind::Trapezoidal => {
                    w[k] += 0.5 * h;
                    w[k + 1] += 0.5 * h;
                }
                SchemeKind::HermiteSimpson => {
                    w[2 * k] += h / 6.0;
                    w[2 * k + 1] += 4.0 * h / 6.0;
                    w[2 * k + 2] += h / 6.0;
                }
            }
        }
        w
    }

    /// Points touched by interval `k`.
    pub fn interval_points(&self, k: usize) -> Range<usize> {
        let per = self.scheme.points_per_interval();
        k * per..(k + 1) * per + 1
    }

    pub fn states(&self, z: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n_points)
            .map(|j| z[self.state_range(j)].to_vec())
            .collect()
    }

    pub fn controls(&self, z: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n_points)
            .map(|j| z[self.control_range(j)].to_vec())
            .collect()
    }

    pub fn pack(&self, states: &[Vec<f64>], controls: &[Vec<f64>]) -> Result<Vec<f64>> {
        if states.len() != self.n_points || controls.len() != self.n_points {
            return Err(Error::DimensionMismatch {
                what: "collocation points",
                expected: self.n_points,
                found: states.len().min(controls.len()),
            });
        }
        let mut z = vec![0.0; self.n_z];
        for j in 0..self.n_points {
            if states[j].len() != self.n || controls[j].len() != self.m {
                return Err(Error::DimensionMismatch {
                    what: "point data",
                    expected: self.n + self.m,
                    found: states[j].len() + controls[j].len(),
                });
            }
            z[self.state_range(j)].copy_from_slice(&states[j]);
            z[self.control_range(j)].copy_from_slice(&controls[j]);
        }
        Ok(z)
    }

    /// Time-position keys for the KKT unknowns `[z; multipliers]`, used to band
    /// the saddle system.
    pub fn kkt_ordering_keys(&self) -> Vec<f64> {
        let mut keys = Vec::with_capacity(self.n_z + self.n_c);
        for j in 0..self.n_points {
            for _ in 0..(self.n + self.m) {
                keys.push(2.0 * j as f64);
            }
        }
        let per = self.scheme.points_per_interval();
        for k in 0..self.mesh.intervals() {
            let centre = 2.0 * (k * per) as f64 + per as f64;
            for _ in self.defect_rows(k) {
                keys.push(centre + 0.5);
            }
        }
        let last = 2.0 * (self.n_points - 1) as f64;
        for _ in self.boundary_rows() {
            keys.push(last + 0.5);
        }
        for _ in self.initial_rows() {
            keys.push(-0.5);
        }
        keys
    }
}

pub fn assemble(prob: &OcpProblem, mesh: &Mesh, scheme: Scheme) -> Result<NlpLayout> {
    Mesh::new(mesh.nodes().to_vec())?;
    if (mesh.horizon() - prob.horizon).abs() > 1e-12 * prob.horizon.max(1.0) {
        return Err(Error::InvalidMesh(format!(
            "mesh ends at {} but the horizon is {}",
            mesh.horizon(),
            prob.horizon
        )));
    }
    let intervals = mesh.intervals();
    let n_points = intervals * scheme.points_per_interval() + 1;
    let fixed_initial = prob.initial_state.is_some();
    let n_c = intervals * prob.n * scheme.defects_per_interval()
        + prob.n_b
        + if fixed_initial { prob.n } else { 0 };
    Ok(NlpLayout {
        n: prob.n,
        m: prob.m,
        n_b: prob.n_b,
        mesh: mesh.clone(),
        scheme,
        fixed_initial,
        n_points,
        n_z: n_points * (prob.n + prob.m),
        n_c,
    })
}

/// Derivatives of `f` and `L` at every collocation point.
#[derive(Debug, Clone)]
pub struct PointData {
    pub dynamics: Vec<VectorDerivatives>,
    pub running: Vec<ScalarDerivatives>,
}

/// The collocation NLP for a given problem and layout.
#[derive(Debug, Clone, Copy)]
pub struct CollocationNlp<'a> {
    pub prob: &'a OcpProblem,
    pub layout: &'a NlpLayout,
}

impl<'a> CollocationNlp<'a> {
    pub fn new(prob: &'a OcpProblem, layout: &'a NlpLayout) -> Self {
        CollocationNlp { prob, layout }
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.layout.n_z {
            return Err(Error::DimensionMismatch {
                what: "decision vector",
                expected: self.layout.n_z,
                found: z.len(),
            });
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::EvaluationDomain {
                t: f64::NAN,
                component: format!("z[{i}]"),
            });
        }
        Ok(())
    }

    fn endpoints<'z>(&self, z: &'z [f64]) -> (&'z [f64], &'z [f64]) {
        let l = self.layout;
        (&z[l.state_range(0)], &z[l.state_range(l.n_points - 1)])
    }

    pub fn point_data(&self, z: &[f64]) -> Result<PointData> {
        self.check(z)?;
        let l = self.layout;
        let mut dynamics = Vec::with_capacity(l.n_points);
        let mut running = Vec::with_capacity(l.n_points);
        for j in 0..l.n_points {
            let (f, c) = self.prob.pointwise_derivatives(
                l.point_time(j),
                &z[l.state_range(j)],
                &z[l.control_range(j)],
            )?;
            dynamics.push(f);
            running.push(c);
        }
        Ok(PointData { dynamics, running })
    }

    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        self.check(z)?;
        let l = self.layout;
        let w = l.quadrature_weights();
        let mut acc = 0.0;
        for j in 0..l.n_points {
            acc += w[j]
                * self.prob.eval_running_cost(
                    l.point_time(j),
                    &z[l.state_range(j)],
                    &z[l.control_range(j)],
                )?;
        }
        let (x0, xt) = self.endpoints(z);
        let e = self.prob.eval_endpoint_terms(x0, xt, &vec![0.0; l.n_b])?;
        Ok(acc + e.k)
    }

    pub fn objective_gradient(&self, z: &[f64], data: &PointData) -> Result<Vec<f64>> {
        let l = self.layout;
        let (n, m) = (l.n, l.m);
        let w = l.quadrature_weights();
        let mut g = vec![0.0; l.n_z];
        for j in 0..l.n_points {
            let grad = &data.running[j].gradient;
            for i in 0..n {
                g[l.state_range(j).start + i] += w[j] * grad[i];
            }
            for i in 0..m {
                g[l.control_range(j).start + i] += w[j] * grad[n + i];
            }
        }
        let (x0, xt) = self.endpoints(z);
        let e = self.prob.eval_endpoint_terms(x0, xt, &vec![0.0; l.n_b])?;
        let last = l.state_range(l.n_points - 1).start;
        for i in 0..n {
            g[i] += e.k_x0[i];
            g[last + i] += e.k_xt[i];
        }
        Ok(g)
    }

    fn constraints_from(&self, z: &[f64], values: &[Vec<f64>]) -> Result<Vec<f64>> {
        let l = self.layout;
        let n = l.n;
        let mut c = vec![0.0; l.n_c];
        for k in 0..l.mesh.intervals() {
            let rows = l.defect_rows(k);
            for (s, stencil) in l.stencils(k).iter().enumerate() {
                let base = rows.start + s * n;
                for &(p, a, beta) in &stencil.terms {
                    let xp = &z[l.state_range(p)];
                    for i in 0..n {
                        c[base + i] += a * xp[i] + beta * values[p][i];
                    }
                }
            }
        }
        let (x0, xt) = self.endpoints(z);
        if l.n_b > 0 {
            let b = self.prob.eval_boundary(x0, xt)?;
            c[l.boundary_rows()].copy_from_slice(&b);
        }
        if let Some(init) = &self.prob.initial_state {
            let rows = l.initial_rows();
            for i in 0..n {
                c[rows.start + i] = x0[i] - init[i];
            }
        }
        Ok(c)
    }

    /// Defect, boundary and initial-state residuals.
    pub fn eval_defects(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        let l = self.layout;
        let mut values = Vec::with_capacity(l.n_points);
        for j in 0..l.n_points {
            values.push(self.prob.eval_dynamics(
                l.point_time(j),
                &z[l.state_range(j)],
                &z[l.control_range(j)],
            )?);
        }
        self.constraints_from(z, &values)
    }

    pub fn constraints_with(&self, z: &[f64], data: &PointData) -> Result<Vec<f64>> {
        let values: Vec<Vec<f64>> = data
            .dynamics
            .iter()
            .map(|d| d.value.as_slice().to_vec())
            .collect();
        self.constraints_from(z, &values)
    }

    pub fn eval_constraint_jacobian(&self, z: &[f64]) -> Result<SparseMatrix> {
        let data = self.point_data(z)?;
        self.jacobian_with(z, &data)
    }

    pub fn jacobian_with(&self, z: &[f64], data: &PointData) -> Result<SparseMatrix> {
        let l = self.layout;
        let (n, m) = (l.n, l.m);
        let mut jac = SparseMatrix::new(l.n_c, l.n_z);
        for k in 0..l.mesh.intervals() {
            let rows = l.defect_rows(k);
            for (s, stencil) in l.stencils(k).iter().enumerate() {
                let base = rows.start + s * n;
                for &(p, a, beta) in &stencil.terms {
                    let fj = &data.dynamics[p].jacobian;
                    let xs = l.state_range(p).start;
                    let us = l.control_range(p).start;
                    for i in 0..n {
                        jac.add(base + i, xs + i, a);
                        if beta != 0.0 {
                            for c in 0..n {
                                jac.add(base + i, xs + c, beta * fj[(i, c)]);
                            }
                            for c in 0..m {
                                jac.add(base + i, us + c, beta * fj[(i, n + c)]);
                            }
                        }
                    }
                }
            }
        }
        let (x0, xt) = self.endpoints(z);
        if l.n_b > 0 {
            let e = self.prob.eval_endpoint_terms(x0, xt, &vec![0.0; l.n_b])?;
            let rows = l.boundary_rows();
            let last = l.state_range(l.n_points - 1).start;
            for r in 0..l.n_b {
                for i in 0..n {
                    jac.add(rows.start + r, i, e.b_x0[(r, i)]);
                    jac.add(rows.start + r, last + i, e.b_xt[(r, i)]);
                }
            }
        }
        if l.fixed_initial {
            let rows = l.initial_rows();
            for i in 0..n {
                jac.add(rows.start + i, i, 1.0);
            }
        }
        Ok(jac)
    }

    /// `∇²_zz [objective + multipliersᵀ constraints]`; `multipliers` has
    /// length `n_c` (defects, boundary, initial rows).
    pub fn eval_lagrangian_hessian(&self, z: &[f64], multipliers: &[f64]) -> Result<SparseMatrix> {
        let data = self.point_data(z)?;
        self.hessian_with(z, multipliers, &data)
    }

    pub fn hessian_with(
        &self,
        z: &[f64],
        multipliers: &[f64],
        data: &PointData,
    ) -> Result<SparseMatrix> {
        let l = self.layout;
        let (n, m) = (l.n, l.m);
        if multipliers.len() != l.n_c {
            return Err(Error::DimensionMismatch {
                what: "multipliers",
                expected: l.n_c,
                found: multipliers.len(),
            });
        }
        let w = l.quadrature_weights();
        // per-point (x, u) Hessian blocks
        let mut blocks: Vec<DMatrix<f64>> = (0..l.n_points)
            .map(|j| &data.running[j].hessian * w[j])
            .collect();
        for k in 0..l.mesh.intervals() {
            let rows = l.defect_rows(k);
            for (s, stencil) in l.stencils(k).iter().enumerate() {
                let base = rows.start + s * n;
                for &(p, _a, beta) in &stencil.terms {
                    if beta == 0.0 {
                        continue;
                    }
                    for i in 0..n {
                        let mu = multipliers[base + i];
                        if mu != 0.0 {
                            blocks[p] += &data.dynamics[p].hessians[i] * (beta * mu);
                        }
                    }
                }
            }
        }
        let mut hess = SparseMatrix::new(l.n_z, l.n_z);
        for (j, b) in blocks.iter().enumerate() {
            let xs = l.state_range(j).start;
            // state and control ranges are contiguous
            for r in 0..(n + m) {
                for c in 0..(n + m) {
                    hess.add(xs + r, xs + c, b[(r, c)]);
                }
            }
        }
        let (x0, xt) = self.endpoints(z);
        let lam = &multipliers[l.boundary_rows()];
        let e = self.prob.eval_endpoint_terms(x0, xt, lam)?;
        let last = l.state_range(l.n_points - 1).start;
        let map = |i: usize| if i < n { i } else { last + (i - n) };
        for r in 0..2 * n {
            for c in 0..2 * n {
                hess.add(map(r), map(c), e.lagrangian_hess[(r, c)]);
            }
        }
        Ok(hess)
    }

    /// Scalar Lagrangian `objective + multipliersᵀ constraints`.
    pub fn lagrangian(&self, z: &[f64], multipliers: &[f64]) -> Result<f64> {
        let f = self.objective(z)?;
        let c = self.eval_defects(z)?;
        Ok(f + c.iter().zip(multipliers).map(|(a, b)| a * b).sum::<f64>())
    }
}

/// Discrete primal-dual point returned by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteKkt {
    pub layout: NlpLayout,
    pub z: Vec<f64>,
    /// Raw NLP multipliers, one per constraint row.
    pub multipliers: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    /// Costates at every collocation point, mapped from the defect multipliers.
    pub costates: Vec<Vec<f64>>,
    /// Multipliers of the boundary rows `b(x0, xT) = 0`.
    pub boundary_multipliers: Vec<f64>,
    /// Multipliers of the fixed initial-state rows.
    pub initial_multipliers: Vec<f64>,
    /// Left/right node costate disagreement before averaging.
    pub costate_mismatch: f64,
    pub converged: bool,
}

impl DiscreteKkt {
    pub fn new(
        prob: &OcpProblem,
        layout: NlpLayout,
        z: Vec<f64>,
        multipliers: Vec<f64>,
        converged: bool,
    ) -> Result<Self> {
        if z.len() != layout.n_z || multipliers.len() != layout.n_c {
            return Err(Error::DimensionMismatch {
                what: "discrete KKT point",
                expected: layout.n_z + layout.n_c,
                found: z.len() + multipliers.len(),
            });
        }
        if z.iter().chain(&multipliers).any(|v| !v.is_finite()) {
            return Err(Error::Contract(
                "discrete KKT point has non-finite entries".into(),
            ));
        }
        let extraction = crate::reconstruction::discrete_costates(prob, &layout, &z, &multipliers)?;
        Ok(DiscreteKkt {
            states: layout.states(&z),
            controls: layout.controls(&z),
            boundary_multipliers: multipliers[layout.boundary_rows()].to_vec(),
            initial_multipliers: multipliers[layout.initial_rows()].to_vec(),
            costates: extraction.costates,
            costate_mismatch: extraction.node_mismatch,
            layout,
            z,
            multipliers,
            converged,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.layout.mesh
    }

    pub fn scheme(&self) -> Scheme {
        self.layout.scheme
    }
}
