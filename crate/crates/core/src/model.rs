//! Bolza optimal control problems and their exact derivatives.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::ad::Jet;
use crate::error::{Error, Result};

/// Callbacks defining a Bolza problem. Every callback must accept seeded
/// [`Jet`]s so first and second derivatives come out of a single evaluation.
pub trait OcpFunctions: Send + Sync {
    /// Right-hand side `f(t, x, u)`, length `n`.
    fn dynamics(&self, t: f64, x: &[Jet], u: &[Jet]) -> Vec<Jet>;

    /// Running cost `L(t, x, u)`.
    fn running_cost(&self, t: f64, x: &[Jet], u: &[Jet]) -> Jet;

    /// Endpoint cost `K(x(0), x(T))`.
    fn endpoint_cost(&self, x0: &[Jet], xt: &[Jet]) -> Jet;

    /// Boundary map `b(x(0), x(T))`, length `n_b`.
    fn boundary(&self, _x0: &[Jet], _xt: &[Jet]) -> Vec<Jet> {
        Vec::new()
    }
}

/// Quadratic terminal target used only for the weighted boundary diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalTarget {
    pub state: Vec<f64>,
    pub weight: Vec<f64>,
}

#[derive(Clone)]
pub struct OcpProblem {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub n_b: usize,
    pub horizon: f64,
    /// Fixed initial state, imposed as explicit constraint rows.
    pub initial_state: Option<Vec<f64>>,
    pub terminal_target: Option<TerminalTarget>,
    /// Control used for the default initial guess (hover thrust, zero, ...).
    pub nominal_control: Vec<f64>,
    functions: Arc<dyn OcpFunctions>,
}

impl fmt::Debug for OcpProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OcpProblem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("n_b", &self.n_b)
            .field("horizon", &self.horizon)
            .field("initial_state", &self.initial_state)
            .finish_non_exhaustive()
    }
}

/// Value, Jacobian and per-component Hessians of a vector function of `(x, u)`.
#[derive(Debug, Clone)]
pub struct VectorDerivatives {
    pub value: DVector<f64>,
    /// `rows × (n + m)`, columns ordered `[x, u]`.
    pub jacobian: DMatrix<f64>,
    pub hessians: Vec<DMatrix<f64>>,
}

/// Value, gradient and Hessian of a scalar function.
#[derive(Debug, Clone)]
pub struct ScalarDerivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct HamiltonianEval {
    pub h: f64,
    pub h_x: DVector<f64>,
    pub h_u: DVector<f64>,
    pub h_xx: DMatrix<f64>,
    pub h_uu: DMatrix<f64>,
    /// `m × n`
    pub h_ux: DMatrix<f64>,
    /// `m × n`, equal to `f_u^T`.
    pub h_up: DMatrix<f64>,
}

/// Endpoint data needed by the boundary rows and the transversality
/// conditions. Derivatives are with respect to `(x0, xT)` stacked.
#[derive(Debug, Clone)]
pub struct EndpointTerms {
    pub k: f64,
    pub k_x0: DVector<f64>,
    pub k_xt: DVector<f64>,
    /// `2n × 2n` Hessian of `K`.
    pub k_hess: DMatrix<f64>,
    pub b: DVector<f64>,
    /// `n_b × n`
    pub b_x0: DMatrix<f64>,
    /// `n_b × n`
    pub b_xt: DMatrix<f64>,
    pub b_hess: Vec<DMatrix<f64>>,
    /// `2n × 2n` Hessian of `K + λᵀ b`.
    pub lagrangian_hess: DMatrix<f64>,
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

fn check_finite(t: f64, what: &str, jets: &[Jet]) -> Result<()> {
    for (i, j) in jets.iter().enumerate() {
        if !j.is_finite() {
            return Err(Error::EvaluationDomain {
                t,
                component: format!("{what}[{i}]"),
            });
        }
    }
    Ok(())
}

fn stack(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

fn vector_derivatives(jets: &[Jet], dim: usize) -> VectorDerivatives {
    let rows = jets.len();
    let mut jacobian = DMatrix::zeros(rows, dim);
    for (r, j) in jets.iter().enumerate() {
        for (c, g) in j.gradient().iter().enumerate() {
            jacobian[(r, c)] = *g;
        }
    }
    VectorDerivatives {
        value: DVector::from_iterator(rows, jets.iter().map(Jet::value)),
        jacobian,
        hessians: jets.iter().map(|j| j.hessian_matrix(dim)).collect(),
    }
}

fn scalar_derivatives(jet: &Jet, dim: usize) -> ScalarDerivatives {
    ScalarDerivatives {
        value: jet.value(),
        gradient: jet.gradient_vector(dim),
        hessian: jet.hessian_matrix(dim),
    }
}

impl OcpProblem {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        m: usize,
        n_b: usize,
        horizon: f64,
        functions: Arc<dyn OcpFunctions>,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if n == 0 || m == 0 {
            return Err(Error::InvalidInput(
                "state and control dimensions must be positive".into(),
            ));
        }
        Ok(OcpProblem {
            name: name.into(),
            n,
            m,
            n_b,
            horizon,
            initial_state: None,
            terminal_target: None,
            nominal_control: alloc::vec![0.0; m],
            functions,
        })
    }

    pub fn with_initial_state(mut self, x0: Vec<f64>) -> Result<Self> {
        check_len("initial state", self.n, x0.len())?;
        self.initial_state = Some(x0);
        Ok(self)
    }

    pub fn with_terminal_target(mut self, target: TerminalTarget) -> Result<Self> {
        check_len("terminal target", self.n, target.state.len())?;
        check_len("terminal weight", self.n, target.weight.len())?;
        self.terminal_target = Some(target);
        Ok(self)
    }

    pub fn with_nominal_control(mut self, u: Vec<f64>) -> Result<Self> {
        check_len("nominal control", self.m, u.len())?;
        self.nominal_control = u;
        Ok(self)
    }

    pub fn functions(&self) -> &dyn OcpFunctions {
        self.functions.as_ref()
    }

    fn check_xu(&self, x: &[f64], u: &[f64]) -> Result<()> {
        check_len("state", self.n, x.len())?;
        check_len("control", self.m, u.len())
    }

    fn dynamics_jets(&self, t: f64, x: &[Jet], u: &[Jet]) -> Result<Vec<Jet>> {
        let f = self.functions.dynamics(t, x, u);
        check_len("dynamics output", self.n, f.len())?;
        check_finite(t, "f", &f)?;
        Ok(f)
    }

    pub fn eval_dynamics(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_xu(x, u)?;
        let f = self.dynamics_jets(t, &Jet::constants(x), &Jet::constants(u))?;
        Ok(f.iter().map(Jet::value).collect())
    }

    pub fn eval_running_cost(&self, t: f64, x: &[f64], u: &[f64]) -> Result<f64> {
        self.check_xu(x, u)?;
        let l = self
            .functions
            .running_cost(t, &Jet::constants(x), &Jet::constants(u));
        check_finite(t, "L", core::slice::from_ref(&l))?;
        Ok(l.value())
    }

    /// `f`, `[f_x f_u]` and each `∇²f_i` in the `(x, u)` variables.
    pub fn dynamics_derivatives(&self, t: f64, x: &[f64], u: &[f64]) -> Result<VectorDerivatives> {
        self.check_xu(x, u)?;
        let seeds = Jet::seed(&stack(x, u));
        let (xs, us) = seeds.split_at(self.n);
        let f = self.dynamics_jets(t, xs, us)?;
        Ok(vector_derivatives(&f, self.n + self.m))
    }

    pub fn running_cost_derivatives(
        &self,
        t: f64,
        x: &[f64],
        u: &[f64],
    ) -> Result<ScalarDerivatives> {
        self.check_xu(x, u)?;
        let seeds = Jet::seed(&stack(x, u));
        let (xs, us) = seeds.split_at(self.n);
        let l = self.functions.running_cost(t, xs, us);
        check_finite(t, "L", core::slice::from_ref(&l))?;
        Ok(scalar_derivatives(&l, self.n + self.m))
    }

    /// Both dynamics and running-cost derivatives from one seeded pass.
    pub fn pointwise_derivatives(
        &self,
        t: f64,
        x: &[f64],
        u: &[f64],
    ) -> Result<(VectorDerivatives, ScalarDerivatives)> {
        self.check_xu(x, u)?;
        let seeds = Jet::seed(&stack(x, u));
        let (xs, us) = seeds.split_at(self.n);
        let f = self.dynamics_jets(t, xs, us)?;
        let l = self.functions.running_cost(t, xs, us);
        check_finite(t, "L", core::slice::from_ref(&l))?;
        let dim = self.n + self.m;
        Ok((vector_derivatives(&f, dim), scalar_derivatives(&l, dim)))
    }

    pub fn eval_hamiltonian(
        &self,
        t: f64,
        x: &[f64],
        u: &[f64],
        p: &[f64],
    ) -> Result<HamiltonianEval> {
        self.check_xu(x, u)?;
        check_len("costate", self.n, p.len())?;
        let (n, m) = (self.n, self.m);
        let seeds = Jet::seed(&stack(x, u));
        let (xs, us) = seeds.split_at(n);
        let f = self.dynamics_jets(t, xs, us)?;
        let mut h = self.functions.running_cost(t, xs, us);
        check_finite(t, "L", core::slice::from_ref(&h))?;
        for (fi, &pi) in f.iter().zip(p) {
            if pi != 0.0 {
                h = h + pi * fi;
            }
        }
        check_finite(t, "H", core::slice::from_ref(&h))?;
        let grad = h.gradient_vector(n + m);
        let hess = h.hessian_matrix(n + m);
        let mut h_up = DMatrix::zeros(m, n);
        for (i, fi) in f.iter().enumerate() {
            let g = fi.gradient();
            for j in 0..m {
                h_up[(j, i)] = g[n + j];
            }
        }
        Ok(HamiltonianEval {
            h: h.value(),
            h_x: grad.rows(0, n).into_owned(),
            h_u: grad.rows(n, m).into_owned(),
            h_xx: hess.view((0, 0), (n, n)).into_owned(),
            h_uu: hess.view((n, n), (m, m)).into_owned(),
            h_ux: hess.view((n, 0), (m, n)).into_owned(),
            h_up,
        })
    }

    pub fn eval_endpoint_terms(
        &self,
        x0: &[f64],
        xt: &[f64],
        lambda: &[f64],
    ) -> Result<EndpointTerms> {
        let n = self.n;
        check_len("initial endpoint", n, x0.len())?;
        check_len("terminal endpoint", n, xt.len())?;
        check_len("boundary multiplier", self.n_b, lambda.len())?;
        let seeds = Jet::seed(&stack(x0, xt));
        let (a, b) = seeds.split_at(n);
        let k = self.functions.endpoint_cost(a, b);
        check_finite(self.horizon, "K", core::slice::from_ref(&k))?;
        let bvals = self.functions.boundary(a, b);
        check_len("boundary output", self.n_b, bvals.len())?;
        check_finite(self.horizon, "b", &bvals)?;

        let kd = scalar_derivatives(&k, 2 * n);
        let bd = vector_derivatives(&bvals, 2 * n);
        let mut lagrangian_hess = kd.hessian.clone();
        for (bh, &l) in bd.hessians.iter().zip(lambda) {
            lagrangian_hess += bh * l;
        }
        Ok(EndpointTerms {
            k: kd.value,
            k_x0: kd.gradient.rows(0, n).into_owned(),
            k_xt: kd.gradient.rows(n, n).into_owned(),
            k_hess: kd.hessian,
            b: bd.value,
            b_x0: bd.jacobian.columns(0, n).into_owned(),
            b_xt: bd.jacobian.columns(n, n).into_owned(),
            b_hess: bd.hessians,
            lagrangian_hess,
        })
    }

    /// Plain evaluation of the boundary map.
    pub fn eval_boundary(&self, x0: &[f64], xt: &[f64]) -> Result<Vec<f64>> {
        check_len("initial endpoint", self.n, x0.len())?;
        check_len("terminal endpoint", self.n, xt.len())?;
        let b = self
            .functions
            .boundary(&Jet::constants(x0), &Jet::constants(xt));
        check_len("boundary output", self.n_b, b.len())?;
        check_finite(self.horizon, "b", &b)?;
        Ok(b.iter().map(Jet::value).collect())
    }
}
