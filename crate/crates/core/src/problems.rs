//! Registry of built-in benchmark problems.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::ad::{half_weighted_square, Jet};
use crate::error::{Error, Result};
use crate::model::{OcpFunctions, OcpProblem, TerminalTarget};

/// Planar rigid-body quadrotor, state `[y, z, θ, v_y, v_z, ω]`, thrusts `[u1, u2]`.
#[derive(Debug, Clone)]
pub struct PlanarQuadrotor {
    pub mass: f64,
    pub gravity: f64,
    pub arm: f64,
    pub inertia: f64,
    pub state_weight: [f64; 6],
    pub control_weight: [f64; 2],
    pub terminal_weight: f64,
    pub target: [f64; 6],
}

impl Default for PlanarQuadrotor {
    fn default() -> Self {
        PlanarQuadrotor {
            mass: 1.0,
            gravity: 9.81,
            arm: 0.3,
            inertia: 0.2,
            state_weight: [1.0, 1.0, 0.1, 0.1, 0.1, 0.1],
            control_weight: [0.01, 0.01],
            terminal_weight: 100.0,
            target: [1.0, 0.5, 0.0, 0.0, 0.0, 0.0],
        }
    }
}

impl OcpFunctions for PlanarQuadrotor {
    fn dynamics(&self, _t: f64, x: &[Jet], u: &[Jet]) -> Vec<Jet> {
        let thrust = (&u[0] + &u[1]) / self.mass;
        vec![
            x[3].clone(),
            x[4].clone(),
            x[5].clone(),
            -(&thrust * x[2].sin()),
            &thrust * x[2].cos() - self.gravity,
            (self.arm / self.inertia) * (&u[0] - &u[1]),
        ]
    }

    fn running_cost(&self, _t: f64, x: &[Jet], u: &[Jet]) -> Jet {
        // x_ref ≡ 0
        half_weighted_square(x, &[0.0; 6], &self.state_weight)
            + half_weighted_square(u, &[0.0; 2], &self.control_weight)
    }

    fn endpoint_cost(&self, _x0: &[Jet], xt: &[Jet]) -> Jet {
        half_weighted_square(xt, &self.target, &[self.terminal_weight; 6])
    }
}

/// `min ½∫(xᵀx + u²) + ½|x(T)|²` subject to `ẍ = u` on `[0, 1]`, `x(0) = (1, 0)`.
#[derive(Debug, Clone, Default)]
pub struct DoubleIntegratorLq;

impl OcpFunctions for DoubleIntegratorLq {
    fn dynamics(&self, _t: f64, x: &[Jet], u: &[Jet]) -> Vec<Jet> {
        vec![x[1].clone(), u[0].clone()]
    }

    fn running_cost(&self, _t: f64, x: &[Jet], u: &[Jet]) -> Jet {
        half_weighted_square(x, &[0.0, 0.0], &[1.0, 1.0]) + 0.5 * u[0].square()
    }

    fn endpoint_cost(&self, _x0: &[Jet], xt: &[Jet]) -> Jet {
        half_weighted_square(xt, &[0.0, 0.0], &[1.0, 1.0])
    }
}

/// Scalar fast-decay regulator `ẋ = -a x + u`, a boundary-layer test case for
/// mesh refinement.
#[derive(Debug, Clone)]
pub struct StiffLq {
    pub decay: f64,
}

impl Default for StiffLq {
    fn default() -> Self {
        StiffLq { decay: 50.0 }
    }
}

impl OcpFunctions for StiffLq {
    fn dynamics(&self, _t: f64, x: &[Jet], u: &[Jet]) -> Vec<Jet> {
        vec![-self.decay * &x[0] + &u[0]]
    }

    fn running_cost(&self, _t: f64, x: &[Jet], u: &[Jet]) -> Jet {
        0.5 * (x[0].square() + u[0].square())
    }

    fn endpoint_cost(&self, _x0: &[Jet], xt: &[Jet]) -> Jet {
        0.5 * xt[0].square()
    }
}

pub const STIFF_LQ_HORIZON: f64 = 0.1;

/// Names accepted by [`builtin_problem`], sorted.
pub fn builtin_names() -> Vec<&'static str> {
    let mut names = vec!["double-integrator-lq", "quadrotor", "stiff-lq"];
    names.sort_unstable();
    names
}

pub fn builtin_problem(name: &str) -> Result<OcpProblem> {
    match name {
        "quadrotor" => {
            let q = PlanarQuadrotor::default();
            let hover = 0.5 * q.mass * q.gravity;
            let target = TerminalTarget {
                state: q.target.to_vec(),
                weight: vec![q.terminal_weight; 6],
            };
            OcpProblem::new("quadrotor", 6, 2, 0, 2.0, Arc::new(q))?
                .with_initial_state(vec![-1.0, 0.0, 0.0, 0.0, 0.0, 0.0])?
                .with_terminal_target(target)?
                .with_nominal_control(vec![hover, hover])
        }
        "double-integrator-lq" => OcpProblem::new(
            "double-integrator-lq",
            2,
            1,
            0,
            1.0,
            Arc::new(DoubleIntegratorLq),
        )?
        .with_initial_state(vec![1.0, 0.0]),
        "stiff-lq" => OcpProblem::new(
            "stiff-lq",
            1,
            1,
            0,
            STIFF_LQ_HORIZON,
            Arc::new(StiffLq::default()),
        )?
        .with_initial_state(vec![1.0]),
        other => Err(Error::UnknownProblem {
            name: String::from(other),
            available: builtin_names().join(", "),
        }),
    }
}
