use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ssoc_core::certify::Injections;
use ssoc_core::constants::{ConstantsOptions, TubeSpec};
use ssoc_core::pipeline::PipelineOptions;
use ssoc_core::refine::RefinePolicy;
use ssoc_core::solver::SolverOptions;
use ssoc_core::{Scheme, SchemeKind};

#[derive(Debug, Parser)]
#[command(
    name = "ssoc-certify",
    version,
    about = "Solve direct-collocation optimal control problems and certify second-order sufficiency"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List builtin problems and collocation schemes.
    List,
    /// Solve once on a uniform mesh and write the certificate.
    Certify {
        /// Number of uniform mesh intervals.
        #[arg(long, value_name = "N")]
        n: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Certify on several uniform meshes and write a convergence table.
    Sweep {
        /// Comma-separated ascending interval counts.
        #[arg(
            long,
            value_name = "N,...",
            value_delimiter = ',',
            default_value = "10,15,20,25,30,35"
        )]
        n: Vec<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Certify, bisecting the worst intervals after each rejection.
    Refine {
        /// Number of uniform mesh intervals.
        #[arg(long, value_name = "N")]
        n: usize,
        /// Fraction of intervals bisected per round.
        #[arg(long, default_value_t = 0.3)]
        fraction: f64,
        /// Refinement rounds after the initial certification.
        #[arg(long, default_value_t = 8)]
        max_rounds: usize,
        /// Interval budget of the refined mesh.
        #[arg(long, default_value_t = 400)]
        max_intervals: usize,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Trapezoidal,
    HermiteSimpson,
}

impl From<SchemeArg> for SchemeKind {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Trapezoidal => SchemeKind::Trapezoidal,
            SchemeArg::HermiteSimpson => SchemeKind::HermiteSimpson,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Builtin problem name (see `list`).
    #[arg(long)]
    pub problem: String,
    #[arg(long, value_enum, default_value = "hermite-simpson")]
    pub scheme: SchemeArg,
    /// KKT tolerance of the SQP solve.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Tube radius around the reconstructed state.
    #[arg(long, default_value_t = 0.1)]
    pub tube_dx: f64,
    /// Tube radius around the reconstructed control.
    #[arg(long, default_value_t = 0.1)]
    pub tube_du: f64,
    /// Tube radius around the reconstructed costate.
    #[arg(long, default_value_t = 0.1)]
    pub tube_dp: f64,
    /// Gauss-Legendre points per quadrature piece.
    #[arg(long, default_value_t = ssoc_core::residuals::DEFAULT_QUAD_POINTS)]
    pub quad_points: usize,
    /// Directory receiving the output files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Use the benchmark's reported constants instead of estimated ones.
    #[arg(long = "paper-constants")]
    pub reported_constants: bool,
    /// Recorded in the certificate provenance; every stage is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Multiplier on sampled Lipschitz constants (at least 1).
    #[arg(long, default_value_t = 1.5)]
    pub safety_factor: f64,
    /// Norm of the lifting operator in the geometric constant.
    #[arg(long, default_value_t = 1.0)]
    pub lifting_norm: f64,
    /// Prefactor `c` of the state/costate closeness constant.
    #[arg(long, default_value_t = 1.0)]
    pub closeness_constant: f64,
    /// Replace the measured L2 residual before the acceptance test.
    #[arg(long, value_name = "E")]
    pub inject_e_n2: Option<f64>,
    /// Replace the measured sup residual before the proximity check.
    #[arg(long, value_name = "E")]
    pub inject_e_inf: Option<f64>,
    /// Replace the measured discrete curvature.
    #[arg(long, value_name = "ALPHA", allow_negative_numbers = true)]
    pub inject_alpha_hat: Option<f64>,
    /// Add eps*sin(pi t/T) to every control before certification.
    #[arg(long, value_name = "EPS", allow_negative_numbers = true)]
    pub perturb_controls: Option<f64>,
}

impl RunArgs {
    pub fn validate(&self) -> Result<(), String> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err("--tol must be positive".into());
        }
        for (flag, v) in [
            ("--tube-dx", self.tube_dx),
            ("--tube-du", self.tube_du),
            ("--tube-dp", self.tube_dp),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{flag} must be positive"));
            }
        }
        if self.quad_points < 3 {
            return Err("--quad-points must be at least 3".into());
        }
        if !(self.safety_factor >= 1.0 && self.safety_factor.is_finite()) {
            return Err("--safety-factor must be at least 1".into());
        }
        for (flag, v) in [
            ("--lifting-norm", self.lifting_norm),
            ("--closeness-constant", self.closeness_constant),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{flag} must be positive"));
            }
        }
        for (flag, v) in [
            ("--inject-e-n2", self.inject_e_n2),
            ("--inject-e-inf", self.inject_e_inf),
            ("--inject-alpha-hat", self.inject_alpha_hat),
            ("--perturb-controls", self.perturb_controls),
        ] {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(format!("{flag} must be finite"));
            }
        }
        for (flag, v) in [
            ("--inject-e-n2", self.inject_e_n2),
            ("--inject-e-inf", self.inject_e_inf),
        ] {
            if v.is_some_and(|v| v < 0.0) {
                return Err(format!("{flag} must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            scheme: Scheme::from_kind(self.scheme.into()),
            quad_points: self.quad_points,
            tube: TubeSpec {
                dx: self.tube_dx,
                du: self.tube_du,
                dp: self.tube_dp,
                ..TubeSpec::default()
            },
            constants: ConstantsOptions {
                safety_factor: self.safety_factor,
                lifting_norm: self.lifting_norm,
                closeness_constant: self.closeness_constant,
                ..ConstantsOptions::default()
            },
            solver: SolverOptions {
                kkt_tolerance: self.tol,
                ..SolverOptions::default()
            },
            reported_constants: self.reported_constants,
            injections: Injections {
                e_n2: self.inject_e_n2,
                e_inf: self.inject_e_inf,
                alpha_hat: self.inject_alpha_hat,
                control_perturbation: self.perturb_controls,
            },
            seed: self.seed,
        }
    }
}

pub fn refine_policy(fraction: f64, max_rounds: usize, max_intervals: usize) -> RefinePolicy {
    RefinePolicy {
        fraction,
        max_rounds,
        max_intervals,
    }
}
