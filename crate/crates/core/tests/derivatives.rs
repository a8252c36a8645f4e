//! Exact derivatives of every builtin against central finite differences of
//! plain function values.

mod oracles;

use oracles::{derivative_errors, gradient_fd, random_point, rel_err};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use ssoc_core::problems::{builtin_names, builtin_problem};

const GRAD_TOL: f64 = 1e-6;
const HESS_TOL: f64 = 1e-4;

#[test]
fn builtin_derivatives_match_finite_differences() {
    for (i, name) in builtin_names().into_iter().enumerate() {
        let worst = derivative_errors(name, 11 + i as u64);
        assert!(
            worst.grad <= GRAD_TOL,
            "{name}: gradient rel. err {:e}",
            worst.grad
        );
        assert!(
            worst.hess <= HESS_TOL,
            "{name}: Hessian rel. err {:e}",
            worst.hess
        );
    }
}

#[test]
fn hamiltonian_blocks_are_consistent_with_f_and_l() {
    let prob = builtin_problem("quadrotor").unwrap();
    let mut rng = StdRng::seed_from_u64(5);
    for _ in 0..20 {
        let (t, x, u) = random_point(&mut rng, &prob);
        let p: Vec<f64> = (0..prob.n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let h = prob.eval_hamiltonian(t, &x, &u, &p).unwrap();
        let hval = |w: &[f64]| {
            let f = prob.eval_dynamics(t, &w[..6], &w[6..]).unwrap();
            prob.eval_running_cost(t, &w[..6], &w[6..]).unwrap()
                + f.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut z = x.clone();
        z.extend_from_slice(&u);
        let g = gradient_fd(&hval, &z);
        let exact = h.h_x.iter().chain(h.h_u.iter());
        for (e, fd) in exact.zip(&g) {
            assert!(rel_err(*e, *fd) <= GRAD_TOL);
        }
        let fd = prob.dynamics_derivatives(t, &x, &u).unwrap();
        for j in 0..2 {
            for i in 0..6 {
                assert_eq!(h.h_up[(j, i)], fd.jacobian[(i, 6 + j)]);
            }
        }
    }
}
