//! Second-order forward-mode automatic differentiation.
//!
//! A [`Jet`] carries a value together with its gradient and Hessian with
//! respect to a fixed set of seed directions. The Hessian is stored once as a
//! packed lower triangle. Jets created with an empty seed space behave as plain
//! scalars and reproduce `f64` arithmetic bitwise.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    value: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

#[inline]
fn tri_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

#[inline]
fn tri_index(i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    i * (i + 1) / 2 + j
}

impl Jet {
    /// A constant with no derivative part.
    pub fn constant(value: f64) -> Self {
        Jet {
            value,
            grad: Vec::new(),
            hess: Vec::new(),
        }
    }

    /// The seed variable `index` of a `dim`-dimensional seed basis.
    pub fn variable(value: f64, index: usize, dim: usize) -> Self {
        assert!(
            index < dim,
            "seed index {index} out of range for dimension {dim}"
        );
        let mut grad = vec![0.0; dim];
        grad[index] = 1.0;
        Jet {
            value,
            grad,
            hess: vec![0.0; tri_len(dim)],
        }
    }

    /// Seeds every entry of `point` as an independent variable.
    pub fn seed(point: &[f64]) -> Vec<Jet> {
        let dim = point.len();
        point
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet::variable(v, i, dim))
            .collect()
    }

    /// Wraps plain values as constants.
    pub fn constants(point: &[f64]) -> Vec<Jet> {
        point.iter().map(|&v| Jet::constant(v)).collect()
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.value
    }

    /// Number of seed directions (0 for a plain constant).
    #[inline]
    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn gradient(&self) -> &[f64] {
        &self.grad
    }

    /// `d^2 / (ds_i ds_j)`; zero for constants.
    pub fn hessian_entry(&self, i: usize, j: usize) -> f64 {
        if self.hess.is_empty() {
            0.0
        } else {
            self.hess[tri_index(i, j)]
        }
    }

    /// Dense gradient of length `dim` (zeros for constants).
    pub fn gradient_vector(&self, dim: usize) -> DVector<f64> {
        if self.grad.is_empty() {
            DVector::zeros(dim)
        } else {
            DVector::from_column_slice(&self.grad)
        }
    }

    /// Dense symmetric Hessian of size `dim`.
    pub fn hessian_matrix(&self, dim: usize) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(dim, dim);
        if self.hess.is_empty() {
            return h;
        }
        for i in 0..dim {
            for j in 0..=i {
                let v = self.hess[tri_index(i, j)];
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.hess.iter().all(|h| h.is_finite())
    }

    /// Applies a scalar function given its value and first two derivatives at
    /// `self.value`.
    fn chain(&self, value: f64, d1: f64, d2: f64) -> Jet {
        if self.grad.is_empty() {
            return Jet::constant(value);
        }
        let dim = self.grad.len();
        let grad: Vec<f64> = self.grad.iter().map(|g| d1 * g).collect();
        let mut hess = Vec::with_capacity(tri_len(dim));
        for i in 0..dim {
            for j in 0..=i {
                let k = tri_index(i, j);
                hess.push(d1 * self.hess[k] + d2 * self.grad[i] * self.grad[j]);
            }
        }
        Jet { value, grad, hess }
    }

    fn add_jet(&self, other: &Jet, sign: f64) -> Jet {
        let value = if sign > 0.0 {
            self.value + other.value
        } else {
            self.value - other.value
        };
        match (self.grad.is_empty(), other.grad.is_empty()) {
            (true, true) => Jet::constant(value),
            (false, true) => Jet {
                value,
                grad: self.grad.clone(),
                hess: self.hess.clone(),
            },
            (true, false) => Jet {
                value,
                grad: other.grad.iter().map(|g| sign * g).collect(),
                hess: other.hess.iter().map(|h| sign * h).collect(),
            },
            (false, false) => {
                debug_assert_eq!(self.grad.len(), other.grad.len());
                Jet {
                    value,
                    grad: self
                        .grad
                        .iter()
                        .zip(&other.grad)
                        .map(|(a, b)| a + sign * b)
                        .collect(),
                    hess: self
                        .hess
                        .iter()
                        .zip(&other.hess)
                        .map(|(a, b)| a + sign * b)
                        .collect(),
                }
            }
        }
    }

    fn mul_jet(&self, other: &Jet) -> Jet {
        let value = self.value * other.value;
        match (self.grad.is_empty(), other.grad.is_empty()) {
            (true, true) => Jet::constant(value),
            (false, true) => self.scale(other.value, value),
            (true, false) => other.scale(self.value, value),
            (false, false) => {
                let dim = self.grad.len();
                debug_assert_eq!(dim, other.grad.len());
                let (a, b) = (self.value, other.value);
                let grad = self
                    .grad
                    .iter()
                    .zip(&other.grad)
                    .map(|(ga, gb)| b * ga + a * gb)
                    .collect();
                let mut hess = Vec::with_capacity(tri_len(dim));
                for i in 0..dim {
                    for j in 0..=i {
                        let k = tri_index(i, j);
                        hess.push(
                            b * self.hess[k]
                                + a * other.hess[k]
                                + self.grad[i] * other.grad[j]
                                + other.grad[i] * self.grad[j],
                        );
                    }
                }
                Jet { value, grad, hess }
            }
        }
    }

    fn scale(&self, factor: f64, value: f64) -> Jet {
        Jet {
            value,
            grad: self.grad.iter().map(|g| factor * g).collect(),
            hess: self.hess.iter().map(|h| factor * h).collect(),
        }
    }

    pub fn recip(&self) -> Jet {
        let v = self.value;
        let r = 1.0 / v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = (libm::sin(self.value), libm::cos(self.value));
        self.chain(s, c, -s)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = (libm::sin(self.value), libm::cos(self.value));
        self.chain(c, -s, -c)
    }

    pub fn exp(&self) -> Jet {
        let e = libm::exp(self.value);
        self.chain(e, e, e)
    }

    pub fn ln(&self) -> Jet {
        let v = self.value;
        self.chain(libm::log(v), 1.0 / v, -1.0 / (v * v))
    }

    pub fn sqrt(&self) -> Jet {
        let s = libm::sqrt(self.value);
        self.chain(s, 0.5 / s, -0.25 / (s * self.value))
    }

    pub fn powi(&self, n: i32) -> Jet {
        let v = self.value;
        let nf = n as f64;
        let value = libm::pow(v, nf);
        let d1 = nf * libm::pow(v, nf - 1.0);
        let d2 = nf * (nf - 1.0) * libm::pow(v, nf - 2.0);
        self.chain(value, d1, d2)
    }

    pub fn square(&self) -> Jet {
        self.mul_jet(self)
    }
}

impl From<f64> for Jet {
    fn from(v: f64) -> Self {
        Jet::constant(v)
    }
}

/// Sum of jets; empty input gives the constant zero.
pub fn sum<'a, I: IntoIterator<Item = &'a Jet>>(terms: I) -> Jet {
    terms
        .into_iter()
        .fold(Jet::constant(0.0), |acc, t| acc.add_jet(t, 1.0))
}

/// Weighted quadratic form `0.5 * sum_i w_i (a_i - c_i)^2`.
pub fn half_weighted_square(a: &[Jet], center: &[f64], weights: &[f64]) -> Jet {
    let mut acc = Jet::constant(0.0);
    for ((ai, &ci), &wi) in a.iter().zip(center).zip(weights) {
        let d = ai - ci;
        acc = acc + (0.5 * wi) * d.square();
    }
    acc
}

macro_rules! binary_ops {
    ($trait:ident, $method:ident, $body:expr) => {
        impl $trait<Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(&self, &rhs)
            }
        }
        impl<'a> $trait<&'a Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &'a Jet) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(&self, rhs)
            }
        }
        impl<'a> $trait<Jet> for &'a Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(self, &rhs)
            }
        }
        impl<'a, 'b> $trait<&'b Jet> for &'a Jet {
            type Output = Jet;
            fn $method(self, rhs: &'b Jet) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(self, rhs)
            }
        }
        impl $trait<f64> for Jet {
            type Output = Jet;
            fn $method(self, rhs: f64) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(&self, &Jet::constant(rhs))
            }
        }
        impl<'a> $trait<f64> for &'a Jet {
            type Output = Jet;
            fn $method(self, rhs: f64) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(self, &Jet::constant(rhs))
            }
        }
        impl $trait<Jet> for f64 {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(&Jet::constant(self), &rhs)
            }
        }
        impl<'a> $trait<&'a Jet> for f64 {
            type Output = Jet;
            fn $method(self, rhs: &'a Jet) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(&Jet::constant(self), rhs)
            }
        }
    };
}

binary_ops!(Add, add, |a, b| a.add_jet(b, 1.0));
binary_ops!(Sub, sub, |a, b| a.add_jet(b, -1.0));
binary_ops!(Mul, mul, |a, b| a.mul_jet(b));
binary_ops!(Div, div, |a, b| {
    if b.grad.is_empty() {
        let value = a.value / b.value;
        if a.grad.is_empty() {
            Jet::constant(value)
        } else {
            a.scale(1.0 / b.value, value)
        }
    } else {
        let q = a.mul_jet(&b.recip());
        Jet {
            value: a.value / b.value,
            ..q
        }
    }
});

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        let value = -self.value;
        self.scale(-1.0, value)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0, -self.value)
    }
}
