//! Dense and banded linear-algebra kernels.
//!
//! Eigenvalues and singular values are delegated to `nalgebra`; the null-space
//! basis and the banded saddle factorization are implemented here.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

const SYMMETRY_TOL: f64 = 1e-10;

fn max_abs(a: &DenseMatrix) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn check_finite(a: &DenseMatrix, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Contract(format!("{what} has non-finite entries")))
    }
}

pub fn is_symmetric(a: &DenseMatrix, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = max_abs(a).max(1.0);
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// All eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    check_finite(a, "matrix")?;
    if !is_symmetric(a, SYMMETRY_TOL) {
        return Err(Error::Contract("matrix is not symmetric".into()));
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    // symmetrize away representation noise below the tolerance
    let sym = (a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

pub fn sym_eig_min(a: &DenseMatrix) -> Result<f64> {
    let ev = sym_eigenvalues(a)?;
    ev.first()
        .copied()
        .ok_or_else(|| Error::Contract("empty matrix has no eigenvalues".into()))
}

/// Smallest singular value. Symmetric input takes the cheaper eigenvalue path.
pub fn sigma_min(a: &DenseMatrix) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    if is_symmetric(a, 1e-13) {
        if let Ok(ev) = sym_eigenvalues(a) {
            return ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        }
    }
    let sv = a.clone().singular_values();
    sv.iter().fold(f64::INFINITY, |m, v| m.min(*v))
}

/// Largest singular value (spectral norm).
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    if is_symmetric(a, 1e-13) {
        if let Ok(ev) = sym_eigenvalues(a) {
            return ev.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        }
    }
    a.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |m, v| m.max(*v))
}

/// Fails with a constraint-qualification error unless `σ_min(JJᵀ)` exceeds
/// `1e-10` times its largest eigenvalue.
pub fn check_full_row_rank(j: &DenseMatrix) -> Result<()> {
    check_finite(j, "constraint Jacobian")?;
    let (nc, nz) = j.shape();
    if nc > nz {
        return Err(Error::ConstraintQualification {
            sigma_min: 0.0,
            scale: max_abs(j),
        });
    }
    if nc > 0 {
        let jjt = j * j.transpose();
        let ev = sym_eigenvalues(&jjt)?;
        let scale = ev.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        let smallest = ev[0];
        if !(smallest > 1e-10 * scale) {
            return Err(Error::ConstraintQualification {
                sigma_min: smallest,
                scale,
            });
        }
    }
    Ok(())
}

/// Orthonormal basis of `ker J` for a full-row-rank `J` (`n_c × n_z`),
/// built from a full Householder QR of `Jᵀ`.
pub fn nullspace_basis(j: &DenseMatrix) -> Result<DenseMatrix> {
    check_full_row_rank(j)?;
    let (nc, nz) = j.shape();

    // Householder reflectors of Jᵀ (nz × nc)
    let mut a = j.transpose();
    let mut reflectors: Vec<(DVector<f64>, f64)> = Vec::with_capacity(nc);
    for k in 0..nc {
        let x = a.view((k, k), (nz - k, 1)).clone_owned();
        let alpha = x.norm();
        let mut v = DVector::from_column_slice(x.as_slice());
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vnorm2 = v.norm_squared();
        let beta = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
        if beta != 0.0 {
            for c in k..nc {
                let mut col =
                    a.generic_view_mut((k, c), (nalgebra::Dyn(nz - k), nalgebra::Const::<1>));
                let dot = v.dot(&col);
                col.axpy(-beta * dot, &v, 1.0);
            }
        }
        reflectors.push((v, beta));
    }

    // Q = H_0 H_1 … H_{nc-1}; the trailing nz-nc columns of Q span ker J.
    let dim = nz - nc;
    let mut z = DMatrix::zeros(nz, dim);
    for c in 0..dim {
        z[(nc + c, c)] = 1.0;
    }
    for (k, (v, beta)) in reflectors.iter().enumerate().rev() {
        if *beta == 0.0 {
            continue;
        }
        for c in 0..dim {
            let mut col = z.generic_view_mut((k, c), (nalgebra::Dyn(nz - k), nalgebra::Const::<1>));
            let dot = v.dot(&col);
            col.axpy(-beta * dot, v, 1.0);
        }
    }
    Ok(z)
}

/// Lower Cholesky factor of an SPD matrix, `None` when not positive definite.
pub fn cholesky_lower(a: &DenseMatrix) -> Option<DenseMatrix> {
    let sym = (a + a.transpose()) * 0.5;
    sym.cholesky().map(|c| c.l())
}

/// Square sparse matrix builder with deterministic (row, col) ordering.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl SparseMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        SparseMatrix {
            nrows,
            ncols,
            entries: BTreeMap::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Accumulates `value` into `(row, col)`.
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if value != 0.0 {
            *self.entries.entry((row, col)).or_insert(0.0) += value;
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries.get(&(row, col)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(r, c), &v)| (r, c, v))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (&(r, c), &v) in &self.entries {
            d[(r, c)] = v;
        }
        d
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for (&(r, c), &v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for (&(r, c), &v) in &self.entries {
            y[c] += v * x[r];
        }
        y
    }
}

/// LU factorization with partial pivoting of a banded matrix. Rows are stored
/// in windows `[i - kl, i + kl + ku]` to hold the pivoting fill.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    rows: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        // j in [i - kl, i + kl + ku]
        i * self.width + (j + self.kl - i)
    }

    /// Factors the `n × n` matrix given as entries `(i, j, v)` with
    /// `j + kl >= i` and `i + ku >= j`. Returns `None` on a tiny pivot.
    pub fn factor(
        n: usize,
        kl: usize,
        ku: usize,
        entries: impl Iterator<Item = (usize, usize, f64)>,
        pivot_tol: f64,
    ) -> Option<Self> {
        let width = 2 * kl + ku + 1;
        let mut lu = BandedLu {
            n,
            kl,
            ku,
            width,
            rows: vec![0.0; n * width],
            pivots: vec![0; n],
        };
        for (i, j, v) in entries {
            assert!(j + kl >= i && i + ku >= j, "entry ({i}, {j}) outside band");
            let s = lu.slot(i, j);
            lu.rows[s] += v;
        }
        let reach = kl + ku;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.rows[lu.slot(k, k)].abs();
            for i in (k + 1)..=last {
                let v = lu.rows[lu.slot(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > pivot_tol) {
                return None;
            }
            lu.pivots[k] = p;
            let hi = (k + reach).min(n - 1);
            if p != k {
                for j in k..=hi {
                    let (a, b) = (lu.slot(k, j), lu.slot(p, j));
                    lu.rows.swap(a, b);
                }
            }
            let pivot = lu.rows[lu.slot(k, k)];
            for i in (k + 1)..=last {
                let sik = lu.slot(i, k);
                let factor = lu.rows[sik] / pivot;
                lu.rows[sik] = factor;
                if factor != 0.0 {
                    for j in (k + 1)..=hi {
                        let skj = lu.slot(k, j);
                        let sij = lu.slot(i, j);
                        lu.rows[sij] -= factor * lu.rows[skj];
                    }
                }
            }
        }
        Some(lu)
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = rhs.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let last = (k + self.kl).min(n.saturating_sub(1));
            let xk = x[k];
            if xk != 0.0 {
                for i in (k + 1)..=last {
                    x[i] -= self.rows[self.slot(i, k)] * xk;
                }
            }
        }
        let reach = self.kl + self.ku;
        for i in (0..n).rev() {
            let hi = (i + reach).min(n - 1);
            let mut s = x[i];
            for j in (i + 1)..=hi {
                s -= self.rows[self.slot(i, j)] * x[j];
            }
            x[i] = s / self.rows[self.slot(i, i)];
        }
        x
    }
}

/// Factorization of the saddle-point matrix `[[W + δI, Jᵀ], [J, 0]]`.
///
/// Unknowns are reordered by a caller-supplied key (time position for the
/// collocation NLP) so that the matrix becomes banded; when the resulting
/// bandwidth is too large a dense LU is used instead.
#[derive(Debug, Clone)]
pub struct SaddleFactorization {
    perm: Vec<usize>,
    inner: SaddleInner,
}

#[derive(Debug, Clone)]
enum SaddleInner {
    Banded(BandedLu),
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SaddleFactorization {
    /// `keys` has one ordering key per unknown (`n_z + n_c`). Returns `None`
    /// when the matrix is numerically singular.
    pub fn new(w: &SparseMatrix, j: &SparseMatrix, delta: f64, keys: &[f64]) -> Option<Self> {
        let nz = w.nrows();
        let nc = j.nrows();
        let dim = nz + nc;
        assert_eq!(keys.len(), dim);

        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(w.nnz() + 2 * j.nnz() + nz);
        for (r, c, v) in w.iter() {
            entries.push((r, c, v));
        }
        for i in 0..nz {
            if delta != 0.0 {
                entries.push((i, i, delta));
            }
        }
        for (r, c, v) in j.iter() {
            entries.push((nz + r, c, v));
            entries.push((c, nz + r, v));
        }
        let scale = entries
            .iter()
            .fold(0.0_f64, |m, e| m.max(e.2.abs()))
            .max(1.0);
        let pivot_tol = 1e-14 * scale;

        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
        let mut position = vec![0; dim];
        for (pos, &orig) in order.iter().enumerate() {
            position[orig] = pos;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for e in entries.iter_mut() {
            let (r, c) = (position[e.0], position[e.1]);
            e.0 = r;
            e.1 = c;
            if r > c {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }

        let inner = if dim > 64 && 4 * (kl + ku) < dim {
            SaddleInner::Banded(BandedLu::factor(
                dim,
                kl,
                ku,
                entries.into_iter(),
                pivot_tol,
            )?)
        } else {
            let mut a = DMatrix::zeros(dim, dim);
            for (r, c, v) in entries {
                a[(r, c)] += v;
            }
            let lu = a.lu();
            let u = lu.u();
            if u.diagonal().iter().any(|d: &f64| !(d.abs() > pivot_tol)) {
                return None;
            }
            SaddleInner::Dense(lu)
        };
        Some(SaddleFactorization {
            perm: position,
            inner,
        })
    }

    /// Solves for the original-order right-hand side.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let dim = rhs.len();
        let mut b = vec![0.0; dim];
        for (orig, &pos) in self.perm.iter().enumerate() {
            b[pos] = rhs[orig];
        }
        let y = match &self.inner {
            SaddleInner::Banded(lu) => lu.solve(&b),
            SaddleInner::Dense(lu) => {
                let v = DVector::from_vec(b);
                lu.solve(&v)
                    .map(|s| s.as_slice().to_vec())
                    .unwrap_or_else(|| vec![f64::NAN; dim])
            }
        };
        let mut x = vec![0.0; dim];
        for (orig, &pos) in self.perm.iter().enumerate() {
            x[orig] = y[pos];
        }
        x
    }

    pub fn is_banded(&self) -> bool {
        matches!(self.inner, SaddleInner::Banded(_))
    }
}
