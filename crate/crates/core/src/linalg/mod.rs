//! Dense linear-algebra kernel.
//!
//! Matrices are `nalgebra::DMatrix<f64>`; every routine here is a pure
//! function of its inputs. Factorizations are backed by `nalgebra`, with
//! the eigenvalue ordering and sign conventions added on top.

mod schur;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{shape, Error, Result};
use crate::stiefel::{StiefelPoint, ORTHO_TOL};

pub use schur::{eig_ordered, OrderedSpectrum};

/// The universal real matrix carrier.
pub type DenseMatrix = DMatrix<f64>;

/// Largest dimension accepted by the dense oracles.
pub const DENSE_LIMIT: usize = 2000;

/// Relative rank threshold used by [`qr_orthonormalize`].
pub const RANK_TOL: f64 = 1e-12;

pub(crate) fn check_dense_limit(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        Err(Error::DimensionTooLarge {
            n,
            limit: DENSE_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Builds a matrix from row-major data, rejecting bad lengths and non-finite entries.
pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<DenseMatrix> {
    if data.len() != rows * cols {
        return Err(shape(
            "from_row_major",
            format!("{} values for a {rows}x{cols} matrix", data.len()),
        ));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

/// Row-major copy of the entries.
pub fn to_row_major(m: &DenseMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Full `m x m` orthogonal factor of a tall `m x k` matrix (first `k` columns span it).
pub(crate) fn qr_full_q(y: &DMatrix<f64>) -> DMatrix<f64> {
    let m = y.nrows();
    let mut aug = DMatrix::<f64>::zeros(m, y.ncols() + m);
    aug.columns_mut(0, y.ncols()).copy_from(y);
    aug.columns_mut(y.ncols(), m).fill_with_identity();
    aug.qr().q()
}

/// Orthonormal basis of `span(M)` with `diag(R) >= 0`.
pub fn qr_orthonormalize(m: &DenseMatrix) -> Result<StiefelPoint> {
    let (n, r) = m.shape();
    if r > n {
        return Err(shape("qr_orthonormalize", format!("{n}x{r} has more columns than rows")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if r == 0 {
        return Ok(StiefelPoint::new(DMatrix::zeros(n, 0)));
    }
    let sv = m.clone().singular_values();
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    if !(sigma_max > 0.0) || sigma_min <= RANK_TOL * sigma_max {
        return Err(Error::RankDeficient { sigma_min, sigma_max });
    }
    let qr = m.clone().qr();
    let rr = qr.r();
    let mut q = qr.q();
    for j in 0..r {
        if rr[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(StiefelPoint::new(q))
}

/// Orthonormal basis of the orthogonal complement of `span(U)`.
pub fn orthonormal_complement(u: &StiefelPoint) -> Result<StiefelPoint> {
    u.ensure_certified(ORTHO_TOL)?;
    let (n, r) = (u.n(), u.r());
    if r == n {
        return Ok(StiefelPoint::new(DMatrix::zeros(n, 0)));
    }
    let um = u.matrix();
    let q = qr_full_q(um);
    let mut x = q.columns(r, n - r).into_owned();
    // One reorthogonalization pass against U.
    x -= um * (um.transpose() * &x);
    let mut comp = x.qr().q();
    let rr = comp.transpose() * um;
    if rr.norm() > 1e-12 {
        comp -= um * (um.transpose() * &comp);
        comp = comp.qr().q();
    }
    Ok(StiefelPoint::new(comp))
}

/// `exp(M t)` by scaling and squaring with a Pade core.
pub fn matrix_exponential(m: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    if !m.is_square() {
        return Err(shape("matrix_exponential", "matrix is not square"));
    }
    check_dense_limit(m.nrows())?;
    let mt = m * t;
    if mt.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow);
    }
    if m.nrows() == 0 {
        return Ok(mt);
    }
    let e = mt.exp();
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow);
    }
    Ok(e)
}

/// `max_i Re(lambda_i(M))`.
pub fn spectral_abscissa(m: &DenseMatrix) -> Result<f64> {
    let spec = eig_ordered(m)?;
    spec.eigenvalues
        .first()
        .map(|l| l.re)
        .ok_or_else(|| Error::InvalidArgument("empty matrix has no spectral abscissa".into()))
}

/// Thin SVD with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: StiefelPoint,
    pub sigma: Vec<f64>,
    pub v: StiefelPoint,
}

impl Svd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let s = DMatrix::from_diagonal(&DVector::from_vec(self.sigma.clone()));
        self.u.matrix() * s * self.v.matrix().transpose()
    }
}

pub fn svd_small(m: &DenseMatrix) -> Result<Svd> {
    check_dense_limit(m.nrows().max(m.ncols()))?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let svd = nalgebra::SVD::try_new(m.clone(), true, true, f64::EPSILON, 0)
        .ok_or(Error::NoConvergence("singular value decomposition"))?;
    let u = svd.u.ok_or(Error::NoConvergence("SVD left vectors"))?;
    let vt = svd.v_t.ok_or(Error::NoConvergence("SVD right vectors"))?;
    Ok(Svd {
        u: StiefelPoint::new(u),
        sigma: svd.singular_values.iter().copied().collect(),
        v: StiefelPoint::new(vt.transpose()),
    })
}

/// `(A + A^T) / 2`.
pub fn symmetric_part(a: &DenseMatrix) -> DenseMatrix {
    (a + a.transpose()) * 0.5
}

/// Greedy nearest-neighbour matching between two eigenvalue lists; returns
/// the largest matched distance, or infinity if the lengths differ.
pub fn spectrum_match_error(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in a {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (j, y) in b.iter().enumerate() {
            if !used[j] {
                let d = (x - y).norm();
                if d < best_d {
                    best_d = d;
                    best = Some(j);
                }
            }
        }
        if let Some(j) = best {
            used[j] = true;
            worst = worst.max(best_d);
        }
    }
    worst
}

/// Removes from `whole` the entries nearest to each of `part`, returning the rest.
pub fn spectrum_difference(whole: &[Complex64], part: &[Complex64]) -> Vec<Complex64> {
    let mut used = vec![false; whole.len()];
    for x in part {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (j, y) in whole.iter().enumerate() {
            if !used[j] && (x - y).norm() < best_d {
                best_d = (x - y).norm();
                best = Some(j);
            }
        }
        if let Some(j) = best {
            used[j] = true;
        }
    }
    whole
        .iter()
        .zip(used)
        .filter(|(_, u)| !u)
        .map(|(l, _)| *l)
        .collect()
}
