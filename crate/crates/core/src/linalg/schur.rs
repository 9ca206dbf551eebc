//! Real Schur form reordered so that eigenvalues appear by descending real part.
//!
//! The unordered form comes from `nalgebra`; reordering swaps adjacent
//! diagonal blocks (1x1 or 2x2) by solving the small Sylvester equation
//! `T11 X - X T22 = -T12` and applying an orthogonal basis of `[X; I]`.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{check_dense_limit, qr_full_q};
use crate::error::{Error, Result};

/// Eigenvalues with equal real parts (to this relative tolerance) are treated as ties.
const TIE_TOL: f64 = 1e-12;

/// Eigenvalues sorted by descending real part with an orthonormal real Schur basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderedSpectrum {
    pub eigenvalues: Vec<Complex64>,
    /// Diagonal block sizes of the quasi-triangular form, in order (1 or 2).
    pub blocks: Vec<usize>,
    pub basis: DMatrix<f64>,
    pub schur_form: DMatrix<f64>,
}

impl OrderedSpectrum {
    /// True when a cut after the first `k` eigenvalues falls inside a 2x2 block.
    pub fn splits_block_at(&self, k: usize) -> bool {
        let mut pos = 0;
        for &b in &self.blocks {
            if pos < k && k < pos + b {
                return true;
            }
            pos += b;
            if pos >= k {
                break;
            }
        }
        false
    }

    /// Leading `k` Schur vectors: an orthonormal basis of the `k`-dominant invariant subspace.
    pub fn leading_basis(&self, k: usize) -> Result<DMatrix<f64>> {
        if k > self.basis.ncols() {
            return Err(Error::InvalidArgument(format!(
                "cut {k} exceeds dimension {}",
                self.basis.ncols()
            )));
        }
        if self.splits_block_at(k) {
            return Err(Error::ConjugatePairSplit { cut: k });
        }
        Ok(self.basis.columns(0, k).into_owned())
    }

    /// `Re(lambda_k) - Re(lambda_{k+1})` (1-based `k`); `None` when `k` is 0 or `n`.
    pub fn gap_at(&self, k: usize) -> Option<f64> {
        if k == 0 || k >= self.eigenvalues.len() {
            return None;
        }
        Some(self.eigenvalues[k - 1].re - self.eigenvalues[k].re)
    }
}

#[derive(Clone, Copy, Debug)]
struct BlockKey {
    re: f64,
    im: f64,
}

impl BlockKey {
    /// Strictly ahead in the ordering (descending real part, then descending imaginary part).
    fn precedes(&self, other: &BlockKey) -> bool {
        let scale = 1.0 + self.re.abs().max(other.re.abs());
        if self.re - other.re > TIE_TOL * scale {
            return true;
        }
        if other.re - self.re > TIE_TOL * scale {
            return false;
        }
        let iscale = 1.0 + self.im.abs().max(other.im.abs());
        self.im - other.im > TIE_TOL * iscale
    }
}

fn eig2x2(a: f64, b: f64, c: f64, d: f64) -> (Complex64, Complex64) {
    let tr = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (Complex64::new(tr + s, 0.0), Complex64::new(tr - s, 0.0))
    } else {
        let s = (-disc).sqrt();
        (Complex64::new(tr, s), Complex64::new(tr, -s))
    }
}

/// Applies `G^T T G` on rows/columns `k..k+m` and accumulates `Z <- Z G`.
fn apply_local(t: &mut DMatrix<f64>, z: &mut DMatrix<f64>, k: usize, g: &DMatrix<f64>) {
    let n = t.nrows();
    let m = g.nrows();
    let rows = g.transpose() * t.view((k, 0), (m, n));
    t.view_mut((k, 0), (m, n)).copy_from(&rows);
    let cols = t.view((0, k), (n, m)) * g;
    t.view_mut((0, k), (n, m)).copy_from(&cols);
    let zc = z.view((0, k), (n, m)) * g;
    z.view_mut((0, k), (n, m)).copy_from(&zc);
}

/// Splits a 2x2 diagonal block with real eigenvalues into two 1x1 blocks.
fn split_real_block(t: &mut DMatrix<f64>, z: &mut DMatrix<f64>, k: usize) {
    let (a, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
    let (l1, _) = eig2x2(a, b, c, d);
    let l1 = l1.re;
    // Two candidate eigenvectors of the block; keep the better scaled one.
    let v1 = (b, l1 - a);
    let v2 = (l1 - d, c);
    let (x, y) = if v1.0.hypot(v1.1) >= v2.0.hypot(v2.1) { v1 } else { v2 };
    let nrm = x.hypot(y);
    if nrm == 0.0 {
        t[(k + 1, k)] = 0.0;
        return;
    }
    let (cs, sn) = (x / nrm, y / nrm);
    let g = DMatrix::from_row_slice(2, 2, &[cs, -sn, sn, cs]);
    apply_local(t, z, k, &g);
    t[(k + 1, k)] = 0.0;
}

/// Swaps the adjacent blocks starting at `k` (size `p`) and `k + p` (size `q`).
fn swap_blocks(t: &mut DMatrix<f64>, z: &mut DMatrix<f64>, k: usize, p: usize, q: usize) -> Result<()> {
    let m = p + q;
    let t11 = t.view((k, k), (p, p)).into_owned();
    let t12 = t.view((k, k + p), (p, q)).into_owned();
    let t22 = t.view((k + p, k + p), (q, q)).into_owned();

    // (I_q (x) T11 - T22^T (x) I_p) vec(X) = -vec(T12), column-major vec.
    let dim = p * q;
    let mut kron = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DMatrix::<f64>::zeros(dim, 1);
    for j in 0..q {
        for i in 0..p {
            let row = i + j * p;
            rhs[(row, 0)] = -t12[(i, j)];
            for i2 in 0..p {
                kron[(row, i2 + j * p)] += t11[(i, i2)];
            }
            for j2 in 0..q {
                kron[(row, i + j2 * p)] -= t22[(j2, j)];
            }
        }
    }
    let sol = kron
        .full_piv_lu()
        .solve(&rhs)
        .ok_or(Error::NoConvergence("block reordering: singular Sylvester system"))?;

    let mut y = DMatrix::<f64>::zeros(m, q);
    for j in 0..q {
        for i in 0..p {
            y[(i, j)] = sol[(i + j * p, 0)];
        }
        y[(p + j, j)] = 1.0;
    }
    let g = qr_full_q(&y);
    let tnorm = t.norm();
    apply_local(t, z, k, &g);

    let spill = t.view((k + q, k), (p, q)).norm();
    if spill > 1e-10 * (1.0 + tnorm) {
        return Err(Error::NoConvergence("block reordering: swap residual too large"));
    }
    t.view_mut((k + q, k), (p, q)).fill(0.0);
    Ok(())
}

fn block_key(t: &DMatrix<f64>, k: usize, size: usize) -> BlockKey {
    if size == 1 {
        BlockKey { re: t[(k, k)], im: 0.0 }
    } else {
        let (l1, _) = eig2x2(t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
        BlockKey {
            re: l1.re,
            im: l1.im.abs(),
        }
    }
}

/// Ordered real Schur decomposition: eigenvalues by descending real part,
/// ties by descending imaginary part, then input order.
pub fn eig_ordered(m: &DMatrix<f64>) -> Result<OrderedSpectrum> {
    if !m.is_square() {
        return Err(crate::error::shape("eig_ordered", "matrix is not square"));
    }
    let n = m.nrows();
    check_dense_limit(n)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if n == 0 {
        return Ok(OrderedSpectrum {
            eigenvalues: vec![],
            blocks: vec![],
            basis: DMatrix::zeros(0, 0),
            schur_form: DMatrix::zeros(0, 0),
        });
    }

    let (mut z, mut t) = if n == 1 {
        (DMatrix::identity(1, 1), m.clone())
    } else {
        Schur::try_new(m.clone(), f64::EPSILON, 1000 + 100 * n)
            .ok_or(Error::NoConvergence("real Schur iteration"))?
            .unpack()
    };

    // Identify blocks, splitting any 2x2 block whose eigenvalues are real.
    let mut blocks = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            if i + 2 < n && t[(i + 2, i + 1)] != 0.0 {
                return Err(Error::NoConvergence("real Schur form has an unreduced 3x3 block"));
            }
            let disc = 0.25 * (t[(i, i)] - t[(i + 1, i + 1)]).powi(2) + t[(i, i + 1)] * t[(i + 1, i)];
            if disc >= 0.0 {
                split_real_block(&mut t, &mut z, i);
                blocks.push(1);
                blocks.push(1);
            } else {
                blocks.push(2);
            }
            i += 2;
        } else {
            blocks.push(1);
            i += 1;
        }
    }

    // Selection sort over blocks, bubbling the best remaining block leftwards.
    let mut keys: Vec<BlockKey> = {
        let mut pos = 0;
        blocks
            .iter()
            .map(|&b| {
                let key = block_key(&t, pos, b);
                pos += b;
                key
            })
            .collect()
    };
    for target in 0..blocks.len() {
        let mut best = target;
        for j in target + 1..blocks.len() {
            if keys[j].precedes(&keys[best]) {
                best = j;
            }
        }
        let mut j = best;
        while j > target {
            let k: usize = blocks[..j - 1].iter().sum();
            swap_blocks(&mut t, &mut z, k, blocks[j - 1], blocks[j])?;
            blocks.swap(j - 1, j);
            keys.swap(j - 1, j);
            j -= 1;
        }
    }

    // Clean the strictly lower part outside the diagonal blocks.
    let mut pos = 0;
    for &b in &blocks {
        for col in pos..pos + b {
            for row in pos + b..n {
                t[(row, col)] = 0.0;
            }
        }
        pos += b;
    }

    let mut eigenvalues = Vec::with_capacity(n);
    let mut pos = 0;
    for &b in &blocks {
        if b == 1 {
            eigenvalues.push(Complex64::new(t[(pos, pos)], 0.0));
        } else {
            let (l1, l2) = eig2x2(t[(pos, pos)], t[(pos, pos + 1)], t[(pos + 1, pos)], t[(pos + 1, pos + 1)]);
            let (hi, lo) = if l1.im >= l2.im { (l1, l2) } else { (l2, l1) };
            eigenvalues.push(hi);
            eigenvalues.push(lo);
        }
        pos += b;
    }

    Ok(OrderedSpectrum {
        eigenvalues,
        blocks,
        basis: z,
        schur_form: t,
    })
}
