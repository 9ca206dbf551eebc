use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default orthonormality tolerance for certified points.
pub const ORTHO_TOL: f64 = 1e-8;

/// `||I_r - U^T U||_F`.
pub fn stiefel_residual(u: &DMatrix<f64>) -> f64 {
    let r = u.ncols();
    (DMatrix::identity(r, r) - u.transpose() * u).norm()
}

/// An `n x r` frame together with its orthonormality residual.
///
/// Construction never fails; a point is *certified* when its residual is
/// below a tolerance, which is what most consumers require.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StiefelPoint {
    matrix: DMatrix<f64>,
    ortho_residual: f64,
}

impl StiefelPoint {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let ortho_residual = stiefel_residual(&matrix);
        Self {
            matrix,
            ortho_residual,
        }
    }

    /// Wraps `matrix`, failing with `NotOrthonormal` unless its residual is below `tol`.
    pub fn certified(matrix: DMatrix<f64>, tol: f64) -> Result<Self> {
        let p = Self::new(matrix);
        p.ensure_certified(tol)?;
        Ok(p)
    }

    pub fn ensure_certified(&self, tol: f64) -> Result<()> {
        if self.ortho_residual < tol {
            Ok(())
        } else {
            Err(Error::NotOrthonormal {
                residual: self.ortho_residual,
            })
        }
    }

    pub fn is_certified(&self, tol: f64) -> bool {
        self.ortho_residual < tol
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn r(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn ortho_residual(&self) -> f64 {
        self.ortho_residual
    }

    /// `U U^T`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.matrix * self.matrix.transpose()
    }
}

impl AsRef<DMatrix<f64>> for StiefelPoint {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}
