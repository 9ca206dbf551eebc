//! Projector form of the flow: `P = U U^T` obeys the matrix Riccati equation
//! `eps * dP/dt = A P + P A^T - P (A + A^T) P`, which has a closed-form solution
//! and coincides with the projector onto `span(exp(A t / eps) Z0)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::linalg::{matrix_exponential, qr_orthonormalize};

/// Singular values of `P` above this count towards its rank.
pub const RANK_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorState {
    p: DMatrix<f64>,
    rank_estimate: usize,
}

fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

impl ProjectorState {
    /// Symmetrizes `p` and estimates its rank.
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if !p.is_square() {
            return Err(shape("ProjectorState", format!("{}x{}", p.nrows(), p.ncols())));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let p = symmetrize(&p);
        let rank_estimate = p
            .clone()
            .singular_values()
            .iter()
            .filter(|&&s| s > RANK_THRESHOLD)
            .count();
        Ok(Self { p, rank_estimate })
    }

    /// `U U^T` for a frame `U`.
    pub fn from_frame(u: &DMatrix<f64>) -> Result<Self> {
        Self::new(u * u.transpose())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn rank_estimate(&self) -> usize {
        self.rank_estimate
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    /// `|P^2 - P|_F`.
    pub fn idempotence_defect(&self) -> f64 {
        (&self.p * &self.p - &self.p).norm()
    }
}

fn check(a: &DMatrix<f64>, n: usize, op: &'static str) -> Result<()> {
    if !a.is_square() || a.nrows() != n {
        return Err(shape(op, format!("A is {}x{}, state is {n}x{n}", a.nrows(), a.ncols())));
    }
    Ok(())
}

fn rhs_unchecked(p: &DMatrix<f64>, a: &DMatrix<f64>, inv_eps: f64) -> DMatrix<f64> {
    let ap = a * p;
    let pat = ap.transpose();
    let s = a + a.transpose();
    (ap + pat - p * s * p) * inv_eps
}

/// `(1/eps)(A P + P A^T - P (A + A^T) P)`.
pub fn riccati_rhs(p: &ProjectorState, a: &DMatrix<f64>, epsilon: f64) -> Result<DMatrix<f64>> {
    check(a, p.n(), "riccati_rhs")?;
    Ok(symmetrize(&rhs_unchecked(p.matrix(), a, 1.0 / epsilon)))
}

/// Nearest orthogonal projector of rank `k` to the symmetric matrix `p`.
fn nearest_projector(p: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let eig = p.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..p.nrows()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut q = DMatrix::zeros(p.nrows(), k);
    for (c, &i) in idx.iter().take(k).enumerate() {
        q.set_column(c, &eig.eigenvectors.column(i));
    }
    &q * q.transpose()
}

/// Rank to retract onto, when `p0` is an orthogonal projector.
fn projector_rank(p0: &ProjectorState) -> Option<usize> {
    (p0.idempotence_defect() < 1e-8).then_some(p0.rank_estimate())
}

/// RK4 integration of the Riccati equation, symmetrizing after every step.
///
/// Rank-`k` projectors form an invariant but transversally repelling set of
/// this equation, so when `P0` is a projector each step is followed by a
/// retraction onto the nearest rank-`k` projector.
pub fn integrate_riccati(
    a: &DMatrix<f64>,
    p0: &ProjectorState,
    t: f64,
    epsilon: f64,
    h: f64,
) -> Result<ProjectorState> {
    check(a, p0.n(), "integrate_riccati")?;
    if !(h > 0.0) || t < 0.0 {
        return Err(Error::InvalidArgument("need h > 0 and t >= 0".into()));
    }
    let steps = ((t / h) - 1e-9).ceil().max(0.0) as usize;
    let h = if steps == 0 { 0.0 } else { t / steps as f64 };
    let inv_eps = 1.0 / epsilon;
    let f = |p: &DMatrix<f64>| rhs_unchecked(p, a, inv_eps);
    let rank = projector_rank(p0);
    let mut p = p0.matrix().clone();
    for _ in 0..steps {
        p = symmetrize(&crate::ode::rk4_step(&f, &p, h));
        if let Some(k) = rank {
            p = nearest_projector(&p, k);
        }
    }
    ProjectorState::new(p)
}

fn closed_form_step(e: &DMatrix<f64>, p0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = p0.nrows();
    let g = e.transpose() * e - DMatrix::identity(n, n);
    let m = DMatrix::identity(n, n) + &g * p0;
    // P0 M^{-1} = (M^{-T} P0)^T since P0 is symmetric.
    let lu = m.transpose().lu();
    let u = lu.u();
    let dmax = u.diagonal().amax();
    let dmin = u.diagonal().iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if !(dmin > 1e-14 * dmax.max(1.0)) {
        return Err(Error::SingularSolve("I + G(t) P0"));
    }
    let y = lu.solve(p0).ok_or(Error::SingularSolve("I + G(t) P0"))?;
    Ok(symmetrize(&(e * y.transpose() * e.transpose())))
}

/// `P(t) = E P0 (I + G P0)^{-1} E^T` with `E = exp(A t / eps)` and `G = E^T E - I`.
///
/// Long horizons are evaluated by composing the formula over chunks with
/// `|A| dt / eps <= 1`, which is exact by the flow property and keeps
/// `I + G P0` well conditioned. As in [`integrate_riccati`], a projector
/// input is retracted onto rank-`k` projectors between chunks.
pub fn riccati_closed_form(
    a: &DMatrix<f64>,
    p0: &ProjectorState,
    t: f64,
    epsilon: f64,
) -> Result<ProjectorState> {
    check(a, p0.n(), "riccati_closed_form")?;
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(p0.clone());
    }
    let tau = t / epsilon;
    let chunks = (tau * a.norm()).ceil().max(1.0) as usize;
    let e = matrix_exponential(a, tau / chunks as f64)?;
    let rank = projector_rank(p0);
    let mut p = p0.matrix().clone();
    for _ in 0..chunks {
        p = closed_form_step(&e, &p)?;
        if let Some(k) = rank {
            p = nearest_projector(&p, k);
        }
    }
    ProjectorState::new(p)
}

/// Orthogonal projector onto `span(exp(A t / eps) Z0)`.
///
/// The propagation is split into unit-length chunks with a QR after each,
/// so the result stays well conditioned for long horizons.
pub fn projector_from_linear_flow(
    a: &DMatrix<f64>,
    z0: &DMatrix<f64>,
    t: f64,
    epsilon: f64,
) -> Result<ProjectorState> {
    check(a, z0.nrows(), "projector_from_linear_flow")?;
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    let mut q = qr_orthonormalize(z0)?.into_matrix();
    let tau = t / epsilon;
    let chunks = tau.ceil().max(1.0) as usize;
    let e = matrix_exponential(a, tau / chunks as f64)?;
    for _ in 0..chunks {
        q = qr_orthonormalize(&(&e * &q))?.into_matrix();
    }
    ProjectorState::from_frame(&q)
}
