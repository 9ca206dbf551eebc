//! The shifted Oja flow `eps * dU/dt = (I - U U^T)(A + a I) U`.
//!
//! On the Stiefel manifold the shift `a` cancels, so it only changes how
//! strongly off-manifold frames are pulled back. Choosing `a` so that
//! `sym(A) + a I` is positive definite makes the manifold exponentially
//! attracting for every full-rank initial frame.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::linalg::{eig_ordered, qr_orthonormalize, svd_small, symmetric_part, DENSE_LIMIT};
use crate::stiefel::{StiefelPoint, ORTHO_TOL};

pub use crate::ode::Integrator;
pub use crate::stiefel::stiefel_residual;

/// Margin added on top of `-lambda_min(sym(A))` when the shift is chosen automatically.
pub const DEFAULT_SHIFT_MARGIN: f64 = 0.5;

/// Frames whose Frobenius norm exceeds this are declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Retraction {
    #[default]
    None,
    /// Re-orthonormalize by QR every `k` steps.
    QrEvery(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Rate parameter, in `(0, 1]`.
    pub epsilon: f64,
    /// Spectral shift; `None` selects [`stabilizing_shift`] with [`DEFAULT_SHIFT_MARGIN`].
    pub shift_a: Option<f64>,
    /// Time step; `None` selects `min(0.01, 0.1 eps / (1 + a + |A|_F))`.
    pub step_h: Option<f64>,
    pub t_max: f64,
    pub integrator: Integrator,
    pub retraction: Retraction,
    pub tol_invariance: f64,
    pub tol_ortho: f64,
    pub seed: u64,
    /// Keep every `sample_every`-th step in the trace (the last step is always kept).
    pub sample_every: usize,
    /// Stop as soon as both residuals are below tolerance.
    pub stop_on_convergence: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            shift_a: None,
            step_h: None,
            t_max: 200.0,
            integrator: Integrator::Rk4,
            retraction: Retraction::None,
            tol_invariance: 1e-7,
            tol_ortho: 1e-8,
            seed: 42,
            sample_every: 1,
            stop_on_convergence: true,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad("epsilon must lie in (0, 1]");
        }
        if let Some(h) = self.step_h {
            if !(h > 0.0 && h.is_finite()) {
                return bad("step_h must be positive");
            }
        }
        if let Some(a) = self.shift_a {
            if !(a >= 0.0 && a.is_finite()) {
                return bad("shift_a must be nonnegative");
            }
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad("t_max must be positive");
        }
        if !(self.tol_invariance > 0.0 && self.tol_ortho > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.sample_every == 0 {
            return bad("sample_every must be at least 1");
        }
        if self.retraction == Retraction::QrEvery(0) {
            return bad("retraction interval must be at least 1");
        }
        Ok(())
    }

    /// Resolves the shift and step size for a given matrix.
    pub fn resolve(&self, a: &DMatrix<f64>) -> Result<(f64, f64)> {
        self.validate()?;
        let shift = match self.shift_a {
            Some(s) => s,
            None => stabilizing_shift(a, DEFAULT_SHIFT_MARGIN),
        };
        let h = match self.step_h {
            Some(h) => h,
            None => default_step(a, shift, self.epsilon),
        };
        Ok((shift, h))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// `min(0.01, 0.1 eps / (1 + a + |A|_F))`.
pub fn default_step(a: &DMatrix<f64>, shift: f64, epsilon: f64) -> f64 {
    (0.1 * epsilon / (1.0 + shift + a.norm())).min(0.01)
}

/// Sampled residual history of one integration run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowTrace {
    pub times: Vec<f64>,
    pub stiefel_residuals: Vec<f64>,
    pub invariance_residuals: Vec<f64>,
    pub final_point: StiefelPoint,
    pub converged: bool,
    /// Least-squares slope of `ln(invariance residual)` over the trailing quarter of samples.
    pub rate_estimate: Option<f64>,
    pub shift: f64,
    pub step: f64,
}

impl FlowTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// CSV with header `t,stiefel_residual,invariance_residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,stiefel_residual,invariance_residual\n");
        for i in 0..self.times.len() {
            out.push_str(&format!(
                "{:e},{:e},{:e}\n",
                self.times[i], self.stiefel_residuals[i], self.invariance_residuals[i]
            ));
        }
        out
    }
}

/// Result of a run that may have stopped at the divergence guard.
#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub trace: FlowTrace,
    /// `(time, |U|_F)` where the divergence guard fired.
    pub diverged: Option<(f64, f64)>,
}

impl FlowOutcome {
    pub fn into_result(self) -> Result<FlowTrace> {
        match self.diverged {
            Some((time, norm)) => Err(Error::Diverged { time, norm }),
            None => Ok(self.trace),
        }
    }
}

fn check_square(a: &DMatrix<f64>, op: &'static str) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(shape(op, format!("A is {}x{}", a.nrows(), a.ncols())))
    }
}

fn rhs_unchecked(u: &DMatrix<f64>, a: &DMatrix<f64>, inv_eps: f64, shift: f64) -> DMatrix<f64> {
    let mut w = a * u;
    if shift != 0.0 {
        w += u * shift;
    }
    let coef = u.transpose() * &w;
    (w - u * coef) * inv_eps
}

/// `(1/eps)(I - U U^T)(A + a I) U`, evaluated as `W - U (U^T W)` with `W = (A + a I) U`.
pub fn oja_rhs(u: &DMatrix<f64>, a: &DMatrix<f64>, epsilon: f64, shift_a: f64) -> Result<DMatrix<f64>> {
    check_square(a, "oja_rhs")?;
    if u.nrows() != a.nrows() {
        return Err(shape("oja_rhs", format!("U has {} rows, A is {}x{}", u.nrows(), a.nrows(), a.ncols())));
    }
    Ok(rhs_unchecked(u, a, 1.0 / epsilon, shift_a))
}

/// Shift `a = max(0, -lambda_min(sym(A))) + margin`, so `sym(A) + a I` is positive
/// definite whenever `margin > 0`. Falls back to `|A|_F + margin` beyond the dense limit.
pub fn stabilizing_shift(a: &DMatrix<f64>, margin: f64) -> f64 {
    let margin = margin.max(0.0);
    if a.nrows() <= DENSE_LIMIT {
        if let Ok(spec) = eig_ordered(&symmetric_part(a)) {
            if let Some(lmin) = spec.eigenvalues.last() {
                return (-lmin.re).max(0.0) + margin;
            }
        }
    }
    a.norm() + margin
}

fn raw_invariance_residual(u: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    let w = a * u;
    (&w - u * (u.transpose() * &w)).norm()
}

/// `|(I - U U^T) A U|_F`; zero exactly when `span(U)` is `A`-invariant.
pub fn invariance_residual(u: &StiefelPoint, a: &DMatrix<f64>) -> Result<f64> {
    u.ensure_certified(ORTHO_TOL)?;
    check_square(a, "invariance_residual")?;
    if u.n() != a.nrows() {
        return Err(shape("invariance_residual", "U and A dimensions differ"));
    }
    Ok(raw_invariance_residual(u.matrix(), a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectorNorm {
    #[default]
    Spectral,
    Frobenius,
}

/// Norm of `U U^T - V V^T`.
pub fn projector_distance(u: &StiefelPoint, v: &StiefelPoint, norm: ProjectorNorm) -> Result<f64> {
    if u.n() != v.n() {
        return Err(shape("projector_distance", format!("ambient dimensions {} and {}", u.n(), v.n())));
    }
    let d = u.projector() - v.projector();
    match norm {
        ProjectorNorm::Frobenius => Ok(d.norm()),
        ProjectorNorm::Spectral => Ok(svd_small(&d)?.sigma.first().copied().unwrap_or(0.0)),
    }
}

/// Spectral projector distance between raw frames, orthonormalizing both first.
pub fn subspace_distance(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    let qu = qr_orthonormalize(u)?;
    let qv = qr_orthonormalize(v)?;
    projector_distance(&qu, &qv, ProjectorNorm::Spectral)
}

/// Haar-distributed point on `St(r, n)`: QR of an i.i.d. standard normal matrix.
pub fn sample_stiefel_uniform(n: usize, r: usize, seed: u64) -> Result<StiefelPoint> {
    if r > n {
        return Err(Error::InvalidArgument(format!("r = {r} exceeds n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng));
    qr_orthonormalize(&g)
}

fn log_slope(times: &[f64], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Least-squares slope of `ln(values)` against `times` restricted to `[t0, t1]`.
pub fn log_slope_window(times: &[f64], values: &[f64], t0: f64, t1: f64) -> Option<f64> {
    let (ts, vs): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t0 && **t <= t1)
        .map(|(t, v)| (*t, *v))
        .unzip();
    log_slope(&ts, &vs)
}

/// Integrates the shifted flow; fails with `Diverged` if the divergence guard fires.
pub fn integrate_flow(a: &DMatrix<f64>, u0: &DMatrix<f64>, cfg: &FlowConfig) -> Result<FlowTrace> {
    integrate_flow_observed(a, u0, cfg, |_, _| {})?.into_result()
}

/// Integrates the shifted flow, calling `observer(t, U)` at every retained sample.
///
/// Divergence is reported in the outcome rather than as an error so that the
/// partial trace stays available.
pub fn integrate_flow_observed<F>(
    a: &DMatrix<f64>,
    u0: &DMatrix<f64>,
    cfg: &FlowConfig,
    mut observer: F,
) -> Result<FlowOutcome>
where
    F: FnMut(f64, &DMatrix<f64>),
{
    check_square(a, "integrate_flow")?;
    if u0.nrows() != a.nrows() || u0.ncols() == 0 || u0.ncols() > a.nrows() {
        return Err(shape(
            "integrate_flow",
            format!("U0 is {}x{}, A is {}x{}", u0.nrows(), u0.ncols(), a.nrows(), a.ncols()),
        ));
    }
    if a.iter().chain(u0.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (shift, h) = cfg.resolve(a)?;
    // Full rank check; the QR itself is discarded.
    qr_orthonormalize(u0)?;

    let inv_eps = 1.0 / cfg.epsilon;
    let f = |u: &DMatrix<f64>| rhs_unchecked(u, a, inv_eps, shift);
    let steps = ((cfg.t_max / h) - 1e-9).ceil().max(1.0) as usize;
    // Land exactly on t_max.
    let h = cfg.t_max / steps as f64;

    let mut times = Vec::new();
    let mut ortho = Vec::new();
    let mut invar = Vec::new();
    let mut u = u0.clone();

    let mut record = |t: f64, u: &DMatrix<f64>, so: f64, si: f64| {
        times.push(t);
        ortho.push(so);
        invar.push(si);
        observer(t, u);
    };

    let mut so = stiefel_residual(&u);
    let mut si = raw_invariance_residual(&u, a);
    record(0.0, &u, so, si);
    let mut converged = so < cfg.tol_ortho && si < cfg.tol_invariance;
    let mut diverged = None;

    if !(converged && cfg.stop_on_convergence) {
        for k in 1..=steps {
            u = cfg.integrator.step(&f, &u, h);
            if let Retraction::QrEvery(every) = cfg.retraction {
                if k % every == 0 {
                    if let Ok(q) = qr_orthonormalize(&u) {
                        u = q.into_matrix();
                    }
                }
            }
            let t = k as f64 * h;
            let norm = u.norm();
            if !norm.is_finite() || norm > DIVERGENCE_NORM {
                diverged = Some((t, norm));
                break;
            }
            so = stiefel_residual(&u);
            si = raw_invariance_residual(&u, a);
            converged = so < cfg.tol_ortho && si < cfg.tol_invariance;
            let stop = converged && cfg.stop_on_convergence;
            if k % cfg.sample_every == 0 || k == steps || stop {
                record(t, &u, so, si);
            }
            if stop {
                break;
            }
        }
    }

    let tail = (times.len() * 3) / 4;
    let rate_estimate = log_slope(&times[tail..], &invar[tail..]);
    let trace = FlowTrace {
        times,
        stiefel_residuals: ortho,
        invariance_residuals: invar,
        final_point: StiefelPoint::new(u),
        converged: converged && diverged.is_none(),
        rate_estimate,
        shift,
        step: h,
    };
    Ok(FlowOutcome { trace, diverged })
}

/// Singular values of `U` (descending).
pub fn frame_singular_values(u: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = u.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}
