//! Subspace services built on the flow: extraction, expansion, reduction,
//! basin checks and SVD via the augmented symmetric matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{shape, Error, Result};
use crate::linalg::{eig_ordered, orthonormal_complement, qr_orthonormalize, svd_small, DENSE_LIMIT};
use crate::ojaflow::{integrate_flow, invariance_residual, sample_stiefel_uniform, FlowConfig, FlowTrace};
use crate::stiefel::{StiefelPoint, ORTHO_TOL};

/// Gaps below this are rejected outright.
pub const MIN_GAP: f64 = 1e-6;

/// Gaps below this are accepted but produce a warning.
pub const SMALL_GAP: f64 = 1e-3;

/// Retries with fresh seeds after the first failed attempt.
pub const RETRIES: usize = 3;

/// Input frames must be invariant to this level before expansion.
pub const EXPAND_INVARIANCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub r: usize,
    /// `Re(lambda_r) - Re(lambda_{r+1})`; infinite when `r = n`.
    pub gap: f64,
    pub splits_conjugate_pair: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubspaceResult {
    pub basis: StiefelPoint,
    /// `U^T A U`.
    pub projected: DMatrix<f64>,
    /// Spectrum of `projected`, by descending real part.
    pub eigenvalues: Vec<Complex64>,
    pub invariance_residual: f64,
    pub gap: Option<f64>,
    pub trace: Option<FlowTrace>,
    pub converged: bool,
    /// Number of flow runs used (0 for purely algebraic results).
    pub attempts: usize,
    pub warnings: Vec<String>,
}

fn rows(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!(m[(i, j)])).collect()))
            .collect(),
    )
}

pub(crate) fn matrix_json(m: &DMatrix<f64>) -> Value {
    rows(m)
}

pub(crate) fn complex_json(v: &[Complex64]) -> Value {
    Value::Array(v.iter().map(|z| json!([z.re, z.im])).collect())
}

impl SubspaceResult {
    /// Assembles a result for `basis`, computing the projected matrix and its spectrum.
    pub fn from_basis(a: &DMatrix<f64>, basis: StiefelPoint, gap: Option<f64>) -> Result<Self> {
        let invariance_residual = invariance_residual(&basis, a)?;
        let u = basis.matrix();
        let projected = u.transpose() * a * u;
        let eigenvalues = eig_ordered(&projected)?.eigenvalues;
        Ok(Self {
            basis,
            projected,
            eigenvalues,
            invariance_residual,
            gap,
            trace: None,
            converged: true,
            attempts: 0,
            warnings: Vec::new(),
        })
    }

    pub fn r(&self) -> usize {
        self.basis.r()
    }

    /// JSON view: matrices as row-major nested arrays, eigenvalues as `[re, im]` pairs.
    pub fn to_json(&self) -> Value {
        json!({
            "n": self.basis.n(),
            "r": self.basis.r(),
            "basis": rows(self.basis.matrix()),
            "projected": rows(&self.projected),
            "eigenvalues": complex_json(&self.eigenvalues),
            "invariance_residual": self.invariance_residual,
            "stiefel_residual": self.basis.ortho_residual(),
            "gap": self.gap,
            "converged": self.converged,
            "attempts": self.attempts,
            "final_time": self.trace.as_ref().map(|t| t.final_time()),
            "rate_estimate": self.trace.as_ref().and_then(|t| t.rate_estimate),
            "shift": self.trace.as_ref().map(|t| t.shift),
            "step": self.trace.as_ref().map(|t| t.step),
            "warnings": self.warnings,
        })
    }
}

fn check_square(a: &DMatrix<f64>, op: &'static str) -> Result<usize> {
    if !a.is_square() {
        return Err(shape(op, format!("A is {}x{}", a.nrows(), a.ncols())));
    }
    Ok(a.nrows())
}

fn check_cut(r: usize, n: usize, op: &'static str) -> Result<()> {
    if r == 0 || r > n {
        return Err(Error::InvalidArgument(format!("{op}: need 1 <= r <= n = {n}, got r = {r}")));
    }
    Ok(())
}

/// Leading `r` ordered Schur vectors of `A` and the gap at `r`.
pub fn oracle_dominant_subspace(a: &DMatrix<f64>, r: usize) -> Result<(StiefelPoint, GapReport)> {
    let n = check_square(a, "oracle_dominant_subspace")?;
    check_cut(r, n, "oracle_dominant_subspace")?;
    let spec = eig_ordered(a)?;
    let basis = spec.leading_basis(r)?;
    let report = GapReport {
        r,
        gap: spec.gap_at(r).unwrap_or(f64::INFINITY),
        splits_conjugate_pair: false,
    };
    Ok((StiefelPoint::new(basis), report))
}

/// Gap at `r` from the ordered spectrum; fails on split pairs and tiny gaps.
pub fn validated_gap(a: &DMatrix<f64>, r: usize) -> Result<GapReport> {
    let n = check_square(a, "validated_gap")?;
    check_cut(r, n, "validated_gap")?;
    let spec = eig_ordered(a)?;
    if spec.splits_block_at(r) {
        return Err(Error::ConjugatePairSplit { cut: r });
    }
    let gap = spec.gap_at(r).unwrap_or(f64::INFINITY);
    if gap < MIN_GAP {
        return Err(Error::GapTooSmall { r, gap });
    }
    Ok(GapReport {
        r,
        gap,
        splits_conjugate_pair: false,
    })
}

/// Dominant `r`-dimensional invariant subspace of `A` by the shifted flow.
///
/// Starts from `u0` when given, otherwise from a uniform random frame. A run
/// that does not converge (or diverges) is retried up to [`RETRIES`] times
/// from fresh random frames.
pub fn dominant_subspace(
    a: &DMatrix<f64>,
    r: usize,
    cfg: &FlowConfig,
    u0: Option<&DMatrix<f64>>,
) -> Result<SubspaceResult> {
    let n = check_square(a, "dominant_subspace")?;
    if r == 0 || r >= n {
        return Err(Error::InvalidArgument(format!("dominant_subspace: need 1 <= r < n = {n}, got r = {r}")));
    }
    cfg.validate()?;
    let mut warnings = Vec::new();
    let gap = if n <= DENSE_LIMIT {
        let report = validated_gap(a, r)?;
        if report.gap < SMALL_GAP {
            warnings.push(format!(
                "gap {:e} at r = {r} is small; projected eigenvalues are not validated",
                report.gap
            ));
        }
        Some(report.gap)
    } else {
        warnings.push("dimension above dense limit; gap not verified".to_string());
        None
    };

    for attempt in 0..=RETRIES {
        let start = match (attempt, u0) {
            (0, Some(u)) => u.clone(),
            _ => sample_stiefel_uniform(n, r, cfg.seed.wrapping_add(attempt as u64))?.into_matrix(),
        };
        let trace = match integrate_flow(a, &start, cfg) {
            Ok(t) => t,
            Err(Error::Diverged { .. }) => continue,
            Err(e) => return Err(e),
        };
        if trace.converged {
            let basis = qr_orthonormalize(trace.final_point.matrix())?;
            let mut res = SubspaceResult::from_basis(a, basis, gap)?;
            res.trace = Some(trace);
            res.attempts = attempt + 1;
            if attempt > 0 {
                warnings.push(format!("converged after {} retries", attempt));
            }
            res.warnings = warnings;
            return Ok(res);
        }
    }
    Err(Error::NotConverged { attempts: RETRIES + 1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BasinClass {
    Inside,
    Outside,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasinReport {
    pub class: BasinClass,
    /// Smallest singular value of the coordinate block `K`.
    pub sigma_min: f64,
}

/// Whether the flow from `U0` reaches the `m`-dominant subspace.
///
/// `K = V_m^T U0` holds the coordinates of `U0` along the dominant modes,
/// where `V_m` spans the dominant invariant subspace of `A^T` (the dual
/// basis of the dominant right subspace). The start is inside when `K` has
/// full column rank.
pub fn check_attraction_basin(a: &DMatrix<f64>, u0: &StiefelPoint, m: usize) -> Result<BasinReport> {
    let n = check_square(a, "check_attraction_basin")?;
    if u0.n() != n {
        return Err(shape("check_attraction_basin", "U0 and A dimensions differ"));
    }
    let r = u0.r();
    if m < r || m > n {
        return Err(Error::InvalidArgument(format!("need r = {r} <= m <= n = {n}, got m = {m}")));
    }
    let v = eig_ordered(&a.transpose())?.leading_basis(m)?;
    let k = v.transpose() * u0.matrix();
    let sv = svd_small(&k)?;
    let sigma_min = sv.sigma.get(r - 1).copied().unwrap_or(0.0);
    let class = if sigma_min < 1e-9 {
        BasinClass::Outside
    } else if sigma_min <= 1e-6 {
        BasinClass::Marginal
    } else {
        BasinClass::Inside
    };
    Ok(BasinReport { class, sigma_min })
}

fn ensure_invariant(a: &DMatrix<f64>, u: &StiefelPoint) -> Result<()> {
    let res = invariance_residual(u, a)?;
    if res >= EXPAND_INVARIANCE_TOL {
        return Err(Error::NotInvariant { residual: res });
    }
    Ok(())
}

/// Extends an invariant `U_r` by `ell` columns, running the flow on the
/// compression `A_perp = U_perp^T A U_perp`. The leading `r` columns of the
/// result are `U_r` itself.
pub fn expand_subspace(
    a: &DMatrix<f64>,
    u_r: &StiefelPoint,
    ell: usize,
    cfg: &FlowConfig,
) -> Result<SubspaceResult> {
    let n = check_square(a, "expand_subspace")?;
    if u_r.n() != n {
        return Err(shape("expand_subspace", "U_r and A dimensions differ"));
    }
    let r = u_r.r();
    if ell == 0 || r + ell > n {
        return Err(Error::InvalidArgument(format!("need 1 <= ell <= n - r = {}, got {ell}", n - r)));
    }
    u_r.ensure_certified(ORTHO_TOL)?;
    ensure_invariant(a, u_r)?;
    let mut gap = None;
    if n <= DENSE_LIMIT {
        validated_gap(a, r)?;
        if r + ell < n {
            gap = Some(validated_gap(a, r + ell)?.gap);
        }
    }
    let comp = orthonormal_complement(u_r)?;
    let cm = comp.matrix();
    let a_perp = cm.transpose() * a * cm;

    let (tail, sub) = if r + ell == n {
        (cm.clone(), None)
    } else {
        let sub = dominant_subspace(&a_perp, ell, cfg, None)?;
        (cm * sub.basis.matrix(), Some(sub))
    };
    let mut combined = DMatrix::zeros(n, r + ell);
    combined.columns_mut(0, r).copy_from(u_r.matrix());
    combined.columns_mut(r, ell).copy_from(&tail);
    let mut res = SubspaceResult::from_basis(a, StiefelPoint::new(combined), gap)?;
    if let Some(sub) = sub {
        res.attempts = sub.attempts;
        res.trace = sub.trace;
        res.warnings = sub.warnings;
    }
    Ok(res)
}

fn check_reduction(a: &DMatrix<f64>, u_r: &StiefelPoint, r_tilde: usize) -> Result<()> {
    let n = check_square(a, "reduce_subspace")?;
    if u_r.n() != n {
        return Err(shape("reduce_subspace", "U_r and A dimensions differ"));
    }
    if r_tilde == 0 || r_tilde > u_r.r() {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= r_tilde <= r = {}, got {r_tilde}",
            u_r.r()
        )));
    }
    u_r.ensure_certified(ORTHO_TOL)
}

/// Leading `r_tilde` ordered Schur vectors of `A_U`, mapped back through `U_r`.
pub fn reduce_subspace_schur(a: &DMatrix<f64>, u_r: &StiefelPoint, r_tilde: usize) -> Result<SubspaceResult> {
    check_reduction(a, u_r, r_tilde)?;
    let u = u_r.matrix();
    let a_u = u.transpose() * a * u;
    let spec = eig_ordered(&a_u)?;
    let w = spec.leading_basis(r_tilde)?;
    let basis = qr_orthonormalize(&(u * w))?;
    SubspaceResult::from_basis(a, basis, spec.gap_at(r_tilde))
}

/// Runs the flow on `A_U` in dimension `r` and maps the result back through `U_r`.
pub fn reduce_subspace_recursive(
    a: &DMatrix<f64>,
    u_r: &StiefelPoint,
    r_tilde: usize,
    cfg: &FlowConfig,
) -> Result<SubspaceResult> {
    check_reduction(a, u_r, r_tilde)?;
    let u = u_r.matrix();
    if r_tilde == u_r.r() {
        return SubspaceResult::from_basis(a, qr_orthonormalize(u)?, None);
    }
    let a_u = u.transpose() * a * u;
    let sub = dominant_subspace(&a_u, r_tilde, cfg, None)?;
    let basis = qr_orthonormalize(&(u * sub.basis.matrix()))?;
    let mut res = SubspaceResult::from_basis(a, basis, sub.gap)?;
    res.attempts = sub.attempts;
    res.trace = sub.trace;
    res.warnings = sub.warnings;
    Ok(res)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvdExtraction {
    pub u: StiefelPoint,
    pub v: StiefelPoint,
    pub sigma: Vec<f64>,
    /// `|A V - U diag(sigma)|_F`.
    pub residual: f64,
    /// True when the first block of the augmented frame held `U` rather than `V`.
    pub blocks_swapped: bool,
    pub trace: Option<FlowTrace>,
}

impl SvdExtraction {
    pub fn to_json(&self) -> Value {
        json!({
            "u": rows(self.u.matrix()),
            "v": rows(self.v.matrix()),
            "sigma": self.sigma,
            "residual": self.residual,
            "blocks_swapped": self.blocks_swapped,
        })
    }
}

/// `[[0_m, A^T], [A, 0_n]]` for an `n x m` matrix `A`.
pub fn augmented_symmetric(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = a.shape();
    let mut big = DMatrix::zeros(n + m, n + m);
    big.view_mut((0, m), (m, n)).copy_from(&a.transpose());
    big.view_mut((m, 0), (n, m)).copy_from(a);
    big
}

fn assemble_svd(a: &DMatrix<f64>, top: DMatrix<f64>, bottom: DMatrix<f64>, swapped: bool) -> Result<SvdExtraction> {
    let s2 = std::f64::consts::SQRT_2;
    let (uu, vv) = if swapped { (top, bottom) } else { (bottom, top) };
    let u0 = qr_orthonormalize(&(uu * s2))?;
    let v0 = qr_orthonormalize(&(vv * s2))?;
    let core = u0.matrix().transpose() * a * v0.matrix();
    let sv = svd_small(&core)?;
    let u = StiefelPoint::new(u0.matrix() * sv.u.matrix());
    let v = StiefelPoint::new(v0.matrix() * sv.v.matrix());
    let sigma = sv.sigma.clone();
    let us = u.matrix() * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sigma.clone()));
    let residual = (a * v.matrix() - us).norm();
    Ok(SvdExtraction {
        u,
        v,
        sigma,
        residual,
        blocks_swapped: swapped,
        trace: None,
    })
}

/// Leading `r` singular triplets of `A` (`n x m`) from the dominant subspace
/// of the augmented symmetric matrix.
pub fn svd_extract(a: &DMatrix<f64>, r: usize, cfg: &FlowConfig) -> Result<SvdExtraction> {
    let (n, m) = a.shape();
    if r == 0 || r > n.min(m) {
        return Err(Error::InvalidArgument(format!("need 1 <= r <= min(n, m) = {}, got {r}", n.min(m))));
    }
    if r < n.min(m) && n.max(m) <= DENSE_LIMIT {
        let s = svd_small(a)?.sigma;
        let gap = s[r - 1] - s[r];
        if gap < MIN_GAP {
            return Err(Error::GapTooSmall { r, gap });
        }
    }
    let big = augmented_symmetric(a);
    let sub = dominant_subspace(&big, r, cfg, None)?;
    let x = sub.basis.matrix();
    let top = x.rows(0, m).into_owned();
    let bottom = x.rows(m, n).into_owned();
    let bound = 1e-5 * a.norm();

    let mut candidates = vec![false];
    if n == m {
        candidates.push(true);
    }
    for swapped in candidates {
        if let Ok(mut out) = assemble_svd(a, top.clone(), bottom.clone(), swapped) {
            if out.residual < bound {
                out.trace = sub.trace.clone();
                return Ok(out);
            }
        }
    }
    Err(Error::BlockAmbiguity)
}
