//! Low-rank stabilization: `r x r` observer and feedback gains designed on the
//! reduced pairs and embedded into full-order closed loops.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{shape, Error, Result};
use crate::linalg::{eig_ordered, spectrum_difference, spectrum_match_error, svd_small};
use crate::modred::{LtiSystem, SubspacePair};
use crate::subspace::{complex_json, matrix_json};

/// Hamiltonian eigenvalues closer than this to the imaginary axis are rejected.
pub const IMAG_AXIS_TOL: f64 = 1e-8;

/// Relative CARE residual accepted on a returned solution.
pub const CARE_TOL: f64 = 1e-8;

/// `X1` in the stable basis `[X1; X2]` counts as singular below this singular value.
const X1_SINGULAR_TOL: f64 = 1e-10;

/// Relative asymmetry accepted in `Q` and `R`.
const SYMMETRY_TOL: f64 = 1e-10;

/// Stabilizing solution of `A^T P + P A - P B R^{-1} B^T P + Q = 0`.
#[derive(Debug, Clone)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    /// `|CARE(P)|_F`.
    pub residual: f64,
    /// Stable half of the Hamiltonian spectrum (the closed-loop eigenvalues).
    pub closed_loop_eigenvalues: Vec<Complex64>,
}

fn ensure_symmetric(m: &DMatrix<f64>, name: &'static str) -> Result<()> {
    if !m.is_square() {
        return Err(shape("care_small", format!("{name} is not square")));
    }
    let asym = (m - m.transpose()).norm();
    if asym > SYMMETRY_TOL * (1.0 + m.norm()) {
        return Err(Error::InvalidArgument(format!("{name} is not symmetric (asymmetry {asym:e})")));
    }
    Ok(())
}

/// `A^T P + P A - P B R^{-1} B^T P + Q`.
pub fn care_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r_inv: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q
}

/// Solves the CARE through the stable invariant subspace of the Hamiltonian
/// `[[A, -B R^{-1} B^T], [-Q, -A^T]]`.
pub fn care_small(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<CareSolution> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || q.nrows() != n || r.nrows() != b.ncols() {
        return Err(shape(
            "care_small",
            format!(
                "A {}x{}, B {}x{}, Q {}x{}, R {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                q.nrows(),
                q.ncols(),
                r.nrows(),
                r.ncols()
            ),
        ));
    }
    ensure_symmetric(q, "Q")?;
    ensure_symmetric(r, "R")?;
    let r_inv = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("R is not positive definite".into()))?
        .inverse();

    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-(b * &r_inv * b.transpose())));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    // Ordering -H by descending real part puts the stable half of H first.
    let spec = eig_ordered(&(-&h))?;
    if spec.eigenvalues.iter().any(|l| l.re.abs() < IMAG_AXIS_TOL) {
        return Err(Error::NotStabilizable("Hamiltonian has eigenvalues on the imaginary axis"));
    }
    let basis = spec
        .leading_basis(n)
        .map_err(|_| Error::NotStabilizable("stable Hamiltonian subspace splits a conjugate pair"))?;
    let x1 = basis.rows(0, n).into_owned();
    let x2 = basis.rows(n, n).into_owned();
    let smin = svd_small(&x1)?.sigma.last().copied().unwrap_or(0.0);
    if smin < X1_SINGULAR_TOL {
        return Err(Error::NotStabilizable("stable Hamiltonian subspace is not a graph"));
    }
    let x1t_inv = x1
        .transpose()
        .lu()
        .solve(&x2.transpose())
        .ok_or(Error::SingularSolve("Hamiltonian basis"))?;
    let p = x1t_inv.transpose();
    let p = (&p + p.transpose()) * 0.5;

    let residual = care_residual(a, b, q, &r_inv, &p).norm();
    if residual >= CARE_TOL * (1.0 + p.norm()) {
        return Err(Error::NotStabilizable("CARE residual check failed"));
    }
    let closed_loop_eigenvalues = spec.eigenvalues[..n].iter().map(|l| -l).collect();
    Ok(CareSolution {
        p,
        residual,
        closed_loop_eigenvalues,
    })
}

/// One designed gain with its embedding and full-order verification data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainSide {
    /// `L_r` (`r x p`) or `F_r` (`m x r`).
    pub gain: DMatrix<f64>,
    /// `U L_r` (`n x p`) or `F_r V^T` (`m x n`).
    pub embedded: DMatrix<f64>,
    pub closed_loop_abscissa: f64,
    pub reduced_abscissa: f64,
    /// Largest distance between the closed-loop eigenvalues outside the
    /// reduced loop and `lambda_{r+1..n}(A)`.
    pub untouched_spectrum_error: f64,
    pub care_residual: Option<f64>,
}

impl GainSide {
    fn to_json(&self) -> Value {
        json!({
            "gain": matrix_json(&self.gain),
            "embedded": matrix_json(&self.embedded),
            "closed_loop_abscissa": self.closed_loop_abscissa,
            "reduced_abscissa": self.reduced_abscissa,
            "untouched_spectrum_error": self.untouched_spectrum_error,
            "care_residual": self.care_residual,
        })
    }
}

/// Observer and/or feedback gains; either side may be absent.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GainDesign {
    pub observer: Option<GainSide>,
    pub feedback: Option<GainSide>,
}

impl GainDesign {
    pub fn l_r(&self) -> Option<&DMatrix<f64>> {
        self.observer.as_ref().map(|s| &s.gain)
    }

    pub fn f_r(&self) -> Option<&DMatrix<f64>> {
        self.feedback.as_ref().map(|s| &s.gain)
    }

    pub fn embedded_l(&self) -> Option<&DMatrix<f64>> {
        self.observer.as_ref().map(|s| &s.embedded)
    }

    pub fn embedded_f(&self) -> Option<&DMatrix<f64>> {
        self.feedback.as_ref().map(|s| &s.embedded)
    }

    pub fn closed_loop_observer_abscissa(&self) -> Option<f64> {
        self.observer.as_ref().map(|s| s.closed_loop_abscissa)
    }

    pub fn closed_loop_feedback_abscissa(&self) -> Option<f64> {
        self.feedback.as_ref().map(|s| s.closed_loop_abscissa)
    }

    /// Takes the observer from `self` and the feedback from `other` where missing.
    pub fn merge(self, other: GainDesign) -> GainDesign {
        GainDesign {
            observer: self.observer.or(other.observer),
            feedback: self.feedback.or(other.feedback),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "L_r": self.l_r().map(matrix_json),
            "F_r": self.f_r().map(matrix_json),
            "embedded_L": self.embedded_l().map(matrix_json),
            "embedded_F": self.embedded_f().map(matrix_json),
            "closed_loop_observer_abscissa": self.closed_loop_observer_abscissa(),
            "closed_loop_feedback_abscissa": self.closed_loop_feedback_abscissa(),
            "observer": self.observer.as_ref().map(GainSide::to_json),
            "feedback": self.feedback.as_ref().map(GainSide::to_json),
        })
    }
}

/// Fails with `DesignFailed` when `A` has more than `r` eigenvalues in the closed right half plane.
fn check_unstable_count(a: &DMatrix<f64>, r: usize) -> Result<Vec<Complex64>> {
    let eig = eig_ordered(a)?.eigenvalues;
    if let Some(l) = eig.get(r) {
        if l.re >= 0.0 {
            return Err(Error::DesignFailed { abscissa: l.re });
        }
    }
    Ok(eig)
}

fn verify(
    closed: &DMatrix<f64>,
    reduced: &DMatrix<f64>,
    eig_a: &[Complex64],
    gain: DMatrix<f64>,
    embedded: DMatrix<f64>,
    care_residual: Option<f64>,
) -> Result<GainSide> {
    let r = reduced.nrows();
    let full = eig_ordered(closed)?.eigenvalues;
    let small = eig_ordered(reduced)?.eigenvalues;
    let closed_loop_abscissa = full[0].re;
    if closed_loop_abscissa >= 0.0 {
        return Err(Error::DesignFailed {
            abscissa: closed_loop_abscissa,
        });
    }
    let rest = spectrum_difference(&full, &small);
    Ok(GainSide {
        gain,
        embedded,
        closed_loop_abscissa,
        reduced_abscissa: small[0].re,
        untouched_spectrum_error: spectrum_match_error(&rest, &eig_a[r..]),
        care_residual,
    })
}

/// Embeds a given `F_r` as `F_r V^T` and verifies `A - B F_r V^T`.
pub fn embed_feedback_gain(sys: &LtiSystem, pair: &SubspacePair, f_r: DMatrix<f64>) -> Result<GainSide> {
    embed_feedback(sys, pair, f_r, None)
}

fn embed_feedback(sys: &LtiSystem, pair: &SubspacePair, f_r: DMatrix<f64>, care: Option<f64>) -> Result<GainSide> {
    check_pair(sys, pair)?;
    if f_r.nrows() != sys.inputs() || f_r.ncols() != pair.r() {
        return Err(shape("feedback gain", format!("F_r must be {}x{}", sys.inputs(), pair.r())));
    }
    let eig_a = check_unstable_count(&sys.a, pair.r())?;
    let v = pair.v.matrix();
    let a_v = v.transpose() * &sys.a * v;
    let b_v = v.transpose() * &sys.b;
    let embedded = &f_r * v.transpose();
    let closed = &sys.a - &sys.b * &embedded;
    let reduced = a_v - b_v * &f_r;
    verify(&closed, &reduced, &eig_a, f_r, embedded, care)
}

/// Embeds a given `L_r` as `U L_r` and verifies `A - U L_r C`.
pub fn embed_observer_gain(sys: &LtiSystem, pair: &SubspacePair, l_r: DMatrix<f64>) -> Result<GainSide> {
    embed_observer(sys, pair, l_r, None)
}

fn embed_observer(sys: &LtiSystem, pair: &SubspacePair, l_r: DMatrix<f64>, care: Option<f64>) -> Result<GainSide> {
    check_pair(sys, pair)?;
    if l_r.nrows() != pair.r() || l_r.ncols() != sys.outputs() {
        return Err(shape("observer gain", format!("L_r must be {}x{}", pair.r(), sys.outputs())));
    }
    let eig_a = check_unstable_count(&sys.a, pair.r())?;
    let u = pair.u.matrix();
    let a_u = u.transpose() * &sys.a * u;
    let c_u = &sys.c * u;
    let embedded = u * &l_r;
    let closed = &sys.a - &embedded * &sys.c;
    let reduced = a_u - &l_r * c_u;
    verify(&closed, &reduced, &eig_a, l_r, embedded, care)
}

fn check_pair(sys: &LtiSystem, pair: &SubspacePair) -> Result<()> {
    if pair.u.n() != sys.states() {
        return Err(shape(
            "gain design",
            format!("pair has {} rows, system has {} states", pair.u.n(), sys.states()),
        ));
    }
    Ok(())
}

/// LQR feedback on `(A_V, B_V)`: `F_r = R^{-1} B_V^T P`.
pub fn design_feedback(sys: &LtiSystem, pair: &SubspacePair, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<GainDesign> {
    check_pair(sys, pair)?;
    let v = pair.v.matrix();
    let a_v = v.transpose() * &sys.a * v;
    let b_v = v.transpose() * &sys.b;
    let care = care_small(&a_v, &b_v, q, r)?;
    let f_r = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("R is not positive definite".into()))?
        .solve(&(b_v.transpose() * &care.p));
    let side = embed_feedback(sys, pair, f_r, Some(care.residual))?;
    Ok(GainDesign {
        observer: None,
        feedback: Some(side),
    })
}

/// Dual design on `(A_U^T, C_U^T)`: `L_r = P C_U^T R^{-1}`.
pub fn design_observer(sys: &LtiSystem, pair: &SubspacePair, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<GainDesign> {
    check_pair(sys, pair)?;
    let u = pair.u.matrix();
    let a_u = u.transpose() * &sys.a * u;
    let c_u = &sys.c * u;
    let care = care_small(&a_u.transpose(), &c_u.transpose(), q, r)?;
    let l_r = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("R is not positive definite".into()))?
        .solve(&(c_u * &care.p))
        .transpose();
    let side = embed_observer(sys, pair, l_r, Some(care.residual))?;
    Ok(GainDesign {
        observer: Some(side),
        feedback: None,
    })
}

/// Observer and feedback with identity weights.
pub fn design_both(sys: &LtiSystem, pair: &SubspacePair) -> Result<GainDesign> {
    let r = pair.r();
    let ir = DMatrix::identity(r, r);
    let obs = design_observer(sys, pair, &ir, &DMatrix::identity(sys.outputs(), sys.outputs()))?;
    let fb = design_feedback(sys, pair, &ir, &DMatrix::identity(sys.inputs(), sys.inputs()))?;
    Ok(obs.merge(fb))
}

/// `[[A - B F, B F], [0, A - L C]]` in `(x, e)` coordinates, with `F = F_r V^T`, `L = U L_r`.
pub fn closed_loop_assemble(sys: &LtiSystem, design: &GainDesign) -> Result<DMatrix<f64>> {
    let f = design.embedded_f().ok_or(Error::MissingGain("feedback"))?;
    let l = design.embedded_l().ok_or(Error::MissingGain("observer"))?;
    let n = sys.states();
    if f.ncols() != n || l.nrows() != n {
        return Err(shape("closed_loop_assemble", "gains do not match the system"));
    }
    let bf = &sys.b * f;
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(&sys.a - &bf));
    m.view_mut((0, n), (n, n)).copy_from(&bf);
    m.view_mut((n, n), (n, n)).copy_from(&(&sys.a - l * &sys.c));
    Ok(m)
}

/// Luenberger observer `dx^/dt = (A - L C) x^ + [B, L] [u; y]`, output `x^`.
pub fn observer_system(sys: &LtiSystem, design: &GainDesign) -> Result<LtiSystem> {
    let l = design.embedded_l().ok_or(Error::MissingGain("observer"))?;
    let n = sys.states();
    let mut b = DMatrix::<f64>::zeros(n, sys.inputs() + sys.outputs());
    b.view_mut((0, 0), (n, sys.inputs())).copy_from(&sys.b);
    b.view_mut((0, sys.inputs()), (n, sys.outputs())).copy_from(l);
    LtiSystem::new(&sys.a - l * &sys.c, b, DMatrix::identity(n, n))
}

/// JSON for the eigenvalues of a closed-loop matrix.
pub fn spectrum_json(m: &DMatrix<f64>) -> Result<Value> {
    Ok(complex_json(&eig_ordered(m)?.eigenvalues))
}
