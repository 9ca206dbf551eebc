//! Projection-based reduction of `dx/dt = A x + B u, y = C x` onto dominant
//! right (`U`) and left (`V`) invariant subspaces.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{shape, Error, Result};
use crate::linalg::{eig_ordered, matrix_exponential, orthonormal_complement, spectral_abscissa, svd_small};
use crate::ode::rk4_step;
use crate::ojaflow::FlowConfig;
use crate::stiefel::{StiefelPoint, ORTHO_TOL};
use crate::subspace::{complex_json, dominant_subspace, matrix_json};

pub type CMatrix = DMatrix<Complex64>;

/// Block-triangularity tolerance for certified pairs.
pub const PAIR_TOL: f64 = 1e-6;

/// Largest accepted condition number of `V^T U`.
pub const MAX_COUPLING_CONDITION: f64 = 1e8;

/// A response is flagged as identically zero below this (relative to `1 + |B| |C|`).
pub const ZERO_TRANSFER_TOL: f64 = 1e-6;

/// Evaluation points closer than this to an eigenvalue are rejected.
pub const POLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    #[serde(default)]
    pub label: Option<String>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n || c.ncols() != n {
            return Err(shape(
                "LtiSystem",
                format!(
                    "A {}x{}, B {}x{}, C {}x{}",
                    a.nrows(),
                    a.ncols(),
                    b.nrows(),
                    b.ncols(),
                    c.nrows(),
                    c.ncols()
                ),
            ));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { a, b, c, label: None })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "label": self.label,
            "A": matrix_json(&self.a),
            "B": matrix_json(&self.b),
            "C": matrix_json(&self.c),
        })
    }
}

/// Right and left dominant bases with their complements and coupling `V^T U`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubspacePair {
    pub u: StiefelPoint,
    pub v: StiefelPoint,
    pub u_perp: StiefelPoint,
    pub v_perp: StiefelPoint,
    pub coupling: DMatrix<f64>,
    pub coupling_condition: f64,
}

impl SubspacePair {
    /// Builds and certifies a pair from right basis `u` and left basis `v` of `A`.
    pub fn from_bases(a: &DMatrix<f64>, u: StiefelPoint, v: StiefelPoint) -> Result<Self> {
        if u.n() != a.nrows() || v.n() != a.nrows() || u.r() != v.r() {
            return Err(shape("SubspacePair", "U, V and A dimensions differ"));
        }
        u.ensure_certified(ORTHO_TOL)?;
        v.ensure_certified(ORTHO_TOL)?;
        let u_perp = orthonormal_complement(&u)?;
        let v_perp = orthonormal_complement(&v)?;
        let lower = (u_perp.matrix().transpose() * a * u.matrix()).norm();
        let upper = (v.matrix().transpose() * a * v_perp.matrix()).norm();
        if lower.max(upper) >= PAIR_TOL {
            return Err(Error::NotInvariant {
                residual: lower.max(upper),
            });
        }
        let coupling = v.matrix().transpose() * u.matrix();
        let sv = svd_small(&coupling)?;
        let smax = sv.sigma.first().copied().unwrap_or(0.0);
        let smin = sv.sigma.last().copied().unwrap_or(0.0);
        let coupling_condition = if smin > 1e-9 { smax / smin } else { f64::INFINITY };
        if coupling_condition > MAX_COUPLING_CONDITION {
            return Err(Error::IllConditionedCoupling {
                condition: coupling_condition,
            });
        }
        Ok(Self {
            u,
            v,
            u_perp,
            v_perp,
            coupling,
            coupling_condition,
        })
    }

    pub fn r(&self) -> usize {
        self.u.r()
    }

    /// `(V^T U)^{-1} M`.
    fn coupling_solve(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.coupling
            .clone()
            .lu()
            .solve(m)
            .ok_or(Error::SingularSolve("V^T U"))
    }
}

/// Dominant right subspace from `A` and left subspace from `A^T`.
pub fn dual_pair(a: &DMatrix<f64>, r: usize, cfg: &FlowConfig) -> Result<SubspacePair> {
    let right = dominant_subspace(a, r, cfg, None)?;
    let left = dominant_subspace(&a.transpose(), r, cfg, None)?;
    SubspacePair::from_bases(a, right.basis, left.basis)
}

/// `(W^T A W, W^T B, C W)`.
pub fn project_system(sys: &LtiSystem, w: &StiefelPoint) -> Result<LtiSystem> {
    if w.n() != sys.states() {
        return Err(shape("project_system", format!("W has {} rows, system has {} states", w.n(), sys.states())));
    }
    let wm = w.matrix();
    LtiSystem::new(wm.transpose() * &sys.a * wm, wm.transpose() * &sys.b, &sys.c * wm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// `(A_U, B_U, C_U)`.
    ObsPreserving,
    /// `(A_V, B_V, C_V)`.
    CtrlPreserving,
    /// `(A_U, (V^T U)^{-1} B_V, C_U)`.
    Minimal,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::ObsPreserving => "obs",
            ModelKind::CtrlPreserving => "ctrl",
            ModelKind::Minimal => "minimal",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedModel {
    pub kind: ModelKind,
    pub system: LtiSystem,
}

impl ReducedModel {
    pub fn to_json(&self) -> Value {
        let eig = eig_ordered(&self.system.a).map(|s| complex_json(&s.eigenvalues)).unwrap_or(Value::Null);
        json!({
            "kind": self.kind.name(),
            "order": self.system.states(),
            "A_r": matrix_json(&self.system.a),
            "B_r": matrix_json(&self.system.b),
            "C_r": matrix_json(&self.system.c),
            "eigenvalues": eig,
        })
    }
}

pub fn obs_preserving_model(sys: &LtiSystem, pair: &SubspacePair) -> Result<ReducedModel> {
    Ok(ReducedModel {
        kind: ModelKind::ObsPreserving,
        system: project_system(sys, &pair.u)?,
    })
}

pub fn ctrl_preserving_model(sys: &LtiSystem, pair: &SubspacePair) -> Result<ReducedModel> {
    Ok(ReducedModel {
        kind: ModelKind::CtrlPreserving,
        system: project_system(sys, &pair.v)?,
    })
}

/// `(A_U, (V^T U)^{-1} B_V, C_U)`.
pub fn minimal_reduced_model(sys: &LtiSystem, pair: &SubspacePair) -> Result<ReducedModel> {
    let pu = project_system(sys, &pair.u)?;
    let b_v = pair.v.matrix().transpose() * &sys.b;
    let b_r = pair.coupling_solve(&b_v)?;
    Ok(ReducedModel {
        kind: ModelKind::Minimal,
        system: LtiSystem::new(pu.a, b_r, pu.c)?,
    })
}

/// The second minimal realization `(A_V, B_V, C_U (V^T U)^{-1})`.
pub fn minimal_form2(sys: &LtiSystem, pair: &SubspacePair) -> Result<LtiSystem> {
    let pv = project_system(sys, &pair.v)?;
    let c_u = &sys.c * pair.u.matrix();
    // C_U X^{-1} = (X^{-T} C_U^T)^T
    let ct = pair
        .coupling
        .transpose()
        .lu()
        .solve(&c_u.transpose())
        .ok_or(Error::SingularSolve("V^T U"))?;
    LtiSystem::new(pv.a, pv.b, ct.transpose())
}

pub fn reduced_model(sys: &LtiSystem, pair: &SubspacePair, kind: ModelKind) -> Result<ReducedModel> {
    match kind {
        ModelKind::ObsPreserving => obs_preserving_model(sys, pair),
        ModelKind::CtrlPreserving => ctrl_preserving_model(sys, pair),
        ModelKind::Minimal => minimal_reduced_model(sys, pair),
    }
}

fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// `(sI - A)^{-1} M` for complex `M`.
fn resolvent_solve(a: &DMatrix<f64>, s: Complex64, m: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let mut k = -complexify(a);
    for i in 0..n {
        k[(i, i)] += s;
    }
    k.lu().solve(m).ok_or(Error::SingularSolve("sI - A"))
}

/// Transfer matrix evaluator with cached poles.
#[derive(Debug, Clone)]
pub struct TransferEvaluator<'a> {
    sys: &'a LtiSystem,
    b: CMatrix,
    c: CMatrix,
    poles: Vec<Complex64>,
}

impl<'a> TransferEvaluator<'a> {
    pub fn new(sys: &'a LtiSystem) -> Result<Self> {
        let poles = if sys.states() == 0 {
            Vec::new()
        } else {
            eig_ordered(&sys.a)?.eigenvalues
        };
        Ok(Self {
            sys,
            b: complexify(&sys.b),
            c: complexify(&sys.c),
            poles,
        })
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    /// `C (sI - A)^{-1} B`, solved column by column.
    pub fn eval(&self, s: Complex64) -> Result<CMatrix> {
        if let Some(p) = self.poles.iter().find(|p| (s - **p).norm() <= POLE_TOL) {
            return Err(Error::NearPole { pole: *p });
        }
        if self.sys.states() == 0 {
            return Ok(CMatrix::zeros(self.sys.outputs(), self.sys.inputs()));
        }
        let x = resolvent_solve(&self.sys.a, s, &self.b)?;
        Ok(&self.c * x)
    }
}

/// `C (sI - A)^{-1} B`.
pub fn eval_transfer(sys: &LtiSystem, s: Complex64) -> Result<CMatrix> {
    TransferEvaluator::new(sys)?.eval(s)
}

/// `C exp(A t) B`.
pub fn impulse_response(sys: &LtiSystem, t: f64) -> Result<DMatrix<f64>> {
    Ok(&sys.c * matrix_exponential(&sys.a, t)? * &sys.b)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyResponse {
    pub label: String,
    pub outputs: usize,
    pub inputs: usize,
    pub frequencies: Vec<f64>,
    /// Per frequency, `outputs x inputs` entries in row-major order; NaN at flagged poles.
    pub values: Vec<Vec<Complex64>>,
    pub magnitude_db: Vec<Vec<f64>>,
    /// Unwrapped phase in degrees.
    pub phase_deg: Vec<Vec<f64>>,
    /// Indices of frequencies that fell on a pole.
    pub near_pole: Vec<usize>,
    /// True when every evaluated entry vanishes.
    pub zero_transfer: bool,
}

/// `points` logarithmically spaced frequencies from `w_min` to `w_max`.
pub fn log_grid(w_min: f64, w_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(w_min > 0.0 && w_max > w_min && w_max.is_finite()) || points < 2 {
        return Err(Error::InvalidArgument("need 0 < w_min < w_max and at least 2 points".into()));
    }
    let (l0, l1) = (w_min.log10(), w_max.log10());
    Ok((0..points)
        .map(|k| {
            if k == points - 1 {
                w_max
            } else {
                10f64.powf(l0 + (l1 - l0) * k as f64 / (points - 1) as f64)
            }
        })
        .collect())
}

fn wrap180(d: f64) -> f64 {
    let mut x = (d + 180.0).rem_euclid(360.0) - 180.0;
    if x == -180.0 {
        x = 180.0;
    }
    x
}

fn evaluate_grid(ev: &TransferEvaluator, freqs: &[f64], jobs: usize) -> Result<Vec<Option<CMatrix>>> {
    let eval_one = |w: f64| -> Result<Option<CMatrix>> {
        match ev.eval(Complex64::new(0.0, w)) {
            Ok(g) => Ok(Some(g)),
            Err(Error::NearPole { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    if jobs <= 1 || freqs.len() < 2 {
        return freqs.iter().map(|&w| eval_one(w)).collect();
    }
    let chunk = freqs.len().div_ceil(jobs);
    let parts: Vec<Result<Vec<Option<CMatrix>>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = freqs
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|&w| eval_one(w)).collect::<Result<Vec<_>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("frequency worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(freqs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Frequency response at `s = i w` over a log grid, one result per model.
/// Frequencies on a pole are flagged, not fatal. `jobs > 1` splits the grid
/// across threads; results stay in grid order.
pub fn bode_grid(
    models: &[&LtiSystem],
    w_min: f64,
    w_max: f64,
    points: usize,
    jobs: usize,
) -> Result<Vec<FrequencyResponse>> {
    let freqs = log_grid(w_min, w_max, points)?;
    let mut out = Vec::with_capacity(models.len());
    for (idx, sys) in models.iter().enumerate() {
        let ev = TransferEvaluator::new(sys)?;
        let vals = evaluate_grid(&ev, &freqs, jobs)?;
        let entries = sys.outputs() * sys.inputs();
        let mut values = Vec::with_capacity(freqs.len());
        let mut mags = Vec::with_capacity(freqs.len());
        let mut phases: Vec<Vec<f64>> = Vec::with_capacity(freqs.len());
        let mut near_pole = Vec::new();
        let mut prev_raw: Vec<Option<f64>> = vec![None; entries];
        for (k, v) in vals.into_iter().enumerate() {
            let row: Vec<Complex64> = match v {
                Some(g) => (0..sys.outputs())
                    .flat_map(|i| (0..sys.inputs()).map(move |j| (i, j)))
                    .map(|(i, j)| g[(i, j)])
                    .collect(),
                None => {
                    near_pole.push(k);
                    vec![Complex64::new(f64::NAN, f64::NAN); entries]
                }
            };
            let mut mrow = Vec::with_capacity(entries);
            let mut prow = Vec::with_capacity(entries);
            for (e, z) in row.iter().enumerate() {
                mrow.push(20.0 * z.norm().log10());
                let raw = z.im.atan2(z.re).to_degrees();
                let unwrapped = match (prev_raw[e], phases.last()) {
                    (Some(pr), Some(last)) if raw.is_finite() && last[e].is_finite() => last[e] + wrap180(raw - pr),
                    _ => raw,
                };
                if raw.is_finite() {
                    prev_raw[e] = Some(raw);
                }
                prow.push(unwrapped);
            }
            values.push(row);
            mags.push(mrow);
            phases.push(prow);
        }
        out.push(FrequencyResponse {
            label: sys.label.clone().unwrap_or_else(|| format!("model{}", idx + 1)),
            outputs: sys.outputs(),
            inputs: sys.inputs(),
            frequencies: freqs.clone(),
            values,
            magnitude_db: mags,
            phase_deg: phases,
            near_pole,
            zero_transfer: is_zero_transfer(sys),
        });
    }
    Ok(out)
}

/// True when every Markov parameter `C A^k B` (`k < n`, scaled by `max(1, |A|)^k`)
/// is below `ZERO_TRANSFER_TOL (1 + |B| |C|)`, i.e. the transfer function vanishes identically.
pub fn is_zero_transfer(sys: &LtiSystem) -> bool {
    let tol = ZERO_TRANSFER_TOL * (1.0 + sys.b.norm() * sys.c.norm());
    let scale = sys.a.norm().max(1.0);
    let mut akb = sys.b.clone();
    for _ in 0..sys.states().max(1) {
        if (&sys.c * &akb).norm() > tol {
            return false;
        }
        akb = &sys.a * akb / scale;
    }
    true
}

impl FrequencyResponse {
    /// CSV `omega,mag_db_ij...,phase_deg_ij...` with 1-based `ij` in row-major order.
    pub fn to_csv(&self) -> String {
        let idx: Vec<String> = (1..=self.outputs)
            .flat_map(|i| (1..=self.inputs).map(move |j| format!("{i}{j}")))
            .collect();
        let mut out = String::from("omega");
        for s in &idx {
            out.push_str(&format!(",mag_db_{s}"));
        }
        for s in &idx {
            out.push_str(&format!(",phase_deg_{s}"));
        }
        out.push('\n');
        for k in 0..self.frequencies.len() {
            out.push_str(&format!("{:e}", self.frequencies[k]));
            for v in self.magnitude_db[k].iter().chain(&self.phase_deg[k]) {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn sidecar_json(&self) -> Value {
        json!({
            "label": self.label,
            "outputs": self.outputs,
            "inputs": self.inputs,
            "points": self.frequencies.len(),
            "w_min": self.frequencies.first(),
            "w_max": self.frequencies.last(),
            "near_pole": self.near_pole,
            "zero_transfer": self.zero_transfer,
            "note": if self.zero_transfer { Some("zero transfer function") } else { None },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GramianSide {
    /// Observability Gramian of `(A_U, C_U)`.
    Obs,
    /// Controllability Gramian of `(A_V, B_V)`.
    Ctrl,
}

/// Finite-horizon Gramian of a reduced pair, from the Lyapunov ODE
/// `dG/dt = M^T G + G M + Q` integrated by RK4 with `h = T / 2000`.
pub fn reduced_gramian(sys: &LtiSystem, pair: &SubspacePair, side: GramianSide, t_final: f64) -> Result<DMatrix<f64>> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let (m, q) = match side {
        GramianSide::Obs => {
            let p = project_system(sys, &pair.u)?;
            (p.a, p.c.transpose() * &p.c)
        }
        GramianSide::Ctrl => {
            let p = project_system(sys, &pair.v)?;
            (p.a.transpose(), &p.b * p.b.transpose())
        }
    };
    let r = m.nrows();
    let mt = m.transpose();
    let f = |g: &DMatrix<f64>| &mt * g + g * &m + &q;
    let steps = 2000;
    let h = t_final / steps as f64;
    let mut g = DMatrix::zeros(r, r);
    for _ in 0..steps {
        g = rk4_step(&f, &g, h);
        g = (&g + g.transpose()) * 0.5;
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecompositionSide {
    U,
    V,
}

/// `P = P_main + P_perp + coupling_term` evaluated at one point.
#[derive(Debug, Clone)]
pub struct ErrorDecomposition {
    pub p: CMatrix,
    pub p_main: CMatrix,
    pub p_perp: CMatrix,
    pub coupling_term: CMatrix,
    /// `|P - (P_main + P_perp + coupling_term)|_F`.
    pub identity_residual: f64,
}

impl ErrorDecomposition {
    pub fn relative_residual(&self) -> f64 {
        self.identity_residual / (1.0 + self.p.norm())
    }
}

fn block_pieces(sys: &LtiSystem, w: &StiefelPoint, w_perp: &StiefelPoint) -> (LtiSystem, LtiSystem) {
    let wm = w.matrix();
    let pm = w_perp.matrix();
    let main = LtiSystem {
        a: wm.transpose() * &sys.a * wm,
        b: wm.transpose() * &sys.b,
        c: &sys.c * wm,
        label: None,
    };
    let perp = LtiSystem {
        a: pm.transpose() * &sys.a * pm,
        b: pm.transpose() * &sys.b,
        c: &sys.c * pm,
        label: None,
    };
    (main, perp)
}

/// Splits the full transfer function along `[U, U_perp]` (block upper
/// triangular) or `[V, V_perp]` (block lower triangular).
///
/// U side: `P = P_U + P_Uperp + C_U (sI - A_U)^{-1} U^T A U_perp (sI - A_Uperp)^{-1} B_Uperp`.
/// V side: `P = P_V + P_Vperp + C_Vperp (sI - A_Vperp)^{-1} V_perp^T A V (sI - A_V)^{-1} B_V`.
pub fn error_decomposition(
    sys: &LtiSystem,
    pair: &SubspacePair,
    s: Complex64,
    side: DecompositionSide,
) -> Result<ErrorDecomposition> {
    let p = eval_transfer(sys, s)?;
    let (w, w_perp) = match side {
        DecompositionSide::U => (&pair.u, &pair.u_perp),
        DecompositionSide::V => (&pair.v, &pair.v_perp),
    };
    let (main, perp) = block_pieces(sys, w, w_perp);
    let p_main = eval_transfer(&main, s)?;
    let p_perp = eval_transfer(&perp, s)?;
    let coupling_term = match side {
        DecompositionSide::U => {
            let a12 = complexify(&(pair.u.matrix().transpose() * &sys.a * pair.u_perp.matrix()));
            let x2 = resolvent_solve(&perp.a, s, &complexify(&perp.b))?;
            let x1 = resolvent_solve(&main.a, s, &(a12 * x2))?;
            complexify(&main.c) * x1
        }
        DecompositionSide::V => {
            let a21 = complexify(&(pair.v_perp.matrix().transpose() * &sys.a * pair.v.matrix()));
            let x1 = resolvent_solve(&main.a, s, &complexify(&main.b))?;
            let x2 = resolvent_solve(&perp.a, s, &(a21 * x1))?;
            complexify(&perp.c) * x2
        }
    };
    let identity_residual = (&p - (&p_main + &p_perp + &coupling_term)).norm();
    Ok(ErrorDecomposition {
        p,
        p_main,
        p_perp,
        coupling_term,
        identity_residual,
    })
}

/// The minimal model's transfer function written as corrections of the two
/// one-sided models:
///
/// - `P_U + C_U (sI - A_U)^{-1} (V^T U)^{-1} V^T U_perp B_Uperp`
/// - `P_V + C_Vperp V_perp^T U (V^T U)^{-1} (sI - A_V)^{-1} B_V`
pub fn minimal_bridges(sys: &LtiSystem, pair: &SubspacePair, s: Complex64) -> Result<(CMatrix, CMatrix)> {
    let pu = project_system(sys, &pair.u)?;
    let pv = project_system(sys, &pair.v)?;
    let b_perp = pair.u_perp.matrix().transpose() * &sys.b;
    let corr_b = pair.coupling_solve(&(pair.v.matrix().transpose() * pair.u_perp.matrix() * b_perp))?;
    let x = resolvent_solve(&pu.a, s, &complexify(&corr_b))?;
    let via_u = eval_transfer(&pu, s)? + complexify(&pu.c) * x;

    let c_vperp = &sys.c * pair.v_perp.matrix();
    // V_perp^T U (V^T U)^{-1} = ((V^T U)^{-T} U^T V_perp)^T
    let left = pair
        .coupling
        .transpose()
        .lu()
        .solve(&(pair.u.matrix().transpose() * pair.v_perp.matrix()))
        .ok_or(Error::SingularSolve("V^T U"))?
        .transpose();
    let y = resolvent_solve(&pv.a, s, &complexify(&pv.b))?;
    let via_v = eval_transfer(&pv, s)? + complexify(&(c_vperp * left)) * y;
    Ok((via_u, via_v))
}

/// Default minimum ratio `|Re lambda_{r+1}| / |Re lambda_r|` before a warning is raised.
pub const TIMESCALE_RATIO: f64 = 5.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlowFastModel {
    pub a_s: DMatrix<f64>,
    pub b_s: DMatrix<f64>,
    pub c_s: DMatrix<f64>,
    pub d_s: DMatrix<f64>,
    pub fast_block: DMatrix<f64>,
    pub timescale_ratio: f64,
    /// `|(-C_s A_s^{-1} B_s + D_s) - (-C A^{-1} B)|_F`.
    pub dc_gain_error: f64,
    pub warnings: Vec<String>,
}

impl SlowFastModel {
    pub fn to_json(&self) -> Value {
        json!({
            "A_s": matrix_json(&self.a_s),
            "B_s": matrix_json(&self.b_s),
            "C_s": matrix_json(&self.c_s),
            "D_s": matrix_json(&self.d_s),
            "fast_block": matrix_json(&self.fast_block),
            "timescale_ratio": self.timescale_ratio,
            "dc_gain_error": self.dc_gain_error,
            "warnings": self.warnings,
        })
    }

    pub fn dc_gain(&self) -> Result<DMatrix<f64>> {
        Ok(-&self.c_s * solve(&self.a_s, &self.b_s)? + &self.d_s)
    }
}

fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone().lu().solve(b).ok_or(Error::SingularSolve("state matrix"))
}

/// `-C A^{-1} B`.
pub fn dc_gain(sys: &LtiSystem) -> Result<DMatrix<f64>> {
    Ok(-&sys.c * solve(&sys.a, &sys.b)?)
}

/// Quasi-steady-state reduction onto the slow dominant subspace of a Hurwitz system.
///
/// In the coordinates `[U, U_perp]` the fast states are eliminated at steady state:
/// `A_s = A_U - A_12 A_22^{-1} A_21`, `B_s = B_U - A_12 A_22^{-1} B_perp`,
/// `C_s = C U - C U_perp A_22^{-1} A_21`, `D_s = -C U_perp A_22^{-1} B_perp`.
/// `A_21 = U_perp^T A U` vanishes for an exactly invariant `U` (leaving `A_s = A_U`,
/// `C_s = C U`); keeping it makes the DC gain exact regardless of the flow tolerance.
pub fn slow_fast_reduce(sys: &LtiSystem, r: usize, cfg: &FlowConfig, ratio_threshold: f64) -> Result<SlowFastModel> {
    let abscissa = spectral_abscissa(&sys.a)?;
    if abscissa >= 0.0 {
        return Err(Error::NotHurwitz { abscissa });
    }
    let res = dominant_subspace(&sys.a, r, cfg, None)?;
    let u = res.basis;
    let u_perp = orthonormal_complement(&u)?;
    let (um, pm) = (u.matrix(), u_perp.matrix());
    let a11 = um.transpose() * &sys.a * um;
    let a12 = um.transpose() * &sys.a * pm;
    let a21 = pm.transpose() * &sys.a * um;
    let a22 = pm.transpose() * &sys.a * pm;
    let b_u = um.transpose() * &sys.b;
    let b_perp = pm.transpose() * &sys.b;
    let c_perp = &sys.c * pm;
    let x = solve(&a22, &b_perp)?;
    let y = solve(&a22, &a21)?;
    let a_s = a11 - &a12 * &y;
    let b_s = b_u - &a12 * &x;
    let c_s = &sys.c * um - &c_perp * &y;
    let d_s = -c_perp * &x;

    let spec = eig_ordered(&sys.a)?;
    let slow = spec.eigenvalues[r - 1].re.abs();
    let fast = spec.eigenvalues[r].re.abs();
    let timescale_ratio = if slow > 0.0 { fast / slow } else { f64::INFINITY };
    let mut warnings = res.warnings;
    if timescale_ratio < ratio_threshold {
        warnings.push(format!(
            "weak timescale separation: ratio {timescale_ratio:.3} below {ratio_threshold}"
        ));
    }
    let mut model = SlowFastModel {
        a_s,
        b_s,
        c_s,
        d_s,
        fast_block: a22,
        timescale_ratio,
        dc_gain_error: 0.0,
        warnings,
    };
    model.dc_gain_error = (model.dc_gain()? - dc_gain(sys)?).norm();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ojaflow::{projector_distance, ProjectorNorm};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn example_a() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0])
    }

    fn example_sys() -> LtiSystem {
        LtiSystem::new(
            example_a(),
            DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]),
            DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
        )
        .unwrap()
    }

    // P(s) = (2s+1)/(s^3 - s) has residues -1 at 0, 3/2 at 1 and -1/2 at -1.
    // The minimal model keeps the first two: (1/2)(s+2)/(s(s-1)).
    fn example_prd(s: Complex64) -> Complex64 {
        -1.0 / s + 1.5 / (s - 1.0)
    }

    // First row of the orthogonal projector onto span{[2,2,3], [0,1,1]} is
    // [8, -2, 2]/9; applied to (sI - A)^{-1} B this gives (2/9)(s+5)/(s(s-1)).
    fn example_pv(s: Complex64) -> Complex64 {
        let x1 = (s * 2.0 + 1.0) / (s * (s * s - 1.0));
        let x2 = 1.0 / (s * (s + 1.0));
        let x3 = 1.0 / (s + 1.0);
        (x1 * 8.0 - x2 * 2.0 + x3 * 2.0) / 9.0
    }

    fn tight() -> FlowConfig {
        FlowConfig {
            tol_invariance: 1e-12,
            ..FlowConfig::default()
        }
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar(m: &CMatrix) -> Complex64 {
        m[(0, 0)]
    }

    fn test_points() -> Vec<Complex64> {
        (0..10).map(|k| c(0.3 + 0.7 * k as f64, 1.1 - 0.4 * k as f64)).collect()
    }

    fn gaussian(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(rng))
    }

    fn gapped_system(seed: u64, n: usize, r: usize) -> LtiSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let a = gaussian(n, n, &mut rng);
            let spec = eig_ordered(&a).unwrap();
            if spec.splits_block_at(r) || spec.gap_at(r).unwrap() < 0.3 {
                continue;
            }
            let b = gaussian(n, 2, &mut rng);
            let cm = gaussian(2, n, &mut rng);
            return LtiSystem::new(a, b, cm).unwrap();
        }
    }

    #[test]
    fn dual_pair_of_example() {
        let pair = dual_pair(&example_a(), 2, &tight()).unwrap();
        let u_target = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 0.0]));
        assert!((pair.u.projector() - u_target).norm() < 1e-6);
        let v_ref = crate::linalg::qr_orthonormalize(&DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 2.0, 1.0, 3.0, 1.0])).unwrap();
        assert!(projector_distance(&pair.v, &v_ref, ProjectorNorm::Spectral).unwrap() < 1e-6);
    }

    #[test]
    fn dual_pair_of_symmetric_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = gaussian(5, 5, &mut rng);
        let a = &g + g.transpose();
        let pair = dual_pair(&a, 2, &tight()).unwrap();
        assert!(projector_distance(&pair.u, &pair.v, ProjectorNorm::Spectral).unwrap() < 1e-6);
        let ctc = pair.coupling.transpose() * &pair.coupling;
        assert!((ctc - DMatrix::identity(2, 2)).norm() < 1e-6);
    }

    #[test]
    fn full_transfer_at_two() {
        let g = eval_transfer(&example_sys(), c(2.0, 0.0)).unwrap();
        assert!((scalar(&g) - c(5.0 / 6.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn transfer_decays_at_infinity() {
        let sys = example_sys();
        let g1 = eval_transfer(&sys, c(1e3, 0.0)).unwrap().norm();
        let g2 = eval_transfer(&sys, c(1e6, 0.0)).unwrap().norm();
        assert!(g2 < g1 && g2 < 1e-10);
    }

    #[test]
    fn near_pole_rejected() {
        match eval_transfer(&example_sys(), c(1.0 + 1e-12, 0.0)) {
            Err(Error::NearPole { pole }) => assert!((pole - c(1.0, 0.0)).norm() < 1e-10),
            other => panic!("expected NearPole, got {other:?}"),
        }
    }

    #[test]
    fn identity_projection_is_noop() {
        let sys = example_sys();
        let w = StiefelPoint::new(DMatrix::identity(3, 3));
        let p = project_system(&sys, &w).unwrap();
        assert_eq!(p, sys);
        let bad = StiefelPoint::new(DMatrix::identity(2, 2));
        assert!(matches!(project_system(&sys, &bad), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn example_reduced_transfer_functions() {
        let sys = example_sys();
        let pair = dual_pair(&sys.a, 2, &tight()).unwrap();
        let pu = project_system(&sys, &pair.u).unwrap();
        let pv = project_system(&sys, &pair.v).unwrap();
        let rd = minimal_reduced_model(&sys, &pair).unwrap();
        for s in test_points() {
            assert!(scalar(&eval_transfer(&pu, s).unwrap()).norm() < 1e-9);
            let gv = scalar(&eval_transfer(&pv, s).unwrap());
            let want = example_pv(s);
            assert!((gv - want).norm() < 1e-9 * want.norm());
            let gr = scalar(&eval_transfer(&rd.system, s).unwrap());
            let want = example_prd(s);
            assert!((gr - want).norm() < 1e-9 * want.norm());
        }
        let at2 = scalar(&eval_transfer(&rd.system, c(2.0, 0.0)).unwrap());
        assert!((at2 - c(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn minimal_forms_and_bridges_agree() {
        for seed in 0..5 {
            let sys = gapped_system(seed, 6, 2);
            let pair = dual_pair(&sys.a, 2, &tight()).unwrap();
            let f1 = minimal_reduced_model(&sys, &pair).unwrap().system;
            let f2 = minimal_form2(&sys, &pair).unwrap();
            for s in test_points() {
                let g1 = eval_transfer(&f1, s).unwrap();
                let g2 = eval_transfer(&f2, s).unwrap();
                assert!((&g1 - &g2).norm() < 1e-9 * (1.0 + g1.norm()));
                let (bu, bv) = minimal_bridges(&sys, &pair, s).unwrap();
                assert!((&g1 - bu).norm() < 1e-9 * (1.0 + g1.norm()));
                assert!((&g1 - bv).norm() < 1e-9 * (1.0 + g1.norm()));
            }
            // A_U = X^{-1} A_V X with X = V^T U.
            let a_v = project_system(&sys, &pair.v).unwrap().a;
            let sim = pair.coupling_solve(&(&a_v * &pair.coupling)).unwrap();
            assert!((sim - &f1.a).norm() < 1e-7);
        }
    }

    #[test]
    fn symmetric_minimal_equals_obs_model_up_to_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = gaussian(5, 5, &mut rng);
        let a = &g + g.transpose();
        let b = gaussian(5, 1, &mut rng);
        let sys = LtiSystem::new(a, b.clone(), b.transpose()).unwrap();
        let pair = dual_pair(&sys.a, 2, &tight()).unwrap();
        let rd = minimal_reduced_model(&sys, &pair).unwrap().system;
        let obs = obs_preserving_model(&sys, &pair).unwrap().system;
        for s in test_points() {
            let d = eval_transfer(&rd, s).unwrap() - eval_transfer(&obs, s).unwrap();
            assert!(d.norm() < 1e-8);
        }
    }

    #[test]
    fn error_decomposition_identities() {
        let sys = example_sys();
        let pair = dual_pair(&sys.a, 2, &tight()).unwrap();
        for side in [DecompositionSide::U, DecompositionSide::V] {
            let d = error_decomposition(&sys, &pair, c(1.0, 1.0), side).unwrap();
            assert!(d.identity_residual < 1e-10 * (1.0 + d.p.norm()), "{side:?}: {}", d.identity_residual);
        }
    }

    #[test]
    fn normal_matrix_has_no_coupling_term() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.5, -1.0, -3.0]));
        let sys = LtiSystem::new(a, DMatrix::from_element(4, 1, 1.0), DMatrix::from_element(1, 4, 1.0)).unwrap();
        let pair = dual_pair(&sys.a, 2, &tight()).unwrap();
        let d = error_decomposition(&sys, &pair, c(0.2, 0.7), DecompositionSide::U).unwrap();
        assert!(d.coupling_term.norm() < 1e-10);
        assert!((&d.p - (&d.p_main + &d.p_perp)).norm() < 1e-10);
    }

    #[test]
    fn bode_of_integrator() {
        let sys = LtiSystem::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let r = &bode_grid(&[&sys], 0.1, 100.0, 31, 1).unwrap()[0];
        for k in 0..r.frequencies.len() {
            let expect = -20.0 * r.frequencies[k].log10();
            assert!((r.magnitude_db[k][0] - expect).abs() < 1e-9);
            assert!((r.phase_deg[k][0] + 90.0).abs() < 1e-9);
        }
        let csv = r.to_csv();
        assert!(csv.starts_with("omega,mag_db_11,phase_deg_11\n"));
        assert_eq!(csv.lines().count(), 32);
    }

    #[test]
    fn bode_example_ratio_and_low_frequency_tracking() {
        let sys = example_sys().with_label("P");
        let pair = dual_pair(&sys.a, 2, &tight()).unwrap();
        let pv = project_system(&sys, &pair.v).unwrap().with_label("P_V");
        let rd = minimal_reduced_model(&sys, &pair).unwrap().system.with_label("P_rd");
        let out = bode_grid(&[&sys, &pv, &rd], 1e-2, 1e2, 41, 3).unwrap();
        let serial = bode_grid(&[&sys, &pv, &rd], 1e-2, 1e2, 41, 1).unwrap();
        assert_eq!(out[2].to_csv(), serial[2].to_csv());
        // omega = 10 is grid index 30.
        let w10 = 30;
        assert!((out[0].frequencies[w10] - 10.0).abs() < 1e-9);
        let diff = out[2].magnitude_db[w10][0] - out[1].magnitude_db[w10][0];
        let s = c(0.0, 10.0);
        let want = 20.0 * (example_prd(s).norm() / example_pv(s).norm()).log10();
        assert!((diff - want).abs() < 1e-8);
        // Low-frequency slope is -20 dB/decade for all three.
        for r in &out {
            let slope = r.magnitude_db[10][0] - r.magnitude_db[0][0];
            assert!((slope + 20.0).abs() < 0.5, "{}: {slope}", r.label);
        }
    }

    #[test]
    fn obs_model_of_example_is_flagged_zero() {
        let sys = example_sys();
        let pair = dual_pair(&sys.a, 2, &tight()).unwrap();
        let obs = obs_preserving_model(&sys, &pair).unwrap().system;
        let r = &bode_grid(&[&obs], 0.1, 10.0, 5, 1).unwrap()[0];
        assert!(r.zero_transfer);
        // Default flow tolerance; the grid reaches close to the pole at 0.
        let pair = dual_pair(&sys.a, 2, &FlowConfig::default()).unwrap();
        let obs = obs_preserving_model(&sys, &pair).unwrap().system;
        assert!(bode_grid(&[&obs], 1e-3, 10.0, 5, 1).unwrap()[0].zero_transfer);
        assert!(!is_zero_transfer(&sys));
        assert!(!is_zero_transfer(&minimal_reduced_model(&sys, &pair).unwrap().system));
    }

    #[test]
    fn bode_flags_pole_on_axis() {
        let sys = LtiSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let r = &bode_grid(&[&sys], 0.1, 10.0, 3, 1).unwrap()[0];
        assert_eq!(r.near_pole, vec![1]);
    }

    #[test]
    fn gramian_cases() {
        let sys = example_sys();
        let pair = dual_pair(&sys.a, 2, &tight()).unwrap();
        let zero_c = LtiSystem::new(sys.a.clone(), sys.b.clone(), DMatrix::zeros(1, 3)).unwrap();
        assert_eq!(reduced_gramian(&zero_c, &pair, GramianSide::Obs, 5.0).unwrap().norm(), 0.0);
        // At T = 20 the unstable mode makes G ~ e^40, beyond what double
        // precision can resolve for the small eigenvalue; T = 5 keeps it visible.
        for side in [GramianSide::Obs, GramianSide::Ctrl] {
            let g = reduced_gramian(&sys, &pair, side, 5.0).unwrap();
            let lmin = g.symmetric_eigenvalues().min();
            assert!(lmin > 1e-6, "{side:?}: {lmin}");
        }
    }

    /// `int_0^T exp(M^T s) Q exp(M s) ds` by the block-exponential construction.
    fn van_loan(m: &DMatrix<f64>, q: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
        let r = m.nrows();
        let mut big = DMatrix::zeros(2 * r, 2 * r);
        big.view_mut((0, 0), (r, r)).copy_from(&(-m.transpose()));
        big.view_mut((0, r), (r, r)).copy_from(q);
        big.view_mut((r, r), (r, r)).copy_from(m);
        let f = matrix_exponential(&big, t).unwrap();
        let f12 = f.view((0, r), (r, r)).into_owned();
        let f22 = f.view((r, r), (r, r)).into_owned();
        f22.transpose() * f12
    }

    #[test]
    fn gramians_match_block_exponential() {
        let sys = example_sys();
        let pair = dual_pair(&sys.a, 2, &tight()).unwrap();
        let pu = project_system(&sys, &pair.u).unwrap();
        let pv = project_system(&sys, &pair.v).unwrap();
        let t = 3.0;
        let go = reduced_gramian(&sys, &pair, GramianSide::Obs, t).unwrap();
        let go_ref = van_loan(&pu.a, &(pu.c.transpose() * &pu.c), t);
        assert!((&go - &go_ref).norm() < 1e-8 * go_ref.norm());
        let gc = reduced_gramian(&sys, &pair, GramianSide::Ctrl, t).unwrap();
        let gc_ref = van_loan(&pv.a.transpose(), &(&pv.b * pv.b.transpose()), t);
        assert!((&gc - &gc_ref).norm() < 1e-8 * gc_ref.norm());
    }

    #[test]
    fn scalar_gramian_limit() {
        let sys = LtiSystem::new(
            DMatrix::from_element(2, 2, 0.0) + DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -5.0])),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let pair = dual_pair(&sys.a, 1, &tight()).unwrap();
        let g = reduced_gramian(&sys, &pair, GramianSide::Obs, 30.0).unwrap();
        assert!((g[(0, 0)] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn slow_fast_diagonal() {
        let sys = LtiSystem::new(
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -100.0])),
            DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        )
        .unwrap();
        let m = slow_fast_reduce(&sys, 1, &tight(), TIMESCALE_RATIO).unwrap();
        assert!((m.a_s[(0, 0)] + 1.0).abs() < 1e-9);
        assert!((m.dc_gain().unwrap()[(0, 0)] - 1.01).abs() < 1e-9);
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn slow_fast_input_in_slow_subspace() {
        let sys = LtiSystem::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 3.0, 0.0, -50.0]),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        )
        .unwrap();
        let m = slow_fast_reduce(&sys, 1, &tight(), TIMESCALE_RATIO).unwrap();
        assert!(m.d_s.norm() < 1e-12);
        assert!((m.b_s.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slow_fast_dc_gain_exact_at_default_tolerance() {
        let sys = LtiSystem::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -3.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let m = slow_fast_reduce(&sys, 1, &FlowConfig::default(), TIMESCALE_RATIO).unwrap();
        assert!(m.dc_gain_error < 1e-14, "{}", m.dc_gain_error);
        // Close to the compression onto the exact slow eigenvector e1.
        assert!((m.a_s[(0, 0)] + 1.0).abs() < 1e-6);
        assert!((m.c_s[(0, 0)].abs() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn slow_fast_rejects_unstable() {
        let err = slow_fast_reduce(&example_sys(), 1, &FlowConfig::default(), TIMESCALE_RATIO).unwrap_err();
        assert!(matches!(err, Error::NotHurwitz { .. }));
    }

    #[test]
    fn slow_fast_warns_on_weak_separation() {
        let sys = LtiSystem::new(
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -2.0])),
            DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        )
        .unwrap();
        let m = slow_fast_reduce(&sys, 1, &tight(), TIMESCALE_RATIO).unwrap();
        assert_eq!(m.warnings.len(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn reduction_properties(seed in 0u64..100_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sys = gapped_system(seed, 6, 2);
            let pair = dual_pair(&sys.a, 2, &tight()).unwrap();
            prop_assert!((pair.u_perp.matrix().transpose() * &sys.a * pair.u.matrix()).norm() < 1e-6);
            prop_assert!((pair.v.matrix().transpose() * &sys.a * pair.v_perp.matrix()).norm() < 1e-6);
            for _ in 0..5 {
                let s = c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                for side in [DecompositionSide::U, DecompositionSide::V] {
                    let d = error_decomposition(&sys, &pair, s, side).unwrap();
                    prop_assert!(d.identity_residual < 1e-9 * (1.0 + d.p.norm()));
                }
            }
            // Input/output behaviour does not depend on the basis of span(U).
            let q = crate::ojaflow::sample_stiefel_uniform(2, 2, seed).unwrap();
            let rotated = StiefelPoint::new(pair.u.matrix() * q.matrix());
            let h1 = project_system(&sys, &pair.u).unwrap();
            let h2 = project_system(&sys, &rotated).unwrap();
            for t in [0.1, 0.5, 1.0] {
                let d = impulse_response(&h1, t).unwrap() - impulse_response(&h2, t).unwrap();
                prop_assert!(d.norm() < 1e-10 * (1.0 + impulse_response(&h1, t).unwrap().norm()));
            }
        }

        #[test]
        fn reduction_preserves_stability(seed in 0u64..100_000) {
            let mut sys = gapped_system(seed, 5, 2);
            let shift = spectral_abscissa(&sys.a).unwrap() + 0.5;
            sys.a -= DMatrix::identity(5, 5) * shift;
            let pair = dual_pair(&sys.a, 2, &tight()).unwrap();
            for kind in [ModelKind::ObsPreserving, ModelKind::CtrlPreserving, ModelKind::Minimal] {
                let m = reduced_model(&sys, &pair, kind).unwrap();
                prop_assert!(spectral_abscissa(&m.system.a).unwrap() < 0.0);
            }
        }

        #[test]
        fn slow_fast_dc_gain(seed in 0u64..100_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 6;
            let r = 2;
            let mut a = gaussian(n, n, &mut rng) * 0.3;
            for i in 0..n {
                a[(i, i)] -= if i < r { 1.0 } else { 100.0 };
            }
            for i in r..n {
                for j in 0..n {
                    a[(i, j)] *= if i == j { 1.0 } else { 100.0 };
                }
            }
            let spec = eig_ordered(&a).unwrap();
            prop_assume!(spec.eigenvalues[0].re < 0.0 && !spec.splits_block_at(r));
            let sys = LtiSystem::new(a, gaussian(n, 2, &mut rng), gaussian(2, n, &mut rng)).unwrap();
            let m = slow_fast_reduce(&sys, r, &tight(), TIMESCALE_RATIO).unwrap();
            prop_assert!(m.dc_gain_error < 1e-8, "dc error {}", m.dc_gain_error);
        }
    }
}
