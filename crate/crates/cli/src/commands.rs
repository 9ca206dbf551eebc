use std::path::Path;

use nalgebra::DMatrix;
use ojasub::control::{closed_loop_assemble, design_both, design_feedback, design_observer, GainDesign};
use ojasub::io::{read_matrix, read_system, system_files};
use ojasub::linalg::spectral_abscissa;
use ojasub::modred::{bode_grid, dual_pair, reduced_model, slow_fast_reduce, LtiSystem, ModelKind};
use ojasub::ojaflow::FlowConfig;
use ojasub::subspace::{augmented_symmetric, dominant_subspace, expand_subspace, reduce_subspace_recursive, reduce_subspace_schur, svd_extract, SubspaceResult};
use ojasub::{Error, Result, StiefelPoint};
use serde_json::{json, Value};

use crate::args::{GlobalArgs, ModelArg, ReduceMethod};
use crate::output::Run;

/// The flow configuration with the shift and step resolved for `a`.
pub fn resolved_config(cfg: &FlowConfig, a: &DMatrix<f64>) -> Result<Value> {
    let (shift, h) = cfg.resolve(a)?;
    let resolved = FlowConfig {
        shift_a: Some(shift),
        step_h: Some(h),
        ..cfg.clone()
    };
    serde_json::to_value(&resolved).map_err(|e| Error::Parse(e.to_string()))
}

fn write_subspace(run: &mut Run, res: &SubspaceResult) -> Result<()> {
    run.write_json("result.json", &res.to_json())?;
    if let Some(trace) = &res.trace {
        run.write("trace.csv", &trace.to_csv())?;
    }
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn format_eigenvalues(res: &SubspaceResult) -> String {
    let parts: Vec<String> = res
        .eigenvalues
        .iter()
        .map(|l| if l.im == 0.0 { format!("{}", l.re) } else { format!("{}{:+}i", l.re, l.im) })
        .collect();
    parts.join(", ")
}

fn load_matrix(run: &mut Run, path: &Path) -> Result<DMatrix<f64>> {
    let m = read_matrix(path)?;
    run.input(path)?;
    Ok(m)
}

fn load_system(run: &mut Run, path: &Path) -> Result<LtiSystem> {
    let sys = read_system(path)?;
    for f in system_files(path)? {
        run.input(&f)?;
    }
    Ok(sys)
}

/// Basis from a file, or the dominant `r`-subspace extracted with the flow.
fn start_basis(run: &mut Run, a: &DMatrix<f64>, r: usize, cfg: &FlowConfig, basis: Option<&Path>) -> Result<StiefelPoint> {
    match basis {
        Some(p) => {
            let m = load_matrix(run, p)?;
            if m.ncols() != r {
                return Err(Error::InvalidArgument(format!("basis has {} columns, expected {r}", m.ncols())));
            }
            Ok(StiefelPoint::new(m))
        }
        None => Ok(dominant_subspace(a, r, cfg, None)?.basis),
    }
}

pub fn extract(g: &GlobalArgs, mut run: Run, matrix: &Path, r: usize, u0: Option<&Path>) -> Result<()> {
    let cfg = g.flow_config();
    let a = load_matrix(&mut run, matrix)?;
    run.config(resolved_config(&cfg, &a)?);
    let u0 = u0.map(|p| load_matrix(&mut run, p)).transpose()?;
    let res = dominant_subspace(&a, r, &cfg, u0.as_ref())?;
    write_subspace(&mut run, &res)?;
    println!(
        "converged after {} attempt(s); invariance residual {:e}; eigenvalues [{}]",
        res.attempts,
        res.invariance_residual,
        format_eigenvalues(&res)
    );
    run.finish()
}

pub fn expand(g: &GlobalArgs, mut run: Run, matrix: &Path, r: usize, ell: usize, basis: Option<&Path>) -> Result<()> {
    let cfg = g.flow_config();
    let a = load_matrix(&mut run, matrix)?;
    run.config(resolved_config(&cfg, &a)?);
    let u_r = start_basis(&mut run, &a, r, &cfg, basis)?;
    let res = expand_subspace(&a, &u_r, ell, &cfg)?;
    write_subspace(&mut run, &res)?;
    println!("expanded to r = {}; eigenvalues [{}]", res.r(), format_eigenvalues(&res));
    run.finish()
}

pub fn reduce_dim(
    g: &GlobalArgs,
    mut run: Run,
    matrix: &Path,
    r: usize,
    r_tilde: usize,
    method: ReduceMethod,
    basis: Option<&Path>,
) -> Result<()> {
    let cfg = g.flow_config();
    let a = load_matrix(&mut run, matrix)?;
    run.config(resolved_config(&cfg, &a)?);
    let u_r = start_basis(&mut run, &a, r, &cfg, basis)?;
    let res = match method {
        ReduceMethod::Schur => reduce_subspace_schur(&a, &u_r, r_tilde)?,
        ReduceMethod::Recursive => reduce_subspace_recursive(&a, &u_r, r_tilde, &cfg)?,
    };
    write_subspace(&mut run, &res)?;
    println!("reduced to r = {}; eigenvalues [{}]", res.r(), format_eigenvalues(&res));
    run.finish()
}

fn model_kind(m: ModelArg) -> ModelKind {
    match m {
        ModelArg::Obs => ModelKind::ObsPreserving,
        ModelArg::Ctrl => ModelKind::CtrlPreserving,
        ModelArg::Minimal => ModelKind::Minimal,
    }
}

pub struct ReduceOptions {
    pub model: ModelArg,
    pub bode: Option<Vec<f64>>,
    pub slow_fast: bool,
    pub ratio: f64,
}

pub fn reduce(g: &GlobalArgs, mut run: Run, system: &Path, r: usize, opts: ReduceOptions) -> Result<()> {
    let cfg = g.flow_config();
    let sys = load_system(&mut run, system)?;
    run.config(resolved_config(&cfg, &sys.a)?);

    if opts.slow_fast {
        let model = slow_fast_reduce(&sys, r, &cfg, opts.ratio)?;
        run.write_json("result.json", &model.to_json())?;
        for w in &model.warnings {
            eprintln!("warning: {w}");
        }
        println!(
            "slow model of order {r}; timescale ratio {}; DC-gain error {:e}",
            model.timescale_ratio, model.dc_gain_error
        );
        return run.finish();
    }

    let pair = dual_pair(&sys.a, r, &cfg)?;
    let kind = model_kind(opts.model);
    let mut model = reduced_model(&sys, &pair, kind)?;
    model.system.label = Some(kind.name().to_string());
    run.write_json(
        "result.json",
        &json!({
            "model": model.to_json(),
            "coupling_condition": pair.coupling_condition,
        }),
    )?;

    if let Some(b) = opts.bode {
        let npts = b[2];
        if !(npts >= 2.0 && npts.fract() == 0.0) {
            return Err(Error::InvalidArgument(format!("--bode NPTS must be an integer >= 2, got {npts}")));
        }
        let full = sys.clone().with_label("full");
        let responses = bode_grid(&[&full, &model.system], b[0], b[1], npts as usize, g.jobs.max(1))?;
        for resp in &responses {
            run.write(&format!("bode_{}.csv", resp.label), &resp.to_csv())?;
            run.write_json(&format!("bode_{}.json", resp.label), &resp.sidecar_json())?;
            if resp.zero_transfer {
                println!("{}: zero transfer function", resp.label);
            }
        }
    }
    println!("{} model of order {r}; cond(V^T U) = {:.3e}", kind.name(), pair.coupling_condition);
    run.finish()
}

pub enum Side {
    Observer,
    Feedback,
    Both,
}

pub fn stabilize(g: &GlobalArgs, mut run: Run, system: &Path, r: usize, side: Side) -> Result<()> {
    let cfg = g.flow_config();
    let sys = load_system(&mut run, system)?;
    run.config(resolved_config(&cfg, &sys.a)?);
    let pair = dual_pair(&sys.a, r, &cfg)?;
    let ir = DMatrix::identity(r, r);
    let design: GainDesign = match side {
        Side::Observer => design_observer(&sys, &pair, &ir, &DMatrix::identity(sys.outputs(), sys.outputs()))?,
        Side::Feedback => design_feedback(&sys, &pair, &ir, &DMatrix::identity(sys.inputs(), sys.inputs()))?,
        Side::Both => design_both(&sys, &pair)?,
    };
    let mut out = design.to_json();
    if let Side::Both = side {
        let cascade = closed_loop_assemble(&sys, &design)?;
        out["cascade_abscissa"] = json!(spectral_abscissa(&cascade)?);
    }
    run.write_json("result.json", &out)?;
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x}"));
    println!(
        "observer abscissa: {}; feedback abscissa: {}",
        show(design.closed_loop_observer_abscissa()),
        show(design.closed_loop_feedback_abscissa())
    );
    run.finish()
}

pub fn svd(g: &GlobalArgs, mut run: Run, matrix: &Path, r: usize) -> Result<()> {
    let cfg = g.flow_config();
    let a = load_matrix(&mut run, matrix)?;
    run.config(resolved_config(&cfg, &augmented_symmetric(&a))?);
    let res = svd_extract(&a, r, &cfg)?;
    run.write_json("result.json", &res.to_json())?;
    if let Some(trace) = &res.trace {
        run.write("trace.csv", &trace.to_csv())?;
    }
    let sig: Vec<String> = res.sigma.iter().map(|s| format!("{s}")).collect();
    println!("sigma [{}]; residual {:e}", sig.join(", "), res.residual);
    run.finish()
}
