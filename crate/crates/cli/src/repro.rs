use nalgebra::DMatrix;
use ojasub::modred::{bode_grid, dual_pair, reduced_model, LtiSystem, ModelKind};
use ojasub::ode::Integrator;
use ojasub::ojaflow::{integrate_flow_observed, log_slope_window, FlowConfig, Retraction};
use ojasub::Result;
use serde_json::{json, Value};

use crate::args::Figure;
use crate::output::Run;

fn example_a() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0])
}

fn unit(v: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_column_slice(v.len(), 1, v);
    let n = m.norm();
    m / n
}

fn psi() -> [DMatrix<f64>; 3] {
    [unit(&[1.0, 0.0, 0.0]), unit(&[1.0, -1.0, 0.0]), unit(&[1.0, 2.0, -2.0])]
}

fn euler(shift: f64, h: f64, t_max: f64) -> FlowConfig {
    FlowConfig {
        shift_a: Some(shift),
        step_h: Some(h),
        t_max,
        integrator: Integrator::ForwardEuler,
        stop_on_convergence: false,
        ..FlowConfig::default()
    }
}

fn config_json(cfg: &FlowConfig) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Null)
}

/// Stiefel-residual traces for several runs from one initial frame.
fn residual_runs(run: &mut Run, u0: &DMatrix<f64>, runs: &[(&str, FlowConfig)]) -> Result<Value> {
    let a = example_a();
    let mut summary = serde_json::Map::new();
    let mut configs = serde_json::Map::new();
    for (name, cfg) in runs {
        let out = integrate_flow_observed(&a, u0, cfg, |_, _| {})?;
        run.write(&format!("{name}.csv"), &out.trace.to_csv())?;
        configs.insert(name.to_string(), config_json(cfg));
        summary.insert(
            name.to_string(),
            json!({
                "initial_residual": out.trace.stiefel_residuals.first(),
                "peak_residual": out.trace.stiefel_residuals.iter().cloned().fold(0.0, f64::max),
                "final_residual": out.trace.stiefel_residuals.last(),
                "diverged_at": out.diverged.map(|d| d.0),
            }),
        );
    }
    run.config(Value::Object(configs));
    Ok(Value::Object(summary))
}

fn fig2_runs() -> Vec<(&'static str, FlowConfig)> {
    vec![
        (
            "normalized",
            FlowConfig {
                retraction: Retraction::QrEvery(1),
                ..euler(0.0, 0.1, 10.0)
            },
        ),
        ("unshifted", euler(0.0, 0.1, 10.0)),
        ("shift2", euler(2.0, 0.1, 10.0)),
        ("shift4", euler(4.0, 0.1, 10.0)),
    ]
}

pub fn repro(figure: Figure, mut run: Run, jobs: usize) -> Result<()> {
    let [p1, p2, p3] = psi();
    let result = match figure {
        Figure::Fig2 => {
            let u0 = unit((&p2 + &p3).as_slice());
            residual_runs(&mut run, &u0, &fig2_runs())?
        }
        Figure::Fig3 => {
            let u0 = unit((&p2 + &p3).as_slice()) * 1.1;
            let runs: Vec<_> = fig2_runs().into_iter().filter(|(n, _)| *n != "normalized").collect();
            residual_runs(&mut run, &u0, &runs)?
        }
        Figure::Fig4 => {
            let a = example_a();
            let u0 = unit((&p1 + &p2 + &p3).as_slice());
            let cfg = euler(2.0, 0.1, 20.0);
            let target = &p1 * p1.transpose();
            let mut times = Vec::new();
            let mut dist = Vec::new();
            integrate_flow_observed(&a, &u0, &cfg, |t, u| {
                times.push(t);
                let d = u * u.transpose() - &target;
                let norm = d.symmetric_eigenvalues().iter().fold(0.0f64, |m, l| m.max(l.abs()));
                dist.push(norm);
            })?
            .into_result()?;
            let mut csv = String::from("t,distance,bound\n");
            for (t, d) in times.iter().zip(&dist) {
                csv.push_str(&format!("{t:e},{d:e},{:e}\n", 0.7 * (-t).exp()));
            }
            run.write("fig4.csv", &csv)?;
            run.config(json!({ "flow": config_json(&cfg) }));
            json!({
                "log_slope_5_15": log_slope_window(&times, &dist, 5.0, 15.0),
                "final_distance": dist.last(),
            })
        }
        Figure::Fig5 => {
            let a = example_a();
            let sys = LtiSystem::new(
                a.clone(),
                DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]),
                DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            )?
            .with_label("full");
            let cfg = FlowConfig {
                tol_invariance: 1e-11,
                ..FlowConfig::default()
            };
            let pair = dual_pair(&a, 2, &cfg)?;
            let mut models = vec![sys.clone()];
            for kind in [ModelKind::ObsPreserving, ModelKind::CtrlPreserving, ModelKind::Minimal] {
                let mut m = reduced_model(&sys, &pair, kind)?.system;
                m.label = Some(kind.name().to_string());
                models.push(m);
            }
            let refs: Vec<&LtiSystem> = models.iter().collect();
            let responses = bode_grid(&refs, 1e-2, 1e2, 200, jobs.max(1))?;
            let mut zero = Vec::new();
            for resp in &responses {
                run.write(&format!("bode_{}.csv", resp.label), &resp.to_csv())?;
                run.write_json(&format!("bode_{}.json", resp.label), &resp.sidecar_json())?;
                if resp.zero_transfer {
                    zero.push(resp.label.clone());
                }
            }
            run.config(json!({ "flow": config_json(&cfg), "r": 2, "w_min": 1e-2, "w_max": 1e2, "points": 200 }));
            json!({ "zero_transfer": zero, "coupling_condition": pair.coupling_condition })
        }
        Figure::Ex1 => {
            let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
            let u0 = DMatrix::from_column_slice(2, 1, &[0.0, 1.5]);
            let cfg = euler(0.0, 0.01, 1.0);
            let out = integrate_flow_observed(&a, &u0, &cfg, |_, _| {})?;
            run.write("ex1.csv", &out.trace.to_csv())?;
            run.config(json!({ "flow": config_json(&cfg) }));
            let s = &out.trace.stiefel_residuals;
            let head = &s[..s.len().min(11)];
            json!({
                "increasing_first_10_steps": head.windows(2).all(|w| w[1] > w[0]),
                "diverged_at": out.diverged.map(|d| d.0),
            })
        }
    };
    run.write_json("result.json", &result)?;
    println!("{}", serde_json::to_string(&result).unwrap_or_default());
    run.finish()
}
