use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ojasub"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|_| panic!("{} missing", path.display()))).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    let p = dir.join(name);
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    fs::write(p, text).unwrap();
}

const EX2: &str = "1,1,2\n0,0,1\n0,0,-1\n";

/// Workspace with the matrices and systems used below.
fn workspace() -> TempDir {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    write(d, "ex2.csv", EX2);
    write(
        d,
        "ex2.mtx",
        "%%MatrixMarket matrix array real general\n3 3\n1\n0\n0\n1\n0\n0\n2\n1\n-1\n",
    );
    write(d, "rot.csv", "0,-1\n1,0\n");
    write(d, "d32.csv", "3,0\n0,2\n");
    write(d, "ex4/A.csv", EX2);
    write(d, "ex4/B.csv", "0\n0\n1\n");
    write(d, "ex4/C.csv", "1,0,0\n");
    write(d, "diag/A.csv", "1,0\n0,-1\n");
    write(d, "diag/B.csv", "1\n1\n");
    write(d, "diag/C.csv", "1,0\n");
    write(d, "unctrl/A.csv", "1,0\n0,-1\n");
    write(d, "unctrl/B.csv", "0\n1\n");
    write(d, "unctrl/C.csv", "1,0\n");
    write(d, "hurwitz.json", r#"{"A": [[-1, 1], [0, -3]], "B": [[0], [1]], "C": [[1, 0]]}"#);
    t
}

fn parse_csv(path: PathBuf) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn extract_example_matrix() {
    let w = workspace();
    let out = run(w.path(), &["extract", "ex2.csv", "1", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let res = json(w.path().join("o/result.json"));
    let lam = &res["eigenvalues"][0];
    assert!((lam[0].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(lam[1].as_f64().unwrap(), 0.0);
    let basis = &res["basis"];
    assert!((basis[0][0].as_f64().unwrap().abs() - 1.0).abs() < 1e-6);

    let (header, rows) = parse_csv(w.path().join("o/trace.csv"));
    assert_eq!(header, ["t", "stiefel_residual", "invariance_residual"]);
    let late: Vec<f64> = rows.iter().filter(|r| r[0] >= 5.0).map(|r| r[2]).collect();
    assert!(late.len() > 10);
    assert!(late.windows(2).all(|p| p[1] <= p[0]));

    let manifest = json(w.path().join("o/manifest.json"));
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["config"]["shift_a"].as_f64().unwrap() > 0.0);
    assert_eq!(manifest["outputs"], serde_json::json!(["result.json", "trace.csv"]));
}

#[test]
fn matrix_market_input_matches_csv() {
    let w = workspace();
    assert_eq!(code(&run(w.path(), &["extract", "ex2.mtx", "1", "--out", "m"])), 0);
    assert_eq!(code(&run(w.path(), &["extract", "ex2.csv", "1", "--out", "c"])), 0);
    assert_eq!(
        fs::read(w.path().join("m/result.json")).unwrap(),
        fs::read(w.path().join("c/result.json")).unwrap()
    );
}

#[test]
fn outputs_are_deterministic() {
    let w = workspace();
    for dir in ["a", "b"] {
        let out = run(w.path(), &["extract", "ex2.csv", "2", "--seed", "7", "--out", dir]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for f in ["result.json", "trace.csv"] {
        assert_eq!(fs::read(w.path().join("a").join(f)).unwrap(), fs::read(w.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn extract_exit_codes() {
    let w = workspace();
    let out = run(w.path(), &["extract", "rot.csv", "1", "--out", "o"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("conjugate"));

    let out = run(w.path(), &["extract", "missing.csv", "1", "--out", "o"]);
    assert_eq!(code(&out), 1);
    assert_eq!(stderr(&out).trim().lines().count(), 1);

    write(w.path(), "bad.csv", "1,2\n3\n");
    assert_eq!(code(&run(w.path(), &["extract", "bad.csv", "1", "--out", "o"])), 1);

    let out = run(w.path(), &["extract", "ex2.csv", "1", "--tmax", "0.05", "--out", "o"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    assert_eq!(code(&run(w.path(), &["extract", "ex2.csv", "1", "--eps", "2", "--out", "o"])), 1);
}

#[test]
fn expand_and_reduce_dim() {
    let w = workspace();
    let out = run(w.path(), &["expand", "ex2.csv", "1", "1", "--tmax", "60", "--out", "e"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let b = &json(w.path().join("e/result.json"))["basis"];
    // span{psi1, psi2} = span{e1, e2}.
    for j in 0..2 {
        assert!(b[2][j].as_f64().unwrap().abs() < 1e-6);
    }

    for method in ["schur", "recursive"] {
        let out = run(w.path(), &["reduce-dim", "ex2.csv", "2", "1", "--method", method, "--out", method]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let b = &json(w.path().join(method).join("result.json"))["basis"];
        assert!((b[0][0].as_f64().unwrap().abs() - 1.0).abs() < 1e-6);
    }
}

fn prd(w: f64) -> f64 {
    // (1/2)(s + 2) / (s (s - 1)) at s = i w.
    let s = num(w);
    let n = (s.0 + 2.0, s.1);
    let d = mul(s, (s.0 - 1.0, s.1));
    0.5 * n.0.hypot(n.1) / d.0.hypot(d.1)
}

fn num(w: f64) -> (f64, f64) {
    (0.0, w)
}

fn mul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

#[test]
fn reduce_minimal_bode() {
    let w = workspace();
    let out = run(
        w.path(),
        &["reduce", "ex4", "2", "--model", "minimal", "--bode", "0.01", "100", "9", "--jobs", "2", "--out", "o"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = parse_csv(w.path().join("o/bode_minimal.csv"));
    assert_eq!(header, ["omega", "mag_db_11", "phase_deg_11"]);
    assert_eq!(rows.len(), 9);
    for r in &rows {
        let want = 20.0 * prd(r[0]).log10();
        assert!((r[1] - want).abs() < 1e-4, "omega {}: {} vs {want}", r[0], r[1]);
    }
    assert!(w.path().join("o/bode_full.csv").is_file());
    let side = json(w.path().join("o/bode_minimal.json"));
    assert_eq!(side["zero_transfer"], false);
    let res = json(w.path().join("o/result.json"));
    assert_eq!(res["model"]["kind"], "minimal");
}

#[test]
fn reduce_obs_model_is_zero() {
    let w = workspace();
    let out = run(w.path(), &["reduce", "ex4", "2", "--model", "obs", "--bode", "0.01", "100", "5", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("obs: zero transfer function"));
    let side = json(w.path().join("o/bode_obs.json"));
    assert_eq!(side["zero_transfer"], true);
    assert_eq!(side["note"], "zero transfer function");
}

#[test]
fn slow_fast_requires_hurwitz() {
    let w = workspace();
    let out = run(w.path(), &["reduce", "ex4", "2", "--slow-fast", "--out", "o"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("Hurwitz"));

    let out = run(w.path(), &["reduce", "hurwitz.json", "1", "--slow-fast", "--out", "h"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let res = json(w.path().join("h/result.json"));
    assert!(res["dc_gain_error"].as_f64().unwrap() < 1e-8);
}

#[test]
fn stabilize_commands() {
    let w = workspace();
    let out = run(w.path(), &["stabilize", "diag", "1", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("observer abscissa"));
    let res = json(w.path().join("o/result.json"));
    assert!(res["closed_loop_observer_abscissa"].as_f64().unwrap() < 0.0);
    assert!(res["closed_loop_feedback_abscissa"].as_f64().unwrap() < 0.0);
    assert!(res["cascade_abscissa"].as_f64().unwrap() < 0.0);
    let f = res["F_r"][0][0].as_f64().unwrap().abs();
    assert!((f - (1.0 + 2f64.sqrt())).abs() < 1e-5);

    let out = run(w.path(), &["stabilize", "hurwitz.json", "1", "--both", "--out", "h"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let out = run(w.path(), &["stabilize", "diag", "1", "--observer", "--out", "ob"]);
    assert_eq!(code(&out), 0);
    let res = json(w.path().join("ob/result.json"));
    assert!(res["F_r"].is_null());
    assert!(res["L_r"].is_array());

    let out = run(w.path(), &["stabilize", "unctrl", "1", "--feedback", "--out", "u"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("not stabilizable"));
}

#[test]
fn svd_of_diagonal() {
    let w = workspace();
    let out = run(w.path(), &["svd", "d32.csv", "1", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let res = json(w.path().join("o/result.json"));
    assert!((res["sigma"][0].as_f64().unwrap() - 3.0).abs() < 1e-6);
}

#[test]
fn repro_fig4_slope() {
    let w = workspace();
    let out = run(w.path(), &["repro", "fig4", "--out", "f"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let res = json(w.path().join("f/result.json"));
    let slope = res["log_slope_5_15"].as_f64().unwrap();
    assert!((-2.0..=-0.9).contains(&slope), "{slope}");
    let (header, _) = parse_csv(w.path().join("f/fig4.csv"));
    assert_eq!(header, ["t", "distance", "bound"]);
}

#[test]
fn repro_ex1_grows() {
    let w = workspace();
    let out = run(w.path(), &["repro", "ex1", "--out", "x"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (_, rows) = parse_csv(w.path().join("x/ex1.csv"));
    assert!(rows[..11].windows(2).all(|p| p[1][1] > p[0][1]));
    assert_eq!(json(w.path().join("x/result.json"))["increasing_first_10_steps"], true);
}

#[test]
fn repro_other_bundles() {
    let w = workspace();
    for (fig, files) in [
        ("fig2", &["normalized.csv", "unshifted.csv", "shift2.csv", "shift4.csv"][..]),
        ("fig3", &["unshifted.csv", "shift2.csv", "shift4.csv"][..]),
        ("fig5", &["bode_full.csv", "bode_ctrl.csv", "bode_minimal.csv", "bode_obs.json"][..]),
    ] {
        let out = run(w.path(), &["repro", fig, "--out", fig]);
        assert_eq!(code(&out), 0, "{fig}: {}", stderr(&out));
        for f in files {
            assert!(w.path().join(fig).join(f).is_file(), "{fig}/{f}");
        }
        assert!(w.path().join(fig).join("manifest.json").is_file());
    }
    let res = json(w.path().join("fig3/result.json"));
    assert!((res["shift2"]["initial_residual"].as_f64().unwrap() - 0.21).abs() < 1e-12);
    assert!(res["shift4"]["final_residual"].as_f64().unwrap() < 1e-8);
    assert_eq!(json(w.path().join("fig5/result.json"))["zero_transfer"], serde_json::json!(["obs"]));
}
