//! Fixed-step explicit integrators for autonomous matrix ODEs `dX/dt = f(X)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Integrator {
    ForwardEuler,
    #[default]
    Rk4,
}

impl Integrator {
    pub fn step<F>(self, f: &F, x: &DMatrix<f64>, h: f64) -> DMatrix<f64>
    where
        F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
    {
        match self {
            Integrator::ForwardEuler => euler_step(f, x, h),
            Integrator::Rk4 => rk4_step(f, x, h),
        }
    }
}

pub fn euler_step<F>(f: &F, x: &DMatrix<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    x + f(x) * h
}

/// Classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(f: &F, x: &DMatrix<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (0.5 * h)));
    let k3 = f(&(x + &k2 * (0.5 * h)));
    let k4 = f(&(x + &k3 * h));
    x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

/// Integrates from `x0` over `steps` steps of size `h`.
pub fn integrate<F>(method: Integrator, f: F, x0: DMatrix<f64>, h: f64, steps: usize) -> DMatrix<f64>
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    (0..steps).fold(x0, |x, _| method.step(&f, &x, h))
}
