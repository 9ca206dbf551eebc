use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ojasub::ode::Integrator;
use ojasub::ojaflow::FlowConfig;

#[derive(Debug, Parser)]
#[command(name = "ojasub", version, about = "Dominant invariant subspaces, model reduction and low-rank stabilization")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for random initial frames.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Rate parameter epsilon in (0, 1].
    #[arg(long, global = true, default_value_t = 1.0)]
    pub eps: f64,

    /// Spectral shift a (default: smallest stabilizing shift plus 0.5).
    #[arg(long, global = true)]
    pub shift: Option<f64>,

    /// Integration step (default: min(0.01, 0.1 eps / (1 + a + |A|_F))).
    #[arg(long, global = true)]
    pub step: Option<f64>,

    /// Final integration time.
    #[arg(long, global = true, default_value_t = 200.0)]
    pub tmax: f64,

    #[arg(long, global = true, value_enum, default_value_t = IntegratorArg::Rk4)]
    pub integrator: IntegratorArg,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Worker threads for frequency grids.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

impl GlobalArgs {
    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            epsilon: self.eps,
            shift_a: self.shift,
            step_h: self.step,
            t_max: self.tmax,
            integrator: self.integrator.into(),
            seed: self.seed,
            ..FlowConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntegratorArg {
    Euler,
    Rk4,
}

impl From<IntegratorArg> for Integrator {
    fn from(v: IntegratorArg) -> Self {
        match v {
            IntegratorArg::Euler => Integrator::ForwardEuler,
            IntegratorArg::Rk4 => Integrator::Rk4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Obs,
    Ctrl,
    Minimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReduceMethod {
    Schur,
    Recursive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Ex1,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dominant r-dimensional invariant subspace of a matrix.
    Extract {
        matrix: PathBuf,
        r: usize,
        /// Initial frame (n x r).
        #[arg(long)]
        u0: Option<PathBuf>,
    },
    /// Extend a dominant r-subspace by ell further dominant directions.
    Expand {
        matrix: PathBuf,
        r: usize,
        ell: usize,
        /// Invariant basis to extend (default: extracted with the flow).
        #[arg(long)]
        basis: Option<PathBuf>,
    },
    /// Shrink a dominant r-subspace to its dominant r_tilde-subspace.
    ReduceDim {
        matrix: PathBuf,
        r: usize,
        r_tilde: usize,
        #[arg(long, value_enum, default_value_t = ReduceMethod::Schur)]
        method: ReduceMethod,
        #[arg(long)]
        basis: Option<PathBuf>,
    },
    /// Reduced model of an LTI system (directory with A, B, C or a JSON manifest).
    Reduce {
        system: PathBuf,
        r: usize,
        #[arg(long, value_enum, default_value_t = ModelArg::Minimal, conflicts_with = "slow_fast")]
        model: ModelArg,
        /// Frequency response on a log grid: WMIN WMAX NPTS.
        #[arg(long, num_args = 3, value_names = ["WMIN", "WMAX", "NPTS"], conflicts_with = "slow_fast")]
        bode: Option<Vec<f64>>,
        /// Quasi-steady-state reduction of a Hurwitz system.
        #[arg(long)]
        slow_fast: bool,
        /// Timescale ratio below which a warning is issued.
        #[arg(long, default_value_t = ojasub::modred::TIMESCALE_RATIO)]
        ratio: f64,
    },
    /// Low-rank observer and/or state-feedback design.
    Stabilize {
        system: PathBuf,
        r: usize,
        #[arg(long, group = "side")]
        observer: bool,
        #[arg(long, group = "side")]
        feedback: bool,
        #[arg(long, group = "side")]
        both: bool,
    },
    /// Dominant singular subspaces via the augmented symmetric flow.
    Svd { matrix: PathBuf, r: usize },
    /// Regenerate the data behind a figure or example.
    Repro {
        #[arg(value_enum)]
        figure: Figure,
    },
}
