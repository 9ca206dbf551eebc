mod args;
mod commands;
mod output;
mod repro;

use std::process::ExitCode;

use clap::Parser;
use ojasub::Error;

use args::{Cli, Command};
use commands::{ReduceOptions, Side};
use output::Run;

/// 1: input problems; 2: spectral or design preconditions; 3: numerical non-convergence.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::GapTooSmall { .. }
        | Error::ConjugatePairSplit { .. }
        | Error::NotHurwitz { .. }
        | Error::DesignFailed { .. }
        | Error::NotStabilizable(_)
        | Error::NearPole { .. } => 2,
        Error::NotConverged { .. }
        | Error::Diverged { .. }
        | Error::NoConvergence(_)
        | Error::NotInvariant { .. }
        | Error::BlockAmbiguity
        | Error::IllConditionedCoupling { .. } => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> ojasub::Result<()> {
    let g = cli.global;
    let command_line = std::env::args().skip(1).collect::<Vec<_>>().join(" ");
    let out = Run::new(&g.out, command_line, g.seed)?;
    match cli.command {
        Command::Extract { matrix, r, u0 } => commands::extract(&g, out, &matrix, r, u0.as_deref()),
        Command::Expand { matrix, r, ell, basis } => commands::expand(&g, out, &matrix, r, ell, basis.as_deref()),
        Command::ReduceDim {
            matrix,
            r,
            r_tilde,
            method,
            basis,
        } => commands::reduce_dim(&g, out, &matrix, r, r_tilde, method, basis.as_deref()),
        Command::Reduce {
            system,
            r,
            model,
            bode,
            slow_fast,
            ratio,
        } => commands::reduce(
            &g,
            out,
            &system,
            r,
            ReduceOptions {
                model,
                bode,
                slow_fast,
                ratio,
            },
        ),
        Command::Stabilize {
            system,
            r,
            observer,
            feedback,
            both: _,
        } => {
            let side = match (observer, feedback) {
                (true, _) => Side::Observer,
                (_, true) => Side::Feedback,
                _ => Side::Both,
            };
            commands::stabilize(&g, out, &system, r, side)
        }
        Command::Svd { matrix, r } => commands::svd(&g, out, &matrix, r),
        Command::Repro { figure } => repro::repro(figure, out, g.jobs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
