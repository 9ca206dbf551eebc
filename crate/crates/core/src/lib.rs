//! Dominant invariant subspaces of general real matrices via the Oja flow.
//!
//! The flow `eps * dU/dt = (I - U U^T)(A + a I) U` drives an `n x r` frame
//! onto the Stiefel manifold and then onto the invariant subspace belonging
//! to the `r` eigenvalues of `A` with the largest real parts. A positive
//! shift `a` (chosen so that `sym(A) + a I` is positive definite) makes the
//! manifold attracting without changing the on-manifold dynamics.
//!
//! Modules:
//!
//! - [`linalg`]: dense kernels (QR, complements, `expm`, ordered real Schur, SVD).
//! - [`ojaflow`]: the flow, its integrator and residual diagnostics.
//! - [`riccati`]: projector dynamics used as independent cross-checks.
//! - [`subspace`]: extraction, expansion, reduction, basin checks and SVD.
//! - [`modred`]: projection-based model reduction for LTI systems.
//! - [`control`]: low-rank observer and state-feedback design.
//! - [`io`]: Matrix Market / CSV readers and writers.

pub mod control;
pub mod error;
pub mod io;
pub mod linalg;
pub mod modred;
pub mod ode;
pub mod ojaflow;
pub mod riccati;
pub mod stiefel;
pub mod subspace;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use stiefel::StiefelPoint;
