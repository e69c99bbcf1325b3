//! Multiscale hierarchical solutions of linear equations `T x = f` on the
//! torus (divergence, curl, identity) by recursive variational refinement
//!
//!     u_{j+1} = arginf_u { ||u||_B + lambda_{j+1} ||r_j - T u||_p^p },
//!     r_j = f - T(u_1 + ... + u_j),     lambda_j = lambda_1 zeta^{j-1},
//!
//! together with certificate checks for the exact identities the scheme
//! satisfies: the residual dual-norm law, the per-level extremality of the
//! minimizing pair, the vanishing threshold, energy identities, and
//! sharp-constant experiments.
//!
//! Start with the runnable examples (`cargo run --release --example div2d`)
//! or the `hiersolve` binary (`solve`, `verify`, `image`, `oracle`).

pub mod cli;
pub mod diff;
pub mod dual;
pub mod error;
pub mod fft;
pub mod grid;
pub mod hierarchy;
pub mod io;
pub mod jmin;
pub mod norms;
pub mod ops;
pub mod prox;
pub mod shapes;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{Field, TorusGrid};
pub use jmin::{minimize_j, oracle_solve, JMinResult, SolverParams};
pub use norms::{compute_norm, inner_product, phi_energy, phi_map, project_zero_mean, NormSpec};
pub use ops::{
    apply_dual, apply_forward, classical_solution, hodge_project, riesz_apply,
    CompatibilityProjection, OperatorSpec,
};
pub use prox::{prox_banach, prox_data_power, DataTerm};
