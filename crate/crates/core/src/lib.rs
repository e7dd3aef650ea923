//! Grasp force optimization toolkit.
//!
//! - [`linalg`]: dense matrices, Jacobi eigenvalues, PSD tests
//! - [`lmi`]: linear/bilinear matrix inequalities and the rank-one lifting
//! - [`kkt`]: inequality LPs, KKT residuals, projection dynamics and an ODE oracle
//! - [`neural`]: the collocation-trained neural ansatz for those dynamics
//! - [`grasp`]: grasp maps, friction-cone and joint-effort LMIs, force closure
//! - [`quality`]: grasp wrench space and the largest-minimum-resisted-wrench metric
//! - [`harness`]: file formats and the experiment runner behind the `gfo` CLI

pub mod error;
pub mod grasp;
pub mod harness;
pub mod kkt;
pub mod linalg;
pub mod lmi;
pub mod neural;
pub mod quality;

pub use error::{Error, Result};
