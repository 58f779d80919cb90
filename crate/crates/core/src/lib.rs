//! Inverse homogenization on periodic voxel grids.
//!
//! The crate optimizes a per-element density field so that a user-defined
//! function of the homogenized 6×6 elastic tensor is minimized. The pieces:
//!
//! * [`grid`]: periodic grid topology, eight-color vertex partition and the
//!   color-block memory layout used by every nodal vector.
//! * [`fem`]: the trilinear hexahedral element, macro-strain loads and the
//!   matrix-free stiffness operator on the finest level.
//! * [`multigrid`]: Galerkin hierarchy, colored Gauss–Seidel, V-cycle.
//! * [`homogenization`]: the six cell problems, `C^H` and its sensitivities.
//! * [`objective`]: expression graphs over `C^H` with reverse-mode gradients.
//! * [`field`]: density filtering, penalization chain, symmetry, initialization.
//! * [`oc`]: optimality-criteria update and the convergence rule.
//! * [`app`]: configuration, the optimization loop and file output.

pub mod app;
pub mod error;
pub mod fem;
pub mod field;
pub mod grid;
pub mod homogenization;
pub mod multigrid;
pub mod objective;
pub mod oc;
pub mod precision;

mod reduce;

pub use error::{Error, Result};
pub use precision::{Precision, Storage};

#[cfg(test)]
#[path = "../tests/common/oracle.rs"]
pub(crate) mod oracle;
