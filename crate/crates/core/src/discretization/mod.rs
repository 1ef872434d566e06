//! Angular quadrature, the slab mesh, and the upwind DG transport operators.

mod dg;
mod mesh;
mod quadrature;

pub use dg::{assemble_dg, Boundary, CrossSections, DgOperators, TransportSweeper};
pub(crate) use dg::velocity_average;
pub use mesh::{build_mesh, Mesh1D};
pub use quadrature::{gauss_legendre, AngularQuadrature};
