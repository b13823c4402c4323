//! P1 finite elements on structured triangulations of rectangles.

mod field;
mod linsolve;
mod mesh;
pub mod quadrature;
mod space;
mod sparse;

pub use field::NodalField;
pub use linsolve::{DirectSolver, SymbolicFactor, SOLVE_RTOL};
pub use mesh::Mesh;
pub use space::{assemble_mass, assemble_stiffness, FemSpace, SolveCounters, SolveCounts};
pub use sparse::SparseOperator;

pub(crate) use linsolve::norm2;
pub(crate) use space::dot;
