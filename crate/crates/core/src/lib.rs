//! Best constants and extremal functions for the Gagliardo–Nirenberg–Sobolev
//! inequality
//!
//! ```text
//! (∫_G |v|^p)^{2/p} ≤ C_p(G) ∫_G (|v'|² + |v|²),   v ∈ H¹₀(G),  p > 2,
//! ```
//!
//! on locally finite metric graphs with Dirichlet conditions at degree-one
//! vertices, together with the Kirchhoff-ODE system `-v'' + v = |v|^{p-2} v`
//! that its extremals satisfy.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: metric graphs, validation and chain classification.
//! * [`line`]: the closed-form soliton on ℝ and `C_p(ℝ)`.
//! * [`phase`]: the planar system `v' = u, u' = v - |v|^{p-2} v`.
//! * [`shooting`]: admissible non-negative solution branches on one edge.
//! * [`kirchhoff`]: Kirchhoff matching on graphs with a single inner vertex.
//! * [`variational`]: direct P1 finite-element minimisation of the quotient.
//! * [`io`]: graph files, CSV/manifest output and figure reproduction.

pub mod error;
pub mod graph;
pub mod io;
pub mod kirchhoff;
pub mod line;
pub mod phase;
pub mod quadrature;
pub mod shooting;
pub mod variational;

pub use error::{Error, Result};
pub use graph::{BcRole, Edge, EdgeLength, GraphClass, MetricGraph, Vertex};
pub use line::LineReference;
pub use phase::{OrbitClass, PhaseState};
