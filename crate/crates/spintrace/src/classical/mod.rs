//! Classical limit of the spin chain: Hamilton function by the naive
//! substitution, flow and canonical tangent flow in stereographic
//! coordinates, and the action integral.

pub mod flow;
pub mod hamiltonian;
pub mod integrator;
pub mod state;
pub mod tangent;

pub use flow::{EvolveOptions, TrajectorySegment, action_integral, evolve, evolve_gauged};
pub use hamiltonian::{ClassicalHamiltonian, Hessian};
pub use state::ClassicalState;
pub use tangent::tangent_flow;
