//! Maximal-coordinate constrained rigid-body dynamics and first-order dual
//! forward-dynamics solvers.
//!
//! The crate is organized around the per-step pipeline of a time-stepping
//! simulator:
//!
//! 1. [`collision`] generates discrete contact points between primitive shapes.
//! 2. [`dynamics`] assembles the generalized mass matrix, bias forces and the
//!    stacked constraint Jacobian for joints, joint limits and contacts.
//! 3. [`dual`] projects the assembled step into constraint space, producing a
//!    Delassus matrix, a free velocity and a composite cone, optionally with
//!    restitution, stabilization and constraint-softening terms.
//! 4. [`solvers`] computes the constraint reactions with either a projective
//!    splitting (SOR/Gauss-Seidel) scheme or a proximal ADMM scheme, built on
//!    the cone projections and single-contact solvers in [`projectors`].
//! 5. [`bench`] measures solution quality, categorizes problems, serializes
//!    them to a dataset container, and renders performance profiles.

pub mod bench;
pub mod collision;
pub mod dual;
pub mod dynamics;
pub mod projectors;
pub mod solvers;

pub use dual::DualProblem;
pub use dynamics::{AssembledStep, BodySpec, BodyState, ContactPoint, JointSpec, SystemModel};
pub use solvers::{SolverConfig, SolverId, SolverReport};
