//! Calculus of variations on finite isolated time scales.
//!
//! The crate is organised bottom-up:
//!
//! - [`timescale`]: time scales, jump operators, graininess, delta/nabla
//!   derivatives and integrals of grid functions.
//! - [`variational`]: composite functionals `H(∫f_1 Δt, .., ∫f_{k+n} ∇t)` and
//!   the delta-nabla Euler–Lagrange residuals built from them.
//! - [`solver`]: damped Newton iteration with a finite-difference Jacobian,
//!   plus a multistart driver for systems with several roots.
//! - [`econ`]: the firm production/investment model with its four mixed
//!   discretizations and their residual systems.

pub mod econ;
pub mod solver;
pub mod timescale;
pub mod variational;

pub use econ::{EquationKind, FirmParams, ProblemKind};
pub use solver::{MultistartOutcome, ResidualSystem, SolveReport, SolverConfig};
pub use timescale::{GridFunction, Jump, PartialGridFunction, TimeScale, TimeScaleError};
pub use variational::{
    CompositeProblem, EndpointPolicy, IntegralKind, Integrand, OuterFunction, ResidualForm, VariationalError,
};
