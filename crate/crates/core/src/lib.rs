//! Numerical laboratory for late-time asymptotics of the 3D Vlasov-Poisson
//! system
//!
//!   f_t + v.grad_x f - mu grad_x phi . grad_v f = 0,   lap phi = rho(f),
//!
//! with mu = +1 attractive, mu = -1 repulsive, in the small-data dispersive
//! regime.  The crate provides analytic initial-data families with exact
//! derivatives, a free-transport oracle (exact densities, self-similar
//! expansions, conservation laws, late-time tails, weak limits), a free-space
//! Poisson solver, a phase-space particle integrator with modified weights,
//! extraction of scattering data (Q_inf, phi_inf), polyhomogeneous expansions
//! of the modified characteristics, and a verdict harness that turns decay
//! rates and coefficient identities into machine-checkable pass/fail records.

pub mod config;
pub mod error;
pub mod extract;
pub mod field;
pub mod integrator;
pub mod linear;
pub mod lsq;
pub mod modchar;
pub mod multi_index;
pub mod phase;
pub mod pipeline;
pub mod poisson;
pub mod quad;
pub mod verdict;

pub use error::VpError;
pub use field::{Grid3, ScalarField3, VectorField3};
pub use multi_index::MultiIndex;
pub use phase::{InitialDataSpec, ParticleEnsemble, VGrid};
