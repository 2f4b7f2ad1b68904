//! Numerical stability certificates for relative equilibria of Hamiltonian
//! systems with symmetry, built on the energy-momentum-Casimir method.
//!
//! The crate is organised bottom-up:
//!
//! * [`lie`]: matrix Lie groups, brackets, exponentials, (co)adjoint maps.
//! * [`phase`]: Poisson phase spaces with a group action, momentum map and Casimirs.
//! * [`releq`]: locating and validating relative equilibria.
//! * [`emc`]: the energy-momentum-Casimir pipeline and the certificate it emits.
//! * [`dynamics`]: fixed-step integrators behind a name registry.
//! * [`verify`]: empirical stability experiments and Liapunov-bound monitoring.
//! * [`systems`]: the built-in system catalog, selected by name.
//!
//! Sign convention used throughout: `ad*_ζ μ` is defined by
//! `<ad*_ζ μ, η> = -<μ, [ζ, η]>`, and momentum maps are equivariant in the
//! sense `J(g·z) = Ad*_{g⁻¹} J(z)`.

pub mod dynamics;
pub mod emc;
pub mod error;
pub mod lie;
pub mod linalg;
pub mod orbit;
pub mod phase;
pub mod releq;
pub mod systems;
pub mod verify;

pub use error::{EmcError, Result};
pub use lie::{AlgebraElement, DualElement, GroupElement, LieGroup};
pub use phase::PhaseSpaceSystem;
pub use releq::RelativeEquilibrium;

/// Schema version stamped into every serialized report.
pub const SCHEMA_VERSION: u32 = 1;
