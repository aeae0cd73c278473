//! Non-Hermitian dynamics of a dissipative three-level qubit.
//!
//! The crate builds the Lindblad generator of a driven |g⟩,|e⟩,|f⟩ system,
//! the effective non-Hermitian Hamiltonian of the post-selected {|e⟩,|f⟩}
//! submanifold and the split Liouvillian `L0 + L1` (no-jump part plus
//! jump-recycle part), and provides:
//!
//! * Liouvillian and Hamiltonian spectra with exceptional-point location
//!   ([`spectral`]),
//! * three independent deterministic propagators and the derived observables
//!   ([`dynamics`]),
//! * a quantum-jump Monte Carlo unraveling with post-selection
//!   ([`trajectory`]),
//! * decaying-sine fitting and the spectroscopy, relaxation and adiabatic-loop
//!   experiment drivers ([`analysis`]),
//! * the configuration format and output writers behind the `nhqubit` binary
//!   ([`config`], [`cli`]).
//!
//! Units: rates in μs⁻¹, couplings and detunings in rad·μs⁻¹, times in μs,
//! ħ = 1.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod model;
pub mod smallmat;
pub mod spectral;
pub mod stats;
pub mod trajectory;

pub use model::SystemParams;
pub use smallmat::CMatrix;
