//! Numerical laboratory for the classical-quantum correspondence of open
//! systems: Lindblad evolution of density matrices on one side, Fokker-Planck
//! evolution of their Weyl symbols on the other, with the Hilbert-Schmidt
//! distance between the two measured against semigroup envelopes and
//! semiclassical error scalings.
//!
//! The crate is organized around a discretized phase space ([`phase_space`]),
//! an exactly unitary quantization dictionary ([`weyl`]), the two generators
//! ([`lindblad`], [`fokker_planck`]), curated example systems ([`presets`]),
//! and the comparison experiments themselves ([`correspondence`]).

pub mod correspondence;
pub mod error;
mod fastop;
mod fft;
pub mod fokker_planck;
pub mod lindblad;
pub mod linalg;
pub mod phase_space;
pub mod presets;
pub mod validation;
pub mod weyl;

pub use error::{Error, Result};
pub use phase_space::{PhaseSpaceGrid, Symbol};
pub use weyl::{CoherentState, OperatorMatrix};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
