//! Quantum model of broadband Stokes/anti-Stokes photon pairs in
//! centrosymmetric cubic crystals.
//!
//! The crate evaluates the electronic and phononic spectral amplitudes of the
//! pair state, the crystal-angle dependent tensor factors, the polarization
//! two-photon state with its entanglement and Bell quantities, predicted
//! coincidence spectra, least-squares extraction of tensor ratios from spectra,
//! and entanglement maps over Raman shift, crystal angle and laser bandwidth.

pub mod error;
pub mod fit;
pub mod maps;
pub mod numerics;
pub mod spectra;
pub mod spectral;
pub mod state;
pub mod tensor;

pub use error::{Error, Result};
pub use numerics::{Complex64, ComplexValue};
pub use spectral::{FrequencyPair, SpectralParams, SpectroscopicParams};
pub use state::TwoPhotonState;
pub use tensor::{Polarization, Preset, TensorSet, YFactors};
