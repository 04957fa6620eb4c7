//! Conditional photon subtraction and addition on single-mode field states.
//!
//! A detector placed behind a beam splitter (subtraction) or watching the
//! trigger mode of a parametric down-converter (addition) post-selects the
//! field state whenever it clicks. This crate computes the resulting
//! photon-number statistics three ways:
//!
//! - exact distribution-level maps for resolving and nonresolving k-photon
//!   detectors ([`subtract::subtract_exact`], [`add::add_exact`]), including
//!   sequential detection by an array of on/off detectors;
//! - the approximate ladder-operator models valid in the low-intensity
//!   (`A`) and high-intensity (`E`) regimes;
//! - closed-form expressions for coherent, thermal and mixed
//!   (coherent + thermal) light.
//!
//! The [`oracle`] module verifies the distribution-level maps against a
//! brute-force two-mode Fock-space simulation: embed the state with a vacuum
//! ancilla, apply the beam-splitter or down-conversion unitary by dense
//! matrix exponential, project the ancilla onto the detector POVM and take
//! the partial trace.
//!
//! All operations are pure functions of their inputs and safe to call
//! concurrently.

pub mod add;
pub mod detectors;
pub mod error;
pub mod numerics;
pub mod oracle;
pub mod outcome;
pub mod states;
pub mod subtract;

pub use add::PdcParams;
pub use detectors::{DetectorFlavor, DetectorModel};
pub use error::{Error, Result};
pub use outcome::{OutcomeRecord, ProcessMoments};
pub use states::{FieldStateSpec, PhotonNumberDistribution, DEFAULT_EPSILON};
pub use subtract::BeamSplitterParams;
