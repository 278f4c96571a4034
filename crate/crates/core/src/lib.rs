//! Universal, shift-robust adversarial audio perturbations.
//!
//! The perturbation is searched in a zero-phase spectral co-domain and
//! rendered as a short even-symmetric block tiled over the clip, which makes
//! the attack insensitive to when playback starts.

pub mod attack;
mod bytes;
pub mod codomain;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod nn;
pub mod seed;

pub use attack::{universal_attack, AttackArtifact, AttackConfig, AttackState};
pub use codomain::{
    mapping_for, Domain, DomainMapping, IdentityMapping, ZeroPhaseMapping, ZeroPhaseSpectrum,
};
pub use dsp::{cyclic_shift, l2_norm, snr_db, Waveform};
pub use error::{Error, Result};
pub use nn::{Arch, Classifier, LabeledDataset, Model, Split};
pub use seed::SeedStreams;
