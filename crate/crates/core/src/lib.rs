//! # metasim-core
//!
//! Modeling, evaluation, and optimization of reconfigurable-metasurface
//! transceivers that serve communication and sensing from one aperture.
//!
//! The library is organized around a single composition rule: a transmitter is
//! described by a baseband matrix `V`, a chain of feeding matrices `T_l`
//! (scalar carrier, waveguide, or dense diffraction), and diagonal
//! reconfiguration matrices `Q_l` holding the tunable element responses. The
//! effective transmit matrix
//!
//! ```text
//! E = Q_L T_L ... Q_1 T_1 V
//! ```
//!
//! feeds every downstream quantity: user rates, beam patterns toward sensing
//! targets, pilot observation operators, and harmonic patterns of
//! time-modulated elements.
//!
//! ## Modules
//!
//! - [`framework`]: architecture descriptions, constraint families, and the
//!   composition of `E` with provenance hashes.
//! - [`channel`]: steering vectors (planar and spherical wavefronts),
//!   diffraction and waveguide feeds, and stochastic user channels.
//! - [`metrics`]: SINR/sum-rate, beam pattern, mask matching, and the weighted
//!   dual-function objective.
//! - [`optimize`]: constraint projections, projected gradient ascent,
//!   alternating precoder/surface optimization, and a gradient checker.
//! - [`estimate`]: multi-slot pilot protocol, stacked linear systems, and
//!   least-squares/ridge channel recovery.
//! - [`waveform`]: periodic element modulation, harmonic coefficients, and
//!   harmonic beam synthesis.
//!
//! ## Example
//!
//! ```
//! use metasim_core::framework::{ArchitectureSpec, BasebandProcessor, ReconfigState};
//! use metasim_core::channel;
//! use metasim_core::framework::build_effective_matrix;
//!
//! // A 16-element phase-only surface fed by a single carrier.
//! let spec = ArchitectureSpec::ris(16, 0.5, 28e9);
//! assert!(spec.validate().is_valid());
//!
//! let feeds = channel::build_feeds(&spec, 1.0).unwrap();
//! let v = BasebandProcessor::scalar_power(1.0);
//! let state = ReconfigState::zero_phase(&spec);
//! let e = build_effective_matrix(&spec, &v, &feeds, &state).unwrap();
//! assert_eq!(e.matrix.nrows(), 16);
//! ```

pub mod channel;
pub mod error;
pub mod estimate;
pub mod framework;
pub mod hash;
pub mod metrics;
pub mod optimize;
pub mod rng;
pub mod waveform;
pub mod wire;

pub use error::{Error, Result};
pub use framework::{
    ArchKind, ArchitectureSpec, BasebandProcessor, ConstraintFamily, EffectiveTransmitMatrix,
    FeedingMatrix, FeedingTopology, ReconfigState,
};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Dense complex matrix used throughout the library.
pub type CMatrix = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = DVector<Complex64>;

/// Library version embedded in every emitted result.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
