//! Direct localization of an underwater acoustic source from multi-receiver
//! recordings.
//!
//! The crate covers the whole pipeline:
//!
//! - [`propagation`]: three-ray isovelocity channel and signal synthesis.
//! - [`sos`]: auto/cross-correlation tensor used as network input.
//! - [`estimators`]: oracle MFP, semi-blind localization, GCC-PHAT/TDOA.
//! - [`nn`]: a small three-branch CNN with cyclic and spherical losses,
//!   trained in two phases.
//! - [`bench`]: datasets, configuration and RMSE-vs-SNR sweeps.

pub mod bench;
pub mod dft;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod nn;
pub mod propagation;
pub mod sos;

pub use error::{Error, Result};
pub use geometry::{cart_to_sph, sph_to_cart, CartesianPosition, Environment, ReceiverArray, Scene, SphericalPosition};
pub use propagation::SignalRecord;
