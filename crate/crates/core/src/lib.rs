//! Flux-crosstalk simulator and calibration toolkit for a flux-tunable
//! transmon/coupler subsystem.
//!
//! * [`device`]: transmon spectra, junction physics, crosstalk matrix.
//! * [`virtual_device`]: synthetic spectroscopy, MZLC, Ramsey and CZ-SWAP scans.
//! * [`calibration`]: peak and spectrum fitting, crosstalk extraction,
//!   matrix assembly, metrics and compensation checks.
//! * [`cz`]: coupler-mediated coupling, chevron model and |g_eff| fits.

pub mod calibration;
pub mod consts;
pub mod cz;
pub mod device;
pub mod error;
pub mod linalg;
pub mod lineshape;
pub mod lm;
pub mod par;
pub mod spectral;
pub mod templates;
pub mod virtual_device;

pub use error::{Error, Result};
