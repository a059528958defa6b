//! Physical constants (CODATA 2018 exact SI values).
//!
//! Josephson energies are reported in GHz (i.e. E_J / h), so the
//! Ambegaokar–Baratoff prefactor is divided by Planck's constant.

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Magnetic flux quantum h / 2e, Wb.
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// One micro-electronvolt in joules.
pub const MICRO_EV: f64 = 1e-6 * ELEMENTARY_CHARGE;

/// Converts a frequency in MHz and a time in ns into a phase in radians.
#[inline]
pub fn phase(f_mhz: f64, t_ns: f64) -> f64 {
    2.0 * std::f64::consts::PI * f_mhz * t_ns * 1e-3
}
