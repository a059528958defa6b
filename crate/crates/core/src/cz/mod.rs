//! CZ digital twin: coupler-mediated |11⟩↔|02⟩ coupling, diabatic-pulse
//! reduction, chevron model, |g_eff| extraction and idle-bias inversion.
//!
//! All public frequencies and couplings are linear (/2π) in MHz and times in
//! ns; the 2π enters only in the phase of the chevron oscillation.

mod coupling;
mod curve;
mod dynamics;
mod idle;

pub use coupling::{approx_regime_valid, b02, g_eff, g_eff_approx};
pub use curve::{
    extract_geff_curve, fit_geff_curve, nulling_flux, symmetry_residual, GeffCurveFit, GeffFitOptions, GeffPoint,
};
pub use dynamics::{fit_omega, p11, pulse_reduction, OmegaFit};
pub use idle::{coupler_frequency_for_geff, coupler_frequency_for_geff_full, coupler_idle_voltage, coupler_idle_voltage_full};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular flux pulse with an exponential rise transient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    #[serde(rename = "T_ns")]
    pub duration: f64,
    #[serde(rename = "t_eff_ns")]
    pub t_eff: f64,
    #[serde(rename = "A_eff_over_A")]
    pub a_eff_over_a: f64,
}

impl Default for PulseShape {
    fn default() -> Self {
        Self { duration: 100.0, t_eff: 278.0, a_eff_over_a: -1.0 }
    }
}

impl PulseShape {
    pub fn reduction(&self) -> Result<f64> {
        pulse_reduction(self.duration, self.t_eff, self.a_eff_over_a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CzParams {
    /// Direct qubit–qubit coupling.
    #[serde(rename = "g12_MHz")]
    pub g12: f64,
    #[serde(rename = "g1c_MHz")]
    pub g1c: f64,
    #[serde(rename = "g2c_MHz")]
    pub g2c: f64,
    /// Charging energy of Q2.
    #[serde(rename = "EC2_over_h_MHz")]
    pub ec2: f64,
    /// |11⟩–|02⟩ detuning.
    #[serde(rename = "delta21_MHz")]
    pub delta21: f64,
    /// Additive floor on |g_eff|.
    #[serde(rename = "residual_offset_MHz")]
    pub residual_offset: f64,
    pub pulse: PulseShape,
}

impl Default for CzParams {
    fn default() -> Self {
        Self {
            g12: 5.0,
            g1c: 100.0,
            g2c: 100.0,
            ec2: 207.6,
            delta21: 9.33,
            residual_offset: 0.435,
            pulse: PulseShape::default(),
        }
    }
}

impl CzParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.g1c > 0.0 && self.g2c > 0.0) {
            return Err(Error::Domain("g1c and g2c must be positive".into()));
        }
        if !(self.pulse.duration > 0.0 && self.pulse.t_eff > 0.0) {
            return Err(Error::Domain("pulse duration and t_eff must be positive".into()));
        }
        if !(self.ec2 > 0.0) || !self.g12.is_finite() || !self.delta21.is_finite() || !(self.residual_offset >= 0.0) {
            return Err(Error::Domain("invalid CZ parameters".into()));
        }
        Ok(())
    }

    pub fn g_product(&self) -> f64 {
        self.g1c * self.g2c
    }
}
