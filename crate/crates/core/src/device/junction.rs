use serde::{Deserialize, Serialize};

use crate::consts::{BOLTZMANN, ELEMENTARY_CHARGE, FLUX_QUANTUM, MICRO_EV, PLANCK};
use crate::error::{Error, Result};

/// Designed SQUID junction pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionDesign {
    /// µm²
    pub area_j1: f64,
    /// µm²
    pub area_j2: f64,
    /// Specific resistance R_J = R_N·A, Ω·µm².
    pub resistance_area: f64,
    /// Superconducting gap, µeV.
    pub gap_uev: f64,
    /// K
    pub temperature_k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Junction {
    J1,
    J2,
}

impl JunctionDesign {
    fn area(&self, which: Junction) -> f64 {
        match which {
            Junction::J1 => self.area_j1,
            Junction::J2 => self.area_j2,
        }
    }

    /// Ambegaokar–Baratoff Josephson energy E_J/h in GHz.
    pub fn josephson_energy(&self, which: Junction) -> Result<f64> {
        let area = self.area(which);
        if !(area > 0.0) {
            return Err(Error::Domain(format!("junction area must be positive, got {area}")));
        }
        if !(self.gap_uev > 0.0) {
            return Err(Error::Domain(format!("gap must be positive, got {} µeV", self.gap_uev)));
        }
        if !(self.resistance_area > 0.0) {
            return Err(Error::Domain("specific resistance must be positive".into()));
        }
        if !(self.temperature_k >= 0.0) {
            return Err(Error::Domain("temperature must be non-negative".into()));
        }
        let gap = self.gap_uev * MICRO_EV;
        let r_n = self.resistance_area / area;
        let thermal = if self.temperature_k == 0.0 {
            1.0
        } else {
            (gap / (2.0 * BOLTZMANN * self.temperature_k)).tanh()
        };
        let ej_joule = FLUX_QUANTUM * gap / (4.0 * ELEMENTARY_CHARGE * r_n) * thermal;
        Ok(ej_joule / PLANCK * 1e-9)
    }

    pub fn asymmetry(&self) -> Result<f64> {
        junction_asymmetry(self.area_j1, self.area_j2)
    }
}

/// d = (γ − 1)/(γ + 1) with γ the larger-over-smaller area ratio.
pub fn junction_asymmetry(area_a: f64, area_b: f64) -> Result<f64> {
    if !(area_a > 0.0 && area_b > 0.0) {
        return Err(Error::Domain("junction areas must be positive".into()));
    }
    let gamma = area_a.max(area_b) / area_a.min(area_b);
    Ok((gamma - 1.0) / (gamma + 1.0))
}

/// SQUID Josephson energy at normalized flux `phi` = πΦ/Φ0.
///
/// Uses `sqrt(cos² + d² sin²)`, which equals `|cos|·sqrt(1 + d² tan²)` but has
/// no singularity at half flux.
pub fn ej_of_flux(ej_max: f64, d: f64, phi: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    ej_max * (c * c + d * d * s * s).sqrt()
}

/// Asymptotic transmon frequency (√(8 E_J E_C) − E_C), all in the same unit.
pub fn f01_from_ej(ej: f64, ec: f64) -> f64 {
    (8.0 * ej * ec).sqrt() - ec
}

/// Inverse of [`f01_from_ej`]: E_J = (f + E_C)² / (8 E_C).
pub fn ej_for_f01_max(f01_max: f64, ec: f64) -> f64 {
    (f01_max + ec).powi(2) / (8.0 * ec)
}
