//! The virtual chip: a ground-truth device that produces synthetic
//! spectroscopy, MZLC, Ramsey and CZ-SWAP measurements.

pub mod rng;
mod scan;
mod scans;

pub use scan::{Axis, ScanKind, ScanMap, ScanMeta};
pub use scans::{
    cz_swap_scan, mzlc_scan, mzlc_scan_with, ramsey_scan, ramsey_scan_with, two_tone_scan,
    two_tone_scan_swept, CzScanOptions,
};

use serde::{Deserialize, Serialize};

use crate::cz::CzParams;
use crate::device::{CrosstalkMatrix, TransmonParams};
use crate::error::{Error, Result};

/// Coherence and readout figures of one element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementNoise {
    pub label: String,
    #[serde(rename = "T1_us")]
    pub t1_us: f64,
    #[serde(rename = "T2_ramsey_us")]
    pub t2_ramsey_us: f64,
    /// Readout assignment fidelity in (0.5, 1].
    pub assignment_fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// White noise on spectroscopy/MZLC signals (peak amplitude is 1).
    pub signal_noise_sigma: f64,
    #[serde(rename = "lorentzian_fwhm_MHz")]
    pub lorentzian_fwhm: f64,
    #[serde(rename = "drive_broadening_MHz")]
    pub drive_broadening: f64,
    /// White noise on CZ-SWAP populations.
    pub population_noise_sigma: f64,
    /// Single shots averaged per Ramsey point; 0 emits the exact expectation.
    pub ramsey_shots: u32,
    pub elements: Vec<ElementNoise>,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.lorentzian_fwhm > 0.0) {
            return Err(Error::Domain("lorentzian_fwhm must be positive".into()));
        }
        if !(self.drive_broadening >= 0.0) || !(self.signal_noise_sigma >= 0.0) || !(self.population_noise_sigma >= 0.0) {
            return Err(Error::Domain("noise widths must be non-negative".into()));
        }
        for e in &self.elements {
            if !(e.assignment_fidelity > 0.5 && e.assignment_fidelity <= 1.0) {
                return Err(Error::Domain(format!("{}: assignment fidelity must be in (0.5, 1]", e.label)));
            }
            if !(e.t1_us > 0.0 && e.t2_ramsey_us > 0.0) {
                return Err(Error::Domain(format!("{}: coherence times must be positive", e.label)));
            }
            if e.t2_ramsey_us > 2.0 * e.t1_us {
                log::warn!("{}: T2* = {} µs exceeds 2·T1 = {} µs", e.label, e.t2_ramsey_us, 2.0 * e.t1_us);
            }
        }
        Ok(())
    }

    /// Total spectroscopic line width.
    pub fn linewidth(&self) -> f64 {
        self.lorentzian_fwhm + self.drive_broadening
    }

    pub fn element(&self, label: &str) -> Result<&ElementNoise> {
        self.elements
            .iter()
            .find(|e| e.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Same line shape and coherence, with every stochastic channel off.
    pub fn noiseless(&self) -> Self {
        Self { signal_noise_sigma: 0.0, population_noise_sigma: 0.0, ramsey_shots: 0, ..self.clone() }
    }
}

/// Which crosstalk paths distort an uncompensated CZ-SWAP scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CzCrosstalkPath {
    /// Qubit flux pulses leak onto the coupler loop only.
    #[default]
    QubitsToCoupler,
    /// Full X acts on every line, detuning the qubits as well.
    AllLines,
}

/// CZ operating point of the virtual device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CzSetup {
    pub params: CzParams,
    pub coupler: String,
    pub qubit1: String,
    pub qubit2: String,
    /// Q1 frequency during the CZ pulse; Q2 sits at f_q1 + E_C2 + δ21.
    #[serde(rename = "f_q1_MHz")]
    pub f_q1: f64,
    #[serde(default)]
    pub crosstalk_path: CzCrosstalkPath,
}

impl CzSetup {
    pub fn f_q2(&self) -> f64 {
        self.f_q1 + self.params.ec2 + self.params.delta21
    }
}

/// Complete ground truth of a virtual chip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDevice", into = "RawDevice")]
pub struct DeviceConfig {
    transmons: Vec<TransmonParams>,
    x_true: CrosstalkMatrix,
    cz: Option<CzSetup>,
    noise: NoiseModel,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct RawDevice {
    transmons: Vec<TransmonParams>,
    crosstalk: CrosstalkMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cz: Option<CzSetup>,
    noise: NoiseModel,
    seed: u64,
}

impl TryFrom<RawDevice> for DeviceConfig {
    type Error = Error;
    fn try_from(r: RawDevice) -> Result<Self> {
        DeviceConfig::new(r.transmons, r.crosstalk, r.cz, r.noise, r.seed)
    }
}

impl From<DeviceConfig> for RawDevice {
    fn from(d: DeviceConfig) -> Self {
        RawDevice { transmons: d.transmons, crosstalk: d.x_true, cz: d.cz, noise: d.noise, seed: d.seed }
    }
}

impl DeviceConfig {
    pub fn new(
        transmons: Vec<TransmonParams>,
        x_true: CrosstalkMatrix,
        cz: Option<CzSetup>,
        noise: NoiseModel,
        seed: u64,
    ) -> Result<Self> {
        if transmons.len() != x_true.dim() {
            return Err(Error::DimensionMismatch { expected: transmons.len(), got: x_true.dim() });
        }
        for (t, l) in transmons.iter().zip(x_true.labels()) {
            if t.label() != l {
                return Err(Error::InvalidMatrix(format!(
                    "crosstalk label `{l}` does not match element `{}`",
                    t.label()
                )));
            }
        }
        noise.validate()?;
        let dev = Self { transmons, x_true, cz, noise, seed };
        for t in &dev.transmons {
            dev.noise.element(t.label())?;
        }
        if let Some(cz) = &dev.cz {
            for l in [&cz.coupler, &cz.qubit1, &cz.qubit2] {
                dev.index_of(l)?;
            }
            cz.params.validate()?;
        }
        Ok(dev)
    }

    pub fn transmons(&self) -> &[TransmonParams] {
        &self.transmons
    }
    pub fn x_true(&self) -> &CrosstalkMatrix {
        &self.x_true
    }
    pub fn cz(&self) -> Option<&CzSetup> {
        self.cz.as_ref()
    }
    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn labels(&self) -> Vec<String> {
        self.transmons.iter().map(|t| t.label().to_string()).collect()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.transmons
            .iter()
            .position(|t| t.label() == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn element(&self, label: &str) -> Result<&TransmonParams> {
        Ok(&self.transmons[self.index_of(label)?])
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_noise(&self, noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        Ok(Self { noise, ..self.clone() })
    }

    pub fn with_crosstalk(&self, x_true: CrosstalkMatrix) -> Result<Self> {
        Self::new(self.transmons.clone(), x_true, self.cz.clone(), self.noise.clone(), self.seed)
    }

    pub fn with_cz(&self, cz: CzSetup) -> Result<Self> {
        Self::new(self.transmons.clone(), self.x_true.clone(), Some(cz), self.noise.clone(), self.seed)
    }

    pub fn noiseless(&self) -> Self {
        Self { noise: self.noise.noiseless(), ..self.clone() }
    }
}
