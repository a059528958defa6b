//! Ready-made virtual devices.

use rand::Rng;

use crate::cz::CzParams;
use crate::device::{CrosstalkMatrix, Role, TransmonParams};
use crate::error::Result;
use crate::virtual_device::{rng, CzCrosstalkPath, CzSetup, DeviceConfig, ElementNoise, NoiseModel};

pub const PAPER_LABELS: [&str; 4] = ["C1", "Q1", "C2", "Q2"];

/// Planted crosstalk of the paper template, row = detector, column = source,
/// in [`PAPER_LABELS`] order. Aggregates: average 26.53‰, total 318.4‰.
pub const PAPER_CROSSTALK: [[f64; 4]; 4] = [
    [1.0, -0.058, 0.020, -0.0082],
    [0.043, 1.0, 0.040, 0.0111],
    [-0.013, -0.022, 1.0, -0.050],
    [0.013, -0.0141, 0.026, 1.0],
];

struct Element {
    label: &'static str,
    role: Role,
    f01_max: f64,
    ec: f64,
    d: f64,
    ac: f64,
    v_ofs: f64,
    t1: f64,
    t2r: f64,
    fa: f64,
}

const ELEMENTS: [Element; 4] = [
    Element { label: "C1", role: Role::Coupler, f01_max: 8044.6, ec: 119.8, d: 0.0, ac: 1.9, v_ofs: 0.031, t1: 4.8, t2r: 2.3, fa: 0.839 },
    Element { label: "Q1", role: Role::Qubit, f01_max: 4768.6, ec: 206.2, d: 0.65, ac: 2.3, v_ofs: -0.047, t1: 11.1, t2r: 2.4, fa: 0.901 },
    Element { label: "C2", role: Role::Coupler, f01_max: 7909.3, ec: 127.2, d: 0.0, ac: 2.1, v_ofs: 0.018, t1: 4.9, t2r: 3.3, fa: 0.724 },
    Element { label: "Q2", role: Role::Qubit, f01_max: 5081.9, ec: 207.6, d: 0.65, ac: 2.5, v_ofs: 0.062, t1: 6.0, t2r: 2.1, fa: 0.916 },
];

fn transmons() -> Result<Vec<TransmonParams>> {
    ELEMENTS
        .iter()
        .map(|e| TransmonParams::new(e.label, e.role, e.f01_max, e.ec, e.d, e.ac, e.v_ofs))
        .collect()
}

pub fn default_noise() -> NoiseModel {
    NoiseModel {
        signal_noise_sigma: 0.05,
        lorentzian_fwhm: 3.0,
        drive_broadening: 1.0,
        population_noise_sigma: 0.01,
        ramsey_shots: 1000,
        elements: ELEMENTS
            .iter()
            .map(|e| ElementNoise { label: e.label.into(), t1_us: e.t1, t2_ramsey_us: e.t2r, assignment_fidelity: e.fa })
            .collect(),
    }
}

pub fn default_cz() -> CzSetup {
    CzSetup {
        params: CzParams::default(),
        coupler: "C2".into(),
        qubit1: "Q1".into(),
        qubit2: "Q2".into(),
        f_q1: 4768.6,
        crosstalk_path: CzCrosstalkPath::QubitsToCoupler,
    }
}

fn labels() -> Vec<String> {
    PAPER_LABELS.iter().map(|s| s.to_string()).collect()
}

/// Two couplers and two qubits with the measured spectra and coherence of
/// the reference chip and a fixed planted crosstalk matrix.
pub fn paper_device(seed: u64) -> Result<DeviceConfig> {
    let x = CrosstalkMatrix::new(labels(), PAPER_CROSSTALK.iter().map(|r| r.to_vec()).collect())?;
    DeviceConfig::new(transmons()?, x, Some(default_cz()), default_noise(), seed)
}

/// Same elements as [`paper_device`] with off-diagonals drawn uniformly from
/// [−`max_abs`, `max_abs`] by a stream keyed on `seed`.
pub fn random_device(seed: u64, max_abs: f64) -> Result<DeviceConfig> {
    let mut r = rng::stream(&[seed, rng::tag("random-template")]);
    let n = PAPER_LABELS.len();
    let rows = (0..n)
        .map(|i| (0..n).map(|k| if i == k { 1.0 } else { r.gen_range(-max_abs..=max_abs) }).collect())
        .collect();
    let x = CrosstalkMatrix::new(labels(), rows)?;
    DeviceConfig::new(transmons()?, x, Some(default_cz()), default_noise(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_template_aggregates() {
        let x = &PAPER_CROSSTALK;
        let mut total = 0.0;
        for i in 0..4 {
            for k in 0..4 {
                if i != k {
                    total += x[i][k].abs();
                }
            }
        }
        assert!((total * 1e3 - 318.4).abs() < 1e-9);
        let avg = total / 12.0 * 1e3;
        assert!((20.0..=33.0).contains(&avg));
    }

    #[test]
    fn random_template_is_reproducible() {
        let a = random_device(9, 0.06).unwrap();
        let b = random_device(9, 0.06).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.x_true(), random_device(10, 0.06).unwrap().x_true());
        assert!(a.x_true().off_diagonals().all(|(_, _, v)| v.abs() <= 0.06));
    }

    #[test]
    fn device_json_roundtrip() {
        let d = paper_device(3).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        let back: DeviceConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(d, back);
    }
}
