use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Qubit,
    Coupler,
}

/// Which side of the offset voltage an idle bias sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    #[default]
    Plus,
    Minus,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// Spectrum model of one flux-tunable element. Frequencies in MHz, voltages
/// in V, the flux conversion factor in rad/V.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransmon", into = "RawTransmon")]
pub struct TransmonParams {
    label: String,
    role: Role,
    f01_max: f64,
    ec: f64,
    d: f64,
    ac: f64,
    v_ofs: f64,
}

#[derive(Serialize, Deserialize)]
struct RawTransmon {
    label: String,
    role: Role,
    #[serde(rename = "f01_max_MHz")]
    f01_max: f64,
    #[serde(rename = "EC_over_h_MHz")]
    ec: f64,
    d: f64,
    #[serde(rename = "Ac_rad_per_V")]
    ac: f64,
    #[serde(rename = "V_ofs_V")]
    v_ofs: f64,
}

impl TryFrom<RawTransmon> for TransmonParams {
    type Error = Error;
    fn try_from(r: RawTransmon) -> Result<Self> {
        TransmonParams::new(r.label, r.role, r.f01_max, r.ec, r.d, r.ac, r.v_ofs)
    }
}

impl From<TransmonParams> for RawTransmon {
    fn from(p: TransmonParams) -> Self {
        RawTransmon { label: p.label, role: p.role, f01_max: p.f01_max, ec: p.ec, d: p.d, ac: p.ac, v_ofs: p.v_ofs }
    }
}

impl TransmonParams {
    pub fn new(
        label: impl Into<String>,
        role: Role,
        f01_max: f64,
        ec: f64,
        d: f64,
        ac: f64,
        v_ofs: f64,
    ) -> Result<Self> {
        let label = label.into();
        let bad = |what: &str| Err(Error::Domain(format!("{label}: {what}")));
        if !(f01_max > 0.0) || !f01_max.is_finite() {
            return bad("f01_max must be positive");
        }
        if !(ec > 0.0) || !ec.is_finite() {
            return bad("E_C/h must be positive");
        }
        if !(0.0..1.0).contains(&d) {
            return bad("junction asymmetry must lie in [0, 1)");
        }
        if !(ac > 0.0) || !ac.is_finite() {
            return bad("A_c must be positive");
        }
        if !v_ofs.is_finite() {
            return bad("V_ofs must be finite");
        }
        Ok(Self { label, role, f01_max, ec, d, ac, v_ofs })
    }

    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn role(&self) -> Role {
        self.role
    }
    pub fn f01_max(&self) -> f64 {
        self.f01_max
    }
    pub fn ec(&self) -> f64 {
        self.ec
    }
    pub fn d(&self) -> f64 {
        self.d
    }
    pub fn ac(&self) -> f64 {
        self.ac
    }
    pub fn v_ofs(&self) -> f64 {
        self.v_ofs
    }

    pub fn with_v_ofs(&self, v_ofs: f64) -> Self {
        Self { v_ofs, ..self.clone() }
    }

    /// Voltage period of the spectrum, π/A_c.
    pub fn period(&self) -> f64 {
        PI / self.ac
    }

    /// πΦ/Φ0 for a voltage on this element's own line.
    pub fn normalized_flux(&self, v: f64) -> f64 {
        self.ac * (v - self.v_ofs)
    }

    pub fn voltage_of_flux(&self, phi: f64) -> f64 {
        self.v_ofs + phi / self.ac
    }

    pub fn f01_of_flux(&self, phi: f64) -> f64 {
        // cos² via the double angle keeps full frustration exact; writing the
        // result as an offset from f01_max keeps the sweet spot exact.
        let d2 = self.d * self.d;
        let cos2 = 0.5 * (1.0 + (2.0 * phi).cos());
        let bracket = d2 + (1.0 - d2) * cos2;
        self.f01_max + (self.f01_max + self.ec) * (bracket.powf(0.25) - 1.0)
    }

    /// Transition frequency at effective voltage `v_eff`.
    pub fn f01(&self, v_eff: f64) -> f64 {
        self.f01_of_flux(self.normalized_flux(v_eff))
    }

    /// df01/dV in MHz/V. Infinite for d = 0 at full frustration.
    pub fn df01_dv(&self, v_eff: f64) -> f64 {
        let phi = self.normalized_flux(v_eff);
        let d2 = self.d * self.d;
        let c = phi.cos();
        let g = d2 + (1.0 - d2) * c * c;
        -(self.f01_max + self.ec) * 0.25 * g.powf(-0.75) * (1.0 - d2) * (2.0 * phi).sin() * self.ac
    }

    /// Attainable frequency band [full frustration, sweet spot].
    pub fn band(&self) -> (f64, f64) {
        (self.f01_of_flux(FRAC_PI_2), self.f01_max)
    }

    /// Bias voltage that idles the element at `f01_target`.
    pub fn idle_voltage(&self, f01_target: f64, branch: Branch) -> Result<f64> {
        let phi = idle_flux(self.f01_max, self.ec, self.d, f01_target)?;
        Ok(self.v_ofs + branch.sign() * phi / self.ac)
    }
}

/// Normalized flux in [0, π/2] at which the spectrum reaches `f01_target`.
pub fn idle_flux(f01_max: f64, ec: f64, d: f64, f01_target: f64) -> Result<f64> {
    if d >= 1.0 {
        return Err(Error::DegenerateAsymmetry);
    }
    let d2 = d * d;
    let k = (f01_target + ec) / (f01_max + ec);
    let arg = 2.0 / (1.0 - d2) * k.powi(4) - (1.0 + d2) / (1.0 - d2);
    const CLAMP: f64 = 1e-12;
    let arg = if arg.is_nan() || arg > 1.0 + CLAMP || arg < -1.0 - CLAMP || k < 0.0 {
        let low = (f01_max + ec) * d.sqrt() - ec;
        return Err(Error::OutOfBand { value: f01_target, low, high: f01_max });
    } else {
        arg.clamp(-1.0, 1.0)
    };
    Ok(0.5 * arg.acos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn q1() -> TransmonParams {
        TransmonParams::new("Q1", Role::Qubit, 4768.6, 206.2, 0.65, 2.3, -0.047).unwrap()
    }
    fn c2() -> TransmonParams {
        TransmonParams::new("C2", Role::Coupler, 7909.3, 127.2, 0.0, 2.1, 0.018).unwrap()
    }

    #[test]
    fn sweet_spot_identity() {
        assert_eq!(q1().f01(q1().v_ofs()), 4768.6);
        assert_eq!(c2().f01(c2().v_ofs()), 7909.3);
    }

    #[test]
    fn symmetric_full_frustration() {
        let c = c2();
        assert!((c.f01_of_flux(FRAC_PI_2) + 127.2).abs() < 1e-9);
        let v = c.voltage_of_flux(FRAC_PI_2);
        assert!((c.f01(v) + 127.2).abs() < 1e-3);
    }

    #[test]
    fn q1_at_quarter_flux() {
        // Frozen from a 50-digit mpmath evaluation of the same closed form:
        // (4768.6+206.2)*(0.4225+0.5775*0.5)**0.25 - 206.2
        let p = q1();
        let f = p.f01_of_flux(std::f64::consts::FRAC_PI_4);
        assert!((f - Q1_QUARTER_FLUX_MHZ).abs() < 1e-9, "{f}");
    }
    const Q1_QUARTER_FLUX_MHZ: f64 = 4_362.379_592_897_085;

    #[test]
    fn normalized_flux_examples() {
        let p = TransmonParams::new("X", Role::Qubit, 5000.0, 200.0, 0.3, 2.0, 0.1).unwrap();
        assert_eq!(p.normalized_flux(0.1), 0.0);
        assert!((p.normalized_flux(0.6) - 1.0).abs() < 1e-15);
        assert!((p.normalized_flux(0.1 + p.period()) - PI).abs() < 1e-12);
    }

    #[test]
    fn idle_at_sweet_spot() {
        let p = q1();
        assert_eq!(p.idle_voltage(4768.6, Branch::Plus).unwrap(), p.v_ofs());
    }

    #[test]
    fn idle_out_of_band() {
        let p = q1();
        let (lo, hi) = p.band();
        assert!(matches!(p.idle_voltage(hi + 1.0, Branch::Plus), Err(Error::OutOfBand { .. })));
        assert!(matches!(p.idle_voltage(lo - 1.0, Branch::Minus), Err(Error::OutOfBand { .. })));
        assert!(matches!(idle_flux(5000.0, 200.0, 1.0, 4000.0), Err(Error::DegenerateAsymmetry)));
    }

    #[test]
    fn idle_roundtrip_random_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [q1(), c2()] {
            let (lo, hi) = p.band();
            for _ in 0..100 {
                let f = rng.gen_range(lo.max(0.0)..hi);
                for b in [Branch::Plus, Branch::Minus] {
                    let v = p.idle_voltage(f, b).unwrap();
                    assert!((p.f01(v) - f).abs() <= 1e-9 * f, "{} {f}", p.label());
                }
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = q1();
        for i in 1..20 {
            let v = p.v_ofs() + i as f64 * 0.03;
            let h = 1e-6;
            let fd = (p.f01(v + h) - p.f01(v - h)) / (2.0 * h);
            assert!((p.df01_dv(v) - fd).abs() < 1e-5 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn json_field_names() {
        let s = serde_json::to_string(&q1()).unwrap();
        assert!(s.contains("\"f01_max_MHz\":4768.6"));
        assert!(s.contains("\"EC_over_h_MHz\""));
        assert!(s.contains("\"Ac_rad_per_V\""));
        assert!(s.contains("\"V_ofs_V\""));
        assert!(s.contains("\"role\":\"qubit\""));
        let back: TransmonParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, q1());
        let bad = s.replace("\"d\":0.65", "\"d\":1.2");
        assert!(serde_json::from_str::<TransmonParams>(&bad).is_err());
    }

    proptest! {
        #[test]
        fn periodic_and_reflection_symmetric(
            fmax in 3000.0f64..9000.0, ec in 80.0f64..300.0, d in 0.0f64..0.95,
            ac in 0.5f64..5.0, vofs in -0.5f64..0.5, dv in -3.0f64..3.0,
        ) {
            let p = TransmonParams::new("P", Role::Qubit, fmax, ec, d, ac, vofs).unwrap();
            prop_assert_eq!(p.f01(vofs), fmax);
            let v = vofs + dv;
            let a = p.f01(v);
            let b = p.f01(v + p.period());
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(ec));
            let r = p.f01(vofs - dv);
            prop_assert!((a - r).abs() <= 1e-9 * a.abs().max(ec));
        }

        #[test]
        fn strictly_decreasing_on_first_branch(d in 0.0f64..0.9, x in 0.01f64..0.98) {
            let p = TransmonParams::new("P", Role::Qubit, 5000.0, 200.0, d, 2.0, 0.0).unwrap();
            let v1 = x * p.period() / 2.0;
            let v2 = v1 + 0.01 * p.period() / 2.0;
            prop_assert!(p.f01(v2) < p.f01(v1));
            let back = p.idle_voltage(p.f01(v1), Branch::Plus).unwrap();
            prop_assert!((p.f01(back) - p.f01(v1)).abs() <= 1e-9 * p.f01(v1));
        }
    }
}
