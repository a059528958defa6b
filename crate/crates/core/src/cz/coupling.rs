use super::CzParams;
use crate::error::{Error, Result};

const POLE_GUARD: f64 = 1e-6;

fn guarded(term: &'static str, value: f64) -> Result<f64> {
    if value.abs() < POLE_GUARD || !value.is_finite() {
        Err(Error::Pole { term, value })
    } else {
        Ok(1.0 / value)
    }
}

/// B02 = 1/Δ1 + 1/(Δ2 − E_C2) + 1/Σ1 + 1/(Σ2 + E_C2), in 1/MHz, with
/// Δj = f_c − f_qj and Σj = f_c + f_qj.
pub fn b02(f_c: f64, f_q1: f64, f_q2: f64, ec2: f64) -> Result<f64> {
    Ok(guarded("Delta1", f_c - f_q1)?
        + guarded("Delta2 - E_C2", f_c - f_q2 - ec2)?
        + guarded("Sigma1", f_c + f_q1)?
        + guarded("Sigma2 + E_C2", f_c + f_q2 + ec2)?)
}

/// Coupler-mediated |11⟩↔|02⟩ coupling, √2·(g12 − g1c·g2c·B02/2).
pub fn g_eff(p: &CzParams, f_c: f64, f_q1: f64, f_q2: f64) -> Result<f64> {
    let b = b02(f_c, f_q1, f_q2, p.ec2)?;
    Ok(std::f64::consts::SQRT_2 * (p.g12 - 0.5 * p.g_product() * b))
}

/// Dispersive approximation √2·(g12 − 2·g1c·g2c/(f_c − f)).
pub fn g_eff_approx(p: &CzParams, f_c: f64, f: f64) -> Result<f64> {
    let inv = guarded("f_c - f", f_c - f)?;
    Ok(std::f64::consts::SQRT_2 * (p.g12 - 2.0 * p.g_product() * inv))
}

/// The approximation assumes the coupler sits above the qubit.
pub fn approx_regime_valid(f_c: f64, f: f64) -> bool {
    f_c > f
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn dispersive_limit() {
        let near = b02(6000.0, 4768.6, 4985.5, 207.6).unwrap();
        let far = b02(1e6, 4768.6, 4985.5, 207.6).unwrap();
        assert!(far.abs() < 1e-5 * near.abs() * 1e3);
        assert!(far.abs() < 5e-6);
    }

    #[test]
    fn first_two_terms_equal_when_detunings_match() {
        // With Δj = f_c − f_qj the second term equals the first when
        // f_q2 + E_C2 = f_q1.
        let (fc, ec2, fq1) = (5379.0, 206.0, 4931.0);
        let fq2 = fq1 - ec2;
        let t1 = 1.0 / (fc - fq1);
        let t2 = 1.0 / (fc - fq2 - ec2);
        assert_eq!(t1, t2);
        let full = b02(fc, fq1, fq2, ec2).unwrap();
        let sigma = 1.0 / (fc + fq1) + 1.0 / (fc + fq2 + ec2);
        assert!((full - (2.0 * t1 + sigma)).abs() < 1e-15);
    }

    #[test]
    fn idle_configuration_term_by_term() {
        // f_C2 = 5379, f_Q1 = 4931, f_Q2 = 4789, E_C2 = 206 MHz
        let terms = [1.0 / 448.0, 1.0 / 384.0, 1.0 / 10310.0, 1.0 / 10374.0];
        let want: f64 = terms.iter().sum();
        let got = b02(5379.0, 4931.0, 4789.0, 206.0).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.005_029_697_567_5).abs() < 1e-12, "{got}");
    }

    #[test]
    fn poles_are_named() {
        match b02(4768.6, 4768.6, 4985.5, 207.6) {
            Err(Error::Pole { term, .. }) => assert_eq!(term, "Delta1"),
            other => panic!("{other:?}"),
        }
        match b02(5193.1, 4768.6, 4985.5, 207.6) {
            Err(Error::Pole { term, .. }) => assert_eq!(term, "Delta2 - E_C2"),
            other => panic!("{other:?}"),
        }
        assert!(g_eff_approx(&CzParams::default(), 5000.0, 5000.0).is_err());
    }

    #[test]
    fn vanishing_mediated_term() {
        let mut p = CzParams::default();
        p.g1c = 1e-300;
        let g = g_eff(&p, 7000.0, 4768.6, 4985.5).unwrap();
        assert!((g - SQRT_2 * p.g12).abs() < 1e-12);
    }

    #[test]
    fn approx_root_and_limit() {
        let p = CzParams::default();
        let root = 2.0 * p.g_product() / p.g12;
        assert!(g_eff_approx(&p, 4768.6 + root, 4768.6).unwrap().abs() < 1e-12);
        let far = g_eff_approx(&p, 1e12, 4768.6).unwrap();
        assert!((far - SQRT_2 * p.g12).abs() < 1e-6);
        assert!(approx_regime_valid(6000.0, 4768.6));
        assert!(!approx_regime_valid(4000.0, 4768.6));
    }

    #[test]
    fn full_zero_crossing_vs_leading_order() {
        // Bisection on the full expression with f_q2 = f_q1 − E_C2, so that
        // Δ1 = Δ2 − E_C2 = Δ. Dropping the Σ terms gives B02 = 2/Δ and a
        // root at Δ0 = g1c·g2c/g12; the Σ terms shift it by O(Δ0/Σ).
        let p = CzParams::default();
        let f = 4768.6;
        let fq2 = f - p.ec2;
        let g = |fc: f64| g_eff(&p, fc, f, fq2).unwrap();
        let (mut lo, mut hi) = (f + 1.0, f + 1e5);
        assert!(g(lo) < 0.0 && g(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let delta_full = 0.5 * (lo + hi) - f;
        let delta0 = p.g_product() / p.g12;
        let sigma = 2.0 * f + delta0;
        let rel = (delta_full - delta0).abs() / delta0;
        assert!(rel < 2.0 * delta0 / sigma, "rel {rel}");
        // the printed dispersive form roots at twice that detuning
        let approx_root = 2.0 * p.g_product() / p.g12;
        assert!((approx_root / delta0 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn approx_agrees_with_full_far_detuned() {
        // Once the mediated term is small next to g12 both forms approach
        // √2·g12 and agree to 5%.
        let p = CzParams::default();
        let f = 4768.6;
        let fq2 = f - p.ec2;
        for delta in [1e5, 2e5, 5e5] {
            let full = g_eff(&p, f + delta, f, fq2).unwrap();
            let approx = g_eff_approx(&p, f + delta, f).unwrap();
            assert!((full - approx).abs() < 0.05 * full.abs(), "{delta}: {full} vs {approx}");
        }
    }

    #[test]
    fn monotone_between_pole_and_zero() {
        let p = CzParams::default();
        let (fq1, fq2) = (4768.6, 4768.6 + p.ec2 + p.delta21);
        let start = fq2 + p.ec2 + 1.0;
        let mut prev = g_eff(&p, start, fq1, fq2).unwrap();
        let mut fc = start;
        while prev < 0.0 {
            fc += 1.0;
            let g = g_eff(&p, fc, fq1, fq2).unwrap();
            assert!(g > prev);
            prev = g;
        }
    }
}
