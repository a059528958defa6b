use std::f64::consts::SQRT_2;

use super::{g_eff, CzParams};
use crate::device::{Branch, TransmonParams};
use crate::error::{Error, Result};

/// Coupler frequency at which the dispersive form gives `g_target`:
/// f_c = f + 2·g1c·g2c / (g12 − g_target/√2).
pub fn coupler_frequency_for_geff(p: &CzParams, g_target: f64, f: f64) -> Result<f64> {
    let denom = p.g12 - g_target / SQRT_2;
    if denom.abs() < 1e-12 * p.g12.abs().max(1.0) {
        return Err(Error::Pole { term: "g12 - g_target/sqrt2", value: denom });
    }
    Ok(f + 2.0 * p.g_product() / denom)
}

/// Coupler bias for a target coupling, using the dispersive approximation
/// composed with the coupler's idle-voltage map.
pub fn coupler_idle_voltage(
    p: &CzParams,
    coupler: &TransmonParams,
    g_target: f64,
    f: f64,
    branch: Branch,
) -> Result<f64> {
    let f_c = coupler_frequency_for_geff(p, g_target, f)?;
    coupler.idle_voltage(f_c, branch)
}

/// Coupler frequency at which the full expression gives `g_target`, found by
/// bisection above both poles, where g_eff increases monotonically.
pub fn coupler_frequency_for_geff_full(
    p: &CzParams,
    coupler: &TransmonParams,
    g_target: f64,
    f_q1: f64,
    f_q2: f64,
) -> Result<f64> {
    let pole = f_q1.max(f_q2 + p.ec2);
    let mut lo = pole + 1e-3;
    let mut hi = coupler.f01_max();
    if !(hi > lo) {
        return Err(Error::OutOfBand { value: pole, low: coupler.band().0, high: hi });
    }
    let h = |fc: f64| g_eff(p, fc, f_q1, f_q2).map(|g| g - g_target);
    if h(lo)? > 0.0 || h(hi)? < 0.0 {
        return Err(Error::Domain(format!(
            "g_eff = {g_target} MHz not reachable for coupler frequencies in ({lo}, {hi}] MHz"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Coupler bias for a target coupling from the full B02 expression.
pub fn coupler_idle_voltage_full(
    p: &CzParams,
    coupler: &TransmonParams,
    g_target: f64,
    f_q1: f64,
    f_q2: f64,
    branch: Branch,
) -> Result<f64> {
    let f_c = coupler_frequency_for_geff_full(p, coupler, g_target, f_q1, f_q2)?;
    coupler.idle_voltage(f_c, branch)
}
