use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, SQRT_2};

use super::{b02, fit_omega, CzParams};
use crate::device::TransmonParams;
use crate::error::{Error, Result};
use crate::lm::{levenberg_marquardt, LmConfig, LmFit};
use crate::par;
use crate::virtual_device::{ScanKind, ScanMap};

/// Relative floor on σ_Ω so exact (noiseless) data keeps finite weights.
const SIGMA_FLOOR: f64 = 1e-12;

/// One column of an extracted |g_eff| curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeffPoint {
    pub normalized_flux: f64,
    #[serde(rename = "g_eff_MHz")]
    pub g_eff: f64,
    #[serde(rename = "sigma_MHz")]
    pub sigma: f64,
    /// Ω fell below δ21 (or no oscillation could be fitted).
    #[serde(rename = "below_floor_flag")]
    pub below_floor: bool,
    /// Fitted oscillation frequency, kept even when Ω < δ21.
    #[serde(rename = "omega_MHz", default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(rename = "sigma_omega_MHz", default, skip_serializing_if = "Option::is_none")]
    pub sigma_omega: Option<f64>,
}

impl GeffPoint {
    /// A bare (flux, |g|, σ) sample, as read back from a curve file.
    pub fn new(normalized_flux: f64, g_eff: f64, sigma: f64) -> Self {
        Self { normalized_flux, g_eff, sigma, below_floor: false, omega: None, sigma_omega: None }
    }

    /// Ω and σ_Ω for fitting; reconstructed from g when the point carries none.
    fn omega_sample(&self, delta21: f64) -> Option<(f64, f64)> {
        match (self.omega, self.sigma_omega) {
            (Some(o), Some(s)) if o.is_finite() && s >= 0.0 => Some((o, s.max(SIGMA_FLOOR * o))),
            _ if !self.below_floor && self.sigma >= 0.0 => {
                let o = (4.0 * self.g_eff * self.g_eff + delta21 * delta21).sqrt();
                Some((o, (4.0 * self.g_eff * self.sigma / o).max(SIGMA_FLOOR * o)))
            }
            _ => None,
        }
    }
}

/// Per flux column: fit Ω, then |g_eff| = √(max(Ω² − δ21², 0))/2.
///
/// Columns whose oscillation cannot be fitted, whose fitted amplitude is not
/// significant at 3σ, or whose amplitude disagrees with the 2g²/Ω² implied by
/// the fitted Ω (a noise peak rather than the chevron) are reported as below
/// the floor with g = 0. Ω itself is kept whenever the amplitude is
/// significant, so that the curve fit is not truncated at the floor.
pub fn extract_geff_curve(map: &ScanMap, delta21: f64, d: f64) -> Result<Vec<GeffPoint>> {
    if map.kind != ScanKind::CzSwap {
        return Err(Error::Precondition(format!("expected a cz_swap scan, got {}", map.kind)));
    }
    let nx = map.x_axis.len();
    if nx < 3 {
        return Err(Error::Precondition(format!("need >= 3 flux columns, got {nx}")));
    }
    let t = &map.y_axis.values;
    let flux = &map.x_axis.values;
    let points = par::map_indexed(nx, |ix| {
        let col = map.column(ix);
        let mut point = GeffPoint { below_floor: true, ..GeffPoint::new(flux[ix], 0.0, 0.0) };
        let fit = match fit_omega(&col, t, d) {
            Ok(f) if f.amplitude.abs() > 3.0 * f.sigma_amplitude && f.sigma.is_finite() => f,
            _ => return point,
        };
        point.omega = Some(fit.omega);
        point.sigma_omega = Some(fit.sigma);
        let g2 = fit.omega * fit.omega - delta21 * delta21;
        if g2 <= 0.0 {
            return point;
        }
        let g = 0.5 * g2.sqrt();
        // the model ties the oscillation amplitude to Ω: b = 2g²/Ω²
        let expected = 2.0 * g * g / (fit.omega * fit.omega);
        let sigma_expected = delta21 * delta21 / fit.omega.powi(3) * fit.sigma;
        if (fit.amplitude - expected).abs() > 3.0 * fit.sigma_amplitude.hypot(sigma_expected) + 0.25 * expected {
            return point;
        }
        GeffPoint { g_eff: g, sigma: fit.omega * fit.sigma / (4.0 * g), below_floor: false, ..point }
    });
    Ok(points)
}

#[derive(Debug, Clone)]
pub struct GeffFitOptions {
    /// Fixed ratio g1c/g2c used to split the fitted product.
    pub coupling_ratio: f64,
    /// Columns with |flux| above this are excluded (resonator hybridization
    /// region that the model does not describe).
    pub max_abs_flux: Option<f64>,
}

impl Default for GeffFitOptions {
    fn default() -> Self {
        Self { coupling_ratio: 1.0, max_abs_flux: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeffCurveFit {
    #[serde(rename = "g12_MHz")]
    pub g12: f64,
    #[serde(rename = "g1c_g2c_MHz2")]
    pub g1c_g2c: f64,
    #[serde(rename = "g1c_MHz")]
    pub g1c: f64,
    #[serde(rename = "g2c_MHz")]
    pub g2c: f64,
    #[serde(rename = "offset_MHz")]
    pub offset: f64,
    /// Covariance of (g12, g1c·g2c, offset).
    pub covariance: Vec<Vec<f64>>,
    /// Positive normalized coupler flux where the fitted g_eff vanishes.
    pub nulling_flux: Option<f64>,
    #[serde(rename = "residual_rms_MHz")]
    pub residual_rms: f64,
}

impl GeffCurveFit {
    pub fn sigma_g12(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }
    pub fn sigma_product(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }
    pub fn sigma_offset(&self) -> f64 {
        self.covariance[2][2].sqrt()
    }

    pub fn params(&self, template: &CzParams) -> CzParams {
        CzParams { g12: self.g12, g1c: self.g1c, g2c: self.g2c, residual_offset: self.offset, ..template.clone() }
    }
}

/// Residuals beyond this many σ are treated as noise locks and dropped.
const OUTLIER_SIGMAS: f64 = 5.0;

/// Fits |√2(g12 − P·B02(f_c(φ))/2)| + offset over (g12, P = g1c·g2c, offset).
///
/// The flux axis is mapped to coupler frequency through the coupler's
/// spectrum; only the product g1c·g2c is identifiable from this curve.
/// A first pass on the above-floor |g| values seeds a fit of
/// Ω = √(4(|g| + offset)² + δ21²) against the per-column Ω, which also uses
/// columns with Ω < δ21: dropping those would bias g upward near the floor.
pub fn fit_geff_curve(
    series: &[GeffPoint],
    coupler: &TransmonParams,
    f_q1: f64,
    f_q2: f64,
    ec2: f64,
    opts: &GeffFitOptions,
) -> Result<GeffCurveFit> {
    let delta = f_q2 - f_q1 - ec2;
    let in_range = |p: &&GeffPoint| opts.max_abs_flux.map_or(true, |m| p.normalized_flux.abs() <= m);
    let b_of = |p: &GeffPoint| b02(coupler.f01_of_flux(p.normalized_flux), f_q1, f_q2, ec2);

    // (B02, |g|, σ_g) above the floor
    let g_pts: Vec<[f64; 3]> = series
        .iter()
        .filter(in_range)
        .filter(|p| !p.below_floor && p.sigma.is_finite() && p.sigma >= 0.0)
        .map(|p| Ok([b_of(p)?, p.g_eff, p.sigma]))
        .collect::<Result<_>>()?;
    let seed = fit_g(&g_pts)?;

    // (B02, Ω, σ_Ω)
    let all: Vec<[f64; 3]> = series
        .iter()
        .filter(in_range)
        .filter_map(|p| p.omega_sample(delta).map(|(o, s)| (p, o, s)))
        .map(|(p, o, s)| Ok([b_of(p)?, o, s]))
        .collect::<Result<_>>()?;
    let omega_model = |p: &[f64], b: f64| {
        let g = curve_model(p, b);
        (4.0 * g * g + delta * delta).sqrt()
    };
    let mut fit = seed;
    let mut used: Vec<[f64; 3]> = Vec::new();
    for _ in 0..10 {
        let kept: Vec<[f64; 3]> = all
            .iter()
            .filter(|q| ((omega_model(&fit.params, q[0]) - q[1]) / q[2]).abs() <= OUTLIER_SIGMAS)
            .copied()
            .collect();
        if kept == used {
            break;
        }
        used = kept;
        check_sides(&used, 2.0 * fit.params[0] / fit.params[1])?;
        let start = fit.params.clone();
        fit = levenberg_marquardt(
            |p, out| {
                for (i, q) in used.iter().enumerate() {
                    out[i] = (omega_model(p, q[0]) - q[1]) / q[2];
                }
            },
            &start,
            used.len(),
            &[start[0].abs().max(0.1), start[1].abs().max(1.0), 0.1],
            &LmConfig::default(),
        )?;
    }

    let (g12, product, offset) = (fit.params[0], fit.params[1], fit.params[2]);
    let g2c = (product.abs() / opts.coupling_ratio).sqrt();
    let g1c = opts.coupling_ratio * g2c;
    let fitted = CzParams { g12, g1c, g2c, ec2, ..CzParams::default() };
    let resid: f64 = used.iter().map(|q| (omega_model(&fit.params, q[0]) - q[1]).powi(2)).sum::<f64>();
    Ok(GeffCurveFit {
        g12,
        g1c_g2c: product,
        g1c,
        g2c,
        offset,
        covariance: fit.covariance.clone(),
        nulling_flux: nulling_flux(&fitted, coupler, f_q1, f_q2).ok(),
        residual_rms: (resid / used.len() as f64).sqrt(),
    })
}

fn curve_model(p: &[f64], b: f64) -> f64 {
    (SQRT_2 * (p[0] - 0.5 * p[1] * b)).abs() + p[2]
}

fn check_sides(pts: &[[f64; 3]], b_null: f64) -> Result<()> {
    let above = pts.iter().filter(|p| p[0] > b_null).count();
    let below = pts.iter().filter(|p| p[0] < b_null).count();
    if above < 6 || below < 6 {
        return Err(Error::Identifiability(format!(
            "points on each side of the null: {below} / {above}, need >= 6"
        )));
    }
    Ok(())
}

/// Weighted fit of |g| directly, seeded at the smallest |g| (the null).
fn fit_g(pts: &[[f64; 3]]) -> Result<LmFit> {
    if pts.len() < 6 {
        return Err(Error::Identifiability(format!("only {} usable points", pts.len())));
    }
    // The smallest |g| marks the null, where P·B02 = 2·g12.
    let inull = (0..pts.len()).fold(0, |b, i| if pts[i][1] < pts[b][1] { i } else { b });
    let b_null = pts[inull][0];
    check_sides(pts, b_null)?;

    // With r = P/g12 fixed by the null, |g| = √2·g12·|1 − r·B02/2|.
    let r0 = 2.0 / b_null;
    let (num, den) = pts.iter().fold((0.0, 0.0), |(n, d), p| {
        let basis = SQRT_2 * (1.0 - 0.5 * r0 * p[0]).abs();
        let w = 1.0 / (p[2] * p[2]).max(1e-30);
        (n + w * basis * p[1], d + w * basis * basis)
    });
    let g12_0 = if den > 0.0 { num / den } else { 1.0 };
    let p0 = [g12_0, r0 * g12_0, pts[inull][1].max(1e-3)];
    let weights: Vec<f64> = pts.iter().map(|p| if p[2] > 0.0 { 1.0 / p[2] } else { 1.0 }).collect();
    levenberg_marquardt(
        |p, out| {
            for (i, q) in pts.iter().enumerate() {
                out[i] = (curve_model(p, q[0]) - q[1]) * weights[i];
            }
        },
        &p0,
        pts.len(),
        &[g12_0.abs().max(0.1), (r0 * g12_0).abs().max(1.0), 0.1],
        &LmConfig::default(),
    )
}

/// Mean |P(φ) − P(−φ)| over a chevron whose flux grid is mirror-symmetric
/// about zero.
pub fn symmetry_residual(map: &ScanMap) -> Result<f64> {
    if map.kind != ScanKind::CzSwap {
        return Err(Error::Precondition(format!("expected a cz_swap scan, got {}", map.kind)));
    }
    let x = &map.x_axis.values;
    let n = x.len();
    let tol = 1e-9 * x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if (0..n).any(|i| (x[i] + x[n - 1 - i]).abs() > tol) {
        return Err(Error::InvalidGrid("flux grid is not symmetric about zero".into()));
    }
    let ny = map.y_axis.len();
    let sum: f64 = (0..n).flat_map(|ix| (0..ny).map(move |iy| (ix, iy))).map(|(ix, iy)| (map.at(ix, iy) - map.at(n - 1 - ix, iy)).abs()).sum();
    Ok(sum / (n * ny) as f64)
}

/// Positive normalized coupler flux in (0, π/2) at which g_eff crosses zero,
/// searched on the side of the sweet spot above the B02 poles.
pub fn nulling_flux(p: &CzParams, coupler: &TransmonParams, f_q1: f64, f_q2: f64) -> Result<f64> {
    let pole = f_q1.max(f_q2 + p.ec2);
    let g = |phi: f64| super::g_eff(p, coupler.f01_of_flux(phi), f_q1, f_q2);
    // largest flux still above the poles
    let (mut a, mut b) = (0.0, FRAC_PI_2);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if coupler.f01_of_flux(m) > pole + 1e-3 {
            a = m;
        } else {
            b = m;
        }
    }
    let (mut lo, mut hi) = (0.0, a);
    let (g_lo, g_hi) = (g(lo)?, g(hi)?);
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::Domain("g_eff has no zero crossing in the coupler band".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)?.signum() == g_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
