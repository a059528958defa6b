use serde::{Deserialize, Serialize};
use std::fmt;

use super::SpectrumFit;
use crate::consts::phase;
use crate::device::TransmonParams;
use crate::error::{Error, Result};
use crate::lineshape::{fit_lorentzian, LorentzFitOptions};
use crate::lm::{levenberg_marquardt, weighted_line_fit, weighted_poly_fit, LmConfig};
use crate::par;
use crate::spectral::{magnitude_spectrum, Window};
use crate::virtual_device::{ScanKind, ScanMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mzlc,
    Ramsey,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Mzlc => "mzlc",
            Method::Ramsey => "ramsey",
        })
    }
}

/// One off-diagonal element X[probe][source].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkEstimate {
    pub probe: String,
    pub source: String,
    #[serde(rename = "x_ik")]
    pub x: f64,
    pub sigma: f64,
    pub method: Method,
    /// Probe frequency at zero source bias.
    #[serde(rename = "intercept_freq_MHz")]
    pub intercept_freq: f64,
}

fn pair_labels(scan: &ScanMap) -> Result<(String, String)> {
    let source = scan
        .meta
        .source_label
        .clone()
        .ok_or_else(|| Error::Precondition("scan has no source label".into()))?;
    Ok((scan.meta.probe_label.clone(), source))
}

/// Ridge slope of an MZLC map: Lorentzian centre along the probe axis per
/// source column, then a weighted line through the centres. X = −slope.
pub fn extract_ridge_mzlc(scan: &ScanMap, probe: &TransmonParams) -> Result<CrosstalkEstimate> {
    if scan.kind != ScanKind::Mzlc {
        return Err(Error::Precondition(format!("expected an mzlc scan, got {}", scan.kind)));
    }
    let (p_label, s_label) = pair_labels(scan)?;
    let p = &scan.y_axis.values;
    let (p_lo, p_hi) = (p[0], p[p.len() - 1]);
    let opts = LorentzFitOptions::default();
    let centres = par::map_indexed(scan.x_axis.len(), |ix| {
        let fit = fit_lorentzian(p, &scan.column(ix), &opts).ok()?;
        let inside = fit.center - fit.fwhm > p_lo && fit.center + fit.fwhm < p_hi;
        let ok = inside
            && fit.amplitude > 3.0 * fit.residual_rms
            && fit.sigma_center.is_finite()
            && fit.sigma_center > 0.0;
        ok.then_some((scan.x_axis.values[ix], fit.center, fit.sigma_center))
    });
    let pts: Vec<_> = centres.into_iter().flatten().collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientRidge { usable: pts.len(), needed: 3 });
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let ss: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let line = weighted_line_fit(&xs, &ys, Some(&ss))?;
    Ok(CrosstalkEstimate {
        probe: p_label,
        source: s_label,
        x: -line.slope,
        sigma: line.sigma_slope,
        method: Method::Mzlc,
        intercept_freq: probe.f01(line.intercept),
    })
}

#[derive(Debug, Clone)]
pub struct RamseyOptions {
    pub pad: usize,
    pub window: Window,
    /// Polynomial degree of the fringe-frequency regression against source
    /// bias; 2 absorbs the spectrum curvature.
    pub degree: usize,
}

impl Default for RamseyOptions {
    fn default() -> Self {
        Self { pad: 8, window: Window::Hann, degree: 2 }
    }
}

/// Fringe frequency of one delay trace: padded FFT peak, refined by a fit of
/// a + e^(−t/τ)(b + c·cos 2πft + s·sin 2πft). Returns (f, σ_f).
pub fn fringe_frequency(trace: &[f64], t: &[f64], dt: f64, opts: &RamseyOptions) -> Result<(f64, f64)> {
    let spec = magnitude_spectrum(trace, dt, opts.pad, opts.window);
    let k = spec.peak_bin();
    // Hann main lobe spans two native bins on each side of DC
    if k <= 2 * spec.pad || spec.magnitude[k] <= 0.0 {
        return Err(Error::NoSignal);
    }
    let f0 = spec.refined_peak(k) * 1e3; // 1/ns → MHz
    let n = trace.len();
    let mean = trace.iter().sum::<f64>() / n as f64;
    let spread = trace.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    let span = t[n - 1] - t[0];
    let t0 = t[0];
    let model = |p: &[f64], tau: f64| {
        let ph = phase(p[4], tau);
        p[0] + (-(tau - t0) / p[5]).exp() * (p[1] + p[2] * ph.cos() + p[3] * ph.sin())
    };
    let p0 = [mean, 0.0, trace[0] - mean, 0.0, f0, 0.5 * span];
    let scale = [spread, spread, spread, spread, f0, span];
    let fit = levenberg_marquardt(
        |p, out| {
            for i in 0..n {
                out[i] = model(p, t[i]) - trace[i];
            }
        },
        &p0,
        n,
        &scale,
        &LmConfig { max_iterations: 200, ..LmConfig::default() },
    )?;
    let (f, sf) = (fit.params[4].abs(), fit.sigma(4));
    if !(sf.is_finite() && sf > 0.0) || (f - f0).abs() > 1e3 / (span) {
        return Err(Error::NoSignal);
    }
    Ok((f, sf))
}

/// Crosstalk from a Ramsey map. The fringe frequency Δf(v_s) of each source
/// column is regressed on v_s; its slope divided by the probe's spectral
/// slope at the fixed bias gives X.
pub fn extract_ridge_ramsey(scan: &ScanMap, probe: &SpectrumFit, opts: &RamseyOptions) -> Result<CrosstalkEstimate> {
    if scan.kind != ScanKind::Ramsey {
        return Err(Error::Precondition(format!("expected a ramsey scan, got {}", scan.kind)));
    }
    let (p_label, s_label) = pair_labels(scan)?;
    let dt = scan
        .y_axis
        .uniform_step()
        .ok_or_else(|| Error::InvalidGrid("Ramsey delays must be uniform".into()))?;
    let v_p = scan.meta.probe_bias.ok_or_else(|| Error::Precondition("Ramsey scan lacks probe bias".into()))?;
    let f_drive = scan.meta.drive_freq.ok_or_else(|| Error::Precondition("Ramsey scan lacks drive frequency".into()))?;
    let sign = (probe.f01(v_p) - f_drive).signum();
    let t = &scan.y_axis.values;
    let freqs = par::map_indexed(scan.x_axis.len(), |ix| fringe_frequency(&scan.column(ix), t, dt, opts));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ss = Vec::new();
    let mut no_signal = 0;
    for (ix, r) in freqs.into_iter().enumerate() {
        match r {
            Ok((f, s)) => {
                xs.push(scan.x_axis.values[ix]);
                ys.push(sign * f);
                ss.push(s);
            }
            Err(Error::NoSignal) => no_signal += 1,
            Err(_) => {}
        }
    }
    let needed = opts.degree + 2;
    if xs.len() < needed {
        return Err(if no_signal > 0 { Error::NoSignal } else { Error::InsufficientRidge { usable: xs.len(), needed } });
    }
    let (c, cov) = weighted_poly_fit(&xs, &ys, Some(&ss), opts.degree)?;
    let slope = probe.df01_dv(v_p);
    let sigma_slope = probe.sigma_df01_dv(v_p);
    if !(slope.abs() > 0.0) {
        return Err(Error::Precondition("probe bias sits at a sweet spot".into()));
    }
    let x = c[1] / slope;
    let sigma = ((cov[1][1].max(0.0)) / (slope * slope) + (x * sigma_slope / slope).powi(2)).sqrt();
    Ok(CrosstalkEstimate {
        probe: p_label,
        source: s_label,
        x,
        sigma,
        method: Method::Ramsey,
        intercept_freq: f_drive + c[0],
    })
}
