use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::device::{Role, TransmonParams};
use crate::error::{Error, Result};
use crate::lineshape::{fit_lorentzian, LorentzFitOptions};
use crate::lm::{levenberg_marquardt, LmConfig};
use crate::par;
use crate::virtual_device::{ScanKind, ScanMap};

/// Fitted transition frequency per bias point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSeries {
    #[serde(rename = "bias_V")]
    pub bias: Vec<f64>,
    #[serde(rename = "peak_freq_MHz")]
    pub peak_freq: Vec<f64>,
    #[serde(rename = "peak_sigma_MHz")]
    pub peak_sigma: Vec<f64>,
}

impl PeakSeries {
    pub fn new(bias: Vec<f64>, peak_freq: Vec<f64>, peak_sigma: Vec<f64>) -> Result<Self> {
        if peak_freq.len() != bias.len() {
            return Err(Error::DimensionMismatch { expected: bias.len(), got: peak_freq.len() });
        }
        if peak_sigma.len() != bias.len() {
            return Err(Error::DimensionMismatch { expected: bias.len(), got: peak_sigma.len() });
        }
        if peak_sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Domain("peak sigmas must be positive".into()));
        }
        Ok(Self { bias, peak_freq, peak_sigma })
    }

    pub fn len(&self) -> usize {
        self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bias.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct PeakOptions {
    /// Columns whose fitted amplitude is below this multiple of the residual
    /// noise are dropped.
    pub min_snr: f64,
    /// Also dropped: amplitude below this many of its own standard errors.
    /// The largest of a few thousand noise samples already exceeds 3σ, so the
    /// noise test alone passes isolated spikes.
    pub min_significance: f64,
    pub lorentz: LorentzFitOptions,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self { min_snr: 3.0, min_significance: 10.0, lorentz: LorentzFitOptions::default() }
    }
}

/// Per-column Lorentzian fit of a spectroscopy map.
pub fn extract_peaks(scan: &ScanMap, opts: &PeakOptions) -> Result<PeakSeries> {
    if scan.kind != ScanKind::Spectroscopy {
        return Err(Error::Precondition(format!("expected a spectroscopy scan, got {}", scan.kind)));
    }
    let f = &scan.y_axis.values;
    if f.len() < 5 {
        return Err(Error::Precondition(format!("need >= 5 frequency points, got {}", f.len())));
    }
    let (f_lo, f_hi) = (f[0], f[f.len() - 1]);
    let fits = par::map_indexed(scan.x_axis.len(), |ix| {
        let col = scan.column(ix);
        let fit = fit_lorentzian(f, &col, &opts.lorentz).ok()?;
        let keep = fit.amplitude > opts.min_snr * fit.residual_rms
            && fit.amplitude > opts.min_significance * fit.sigma_amplitude
            && fit.sigma_center.is_finite()
            && fit.sigma_center > 0.0
            && fit.center > f_lo
            && fit.center < f_hi;
        keep.then_some((scan.x_axis.values[ix], fit.center, fit.sigma_center))
    });
    let kept: Vec<_> = fits.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::EmptyResult("no spectroscopy column holds a significant peak".into()));
    }
    PeakSeries::new(
        kept.iter().map(|k| k.0).collect(),
        kept.iter().map(|k| k.1).collect(),
        kept.iter().map(|k| k.2).collect(),
    )
}

/// Spectrum parameters fitted with fixed d and E_C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFit {
    #[serde(rename = "f01_max_MHz")]
    pub f01_max: f64,
    #[serde(rename = "Ac_rad_per_V")]
    pub ac: f64,
    #[serde(rename = "V_ofs_V")]
    pub v_ofs: f64,
    pub d: f64,
    #[serde(rename = "EC_over_h_MHz")]
    pub ec: f64,
    /// Covariance of (f01_max, A_c, V_ofs).
    pub covariance: [[f64; 3]; 3],
    #[serde(rename = "residual_rms_MHz")]
    pub residual_rms: f64,
}

fn f01_model(p: &[f64], d: f64, ec: f64, v: f64) -> f64 {
    let phi = p[1] * (v - p[2]);
    let d2 = d * d;
    let bracket = d2 + (1.0 - d2) * 0.5 * (1.0 + (2.0 * phi).cos());
    p[0] + (p[0] + ec) * (bracket.powf(0.25) - 1.0)
}

impl SpectrumFit {
    fn p(&self) -> [f64; 3] {
        [self.f01_max, self.ac, self.v_ofs]
    }

    pub fn f01(&self, v: f64) -> f64 {
        f01_model(&self.p(), self.d, self.ec, v)
    }

    pub fn df01_dv(&self, v: f64) -> f64 {
        self.to_params("fit", Role::Qubit).map(|t| t.df01_dv(v)).unwrap_or(f64::NAN)
    }

    /// Standard error of df01/dV at `v`, propagated from the covariance.
    pub fn sigma_df01_dv(&self, v: f64) -> f64 {
        let base = self.p();
        let scale = [self.f01_max.abs(), self.ac.abs(), 1.0 / self.ac.abs()];
        let slope = |p: [f64; 3]| {
            TransmonParams::new("fit", Role::Qubit, p[0], self.ec, self.d, p[1], p[2])
                .map(|t| t.df01_dv(v))
                .unwrap_or(f64::NAN)
        };
        let grad: Vec<f64> = (0..3)
            .map(|i| {
                let h = 1e-6 * scale[i];
                let (mut a, mut b) = (base, base);
                a[i] += h;
                b[i] -= h;
                (slope(a) - slope(b)) / (2.0 * h)
            })
            .collect();
        let mut var = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                var += grad[i] * self.covariance[i][j] * grad[j];
            }
        }
        var.max(0.0).sqrt()
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.covariance[i][i].max(0.0).sqrt()
    }

    pub fn to_params(&self, label: &str, role: Role) -> Result<TransmonParams> {
        TransmonParams::new(label, role, self.f01_max, self.ec, self.d, self.ac, self.v_ofs)
    }
}

/// Weighted least squares of the transmon spectrum over (f01_max, A_c, V_ofs).
pub fn fit_spectrum(peaks: &PeakSeries, d: f64, ec: f64) -> Result<SpectrumFit> {
    fit_spectrum_with(peaks, d, ec, &LmConfig::default())
}

pub fn fit_spectrum_with(peaks: &PeakSeries, d: f64, ec: f64, cfg: &LmConfig) -> Result<SpectrumFit> {
    let n = peaks.len();
    if n < 5 {
        return Err(Error::Precondition(format!("spectrum fit needs >= 5 peaks, got {n}")));
    }
    let (v, f, s) = (&peaks.bias, &peaks.peak_freq, &peaks.peak_sigma);
    let imax = (0..n).fold(0, |b, i| if f[i] > f[b] { i } else { b });
    let (fmax0, vofs0) = (f[imax], v[imax]);

    // A_c seed: coarse log-spaced scan of the unweighted residual.
    let sse = |ac: f64| -> f64 {
        (0..n).map(|i| (f01_model(&[fmax0, ac, vofs0], d, ec, v[i]) - f[i]).powi(2)).sum()
    };
    let ac0 = (0..400)
        .map(|k| 0.05 * (1e4f64).powf(k as f64 / 399.0))
        .fold((f64::NAN, f64::INFINITY), |best, ac| {
            let c = sse(ac);
            if c < best.1 {
                (ac, c)
            } else {
                best
            }
        })
        .0;

    let span = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(span * ac0 >= PI / 4.0) {
        return Err(Error::Precondition(format!(
            "bias span {span:.4} V covers less than a quarter flux period"
        )));
    }

    let fit = levenberg_marquardt(
        |p, out| {
            for i in 0..n {
                out[i] = (f01_model(p, d, ec, v[i]) - f[i]) / s[i];
            }
        },
        &[fmax0, ac0, vofs0],
        n,
        &[fmax0.abs().max(1.0), ac0, 1.0 / ac0],
        cfg,
    )?;
    let p = &fit.params;
    let flip = p[1] < 0.0;
    let (ac, v_ofs) = (p[1].abs(), p[2]);
    // fold V_ofs into the period nearest the brightest point
    let period = PI / ac;
    let v_ofs = v_ofs + ((vofs0 - v_ofs) / period).round() * period;
    let mut cov = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let sign = if flip && ((i == 1) != (j == 1)) { -1.0 } else { 1.0 };
            cov[i][j] = sign * fit.covariance[i][j];
        }
    }
    let rms = ((0..n).map(|i| (f01_model(p, d, ec, v[i]) - f[i]).powi(2)).sum::<f64>() / n as f64).sqrt();
    Ok(SpectrumFit { f01_max: p[0], ac, v_ofs, d, ec, covariance: cov, residual_rms: rms })
}
