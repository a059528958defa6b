//! Lorentzian line shape and single-peak fitting.

use crate::error::{Error, Result};
use crate::lm::{levenberg_marquardt, LmConfig};

/// Unit-height Lorentzian with full width at half maximum `fwhm`.
#[inline]
pub fn lorentzian(x: f64, center: f64, fwhm: f64) -> f64 {
    let u = 2.0 * (x - center) / fwhm;
    1.0 / (1.0 + u * u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzFit {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub sigma_center: f64,
    pub sigma_amplitude: f64,
    /// RMS residual inside the fit window, an estimate of the noise level.
    pub residual_rms: f64,
}

#[derive(Debug, Clone)]
pub struct LorentzFitOptions {
    /// Half-width of the fit window in units of the initial FWHM estimate.
    pub window_fwhms: f64,
    /// Smallest window, in samples.
    pub min_points: usize,
    /// Lower bound on the fitted FWHM, in grid steps.
    pub min_fwhm_steps: f64,
}

impl Default for LorentzFitOptions {
    fn default() -> Self {
        Self { window_fwhms: 5.0, min_points: 15, min_fwhm_steps: 2.0 }
    }
}

/// Fits `offset + amplitude·L(x; center, fwhm)` to a single column, seeded at
/// its maximum. `x` must be sorted ascending with at least 5 samples.
pub fn fit_lorentzian(x: &[f64], y: &[f64], opts: &LorentzFitOptions) -> Result<LorentzFit> {
    let n = x.len();
    if n < 5 || y.len() != n {
        return Err(Error::Precondition(format!("Lorentzian fit needs >= 5 samples, got {n}")));
    }
    let step = (x[n - 1] - x[0]) / (n - 1) as f64;
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let baseline = sorted[n / 2];
    let imax = y
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > y[best] { i } else { best });
    let height = y[imax] - baseline;
    let half = baseline + 0.5 * height;
    let mut lo = imax;
    while lo > 0 && y[lo] > half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < n && y[hi] > half {
        hi += 1;
    }
    let w_min = opts.min_fwhm_steps * step;
    let fwhm0 = ((x[hi] - x[lo]).abs()).max(w_min * 1.5);

    let half_window = (opts.window_fwhms * fwhm0).max(0.5 * opts.min_points as f64 * step);
    let a = x.partition_point(|v| *v < x[imax] - half_window);
    let b = x.partition_point(|v| *v <= x[imax] + half_window);
    let (xs, ys) = (&x[a..b], &y[a..b]);
    if xs.len() < 5 {
        return Err(Error::Precondition("fit window holds fewer than 5 samples".into()));
    }

    // width parameterized as w_min + |q| keeps it above the grid resolution
    let model = |p: &[f64], xv: f64| p[3] + p[2] * lorentzian(xv, p[0], w_min + p[1].abs());
    let p0 = [x[imax], fwhm0 - w_min, height.max(f64::MIN_POSITIVE), baseline];
    let scale = [fwhm0, fwhm0, height.abs().max(1e-12), height.abs().max(1e-12)];
    let fit = levenberg_marquardt(
        |p, out| {
            for (o, (xv, yv)) in out.iter_mut().zip(xs.iter().zip(ys)) {
                *o = model(p, *xv) - yv;
            }
        },
        &p0,
        xs.len(),
        &scale,
        &LmConfig { max_iterations: 200, ..LmConfig::default() },
    )?;
    Ok(LorentzFit {
        center: fit.params[0],
        fwhm: w_min + fit.params[1].abs(),
        amplitude: fit.params[2],
        offset: fit.params[3],
        sigma_center: fit.sigma(0),
        sigma_amplitude: fit.sigma(2),
        residual_rms: fit.rms(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorentzian_half_width() {
        assert_eq!(lorentzian(3.0, 3.0, 2.0), 1.0);
        assert!((lorentzian(4.0, 3.0, 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn recovers_planted_peak() {
        let x: Vec<f64> = (0..401).map(|i| 4700.0 + 0.5 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&f| 0.1 + 0.8 * lorentzian(f, 4768.6, 4.0)).collect();
        let fit = fit_lorentzian(&x, &y, &LorentzFitOptions::default()).unwrap();
        assert!((fit.center - 4768.6).abs() < 1e-6);
        assert!((fit.fwhm - 4.0).abs() < 1e-6);
        assert!((fit.amplitude - 0.8).abs() < 1e-8);
        assert!((fit.offset - 0.1).abs() < 1e-8);
    }
}
