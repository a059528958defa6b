use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;

use super::{
    assemble_with_sigmas, extract_peaks, extract_ridge_mzlc, extract_ridge_ramsey, fit_spectrum, CrosstalkEstimate,
    MatrixReport, Method, PeakOptions, PeakSeries, RamseyOptions, SpectrumFit,
};
use crate::device::CrosstalkMatrix;
use crate::error::{Error, Result};
use crate::par;
use crate::virtual_device::rng::{derive_seed, tag};
use crate::virtual_device::{mzlc_scan_with, ramsey_scan_with, two_tone_scan, DeviceConfig, ScanMap};

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn arange(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| lo + step * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectroscopyGrid {
    #[serde(rename = "v_min_V")]
    pub v_min: f64,
    #[serde(rename = "v_max_V")]
    pub v_max: f64,
    pub v_points: usize,
    /// Frequency window below and above each element's nominal f01_max.
    #[serde(rename = "f_below_max_MHz")]
    pub f_below_max: f64,
    #[serde(rename = "f_above_max_MHz")]
    pub f_above_max: f64,
    #[serde(rename = "f_step_MHz")]
    pub f_step: f64,
}

impl Default for SpectroscopyGrid {
    fn default() -> Self {
        Self { v_min: -0.8, v_max: 0.8, v_points: 161, f_below_max: 1200.0, f_above_max: 50.0, f_step: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MzlcGrid {
    /// Source sweep is ±s_half.
    #[serde(rename = "s_half_V")]
    pub s_half: f64,
    pub s_points: usize,
    /// Probe working point as normalized flux from its sweet spot.
    pub probe_flux: f64,
    /// Largest |X| the probe window must accommodate.
    pub max_crosstalk: f64,
    /// Extra probe window on each side, in line widths.
    pub margin_linewidths: f64,
    pub steps_per_linewidth: f64,
}

impl Default for MzlcGrid {
    fn default() -> Self {
        Self {
            s_half: 0.15,
            s_points: 31,
            probe_flux: FRAC_PI_4,
            max_crosstalk: 0.07,
            margin_linewidths: 8.0,
            steps_per_linewidth: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RamseyGrid {
    /// Drive sits this far below the probe frequency.
    #[serde(rename = "detuning_MHz")]
    pub detuning: f64,
    /// Fringe-frequency swing allowed at |X| = max_crosstalk.
    #[serde(rename = "swing_MHz")]
    pub swing: f64,
    pub max_crosstalk: f64,
    pub s_points: usize,
    #[serde(rename = "t_max_ns")]
    pub t_max: f64,
    #[serde(rename = "dt_ns")]
    pub dt: f64,
    /// Probe working point as normalized flux from its sweet spot.
    pub probe_flux: f64,
}

impl Default for RamseyGrid {
    fn default() -> Self {
        Self { detuning: 20.0, swing: 8.0, max_crosstalk: 0.07, s_points: 31, t_max: 2000.0, dt: 8.0, probe_flux: FRAC_PI_4 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub spectroscopy: SpectroscopyGrid,
    pub mzlc: MzlcGrid,
    pub ramsey: RamseyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    #[default]
    Mzlc,
    Ramsey,
    Both,
}

impl MethodChoice {
    pub fn includes(self, m: Method) -> bool {
        matches!((self, m), (MethodChoice::Both, _) | (MethodChoice::Mzlc, Method::Mzlc) | (MethodChoice::Ramsey, Method::Ramsey))
    }
}

/// Fitted spectrum of one element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementSpectrum {
    pub label: String,
    pub peaks: PeakSeries,
    pub fit: SpectrumFit,
}

/// Spectroscopy of every element on its own line, followed by a spectrum
/// fit with the element's design d and E_C.
pub fn characterize_spectra(dev: &DeviceConfig, grid: &SpectroscopyGrid) -> Result<(Vec<ElementSpectrum>, Vec<ScanMap>)> {
    let dev = dev.with_seed(derive_seed(&[dev.seed(), tag("spectroscopy")]));
    let v = linspace(grid.v_min, grid.v_max, grid.v_points);
    let out = par::try_map_indexed(dev.transmons().len(), |i| -> Result<(ElementSpectrum, ScanMap)> {
        let t = &dev.transmons()[i];
        let f = arange(t.f01_max() - grid.f_below_max, t.f01_max() + grid.f_above_max, grid.f_step);
        let scan = two_tone_scan(&dev, t.label(), &v, &f)?;
        let peaks = extract_peaks(&scan, &PeakOptions::default())?;
        let fit = fit_spectrum(&peaks, t.d(), t.ec())?;
        Ok((ElementSpectrum { label: t.label().into(), peaks, fit }, scan))
    })?;
    Ok(out.into_iter().unzip())
}

/// Scan settings for one ordered (probe, source) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPlan {
    pub probe: String,
    pub source: String,
    pub probe_fit: SpectrumFit,
    pub mzlc_drive: f64,
    pub mzlc_s: Vec<f64>,
    pub mzlc_p: Vec<f64>,
    pub ramsey_bias: f64,
    pub ramsey_drive: f64,
    pub ramsey_s: Vec<f64>,
    pub ramsey_t: Vec<f64>,
}

/// Places every scan on the fitted spectra: the probe works at
/// `probe_flux` from its sweet spot, and the windows follow from the local
/// spectral slope and the instrument line width.
pub fn plan_pairs(dev: &DeviceConfig, spectra: &[ElementSpectrum], grids: &GridConfig) -> Result<Vec<PairPlan>> {
    let labels = dev.labels();
    let linewidth = dev.noise().linewidth();
    let mut plans = Vec::new();
    for p in &labels {
        let fit = &spectra
            .iter()
            .find(|s| &s.label == p)
            .ok_or_else(|| Error::UnknownLabel(p.clone()))?
            .fit;
        let m = &grids.mzlc;
        let v_p = fit.v_ofs + m.probe_flux / fit.ac;
        let slope = fit.df01_dv(v_p).abs();
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::Precondition(format!("{p}: zero spectral slope at the working point")));
        }
        let width_v = linewidth / slope;
        let half = m.max_crosstalk * m.s_half + m.margin_linewidths * width_v;
        let mzlc_p = arange(v_p - half, v_p + half, width_v / m.steps_per_linewidth);

        let r = &grids.ramsey;
        let v_r = fit.v_ofs + r.probe_flux / fit.ac;
        let slope_r = fit.df01_dv(v_r).abs();
        let s_half_r = r.swing / (slope_r * r.max_crosstalk);
        for s in &labels {
            if s == p {
                continue;
            }
            plans.push(PairPlan {
                probe: p.clone(),
                source: s.clone(),
                probe_fit: fit.clone(),
                mzlc_drive: fit.f01(v_p),
                mzlc_s: linspace(-m.s_half, m.s_half, m.s_points),
                mzlc_p: mzlc_p.clone(),
                ramsey_bias: v_r,
                ramsey_drive: fit.f01(v_r) - r.detuning,
                ramsey_s: linspace(-s_half_r, s_half_r, r.s_points),
                ramsey_t: arange(0.0, r.t_max, r.dt),
            });
        }
    }
    Ok(plans)
}

pub struct PairResult {
    pub estimate: CrosstalkEstimate,
    pub scan: ScanMap,
}

/// Runs one method on one pair.
pub fn measure_pair(dev: &DeviceConfig, plan: &PairPlan, method: Method, compensation: Option<&CrosstalkMatrix>) -> Result<PairResult> {
    match method {
        Method::Mzlc => {
            let scan = mzlc_scan_with(dev, &plan.probe, &plan.source, plan.mzlc_drive, &plan.mzlc_s, &plan.mzlc_p, compensation)?;
            let probe = plan.probe_fit.to_params(&plan.probe, dev.element(&plan.probe)?.role())?;
            Ok(PairResult { estimate: extract_ridge_mzlc(&scan, &probe)?, scan })
        }
        Method::Ramsey => {
            let scan = ramsey_scan_with(
                dev,
                &plan.probe,
                &plan.source,
                &plan.ramsey_t,
                &plan.ramsey_s,
                plan.ramsey_bias,
                plan.ramsey_drive,
                compensation,
            )?;
            Ok(PairResult { estimate: extract_ridge_ramsey(&scan, &plan.probe_fit, &RamseyOptions::default())?, scan })
        }
    }
}

#[derive(Debug, Clone)]
pub struct CharacterizeOptions {
    pub method: MethodChoice,
    pub repeats: usize,
    pub grids: GridConfig,
    /// Keep the scans of the first repeat in the result.
    pub keep_scans: bool,
}

impl Default for CharacterizeOptions {
    fn default() -> Self {
        Self { method: MethodChoice::Mzlc, repeats: 1, grids: GridConfig::default(), keep_scans: false }
    }
}

/// 2σ consistency of the two methods for one entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub probe: String,
    pub source: String,
    pub mzlc: f64,
    pub sigma_mzlc: f64,
    pub ramsey: f64,
    pub sigma_ramsey: f64,
    pub agree: bool,
}

pub struct Characterization {
    pub spectra: Vec<ElementSpectrum>,
    pub mzlc: Option<MatrixReport>,
    pub ramsey: Option<MatrixReport>,
    pub agreement: Vec<PairAgreement>,
    /// Per-repeat estimates, repeat-major.
    pub estimates: Vec<Vec<CrosstalkEstimate>>,
    pub scans: Vec<ScanMap>,
}

impl Characterization {
    /// The MZLC matrix when measured, otherwise the Ramsey one.
    pub fn primary(&self) -> &MatrixReport {
        self.mzlc.as_ref().or(self.ramsey.as_ref()).expect("at least one method ran")
    }
}

/// Seed of repeat `r`.
pub fn repeat_seed(seed: u64, r: usize) -> u64 {
    derive_seed(&[seed, tag("repeat"), r as u64])
}

/// Mean over repeats; sigma is the sample standard deviation when there is
/// more than one repeat, else the regression sigma.
fn aggregate(labels: &[String], runs: &[Vec<CrosstalkEstimate>], method: Method) -> Result<MatrixReport> {
    let repeats = runs.len();
    let per_run: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = runs
        .iter()
        .map(|r| {
            let e: Vec<CrosstalkEstimate> = r.iter().filter(|e| e.method == method).cloned().collect();
            assemble_with_sigmas(&e, labels)
        })
        .collect::<Result<_>>()?;
    let n = labels.len();
    let mut rows = vec![vec![0.0; n]; n];
    let mut sigmas = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let xs: Vec<f64> = per_run.iter().map(|r| r.0[i][k]).collect();
            let mean = xs.iter().sum::<f64>() / repeats as f64;
            rows[i][k] = mean;
            sigmas[i][k] = if i == k {
                0.0
            } else if repeats > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64).sqrt()
            } else {
                per_run[0].1[i][k]
            };
        }
    }
    Ok(MatrixReport { labels: labels.to_vec(), rows, sigmas, method, repeats })
}

fn run_pairs(
    dev: &DeviceConfig,
    plans: &[PairPlan],
    opts: &CharacterizeOptions,
    compensation: Option<&CrosstalkMatrix>,
) -> Result<(Vec<Vec<CrosstalkEstimate>>, Vec<ScanMap>)> {
    if opts.repeats == 0 {
        return Err(Error::Precondition("repeats must be >= 1".into()));
    }
    let methods: Vec<Method> = [Method::Mzlc, Method::Ramsey].into_iter().filter(|m| opts.method.includes(*m)).collect();
    let jobs: Vec<(usize, usize, Method)> = (0..opts.repeats)
        .flat_map(|r| (0..plans.len()).flat_map(move |p| [(r, p)]))
        .flat_map(|(r, p)| methods.iter().map(move |m| (r, p, *m)))
        .collect();
    let results = par::try_map_indexed(jobs.len(), |j| {
        let (r, p, m) = jobs[j];
        let d = dev.with_seed(repeat_seed(dev.seed(), r));
        measure_pair(&d, &plans[p], m, compensation).map(|res| (r, res))
    })?;
    let mut estimates = vec![Vec::new(); opts.repeats];
    let mut scans = Vec::new();
    for (r, res) in results {
        estimates[r].push(res.estimate);
        if r == 0 && opts.keep_scans {
            scans.push(res.scan);
        }
    }
    Ok((estimates, scans))
}

fn finish(
    dev: &DeviceConfig,
    spectra: Vec<ElementSpectrum>,
    estimates: Vec<Vec<CrosstalkEstimate>>,
    scans: Vec<ScanMap>,
    method: MethodChoice,
) -> Result<Characterization> {
    let labels = dev.labels();
    let mzlc = method.includes(Method::Mzlc).then(|| aggregate(&labels, &estimates, Method::Mzlc)).transpose()?;
    let ramsey = method.includes(Method::Ramsey).then(|| aggregate(&labels, &estimates, Method::Ramsey)).transpose()?;
    let mut agreement = Vec::new();
    if let (Some(m), Some(r)) = (&mzlc, &ramsey) {
        for i in 0..labels.len() {
            for k in 0..labels.len() {
                if i == k {
                    continue;
                }
                let (a, sa, b, sb) = (m.rows[i][k], m.sigmas[i][k], r.rows[i][k], r.sigmas[i][k]);
                agreement.push(PairAgreement {
                    probe: labels[i].clone(),
                    source: labels[k].clone(),
                    mzlc: a,
                    sigma_mzlc: sa,
                    ramsey: b,
                    sigma_ramsey: sb,
                    agree: (a - b).abs() < 2.0 * (sa * sa + sb * sb).sqrt(),
                });
            }
        }
    }
    Ok(Characterization { spectra, mzlc, ramsey, agreement, estimates, scans })
}

/// Spectroscopy, scan planning and every ordered pair with the chosen
/// method(s), `repeats` times.
pub fn characterize(dev: &DeviceConfig, opts: &CharacterizeOptions) -> Result<Characterization> {
    let (spectra, mut scans) = characterize_spectra(dev, &opts.grids.spectroscopy)?;
    if !opts.keep_scans {
        scans.clear();
    }
    let plans = plan_pairs(dev, &spectra, &opts.grids)?;
    let (estimates, pair_scans) = run_pairs(dev, &plans, opts, None)?;
    scans.extend(pair_scans);
    finish(dev, spectra, estimates, scans, opts.method)
}

/// Re-measures the crosstalk with every applied voltage pre-multiplied by
/// the inverse of `x_est`. A correct estimate returns a matrix close to I.
pub fn verify_compensation(dev: &DeviceConfig, x_est: &CrosstalkMatrix, opts: &CharacterizeOptions) -> Result<Characterization> {
    if x_est.labels() != dev.x_true().labels() {
        return Err(Error::InvalidMatrix("estimate labels differ from the device".into()));
    }
    let dev = dev.with_seed(derive_seed(&[dev.seed(), tag("verify")]));
    let (spectra, mut scans) = characterize_spectra(&dev, &opts.grids.spectroscopy)?;
    if !opts.keep_scans {
        scans.clear();
    }
    let plans = plan_pairs(&dev, &spectra, &opts.grids)?;
    let (estimates, pair_scans) = run_pairs(&dev, &plans, opts, Some(x_est))?;
    scans.extend(pair_scans);
    finish(&dev, spectra, estimates, scans, opts.method)
}
