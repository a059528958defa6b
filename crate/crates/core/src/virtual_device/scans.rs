use rand_distr::{Binomial, Distribution, Normal};

use super::rng::{stream, tag};
use super::{Axis, CzCrosstalkPath, DeviceConfig, ScanKind, ScanMap, ScanMeta};
use crate::consts::phase;
use crate::cz::{g_eff, p11};
use crate::device::{Branch, CrosstalkMatrix};
use crate::error::{Error, Result};
use crate::lineshape::lorentzian;
use crate::par;

fn check_grid(name: &str, g: &[f64]) -> Result<()> {
    if g.is_empty() {
        return Err(Error::InvalidGrid(format!("{name} grid is empty")));
    }
    if g.iter().any(|v| !v.is_finite()) || g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!("{name} grid must be finite and strictly increasing")));
    }
    Ok(())
}

/// Coefficients mapping target voltages on `sources` to the effective voltage
/// seen by `detector`, with applied voltages optionally pre-multiplied by the
/// inverse of `compensation`.
fn mixing(dev: &DeviceConfig, compensation: Option<&CrosstalkMatrix>, detector: usize, sources: &[usize]) -> Result<Vec<f64>> {
    let x = dev.x_true();
    match compensation {
        None => Ok(sources.iter().map(|&s| x.get(detector, s)).collect()),
        Some(c) => {
            if c.labels() != x.labels() {
                return Err(Error::InvalidMatrix("compensation labels differ from the device".into()));
            }
            let m = x.matrix().mul(c.cancellation())?;
            Ok(sources.iter().map(|&s| m[(detector, s)]).collect())
        }
    }
}

fn noise_keys(dev: &DeviceConfig, kind: ScanKind, probe: &str, source: &str, extra: u64) -> [u64; 5] {
    [dev.seed(), kind.tag(), tag(probe), tag(source), extra]
}

fn add_gaussian(col: &mut [f64], sigma: f64, keys: &[u64]) {
    if sigma > 0.0 {
        let mut rng = stream(keys);
        let n = Normal::new(0.0, sigma).expect("sigma is finite and positive");
        for v in col {
            *v += n.sample(&mut rng);
        }
    }
}

fn flux_of(dev: &DeviceConfig, label: &str, v: &[f64]) -> Result<Vec<f64>> {
    let t = dev.element(label)?;
    Ok(v.iter().map(|&v| t.normalized_flux(v)).collect())
}

/// Two-tone spectroscopy of `probe` while sweeping its own line.
pub fn two_tone_scan(dev: &DeviceConfig, probe: &str, v_grid: &[f64], f_grid: &[f64]) -> Result<ScanMap> {
    two_tone_scan_swept(dev, probe, probe, v_grid, f_grid)
}

/// Two-tone spectroscopy of `probe` while sweeping line `swept`; every other
/// line sits at 0 V.
pub fn two_tone_scan_swept(dev: &DeviceConfig, probe: &str, swept: &str, v_grid: &[f64], f_grid: &[f64]) -> Result<ScanMap> {
    check_grid("bias", v_grid)?;
    check_grid("frequency", f_grid)?;
    let ip = dev.index_of(probe)?;
    let is = dev.index_of(swept)?;
    let t = &dev.transmons()[ip];
    let k = dev.x_true().get(ip, is);
    let width = dev.noise().linewidth();
    let sigma = dev.noise().signal_noise_sigma;
    let source = if ip == is { "" } else { swept };
    let columns = par::map_indexed(v_grid.len(), |ix| {
        let f0 = t.f01(k * v_grid[ix]);
        let mut col: Vec<f64> = f_grid.iter().map(|&f| lorentzian(f, f0, width)).collect();
        add_gaussian(&mut col, sigma, &noise_keys(dev, ScanKind::Spectroscopy, probe, source, ix as u64));
        col
    });
    let x_axis = Axis::new(&format!("V_{swept}"), "V", v_grid.to_vec()).with_flux(flux_of(dev, swept, v_grid)?);
    let y_axis = Axis::new("drive_freq", "MHz", f_grid.to_vec());
    let meta = ScanMeta {
        probe_label: probe.into(),
        source_label: (ip != is).then(|| swept.to_string()),
        drive_freq: None,
        probe_bias: None,
        pulse_reduction: None,
        compensated: false,
        seed: dev.seed(),
    };
    ScanMap::from_columns(ScanKind::Spectroscopy, x_axis, y_axis, columns, meta)
}

/// MZLC scan: `probe` driven at `f_drive` while its own bias and the
/// `source` line are swept together.
pub fn mzlc_scan(dev: &DeviceConfig, probe: &str, source: &str, f_drive: f64, s_grid: &[f64], p_grid: &[f64]) -> Result<ScanMap> {
    mzlc_scan_with(dev, probe, source, f_drive, s_grid, p_grid, None)
}

/// MZLC scan with the applied voltages pre-multiplied by the cancellation
/// matrix of `compensation`.
pub fn mzlc_scan_with(
    dev: &DeviceConfig,
    probe: &str,
    source: &str,
    f_drive: f64,
    s_grid: &[f64],
    p_grid: &[f64],
    compensation: Option<&CrosstalkMatrix>,
) -> Result<ScanMap> {
    check_grid("source", s_grid)?;
    check_grid("probe", p_grid)?;
    let ip = dev.index_of(probe)?;
    let is = dev.index_of(source)?;
    if ip == is {
        return Err(Error::Precondition("probe and source must differ".into()));
    }
    let t = &dev.transmons()[ip];
    let (lo, hi) = t.band();
    if !(f_drive >= lo && f_drive <= hi) {
        return Err(Error::OutOfBand { value: f_drive, low: lo, high: hi });
    }
    let m = mixing(dev, compensation, ip, &[ip, is])?;
    let width = dev.noise().linewidth();
    let sigma = dev.noise().signal_noise_sigma;
    let columns = par::map_indexed(s_grid.len(), |ix| {
        let vs = m[1] * s_grid[ix];
        let mut col: Vec<f64> = p_grid.iter().map(|&vp| lorentzian(f_drive, t.f01(m[0] * vp + vs), width)).collect();
        add_gaussian(&mut col, sigma, &noise_keys(dev, ScanKind::Mzlc, probe, source, ix as u64));
        col
    });
    let x_axis = Axis::new(&format!("V_{source}"), "V", s_grid.to_vec()).with_flux(flux_of(dev, source, s_grid)?);
    let y_axis = Axis::new(&format!("V_{probe}"), "V", p_grid.to_vec()).with_flux(flux_of(dev, probe, p_grid)?);
    let meta = ScanMeta {
        probe_label: probe.into(),
        source_label: Some(source.into()),
        drive_freq: Some(f_drive),
        probe_bias: None,
        pulse_reduction: None,
        compensated: compensation.is_some(),
        seed: dev.seed(),
    };
    ScanMap::from_columns(ScanKind::Mzlc, x_axis, y_axis, columns, meta)
}

/// Ramsey fringes of `probe` at fixed bias versus delay and source bias.
pub fn ramsey_scan(
    dev: &DeviceConfig,
    probe: &str,
    source: &str,
    delay_grid: &[f64],
    s_grid: &[f64],
    v_p_fixed: f64,
    f_drive: f64,
) -> Result<ScanMap> {
    ramsey_scan_with(dev, probe, source, delay_grid, s_grid, v_p_fixed, f_drive, None)
}

/// Ramsey scan with optional compensation; see [`mzlc_scan_with`].
///
/// Each point is the mean of `ramsey_shots` binarized shots whose outcome is
/// flipped with probability 1 − F_a; with zero shots the expectation
/// F_a·p + (1 − F_a)(1 − p) is emitted.
#[allow(clippy::too_many_arguments)]
pub fn ramsey_scan_with(
    dev: &DeviceConfig,
    probe: &str,
    source: &str,
    delay_grid: &[f64],
    s_grid: &[f64],
    v_p_fixed: f64,
    f_drive: f64,
    compensation: Option<&CrosstalkMatrix>,
) -> Result<ScanMap> {
    check_grid("delay", delay_grid)?;
    check_grid("source", s_grid)?;
    if delay_grid[0] < 0.0 {
        return Err(Error::InvalidGrid("delays must be non-negative".into()));
    }
    let ip = dev.index_of(probe)?;
    let is = dev.index_of(source)?;
    if ip == is {
        return Err(Error::Precondition("probe and source must differ".into()));
    }
    let t = &dev.transmons()[ip];
    let el = dev.noise().element(probe)?;
    let t2_ns = el.t2_ramsey_us * 1e3;
    let fa = el.assignment_fidelity;
    let shots = dev.noise().ramsey_shots;
    let m = mixing(dev, compensation, ip, &[ip, is])?;
    let columns = par::try_map_indexed(s_grid.len(), |ix| -> Result<Vec<f64>> {
        let df = t.f01(m[0] * v_p_fixed + m[1] * s_grid[ix]) - f_drive;
        let mut rng = stream(&noise_keys(dev, ScanKind::Ramsey, probe, source, ix as u64));
        delay_grid
            .iter()
            .map(|&tau| {
                let p = 0.5 * (1.0 + phase(df, tau).cos()) * (-tau / t2_ns).exp();
                let p_meas = fa * p + (1.0 - fa) * (1.0 - p);
                if shots == 0 {
                    return Ok(p_meas);
                }
                let b = Binomial::new(shots as u64, p_meas.clamp(0.0, 1.0)).map_err(|e| Error::Domain(e.to_string()))?;
                Ok(b.sample(&mut rng) as f64 / shots as f64)
            })
            .collect()
    })?;
    let x_axis = Axis::new(&format!("V_{source}"), "V", s_grid.to_vec()).with_flux(flux_of(dev, source, s_grid)?);
    let y_axis = Axis::new("delay", "ns", delay_grid.to_vec());
    let meta = ScanMeta {
        probe_label: probe.into(),
        source_label: Some(source.into()),
        drive_freq: Some(f_drive),
        probe_bias: Some(v_p_fixed),
        pulse_reduction: None,
        compensated: compensation.is_some(),
        seed: dev.seed(),
    };
    ScanMap::from_columns(ScanKind::Ramsey, x_axis, y_axis, columns, meta)
}

#[derive(Debug, Clone, Default)]
pub struct CzScanOptions {
    /// Pre-multiply the applied voltages by a cancellation matrix.
    pub compensated: bool,
    /// Matrix used for compensation; the device's true matrix when `None`.
    pub estimate: Option<CrosstalkMatrix>,
}

/// CZ-SWAP chevron: |11⟩ population versus coupler normalized flux and
/// interaction time. The qubits sit at their CZ frequencies, set through
/// their own lines; without compensation those biases leak onto the coupler
/// (and, with [`CzCrosstalkPath::AllLines`], onto every line).
pub fn cz_swap_scan(dev: &DeviceConfig, coupler_flux_grid: &[f64], t_grid: &[f64], opts: &CzScanOptions) -> Result<ScanMap> {
    check_grid("coupler flux", coupler_flux_grid)?;
    check_grid("time", t_grid)?;
    let cz = dev.cz().ok_or_else(|| Error::Precondition("device has no CZ setup".into()))?;
    let p = &cz.params;
    let d = p.pulse.reduction()?;
    let (ic, i1, i2) = (dev.index_of(&cz.coupler)?, dev.index_of(&cz.qubit1)?, dev.index_of(&cz.qubit2)?);
    let (tc, t1, t2) = (&dev.transmons()[ic], &dev.transmons()[i1], &dev.transmons()[i2]);
    let (f_q1, f_q2) = (cz.f_q1, cz.f_q2());
    let v1 = t1.idle_voltage(f_q1, Branch::Plus)?;
    let v2 = t2.idle_voltage(f_q2, Branch::Plus)?;
    let n = dev.transmons().len();

    // Effective-voltage map from target biases.
    let m = if opts.compensated {
        let est = opts.estimate.as_ref().unwrap_or(dev.x_true());
        if est.labels() != dev.x_true().labels() {
            return Err(Error::InvalidMatrix("compensation labels differ from the device".into()));
        }
        dev.x_true().matrix().mul(est.cancellation())?
    } else {
        match cz.crosstalk_path {
            CzCrosstalkPath::AllLines => dev.x_true().matrix().clone(),
            CzCrosstalkPath::QubitsToCoupler => {
                let mut m = crate::linalg::SquareMatrix::identity(n);
                m[(ic, i1)] = dev.x_true().get(ic, i1);
                m[(ic, i2)] = dev.x_true().get(ic, i2);
                m
            }
        }
    };
    let sigma = dev.noise().population_noise_sigma;
    let columns = par::try_map_indexed(coupler_flux_grid.len(), |ix| -> Result<Vec<f64>> {
        let mut target = vec![0.0; n];
        target[ic] = tc.voltage_of_flux(coupler_flux_grid[ix]);
        target[i1] = v1;
        target[i2] = v2;
        let v_eff = m.mul_vec(&target)?;
        let fc = tc.f01(v_eff[ic]);
        let (e1, e2) = (t1.f01(v_eff[i1]), t2.f01(v_eff[i2]));
        let g = g_eff(p, fc, e1, e2)?.abs() + p.residual_offset;
        let delta = e2 - e1 - p.ec2;
        let mut col = t_grid.iter().map(|&t| p11(delta, g, t, d)).collect::<Result<Vec<_>>>()?;
        add_gaussian(&mut col, sigma, &[dev.seed(), ScanKind::CzSwap.tag(), ix as u64]);
        Ok(col)
    })?;
    let x_axis = Axis::new(&format!("flux_{}", cz.coupler), "rad", coupler_flux_grid.to_vec())
        .with_flux(coupler_flux_grid.to_vec());
    let y_axis = Axis::new("time", "ns", t_grid.to_vec());
    let meta = ScanMeta {
        probe_label: cz.coupler.clone(),
        source_label: None,
        drive_freq: None,
        probe_bias: None,
        pulse_reduction: Some(d),
        compensated: opts.compensated,
        seed: dev.seed(),
    };
    ScanMap::from_columns(ScanKind::CzSwap, x_axis, y_axis, columns, meta)
}
