use crate::consts::phase;
use crate::error::{Error, Result};
use crate::lm::{levenberg_marquardt, LmConfig};
use crate::spectral::{magnitude_spectrum, Window};

/// Ratio of the accumulated pulse area with an exponential rise transient to
/// that of the ideal rectangle:
/// D = [T + (A_eff/A)·t_eff·(1 − e^(−T/t_eff))] / T.
pub fn pulse_reduction(duration: f64, t_eff: f64, a_eff_over_a: f64) -> Result<f64> {
    if !(duration > 0.0 && t_eff > 0.0) {
        return Err(Error::Domain("pulse duration and t_eff must be positive".into()));
    }
    let transient = a_eff_over_a * t_eff * (-(-duration / t_eff).exp_m1());
    Ok((duration + transient) / duration)
}

/// |11⟩ population model 2g²[1 + cos(D·t·Ω)]/Ω², Ω = √(4g² + δ²).
/// δ and g in MHz, t in ns.
pub fn p11(delta21: f64, g: f64, t: f64, d: f64) -> Result<f64> {
    let omega2 = 4.0 * g * g + delta21 * delta21;
    if omega2 == 0.0 {
        return Err(Error::DegenerateOmega);
    }
    let omega = omega2.sqrt();
    Ok(2.0 * g * g * (1.0 + phase(d * omega, t).cos()) / omega2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaFit {
    /// Ω in MHz (linear).
    pub omega: f64,
    pub sigma: f64,
    pub offset: f64,
    pub amplitude: f64,
    pub sigma_amplitude: f64,
}

/// Fits `a + b·cos(2π·D·Ω·t)` to a chevron column. The starting Ω comes from
/// the FFT peak of the mean-subtracted trace.
pub fn fit_omega(trace: &[f64], t_grid: &[f64], d: f64) -> Result<OmegaFit> {
    let n = trace.len();
    if n < 8 || t_grid.len() != n {
        return Err(Error::Precondition(format!("need >= 8 samples, got {n}")));
    }
    if !(d > 0.0) {
        return Err(Error::Domain("pulse reduction factor must be positive".into()));
    }
    let span = t_grid[n - 1] - t_grid[0];
    let dt = span / (n - 1) as f64;
    if !(dt > 0.0) || t_grid.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::Precondition("time grid must be uniform and increasing".into()));
    }
    let (lo, hi) = trace.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    if hi - lo < 1e-12 {
        return Err(Error::FlatTrace);
    }
    let spec = magnitude_spectrum(trace, dt, 8, Window::Hann);
    let k = spec.peak_bin();
    // the Hann main lobe of the mean spans two native bins
    if k < 2 * spec.pad {
        return Err(Error::FlatTrace);
    }
    let nu0 = spec.refined_peak(k) * 1e3; // 1/ns -> MHz
    if nu0 * span * 1e-3 < 0.5 {
        return Err(Error::Precondition("trace spans less than half an oscillation".into()));
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let first = trace[0] - mean;
    let model = |p: &[f64], t: f64| p[0] + p[1] * phase(d * p[2], t).cos();
    let p0 = [mean, if first != 0.0 { first } else { 0.5 * (hi - lo) }, nu0 / d];
    let fit = levenberg_marquardt(
        |p, out| {
            for i in 0..n {
                out[i] = model(p, t_grid[i]) - trace[i];
            }
        },
        &p0,
        n,
        &[hi - lo, hi - lo, nu0 / d],
        &LmConfig::default(),
    )?;
    let (amp, mut omega) = (fit.params[1], fit.params[2]);
    if omega < 0.0 {
        omega = -omega;
    }
    Ok(OmegaFit { omega, sigma: fit.sigma(2), offset: fit.params[0], amplitude: amp, sigma_amplitude: fit.sigma(1) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn reduction_examples() {
        assert_eq!(pulse_reduction(100.0, 278.0, 0.0).unwrap(), 1.0);
        let d = pulse_reduction(100.0, 278.0, -1.0).unwrap();
        assert!((d - 0.160).abs() < 1e-3, "{d}");
        let mut prev = d;
        for t in [200.0, 500.0, 1e3, 1e4, 1e6] {
            let next = pulse_reduction(t, 278.0, -1.0).unwrap();
            assert!(next > prev);
            prev = next;
        }
        assert!((prev - 1.0).abs() < 1e-3);
        assert!(pulse_reduction(0.0, 278.0, -1.0).is_err());
    }

    #[test]
    fn reduction_matches_quadrature() {
        // midpoint rule on ∫ (A + A_eff e^(−t/t_eff)) dt / (A·T)
        for (t_total, t_eff, r) in [(100.0, 278.0, -1.0), (250.0, 40.0, -0.3), (60.0, 10.0, 0.5)] {
            let n = 200_000;
            let h = t_total / n as f64;
            let area: f64 = (0..n).map(|i| 1.0 + r * (-(i as f64 + 0.5) * h / t_eff).exp()).sum::<f64>() * h;
            let want = area / t_total;
            assert!((pulse_reduction(t_total, t_eff, r).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn reduction_monotone_in_parameters() {
        for r in [-1.0, -0.6, -0.2] {
            for (a, b) in [(50.0, 80.0), (100.0, 300.0)] {
                assert!(pulse_reduction(b, 278.0, r).unwrap() > pulse_reduction(a, 278.0, r).unwrap());
                assert!(pulse_reduction(100.0, b, r).unwrap() < pulse_reduction(100.0, a, r).unwrap());
            }
            let d = pulse_reduction(100.0, 278.0, r).unwrap();
            assert!(d > 0.0 && d <= 1.0);
        }
    }

    #[test]
    fn p11_resonant_cases() {
        assert!((p11(0.0, 5.0, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        // D·t·Ω = π half a cycle: t = 1e3/(2Ω) ns
        let omega = 10.0;
        let t = 1e3 / (2.0 * omega);
        assert!(p11(0.0, 5.0, t, 1.0).unwrap().abs() < 1e-15);
        assert!(matches!(p11(0.0, 0.0, 1.0, 1.0), Err(Error::DegenerateOmega)));
    }

    #[test]
    fn p11_envelope_and_symmetry() {
        let (delta, g) = (9.33, 5.0);
        let env = 4.0 * g * g / (4.0 * g * g + delta * delta);
        let mut max: f64 = 0.0;
        for i in 0..20_000 {
            let t = i as f64 * 0.05;
            let p = p11(delta, g, t, 0.16).unwrap();
            assert!((0.0..=1.0).contains(&p));
            assert_eq!(p, p11(-delta, g, t, 0.16).unwrap());
            max = max.max(p);
        }
        assert!((max - env).abs() < 1e-9);
    }

    fn trace(omega: f64, d: f64, noise: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..151).map(|i| i as f64 * 10.0).collect();
        let n = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let y = t
            .iter()
            .map(|&t| 0.3 + 0.25 * phase(d * omega, t).cos() + if noise > 0.0 { n.sample(rng) } else { 0.0 })
            .collect();
        (t, y)
    }

    #[test]
    fn fit_omega_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for omega in [9.33, 11.7, 14.2] {
            let (t, y) = trace(omega, 0.16, 0.0, &mut rng);
            let fit = fit_omega(&y, &t, 0.16).unwrap();
            assert!((fit.omega - omega).abs() < 1e-4 * omega, "{} vs {omega}", fit.omega);
        }
    }

    #[test]
    fn fit_omega_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ok = 0;
        for _ in 0..200 {
            let omega = rng.gen_range(9.5..14.0);
            // 2% of the oscillation amplitude
            let (t, y) = trace(omega, 0.16, 0.02 * 0.25, &mut rng);
            let fit = fit_omega(&y, &t, 0.16).unwrap();
            if (fit.omega - omega).abs() < 0.01 * omega {
                ok += 1;
            }
        }
        assert!(ok >= 190, "{ok}/200");
    }

    #[test]
    fn flat_trace_rejected() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 10.0).collect();
        let y = vec![0.4; 50];
        assert!(matches!(fit_omega(&y, &t, 0.16), Err(Error::FlatTrace)));
    }
}
