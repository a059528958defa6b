//! Zero-padded magnitude spectra and sub-bin peak location.

use rustfft::{num_complex::Complex, FftPlanner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

/// One-sided magnitude spectrum of a uniformly sampled real trace.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Frequency of bin k is `k * df`.
    pub df: f64,
    pub magnitude: Vec<f64>,
    /// Zero-padding factor; one native bin spans `pad` padded bins.
    pub pad: usize,
}

/// Subtracts the mean, applies `window`, zero-pads by `pad` and transforms.
/// `dt` is the sample spacing; frequencies come out in 1/unit(dt).
pub fn magnitude_spectrum(trace: &[f64], dt: f64, pad: usize, window: Window) -> Spectrum {
    let n = trace.len();
    let mean = trace.iter().sum::<f64>() / n as f64;
    let len = n * pad.max(1);
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); len];
    for (i, (b, v)) in buf.iter_mut().zip(trace).enumerate() {
        let w = match window {
            Window::Hann if n > 1 => 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos(),
            _ => 1.0,
        };
        *b = Complex::new((v - mean) * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let magnitude = buf[..len / 2 + 1].iter().map(|c| c.norm()).collect();
    Spectrum { df: 1.0 / (len as f64 * dt), magnitude, pad: pad.max(1) }
}

impl Spectrum {
    /// Index of the largest bin; ties go to the lower frequency.
    pub fn peak_bin(&self) -> usize {
        self.magnitude
            .iter()
            .enumerate()
            .fold(0, |best, (i, m)| if *m > self.magnitude[best] { i } else { best })
    }

    /// Peak frequency refined by a 3-point parabola through the magnitude.
    pub fn refined_peak(&self, k: usize) -> f64 {
        let m = &self.magnitude;
        if k == 0 || k + 1 >= m.len() {
            return k as f64 * self.df;
        }
        let (a, b, c) = (m[k - 1], m[k], m[k + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
        (k as f64 + shift.clamp(-0.5, 0.5)) * self.df
    }

    /// Full width at half maximum of the peak at bin `k`, linearly
    /// interpolated between bins.
    pub fn peak_width(&self, k: usize) -> f64 {
        let m = &self.magnitude;
        let half = 0.5 * m[k];
        let cross = |range: &mut dyn Iterator<Item = usize>, dir: f64| -> f64 {
            let mut prev = k;
            for i in range {
                if m[i] <= half {
                    let frac = (m[prev] - half) / (m[prev] - m[i]);
                    return (prev as f64 + dir * frac) * self.df;
                }
                prev = i;
            }
            prev as f64 * self.df
        };
        let hi = cross(&mut (k + 1..m.len()), 1.0);
        let lo = cross(&mut (0..k).rev(), -1.0);
        hi - lo
    }
}
