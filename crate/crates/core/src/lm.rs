//! Levenberg–Marquardt least squares and weighted straight-line regression.
//!
//! Every nonlinear fit in the calibration pipeline (Lorentzian peaks,
//! spectrum arches, damped fringes, chevron traces, |g_eff| curves) goes
//! through [`levenberg_marquardt`]. Reported covariances are scaled by the
//! reduced chi-square, so parameter sigmas reflect the observed scatter.

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;

#[derive(Debug, Clone)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Relative cost decrease below which an accepted step counts as converged.
    pub ftol: f64,
    /// Relative step size below which the fit counts as converged.
    pub xtol: f64,
    /// Infinity norm of the scaled gradient below which the fit is converged.
    pub gtol: f64,
    pub initial_lambda: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { max_iterations: 300, ftol: 1e-14, xtol: 1e-13, gtol: 1e-14, initial_lambda: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// Parameter covariance scaled by the reduced chi-square.
    pub covariance: Vec<Vec<f64>>,
    /// Sum of squared residuals at the optimum.
    pub cost: f64,
    pub iterations: usize,
    pub n_residuals: usize,
}

impl LmFit {
    pub fn sigma(&self, i: usize) -> f64 {
        self.covariance[i][i].max(0.0).sqrt()
    }

    pub fn rms(&self) -> f64 {
        (self.cost / self.n_residuals as f64).sqrt()
    }

    pub fn reduced_chi2(&self) -> f64 {
        let dof = self.n_residuals.saturating_sub(self.params.len());
        if dof == 0 {
            f64::NAN
        } else {
            self.cost / dof as f64
        }
    }
}

/// Minimises `Σ r_i(p)²`.
///
/// `residuals(p, out)` fills `out` (length `m`). `scale` gives a typical
/// magnitude per parameter and sets the finite-difference step.
pub fn levenberg_marquardt<F>(
    residuals: F,
    p0: &[f64],
    m: usize,
    scale: &[f64],
    cfg: &LmConfig,
) -> Result<LmFit>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = p0.len();
    assert_eq!(scale.len(), n, "one scale per parameter");
    if m < n {
        return Err(Error::Precondition(format!("{m} residuals for {n} parameters")));
    }
    let eval = |p: &[f64], out: &mut [f64]| -> f64 {
        residuals(p, out);
        let c: f64 = out.iter().map(|r| r * r).sum();
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    };

    let mut p = p0.to_vec();
    let mut r = vec![0.0; m];
    let mut cost = eval(&p, &mut r);
    if !cost.is_finite() {
        return Err(Error::Domain("non-finite residuals at initial guess".into()));
    }
    let mut jac = vec![0.0; m * n];
    let mut lambda = cfg.initial_lambda;
    let mut nu = 2.0;
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];
    let mut r_new = vec![0.0; m];

    for iter in 0..cfg.max_iterations {
        jacobian(&eval, &p, scale, &mut jac, &mut rp, &mut rm, m);
        let (a, g) = normal_equations(&jac, &r, m, n);
        let gmax = (0..n)
            .map(|j| (g[j] * scale[j]).abs())
            .fold(0.0, f64::max);
        if gmax <= cfg.gtol * cost.max(f64::MIN_POSITIVE).sqrt() || cost == 0.0 {
            return finish(&jac, p, cost, iter, m, n);
        }

        let mut accepted = false;
        while !accepted {
            let mut damped = a.clone();
            for j in 0..n {
                let d = a[(j, j)].max(1e-300);
                damped[(j, j)] = a[(j, j)] + lambda * d;
            }
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let step = match damped.lu().solve(&neg_g) {
                Ok(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => {
                    lambda *= nu;
                    nu *= 2.0;
                    if lambda > 1e16 {
                        return finish(&jac, p, cost, iter, m, n);
                    }
                    continue;
                }
            };
            let small_step = step
                .iter()
                .zip(&p)
                .zip(scale)
                .all(|((s, x), sc)| s.abs() <= cfg.xtol * (x.abs() + sc.abs()));
            let p_new: Vec<f64> = p.iter().zip(&step).map(|(x, s)| x + s).collect();
            let cost_new = eval(&p_new, &mut r_new);
            if cost_new < cost {
                // gain ratio against the linear model
                let predicted: f64 = (0..n)
                    .map(|j| step[j] * (lambda * a[(j, j)].max(1e-300) * step[j] - g[j]))
                    .sum();
                let rho = (cost - cost_new) / predicted.max(f64::MIN_POSITIVE);
                lambda *= f64::max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                let rel = (cost - cost_new) / cost;
                p = p_new;
                std::mem::swap(&mut r, &mut r_new);
                cost = cost_new;
                accepted = true;
                if rel < cfg.ftol || small_step {
                    jacobian(&eval, &p, scale, &mut jac, &mut rp, &mut rm, m);
                    return finish(&jac, p, cost, iter + 1, m, n);
                }
            } else {
                if small_step {
                    return finish(&jac, p, cost, iter, m, n);
                }
                lambda *= nu;
                nu *= 2.0;
                if lambda > 1e16 {
                    return finish(&jac, p, cost, iter, m, n);
                }
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
        residual: (cost / m as f64).sqrt(),
    })
}

fn jacobian<E>(
    eval: &E,
    p: &[f64],
    scale: &[f64],
    jac: &mut [f64],
    rp: &mut [f64],
    rm: &mut [f64],
    m: usize,
) where
    E: Fn(&[f64], &mut [f64]) -> f64,
{
    let n = p.len();
    let mut q = p.to_vec();
    for j in 0..n {
        let h = 6e-6 * (p[j].abs() + scale[j].abs()).max(f64::MIN_POSITIVE);
        q[j] = p[j] + h;
        eval(&q, rp);
        q[j] = p[j] - h;
        eval(&q, rm);
        q[j] = p[j];
        for i in 0..m {
            jac[i * n + j] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
}

fn normal_equations(jac: &[f64], r: &[f64], m: usize, n: usize) -> (SquareMatrix, Vec<f64>) {
    let mut a = SquareMatrix::zeros(n);
    let mut g = vec![0.0; n];
    for i in 0..m {
        let row = &jac[i * n..(i + 1) * n];
        for j in 0..n {
            g[j] += row[j] * r[i];
            for k in j..n {
                a[(j, k)] += row[j] * row[k];
            }
        }
    }
    for j in 0..n {
        for k in 0..j {
            a[(j, k)] = a[(k, j)];
        }
    }
    (a, g)
}

fn finish(jac: &[f64], params: Vec<f64>, cost: f64, iterations: usize, m: usize, n: usize) -> Result<LmFit> {
    let (a, _) = normal_equations(jac, &vec![0.0; m], m, n);
    let s2 = if m > n { cost / (m - n) as f64 } else { 1.0 };
    let covariance = match a.lu().inverse() {
        Ok(inv) => (0..n)
            .map(|i| (0..n).map(|j| 0.5 * (inv[(i, j)] + inv[(j, i)]) * s2).collect())
            .collect(),
        Err(_) => vec![vec![f64::INFINITY; n]; n],
    };
    Ok(LmFit { params, covariance, cost, iterations, n_residuals: m })
}

/// Result of a weighted straight-line fit `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub sigma_slope: f64,
    pub sigma_intercept: f64,
    pub cov_slope_intercept: f64,
    pub reduced_chi2: f64,
}

/// Inverse-variance weighted regression; falls back to equal weights when
/// `sigma` is absent or any entry is non-positive or non-finite. Parameter
/// sigmas are scaled by the reduced chi-square (requires at least 3 points).
pub fn weighted_line_fit(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<LineFit> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if n < 3 {
        return Err(Error::Precondition(format!("line fit needs >= 3 points, got {n}")));
    }
    let w: Vec<f64> = match sigma {
        Some(s) if s.len() == n && s.iter().all(|v| v.is_finite() && *v > 0.0) => {
            s.iter().map(|v| 1.0 / (v * v)).collect()
        }
        _ => vec![1.0; n],
    };
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Precondition("line fit with zero x spread".into()));
    }
    let sxy: f64 = (0..n).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let chi2: f64 = (0..n).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let red = chi2 / (n - 2) as f64;
    let var_slope = red / sxx;
    let var_intercept = red * (1.0 / sw + xm * xm / sxx);
    Ok(LineFit {
        slope,
        intercept,
        sigma_slope: var_slope.sqrt(),
        sigma_intercept: var_intercept.sqrt(),
        cov_slope_intercept: -xm * var_slope,
        reduced_chi2: red,
    })
}

/// Weighted polynomial fit `y = Σ c_k x^k`, k = 0..=degree. Returns the
/// coefficients and their covariance scaled by the reduced chi-square.
pub fn weighted_poly_fit(x: &[f64], y: &[f64], sigma: Option<&[f64]>, degree: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = x.len();
    let k = degree + 1;
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if n <= k {
        return Err(Error::Precondition(format!("degree-{degree} fit needs > {k} points, got {n}")));
    }
    let w: Vec<f64> = match sigma {
        Some(s) if s.len() == n && s.iter().all(|v| v.is_finite() && *v > 0.0) => s.iter().map(|v| 1.0 / (v * v)).collect(),
        _ => vec![1.0; n],
    };
    // centre and scale x for conditioning
    let xm = x.iter().sum::<f64>() / n as f64;
    let xs = x.iter().map(|v| (v - xm).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let u: Vec<f64> = x.iter().map(|v| (v - xm) / xs).collect();
    let mut a = SquareMatrix::zeros(k);
    let mut b = vec![0.0; k];
    for i in 0..n {
        let pw: Vec<f64> = (0..k).map(|j| u[i].powi(j as i32)).collect();
        for r in 0..k {
            b[r] += w[i] * pw[r] * y[i];
            for c in 0..k {
                a[(r, c)] += w[i] * pw[r] * pw[c];
            }
        }
    }
    let inv = a.lu().inverse()?;
    let cu: Vec<f64> = (0..k).map(|r| (0..k).map(|c| inv[(r, c)] * b[c]).sum()).collect();
    let chi2: f64 = (0..n)
        .map(|i| {
            let m: f64 = (0..k).map(|j| cu[j] * u[i].powi(j as i32)).sum();
            w[i] * (y[i] - m).powi(2)
        })
        .sum();
    let red = chi2 / (n - k) as f64;
    // back to raw x: c_raw = T · c_u with T[m][j] = C(j,m)·(−xm)^(j−m)/xs^j
    let binom = |n: usize, r: usize| (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    let mut t = vec![vec![0.0; k]; k];
    for m in 0..k {
        for j in m..k {
            t[m][j] = binom(j, m) * (-xm).powi((j - m) as i32) / xs.powi(j as i32);
        }
    }
    let coeffs: Vec<f64> = (0..k).map(|m| (0..k).map(|j| t[m][j] * cu[j]).sum()).collect();
    let mut cov = vec![vec![0.0; k]; k];
    for r in 0..k {
        for c in 0..k {
            let mut s = 0.0;
            for i in 0..k {
                for j in 0..k {
                    s += t[r][i] * inv[(i, j)] * t[c][j];
                }
            }
            cov[r][c] = s * red;
        }
    }
    Ok((coeffs, cov))
}
