use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::{CrosstalkEstimate, Method};
use crate::device::CrosstalkMatrix;
use crate::error::{Error, Result};

/// Builds X with unit diagonal from one estimate per ordered pair.
pub fn assemble_matrix(estimates: &[CrosstalkEstimate], labels: &[String]) -> Result<CrosstalkMatrix> {
    let (rows, _) = assemble_with_sigmas(estimates, labels)?;
    CrosstalkMatrix::new(labels.to_vec(), rows)
}

/// Entries and sigmas of [`assemble_matrix`]; diagonal sigmas are 0.
pub fn assemble_with_sigmas(estimates: &[CrosstalkEstimate], labels: &[String]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n = labels.len();
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut rows = vec![vec![0.0; n]; n];
    let mut sigmas = vec![vec![0.0; n]; n];
    let mut seen = vec![vec![false; n]; n];
    for e in estimates {
        let i = *index.get(e.probe.as_str()).ok_or_else(|| Error::UnknownLabel(e.probe.clone()))?;
        let k = *index.get(e.source.as_str()).ok_or_else(|| Error::UnknownLabel(e.source.clone()))?;
        if i == k {
            return Err(Error::PairCoverage(format!("estimate for diagonal pair {}", e.probe)));
        }
        if seen[i][k] {
            return Err(Error::PairCoverage(format!("duplicate estimate for ({}, {})", e.probe, e.source)));
        }
        seen[i][k] = true;
        rows[i][k] = e.x;
        sigmas[i][k] = e.sigma;
    }
    for i in 0..n {
        rows[i][i] = 1.0;
        for k in 0..n {
            if i != k && !seen[i][k] {
                return Err(Error::PairCoverage(format!("missing estimate for ({}, {})", labels[i], labels[k])));
            }
        }
    }
    Ok((rows, sigmas))
}

/// Serialized crosstalk matrix with per-entry uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub sigmas: Vec<Vec<f64>>,
    pub method: Method,
    pub repeats: usize,
}

impl MatrixReport {
    pub fn matrix(&self) -> Result<CrosstalkMatrix> {
        CrosstalkMatrix::new(self.labels.clone(), self.rows.clone())
    }
}

pub const DEFAULT_DB_FLOOR: f64 = -120.0;

/// Aggregate statistics of the off-diagonal entries, in ‰, plus a dB map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkMetrics {
    pub largest_negative_permil: f64,
    pub largest_positive_permil: f64,
    pub average_permil: f64,
    pub total_permil: f64,
    pub asymmetry_permil: f64,
    /// 20·log10|X_ik|, floored; the diagonal is 0 dB.
    pub db_map: Vec<Vec<f64>>,
}

pub fn metrics(x: &CrosstalkMatrix) -> CrosstalkMetrics {
    metrics_with_floor(x, DEFAULT_DB_FLOOR)
}

pub fn metrics_with_floor(x: &CrosstalkMatrix, db_floor: f64) -> CrosstalkMetrics {
    let n = x.dim();
    let off: Vec<f64> = x.off_diagonals().map(|(_, _, v)| v).collect();
    let total: f64 = off.iter().map(|v| v.abs()).sum();
    let pairs = (n * n.saturating_sub(1)).max(1) as f64;
    let average = 1e3 * total / pairs;
    let mut asym = 0.0;
    for i in 0..n {
        for k in 0..n {
            if i != k {
                asym += (x.get(i, k).abs() - x.get(k, i).abs()).abs();
            }
        }
    }
    let db_map = (0..n)
        .map(|i| {
            (0..n)
                .map(|k| {
                    let v = x.get(i, k).abs();
                    if v > 0.0 {
                        (20.0 * v.log10()).max(db_floor)
                    } else {
                        db_floor
                    }
                })
                .collect()
        })
        .collect();
    CrosstalkMetrics {
        largest_negative_permil: if off.is_empty() { 0.0 } else { 1e3 * off.iter().cloned().fold(f64::INFINITY, f64::min) },
        largest_positive_permil: if off.is_empty() { 0.0 } else { 1e3 * off.iter().cloned().fold(f64::NEG_INFINITY, f64::max) },
        average_permil: average,
        // total is defined through the average so that total = N(N−1)·average holds exactly
        total_permil: average * pairs,
        asymmetry_permil: 1e3 * asym,
        db_map,
    }
}
