use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{invert, SquareMatrix};

pub const DEFAULT_DET_FLOOR: f64 = 1e-9;

/// Dimensionless flux-crosstalk matrix X with `V_eff = X · V_Z`.
///
/// Row index is the detector element, column index the source Z-line, and
/// every diagonal entry is exactly 1. The inverse (the cancellation matrix)
/// is computed once at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct CrosstalkMatrix {
    labels: Vec<String>,
    x: SquareMatrix,
    inverse: SquareMatrix,
    condition: f64,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    labels: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<RawMatrix> for CrosstalkMatrix {
    type Error = Error;
    fn try_from(r: RawMatrix) -> Result<Self> {
        CrosstalkMatrix::new(r.labels, r.rows)
    }
}

impl From<CrosstalkMatrix> for RawMatrix {
    fn from(m: CrosstalkMatrix) -> Self {
        RawMatrix { rows: m.x.to_rows(), labels: m.labels }
    }
}

impl CrosstalkMatrix {
    pub fn new(labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_det_floor(labels, rows, DEFAULT_DET_FLOOR)
    }

    pub fn with_det_floor(labels: Vec<String>, rows: Vec<Vec<f64>>, det_floor: f64) -> Result<Self> {
        if labels.len() != rows.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), got: rows.len() });
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidMatrix(format!("duplicate label `{l}`")));
            }
        }
        let x = SquareMatrix::from_rows(&rows)?;
        for i in 0..x.dim() {
            if x[(i, i)] != 1.0 {
                return Err(Error::InvalidMatrix(format!(
                    "diagonal entry {i} is {} (must be exactly 1)",
                    x[(i, i)]
                )));
            }
            if x.row(i).iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidMatrix(format!("row {i} has non-finite entries")));
            }
        }
        let inv = invert(&x, det_floor)?;
        Ok(Self { labels, x, inverse: inv.inverse, condition: inv.condition })
    }

    pub fn identity(labels: Vec<String>) -> Self {
        let n = labels.len();
        let x = SquareMatrix::identity(n);
        Self { labels, inverse: x.clone(), x, condition: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// X[detector][source].
    pub fn get(&self, detector: usize, source: usize) -> f64 {
        self.x[(detector, source)]
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.x
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.x.to_rows()
    }

    pub fn cancellation(&self) -> &SquareMatrix {
        &self.inverse
    }

    /// 1-norm condition number of X.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn effective_voltage(&self, v_z: &[f64]) -> Result<Vec<f64>> {
        self.x.mul_vec(v_z)
    }

    /// Line voltages that produce `v_target` after crosstalk mixing.
    pub fn compensate(&self, v_target: &[f64]) -> Result<Vec<f64>> {
        self.inverse.mul_vec(v_target)
    }

    /// Off-diagonal entries as (detector, source, value), row-major.
    pub fn off_diagonals(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.dim();
        (0..n).flat_map(move |i| (0..n).filter(move |&k| k != i).map(move |k| (i, k, self.x[(i, k)])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("E{i}")).collect()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, max_off: f64) -> CrosstalkMatrix {
        let rows = (0..n)
            .map(|i| (0..n).map(|k| if i == k { 1.0 } else { rng.gen_range(-max_off..max_off) }).collect())
            .collect();
        CrosstalkMatrix::new(labels(n), rows).unwrap()
    }

    #[test]
    fn identity_passes_through() {
        let x = CrosstalkMatrix::identity(labels(3));
        let v = [0.1, -0.4, 2.0];
        assert_eq!(x.effective_voltage(&v).unwrap(), v);
        assert_eq!(x.compensate(&v).unwrap(), v);
    }

    #[test]
    fn single_off_diagonal() {
        let x = CrosstalkMatrix::new(labels(2), vec![vec![1.0, 0.05], vec![0.0, 1.0]]).unwrap();
        assert_eq!(x.effective_voltage(&[0.0, 1.0]).unwrap(), vec![0.05, 1.0]);
    }

    #[test]
    fn matches_naive_row_dot_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 4, 0.06);
        let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = x.effective_voltage(&v).unwrap();
        let rows = x.rows();
        for i in 0..4 {
            let mut acc = 0.0;
            for k in 0..4 {
                acc += rows[i][k] * v[k];
            }
            assert_eq!(got[i], acc);
        }
    }

    #[test]
    fn cancellation_multiplies_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x = random_matrix(&mut rng, 4, 0.06);
            let prod = x.matrix().mul(x.cancellation()).unwrap();
            for i in 0..4 {
                for k in 0..4 {
                    let want = if i == k { 1.0 } else { 0.0 };
                    assert!((prod[(i, k)] - want).abs() < 1e-12);
                }
            }
            let target: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let vz = x.compensate(&target).unwrap();
            let back = x.effective_voltage(&vz).unwrap();
            for (b, t) in back.iter().zip(&target) {
                assert!((b - t).abs() <= 1e-12 * t.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn two_line_compensation_nulls_net_flux() {
        // A step on line k is cancelled on line i by -X_ik times that step.
        let x = CrosstalkMatrix::new(labels(2), vec![vec![1.0, 0.043], vec![-0.021, 1.0]]).unwrap();
        let dv_k = 0.3;
        let dv_i = -x.get(0, 1) * dv_k;
        let v_eff = x.effective_voltage(&[dv_i, dv_k]).unwrap();
        assert!(v_eff[0].abs() < 1e-17);
    }

    #[test]
    fn rejects_invalid() {
        assert!(matches!(
            CrosstalkMatrix::new(labels(2), vec![vec![1.0, 0.0], vec![0.0, 0.9]]),
            Err(Error::InvalidMatrix(_))
        ));
        assert!(matches!(
            CrosstalkMatrix::new(labels(2), vec![vec![1.0, 1.0], vec![1.0, 1.0]]),
            Err(Error::Singular { .. })
        ));
        assert!(CrosstalkMatrix::new(labels(2), vec![vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn json_roundtrip_shape() {
        let x = CrosstalkMatrix::new(labels(2), vec![vec![1.0, 0.05], vec![0.0, 1.0]]).unwrap();
        let s = serde_json::to_string(&x).unwrap();
        assert_eq!(s, r#"{"labels":["E0","E1"],"rows":[[1.0,0.05],[0.0,1.0]]}"#);
        let back: CrosstalkMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
    }
}
