use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    Spectroscopy,
    Mzlc,
    Ramsey,
    CzSwap,
}

impl ScanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScanKind::Spectroscopy => "spectroscopy",
            ScanKind::Mzlc => "mzlc",
            ScanKind::Ramsey => "ramsey",
            ScanKind::CzSwap => "cz_swap",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for ScanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
    /// The same grid as normalized flux πΦ/Φ0 of the element on that line,
    /// when the axis is a bias voltage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_flux: Option<Vec<f64>>,
}

impl Axis {
    pub fn new(name: &str, unit: &str, values: Vec<f64>) -> Self {
        Self { name: name.into(), unit: unit.into(), values, normalized_flux: None }
    }

    pub fn with_flux(mut self, flux: Vec<f64>) -> Self {
        self.normalized_flux = Some(flux);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Grid spacing if the axis is uniform to 1e-9 relative.
    pub fn uniform_step(&self) -> Option<f64> {
        let v = &self.values;
        if v.len() < 2 {
            return None;
        }
        let step = (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64;
        let ok = v.windows(2).all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.abs().max(1e-300));
        (ok && step != 0.0).then_some(step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMeta {
    pub probe_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_label: Option<String>,
    #[serde(default, rename = "drive_freq_MHz", skip_serializing_if = "Option::is_none")]
    pub drive_freq: Option<f64>,
    /// Fixed probe bias of a Ramsey scan, V.
    #[serde(default, rename = "probe_bias_V", skip_serializing_if = "Option::is_none")]
    pub probe_bias: Option<f64>,
    /// Pulse-reduction factor used for CZ-SWAP maps.
    #[serde(default, rename = "pulse_reduction", skip_serializing_if = "Option::is_none")]
    pub pulse_reduction: Option<f64>,
    #[serde(default)]
    pub compensated: bool,
    pub seed: u64,
}

/// A 2D measurement: `signal[iy][ix]` is taken at (x_axis[ix], y_axis[iy]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScan", into = "RawScan")]
pub struct ScanMap {
    pub kind: ScanKind,
    pub x_axis: Axis,
    pub y_axis: Axis,
    signal: Vec<Vec<f64>>,
    pub meta: ScanMeta,
}

#[derive(Serialize, Deserialize)]
struct RawScan {
    kind: ScanKind,
    x_axis: Axis,
    y_axis: Axis,
    signal: Vec<Vec<f64>>,
    meta: ScanMeta,
}

impl TryFrom<RawScan> for ScanMap {
    type Error = Error;
    fn try_from(r: RawScan) -> Result<Self> {
        ScanMap::new(r.kind, r.x_axis, r.y_axis, r.signal, r.meta)
    }
}

impl From<ScanMap> for RawScan {
    fn from(s: ScanMap) -> Self {
        RawScan { kind: s.kind, x_axis: s.x_axis, y_axis: s.y_axis, signal: s.signal, meta: s.meta }
    }
}

impl ScanMap {
    pub fn new(kind: ScanKind, x_axis: Axis, y_axis: Axis, signal: Vec<Vec<f64>>, meta: ScanMeta) -> Result<Self> {
        if signal.len() != y_axis.len() {
            return Err(Error::DimensionMismatch { expected: y_axis.len(), got: signal.len() });
        }
        for row in &signal {
            if row.len() != x_axis.len() {
                return Err(Error::DimensionMismatch { expected: x_axis.len(), got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("scan signal must be finite".into()));
            }
        }
        Ok(Self { kind, x_axis, y_axis, signal, meta })
    }

    /// Builds a map from per-x columns (each of length `y_axis.len()`).
    pub(crate) fn from_columns(kind: ScanKind, x_axis: Axis, y_axis: Axis, columns: Vec<Vec<f64>>, meta: ScanMeta) -> Result<Self> {
        let ny = y_axis.len();
        let signal = (0..ny).map(|iy| columns.iter().map(|c| c[iy]).collect()).collect();
        Self::new(kind, x_axis, y_axis, signal, meta)
    }

    pub fn signal(&self) -> &[Vec<f64>] {
        &self.signal
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.signal[iy][ix]
    }

    pub fn column(&self, ix: usize) -> Vec<f64> {
        self.signal.iter().map(|row| row[ix]).collect()
    }

    /// `{kind}_{probe}[_{source}]`.
    pub fn file_stem(&self) -> String {
        match &self.meta.source_label {
            Some(s) => format!("{}_{}_{}", self.kind, self.meta.probe_label, s),
            None => format!("{}_{}", self.kind, self.meta.probe_label),
        }
    }

    /// First row holds x values, first column y values, body the signal.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![format!("{}\\{}", self.y_axis.name, self.x_axis.name)];
        header.extend(self.x_axis.values.iter().map(|v| v.to_string()));
        w.write_record(&header)?;
        for (y, row) in self.y_axis.values.iter().zip(&self.signal) {
            let mut rec = vec![y.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Parses the CSV layout of [`ScanMap::to_csv`]; axis names and metadata
    /// are not part of that layout and must be supplied.
    pub fn from_csv(text: &str, kind: ScanKind, x_axis: Axis, y_axis: Axis, meta: ScanMeta) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
        let mut rows = r.records();
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Serde(format!("`{s}`: {e}")));
        let header = rows.next().ok_or_else(|| Error::Serde("empty CSV".into()))??;
        let xs = header.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
        let mut ys = Vec::new();
        let mut signal = Vec::new();
        for rec in rows {
            let rec = rec?;
            let mut it = rec.iter();
            ys.push(parse(it.next().unwrap_or(""))?);
            signal.push(it.map(parse).collect::<Result<Vec<_>>>()?);
        }
        let x_axis = Axis { values: xs, ..x_axis };
        let y_axis = Axis { values: ys, ..y_axis };
        Self::new(kind, x_axis, y_axis, signal, meta)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `{stem}.csv` and `{stem}.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        let stem = self.file_stem();
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv()?)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta() -> ScanMeta {
        ScanMeta {
            probe_label: "Q1".into(),
            source_label: Some("C2".into()),
            drive_freq: Some(4500.0),
            probe_bias: None,
            pulse_reduction: None,
            compensated: false,
            seed: 7,
        }
    }

    #[test]
    fn rejects_shape_mismatch_and_nan() {
        let x = Axis::new("S", "V", vec![0.0, 1.0]);
        let y = Axis::new("P", "V", vec![0.0]);
        assert!(ScanMap::new(ScanKind::Mzlc, x.clone(), y.clone(), vec![vec![1.0]], meta()).is_err());
        assert!(ScanMap::new(ScanKind::Mzlc, x, y, vec![vec![1.0, f64::NAN]], meta()).is_err());
    }

    #[test]
    fn csv_layout() {
        let x = Axis::new("S", "V", vec![0.0, 0.5]);
        let y = Axis::new("P", "V", vec![-1.0, 1.0]);
        let s = ScanMap::new(ScanKind::Mzlc, x, y, vec![vec![1.0, 2.0], vec![3.0, 4.5]], meta()).unwrap();
        assert_eq!(s.to_csv().unwrap(), "P\\S,0,0.5\n-1,1,2\n1,3,4.5\n");
        assert_eq!(s.file_stem(), "mzlc_Q1_C2");
    }

    #[test]
    fn uniform_step_detection() {
        assert_eq!(Axis::new("t", "ns", vec![0.0, 2.0, 4.0]).uniform_step(), Some(2.0));
        assert_eq!(Axis::new("t", "ns", vec![0.0, 2.0, 5.0]).uniform_step(), None);
    }

    proptest! {
        #[test]
        fn csv_and_json_roundtrip(
            nx in 1usize..6, ny in 1usize..6,
            vals in proptest::collection::vec(-1e3f64..1e3, 36),
        ) {
            let x = Axis::new("S", "V", (0..nx).map(|i| i as f64 * 0.013 - 0.02).collect());
            let y = Axis::new("P", "V", (0..ny).map(|i| i as f64 * 1.7).collect());
            let sig: Vec<Vec<f64>> = (0..ny).map(|iy| (0..nx).map(|ix| vals[iy * 6 + ix]).collect()).collect();
            let s = ScanMap::new(ScanKind::Mzlc, x.clone(), y.clone(), sig, meta()).unwrap();
            let back = ScanMap::from_csv(&s.to_csv().unwrap(), ScanKind::Mzlc, x, y, meta()).unwrap();
            prop_assert_eq!(&back, &s);
            let back = ScanMap::from_json(&s.to_json().unwrap()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
