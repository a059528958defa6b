//! Output files: JSON/CSV writers, the Table 1 layout, and the plot and run
//! manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use fluxtalk::calibration::{CrosstalkMetrics, MatrixReport};
use fluxtalk::virtual_device::ScanMap;

use crate::Failure;

/// Collects the files written into one output directory, in write order.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
    plots: Vec<PlotEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlotEntry {
    pub file: String,
    pub figure: String,
    pub title: String,
    pub x: String,
    pub y: String,
    pub z: String,
}

impl OutputDir {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf(), written: Vec::new(), plots: Vec::new() }
    }

    pub fn text(&mut self, rel: &str, body: &str) -> Result<(), Failure> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Failure::io(format!("{}: {e}", parent.display())))?;
        }
        std::fs::write(&path, body).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        self.written.push(PathBuf::from(rel));
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<(), Failure> {
        let mut body = serde_json::to_string_pretty(value).map_err(|e| Failure::io(e.to_string()))?;
        body.push('\n');
        self.text(rel, &body)
    }

    pub fn csv<S: AsRef<str>>(&mut self, rel: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> Result<(), Failure> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Failure::io(e.to_string());
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r.iter().map(|s| s.as_ref())).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::io(e.to_string()))?;
        self.text(rel, &String::from_utf8_lossy(&bytes))
    }

    pub fn scan(&mut self, dir: &str, scan: &ScanMap, figure: &str) -> Result<(), Failure> {
        let stem = format!("{dir}/{}", scan.file_stem());
        self.text(&format!("{stem}.csv"), &scan.to_csv().map_err(|e| Failure::io(e.to_string()))?)?;
        self.text(&format!("{stem}.json"), &scan.to_json().map_err(|e| Failure::io(e.to_string()))?)?;
        let unit = |a: &fluxtalk::virtual_device::Axis| format!("{} [{}]", a.name, a.unit);
        self.plot(&format!("{stem}.csv"), figure, &scan.file_stem(), &unit(&scan.x_axis), &unit(&scan.y_axis), "signal [a.u.]");
        Ok(())
    }

    pub fn plot(&mut self, file: &str, figure: &str, title: &str, x: &str, y: &str, z: &str) {
        self.plots.push(PlotEntry {
            file: file.into(),
            figure: figure.into(),
            title: title.into(),
            x: x.into(),
            y: y.into(),
            z: z.into(),
        });
    }

    /// Writes `plot_manifest.json` and then `run_manifest.json`, which is the
    /// only file carrying wall-clock time.
    pub fn finish(mut self, command: &str, seed: u64, inputs: &impl Serialize) -> Result<(), Failure> {
        let plots = std::mem::take(&mut self.plots);
        self.json("plot_manifest.json", &serde_json::json!({ "plots": plots }))?;

        let canonical = serde_json::to_vec(inputs).map_err(|e| Failure::io(e.to_string()))?;
        let mut outputs = serde_json::Map::new();
        for rel in &self.written {
            let bytes = std::fs::read(self.root.join(rel)).map_err(|e| Failure::io(e.to_string()))?;
            outputs.insert(rel.display().to_string(), hex::encode(Sha256::digest(&bytes)).into());
        }
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = serde_json::json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": seed,
            "input_sha256": hex::encode(Sha256::digest(&canonical)),
            "outputs_sha256": outputs,
            "timestamp_unix": now,
        });
        let path = self.root.join("run_manifest.json");
        let body = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::io(e.to_string()))? + "\n";
        std::fs::write(&path, body).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
    }
}

pub fn db_map_rows(labels: &[String], m: &CrosstalkMetrics) -> Vec<Vec<String>> {
    labels
        .iter()
        .zip(&m.db_map)
        .map(|(l, row)| std::iter::once(l.clone()).chain(row.iter().map(|v| format!("{v:.3}"))).collect())
        .collect()
}

pub fn matrix_rows(r: &MatrixReport, scale: f64) -> Vec<Vec<String>> {
    r.labels
        .iter()
        .zip(r.rows.iter().zip(&r.sigmas))
        .map(|(l, (row, sig))| {
            std::iter::once(l.clone())
                .chain(row.iter().zip(sig).map(|(v, s)| format!("{:.4}±{:.4}", v * scale, s * scale)))
                .collect()
        })
        .collect()
}

/// Spread of |X_ik| over the off-diagonals and σ of the extreme entries, ‰.
struct Spread {
    neg: f64,
    pos: f64,
    avg: f64,
}

fn spread(r: &MatrixReport) -> Spread {
    let n = r.labels.len();
    let off: Vec<(f64, f64)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&k| k != i).map(move |k| (i, k)))
        .map(|(i, k)| (r.rows[i][k], r.sigmas[i][k]))
        .collect();
    let pick = |cmp: fn(f64, f64) -> bool| off.iter().copied().reduce(|a, b| if cmp(b.0, a.0) { b } else { a }).map_or(0.0, |e| e.1);
    let mean = off.iter().map(|e| e.0.abs()).sum::<f64>() / off.len().max(1) as f64;
    let var = off.iter().map(|e| (e.0.abs() - mean).powi(2)).sum::<f64>() / (off.len().max(2) - 1) as f64;
    Spread { neg: 1e3 * pick(|a, b| a < b), pos: 1e3 * pick(|a, b| a > b), avg: 1e3 * var.sqrt() }
}

/// Table 1 layout: one column per (title, matrix, metrics).
pub fn table(columns: &[(&str, &MatrixReport, &CrosstalkMetrics)]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<28}", "Crosstalk (‰)");
    for (title, _, _) in columns {
        let _ = write!(s, "{title:>22}");
    }
    s.push('\n');
    let spreads: Vec<Spread> = columns.iter().map(|c| spread(c.1)).collect();
    let n = columns.first().map_or(0, |c| c.1.labels.len());
    let pairs = (n * n.saturating_sub(1)) as f64;
    let lines: [(&str, &dyn Fn(&CrosstalkMetrics, &Spread) -> (f64, Option<f64>)); 5] = [
        ("Largest negative", &|m, sp| (m.largest_negative_permil, Some(sp.neg))),
        ("Largest positive", &|m, sp| (m.largest_positive_permil, Some(sp.pos))),
        ("Average |X|", &|m, sp| (m.average_permil, Some(sp.avg))),
        ("Total |X|", &|m, _| (m.total_permil, None)),
        ("Asymmetry", &|m, _| (m.asymmetry_permil, None)),
    ];
    for (name, f) in lines {
        let label = if name == "Total |X|" { format!("{name} ({pairs:.0}·avg)") } else { name.to_string() };
        let _ = write!(s, "{label:<28}");
        for (c, sp) in columns.iter().zip(&spreads) {
            let cell = match f(c.2, sp) {
                (v, Some(e)) => format!("{v:.2} ± {e:.2}"),
                (v, None) => format!("{v:.2}"),
            };
            let _ = write!(s, "{cell:>22}");
        }
        s.push('\n');
    }
    s
}
