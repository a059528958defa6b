//! Scenario resolution: built-in defaults, then the config file, then flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fluxtalk::calibration::{GridConfig, MethodChoice};
use fluxtalk::templates::paper_device;
use fluxtalk::virtual_device::DeviceConfig;

use crate::Failure;

pub const SEED_ENV: &str = "FLUXTALK_SEED";

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DeviceSource {
    Path(PathBuf),
    Inline(Box<DeviceConfig>),
}

/// CZ chevron grids and fit options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CzGrid {
    pub flux_min: f64,
    pub flux_max: f64,
    pub flux_points: usize,
    #[serde(rename = "t_max_ns")]
    pub t_max: f64,
    #[serde(rename = "t_step_ns")]
    pub t_step: f64,
    /// Columns with |flux| above this are left out of the curve fit.
    pub fit_max_abs_flux: Option<f64>,
    /// Fixed g1c/g2c ratio used to split the fitted product.
    pub coupling_ratio: f64,
}

impl Default for CzGrid {
    fn default() -> Self {
        Self {
            flux_min: -0.9,
            flux_max: 0.9,
            flux_points: 181,
            t_max: 1500.0,
            t_step: 10.0,
            fit_max_abs_flux: None,
            coupling_ratio: 1.0,
        }
    }
}

impl CzGrid {
    pub fn flux(&self) -> Vec<f64> {
        let n = self.flux_points;
        if n == 1 {
            return vec![0.5 * (self.flux_min + self.flux_max)];
        }
        (0..n).map(|i| self.flux_min + (self.flux_max - self.flux_min) * i as f64 / (n - 1) as f64).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        let n = (self.t_max / self.t_step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.t_step * i as f64).collect()
    }

    fn validate(&self) -> Result<(), Failure> {
        if !(self.flux_points >= 3 && self.flux_max > self.flux_min && self.t_step > 0.0 && self.t_max > self.t_step) {
            return Err(Failure::config("cz grid: need >= 3 flux points, flux_max > flux_min and t_max > t_step > 0"));
        }
        if !(self.coupling_ratio > 0.0) {
            return Err(Failure::config("cz grid: coupling_ratio must be positive"));
        }
        Ok(())
    }
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub device: Option<DeviceSource>,
    pub method: Option<MethodChoice>,
    pub repeats: Option<usize>,
    pub grids: Option<GridConfig>,
    pub cz: Option<CzGrid>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub device: Option<PathBuf>,
    pub seed: Option<u64>,
    pub method: Option<MethodChoice>,
    pub repeats: Option<usize>,
    pub output: Option<PathBuf>,
    pub jobs: Option<usize>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub device: DeviceConfig,
    pub method: MethodChoice,
    pub repeats: usize,
    pub grids: GridConfig,
    pub cz: CzGrid,
    pub output_dir: PathBuf,
    pub seed: u64,
    #[serde(skip)]
    pub jobs: Option<usize>,
}

pub const DEFAULT_REPEATS: usize = 100;

fn read_device(path: &Path) -> Result<DeviceConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| Failure::config(format!("{SEED_ENV}=`{s}`: {e}"))),
        Err(_) => Ok(None),
    }
}

pub fn load_file(path: &Path) -> Result<ScenarioFile, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// Seed precedence: flag, config file, `FLUXTALK_SEED`, then `fallback`.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>, fallback: u64) -> Result<u64, Failure> {
    Ok(match (flag, file) {
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => env_seed()?.unwrap_or(fallback),
    })
}

pub fn resolve(o: &Overrides) -> Result<Scenario, Failure> {
    let file = match &o.config {
        Some(p) => load_file(p)?,
        None => ScenarioFile::default(),
    };
    let base = o.config.as_ref().and_then(|p| p.parent()).map(Path::to_path_buf).unwrap_or_default();

    let device = match (&o.device, file.device) {
        (Some(p), _) => Some(read_device(p)?),
        (None, Some(DeviceSource::Path(p))) => Some(read_device(&base.join(p))?),
        (None, Some(DeviceSource::Inline(d))) => Some(*d),
        (None, None) => None,
    };
    let seed = resolve_seed(o.seed, file.seed, device.as_ref().map_or(0, |d| d.seed()))?;
    let device = match device {
        Some(d) => d.with_seed(seed),
        None => paper_device(seed).map_err(|e| Failure::config(e.to_string()))?,
    };

    let repeats = o.repeats.or(file.repeats).unwrap_or(DEFAULT_REPEATS);
    if repeats == 0 {
        return Err(Failure::config("repeats must be >= 1"));
    }
    let cz = file.cz.unwrap_or_default();
    cz.validate()?;
    let output_dir = o.output.clone().or(file.output_dir.map(|p| base.join(p))).unwrap_or_else(|| PathBuf::from("out"));
    let jobs = o.jobs.or(file.jobs);
    if jobs == Some(0) {
        return Err(Failure::config("jobs must be >= 1"));
    }
    Ok(Scenario {
        device,
        method: o.method.or(file.method).unwrap_or_default(),
        repeats,
        grids: file.grids.unwrap_or_default(),
        cz,
        output_dir,
        seed,
        jobs,
    })
}

/// Creates the output directory and checks that it accepts files.
pub fn prepare_output(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    let probe = dir.join(".fluxtalk-write-check");
    std::fs::write(&probe, b"").map_err(|e| Failure::io(format!("{} is not writable: {e}", dir.display())))?;
    std::fs::remove_file(&probe).map_err(|e| Failure::io(e.to_string()))
}
