mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use fluxtalk::calibration::{
    characterize, fit_spectrum, metrics, verify_compensation, Characterization, CharacterizeOptions, MatrixReport, Method,
    MethodChoice,
};
use fluxtalk::cz::{extract_geff_curve, fit_geff_curve, g_eff, symmetry_residual, GeffFitOptions};
use fluxtalk::device::CrosstalkMatrix;
use fluxtalk::templates::{paper_device, random_device};
use fluxtalk::virtual_device::{cz_swap_scan, CzScanOptions};

use config::{Overrides, Scenario};
use report::OutputDir;

/// Process exit status with a message for standard error.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub const CONFIG: u8 = 2;
    pub const FIT: u8 = 3;
    pub const IO: u8 = 4;

    pub fn config(m: impl Into<String>) -> Self {
        Self { code: Self::CONFIG, message: m.into() }
    }
    pub fn fit(m: impl Into<String>) -> Self {
        Self { code: Self::FIT, message: m.into() }
    }
    pub fn io(m: impl Into<String>) -> Self {
        Self { code: Self::IO, message: m.into() }
    }
}

impl From<fluxtalk::Error> for Failure {
    fn from(e: fluxtalk::Error) -> Self {
        use fluxtalk::Error::*;
        let code = match e {
            Io(_) | Serde(_) => Self::IO,
            EmptyResult(_) | NoConvergence { .. } | InsufficientRidge { .. } | NoSignal | FlatTrace | Pole { .. }
            | DegenerateOmega | Identifiability(_) | PairCoverage(_) => Self::FIT,
            _ => Self::CONFIG,
        };
        Self { code, message: e.to_string() }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fluxtalk", version, about = "Flux-crosstalk characterization, compensation and CZ maps on a virtual chip")]
struct Cli {
    /// Scenario file (JSON); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Device file (JSON); defaults to the paper template.
    #[arg(long, global = true)]
    device: Option<PathBuf>,
    /// Master seed; falls back to FLUXTALK_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    /// Repetitions per pair (default 100).
    #[arg(long, global = true)]
    repeats: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MethodArg {
    Mzlc,
    Ramsey,
    Both,
}

impl From<MethodArg> for MethodChoice {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mzlc => MethodChoice::Mzlc,
            MethodArg::Ramsey => MethodChoice::Ramsey,
            MethodArg::Both => MethodChoice::Both,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Device files.
    Device {
        #[command(subcommand)]
        action: DeviceAction,
    },
    /// Measure the crosstalk matrix.
    Characterize,
    /// Apply the inverse of a measured matrix and re-measure.
    CompensateVerify {
        #[arg(long)]
        matrix: PathBuf,
    },
    /// CZ-SWAP chevrons, |g_eff| curve and fit.
    CzMap(CzArgs),
    /// Table 1 metrics of a matrix file.
    Report {
        #[arg(long)]
        matrix: PathBuf,
        /// Matrix shown in a preceding "Before" column.
        #[arg(long)]
        before: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum DeviceAction {
    /// Write a device file from a template.
    Init {
        #[arg(long, value_enum, default_value = "paper")]
        template: Template,
        /// Largest |X_ik| of the random template.
        #[arg(long, default_value_t = 0.06)]
        max_abs: f64,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Template {
    Paper,
    Random,
}

#[derive(Args, Debug)]
struct CzArgs {
    /// Extract and fit the compensated chevron (default: uncompensated).
    #[arg(long)]
    compensated: bool,
    /// Matrix used for compensation (default: the device's true matrix).
    #[arg(long)]
    matrix: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn overrides(cli: &Cli) -> Overrides {
    Overrides {
        config: cli.config.clone(),
        device: cli.device.clone(),
        seed: cli.seed,
        method: cli.method.map(Into::into),
        repeats: cli.repeats,
        output: cli.output.clone(),
        jobs: cli.jobs,
    }
}

fn set_jobs(jobs: Option<usize>) -> Result<(), Failure> {
    #[cfg(feature = "parallel")]
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(format!("--jobs: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    if jobs.is_some_and(|n| n > 1) {
        log::warn!("built without the `parallel` feature; --jobs is ignored");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let o = overrides(&cli);
    match cli.command {
        Command::Device { action: DeviceAction::Init { template, max_abs } } => device_init(&o, template, max_abs),
        Command::Report { matrix, before } => cmd_report(&o, &matrix, before.as_deref()),
        command => {
            let sc = config::resolve(&o)?;
            set_jobs(sc.jobs)?;
            config::prepare_output(&sc.output_dir)?;
            match command {
                Command::Characterize => cmd_characterize(&sc),
                Command::CompensateVerify { matrix } => cmd_compensate_verify(&sc, &matrix),
                Command::CzMap(args) => cmd_cz_map(&sc, &args),
                Command::Device { .. } | Command::Report { .. } => unreachable!(),
            }
        }
    }
}

fn device_init(o: &Overrides, template: Template, max_abs: f64) -> Result<(), Failure> {
    let file = match &o.config {
        Some(p) => config::load_file(p)?,
        None => config::ScenarioFile::default(),
    };
    let seed = config::resolve_seed(o.seed, file.seed, 0)?;
    let dev = match template {
        Template::Paper => paper_device(seed)?,
        Template::Random => random_device(seed, max_abs)?,
    };
    let dir = o.output.clone().unwrap_or_else(|| PathBuf::from("."));
    config::prepare_output(&dir)?;
    let mut out = OutputDir::new(&dir);
    out.json("device.json", &dev)?;
    let template = format!("{template:?}").to_lowercase();
    println!("wrote {}", dir.join("device.json").display());
    out.finish("device init", seed, &serde_json::json!({ "template": template, "seed": seed, "max_abs": max_abs }))
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Mzlc => "mzlc",
        Method::Ramsey => "ramsey",
    }
}

/// Writes matrix, metrics, dB map, estimates, spectra and scans of one run.
fn write_characterization(out: &mut OutputDir, sc: &Scenario, c: &Characterization, prefix: &str) -> Result<(), Failure> {
    let labels = sc.device.labels();
    let reports: Vec<&MatrixReport> = [c.mzlc.as_ref(), c.ramsey.as_ref()].into_iter().flatten().collect();
    for (i, r) in reports.iter().enumerate() {
        // the first report is the primary one and gets the unsuffixed names
        let suffix = if i == 0 { String::new() } else { format!("_{}", method_name(r.method)) };
        let m = metrics(&r.matrix()?);
        out.json(&format!("{prefix}matrix{suffix}.json"), r)?;
        out.json(&format!("{prefix}metrics{suffix}.json"), &m)?;
        let mut header = vec!["detector\\source"];
        header.extend(labels.iter().map(String::as_str));
        out.csv(&format!("{prefix}db_map{suffix}.csv"), &header, report::db_map_rows(&labels, &m))?;
        out.plot(&format!("{prefix}db_map{suffix}.csv"), "Fig. 4", &format!("crosstalk {} (dB)", method_name(r.method)), "source", "detector", "20·log10|X|");
        out.csv(&format!("{prefix}matrix_permil{suffix}.csv"), &header, report::matrix_rows(r, 1e3))?;
    }
    if !c.agreement.is_empty() {
        out.json(&format!("{prefix}agreement.json"), &c.agreement)?;
    }

    let rows = c.estimates.iter().enumerate().flat_map(|(r, run)| {
        run.iter().map(move |e| {
            vec![
                r.to_string(),
                e.probe.clone(),
                e.source.clone(),
                method_name(e.method).to_string(),
                e.x.to_string(),
                e.sigma.to_string(),
                e.intercept_freq.to_string(),
            ]
        })
    });
    out.csv(
        &format!("{prefix}estimates.csv"),
        &["repeat", "probe", "source", "method", "x_ik", "sigma", "intercept_freq_MHz"],
        rows,
    )?;
    out.plot(&format!("{prefix}estimates.csv"), "Fig. 4(a)", "per-repeat estimates", "repeat", "x_ik", "");

    #[derive(Serialize)]
    struct Spectrum<'a> {
        label: &'a str,
        peaks: &'a fluxtalk::calibration::PeakSeries,
        fit: Option<fluxtalk::calibration::SpectrumFit>,
    }
    let spectra: Vec<Spectrum> = c
        .spectra
        .iter()
        .map(|s| Spectrum { label: &s.label, peaks: &s.peaks, fit: sc.device.element(&s.label).ok().and_then(|t| fit_spectrum(&s.peaks, t.d(), t.ec()).ok()) })
        .collect();
    out.json(&format!("{prefix}spectra.json"), &spectra)?;

    let dir = format!("{prefix}scans");
    for s in &c.scans {
        let figure = match s.kind {
            fluxtalk::virtual_device::ScanKind::Spectroscopy => "Fig. 2 / S2",
            fluxtalk::virtual_device::ScanKind::Mzlc => "Fig. 3(a)",
            fluxtalk::virtual_device::ScanKind::Ramsey => "Fig. 3(c) / S3",
            fluxtalk::virtual_device::ScanKind::CzSwap => "Fig. 5",
        };
        out.scan(&dir, s, figure)?;
    }
    Ok(())
}

fn options(sc: &Scenario) -> CharacterizeOptions {
    CharacterizeOptions { method: sc.method, repeats: sc.repeats, grids: sc.grids.clone(), keep_scans: true }
}

fn cmd_characterize(sc: &Scenario) -> Result<(), Failure> {
    log::info!("characterizing {} elements, {} repeats", sc.device.labels().len(), sc.repeats);
    let c = characterize(&sc.device, &options(sc))?;
    let mut out = OutputDir::new(&sc.output_dir);
    write_characterization(&mut out, sc, &c, "")?;

    let cols: Vec<(String, &MatrixReport, fluxtalk::calibration::CrosstalkMetrics)> = [c.mzlc.as_ref(), c.ramsey.as_ref()]
        .into_iter()
        .flatten()
        .map(|r| Ok((method_name(r.method).to_uppercase(), r, metrics(&r.matrix()?))))
        .collect::<Result<_, Failure>>()?;
    let cols: Vec<(&str, &MatrixReport, &fluxtalk::calibration::CrosstalkMetrics)> =
        cols.iter().map(|(t, r, m)| (t.as_str(), *r, m)).collect();
    let table = report::table(&cols);
    if !c.agreement.is_empty() {
        let agree = c.agreement.iter().filter(|a| a.agree).count();
        println!("method agreement (2σ): {agree}/{}", c.agreement.len());
    }
    print!("{table}");
    out.text("table.txt", &table)?;
    out.finish("characterize", sc.seed, sc)
}

#[derive(Deserialize)]
struct MatrixFile {
    labels: Vec<String>,
    rows: Vec<Vec<f64>>,
    #[serde(default)]
    sigmas: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    method: Option<Method>,
    #[serde(default)]
    repeats: Option<usize>,
}

fn read_matrix(path: &Path) -> Result<MatrixReport, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let f: MatrixFile = serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let n = f.labels.len();
    let r = MatrixReport {
        sigmas: f.sigmas.unwrap_or_else(|| vec![vec![0.0; n]; n]),
        labels: f.labels,
        rows: f.rows,
        method: f.method.unwrap_or(Method::Mzlc),
        repeats: f.repeats.unwrap_or(1),
    };
    r.matrix().map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    Ok(r)
}

fn cmd_compensate_verify(sc: &Scenario, matrix: &Path) -> Result<(), Failure> {
    let before = read_matrix(matrix)?;
    let x_est: CrosstalkMatrix = before.matrix()?;
    let c = verify_compensation(&sc.device, &x_est, &options(sc))?;
    let mut out = OutputDir::new(&sc.output_dir);
    write_characterization(&mut out, sc, &c, "residual_")?;

    let after = c.primary();
    let (mb, ma) = (metrics(&x_est), metrics(&after.matrix()?));
    let table = report::table(&[("Before", &before, &mb), ("After", after, &ma)]);
    print!("{table}");
    out.text("table.txt", &table)?;
    let contraction = if ma.average_permil > 0.0 { mb.average_permil / ma.average_permil } else { f64::INFINITY };
    let max_residual = ma.largest_negative_permil.abs().max(ma.largest_positive_permil.abs());
    println!("contraction {contraction:.1}x, largest residual {max_residual:.3}‰");
    out.json(
        "comparison.json",
        &serde_json::json!({
            "before": mb,
            "after": ma,
            "contraction": if contraction.is_finite() { serde_json::json!(contraction) } else { serde_json::Value::Null },
            "max_abs_residual_permil": max_residual,
        }),
    )?;
    #[derive(Serialize)]
    struct Inputs<'a> {
        scenario: &'a Scenario,
        matrix: &'a MatrixReport,
    }
    out.finish("compensate-verify", sc.seed, &Inputs { scenario: sc, matrix: &before })
}

fn cmd_cz_map(sc: &Scenario, args: &CzArgs) -> Result<(), Failure> {
    let dev = &sc.device;
    let cz = dev.cz().ok_or_else(|| Failure::config("device has no CZ setup"))?.clone();
    let estimate = args.matrix.as_deref().map(read_matrix).transpose()?.map(|r| r.matrix()).transpose()?;
    let (phi, t) = (sc.cz.flux(), sc.cz.times());
    let d = cz.params.pulse.reduction()?;
    let coupler = dev.element(&cz.coupler)?.clone();

    let mut out = OutputDir::new(&sc.output_dir);
    let mut residuals = Vec::new();
    let mut maps = Vec::new();
    for compensated in [false, true] {
        let opts = CzScanOptions { compensated, estimate: estimate.clone() };
        let map = cz_swap_scan(dev, &phi, &t, &opts)?;
        let name = if compensated { "compensated" } else { "uncompensated" };
        out.scan(&format!("chevron_{name}"), &map, if compensated { "Fig. 5(c)" } else { "Fig. 5(b)" })?;
        residuals.push(symmetry_residual(&map)?);
        maps.push(map);
    }
    let map = &maps[usize::from(args.compensated)];
    let curve = extract_geff_curve(map, cz.params.delta21, d)?;
    let rows = curve.iter().map(|p| {
        vec![
            p.normalized_flux.to_string(),
            p.g_eff.to_string(),
            p.sigma.to_string(),
            u8::from(p.below_floor).to_string(),
        ]
    });
    out.csv("geff_curve.csv", &["normalized_flux", "g_eff_MHz", "sigma_MHz", "below_floor_flag"], rows)?;
    out.plot("geff_curve.csv", "Fig. 5(e)", "|g_eff| extracted", "normalized_flux [rad]", "g_eff [MHz]", "");

    let fit_opts = GeffFitOptions { coupling_ratio: sc.cz.coupling_ratio, max_abs_flux: sc.cz.fit_max_abs_flux };
    let fit = fit_geff_curve(&curve, &coupler, cz.f_q1, cz.f_q2(), cz.params.ec2, &fit_opts)?;
    let fitted = fit.params(&cz.params);
    let model = phi
        .iter()
        .map(|&f| Ok(vec![f.to_string(), (g_eff(&fitted, coupler.f01_of_flux(f), cz.f_q1, cz.f_q2())?.abs() + fit.offset).to_string()]))
        .collect::<Result<Vec<_>, fluxtalk::Error>>()?;
    out.csv("geff_model.csv", &["normalized_flux", "g_eff_MHz"], model)?;
    out.plot("geff_model.csv", "Fig. 5(e)", "|g_eff| fitted model", "normalized_flux [rad]", "g_eff [MHz]", "");
    out.json("fit_report.json", &fit)?;

    let summary = serde_json::json!({
        "fitted_map": if args.compensated { "compensated" } else { "uncompensated" },
        "symmetry_residual": { "uncompensated": residuals[0], "compensated": residuals[1] },
        "pulse_reduction_D": d,
        "g12_MHz": [fit.g12, fit.sigma_g12()],
        "g1c_g2c_MHz2": [fit.g1c_g2c, fit.sigma_product()],
        "offset_MHz": [fit.offset, fit.sigma_offset()],
        "nulling_flux": fit.nulling_flux,
    });
    out.json("cz_summary.json", &summary)?;
    println!("D = {d:.4}");
    println!("symmetry residual: uncompensated {:.5}, compensated {:.5}", residuals[0], residuals[1]);
    println!(
        "g12 = {:.4} ± {:.4} MHz, g1c·g2c = {:.1} ± {:.1} MHz², offset = {:.4} ± {:.4} MHz",
        fit.g12,
        fit.sigma_g12(),
        fit.g1c_g2c,
        fit.sigma_product(),
        fit.offset,
        fit.sigma_offset()
    );
    if let Some(n) = fit.nulling_flux {
        println!("nulling flux {n:.4} rad");
    }
    #[derive(Serialize)]
    struct Inputs<'a> {
        scenario: &'a Scenario,
        compensated: bool,
        estimate: Option<&'a CrosstalkMatrix>,
    }
    out.finish("cz-map", sc.seed, &Inputs { scenario: sc, compensated: args.compensated, estimate: estimate.as_ref() })
}

fn cmd_report(o: &Overrides, matrix: &Path, before: Option<&Path>) -> Result<(), Failure> {
    let after = read_matrix(matrix)?;
    let before = before.map(read_matrix).transpose()?;
    let ma = metrics(&after.matrix()?);
    let mb = before.as_ref().map(|b| b.matrix().map(|m| metrics(&m))).transpose()?;
    let table = match (&before, &mb) {
        (Some(b), Some(m)) => report::table(&[("Before", b, m), ("After", &after, &ma)]),
        _ => report::table(&[("Value", &after, &ma)]),
    };
    print!("{table}");
    if let Some(dir) = &o.output {
        config::prepare_output(dir)?;
        let mut out = OutputDir::new(dir);
        out.json("metrics.json", &ma)?;
        let mut header = vec!["detector\\source"];
        header.extend(after.labels.iter().map(String::as_str));
        out.csv("db_map.csv", &header, report::db_map_rows(&after.labels, &ma))?;
        out.text("table.txt", &table)?;
        out.finish("report", 0, &(&after, &before))?;
    }
    Ok(())
}
