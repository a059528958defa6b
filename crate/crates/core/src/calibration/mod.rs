//! Measurement analysis: peak and spectrum fits, crosstalk extraction by
//! MZLC ridges and Ramsey fringes, matrix assembly, metrics and
//! compensation checks.

mod matrix;
mod peaks;
mod pipeline;
mod ridge;

pub use matrix::{assemble_matrix, assemble_with_sigmas, metrics, metrics_with_floor, CrosstalkMetrics, MatrixReport, DEFAULT_DB_FLOOR};
pub use peaks::{extract_peaks, fit_spectrum, fit_spectrum_with, PeakOptions, PeakSeries, SpectrumFit};
pub use pipeline::{
    characterize, characterize_spectra, measure_pair, plan_pairs, repeat_seed, verify_compensation, Characterization,
    CharacterizeOptions, ElementSpectrum, GridConfig, MethodChoice, MzlcGrid, PairAgreement, PairPlan, PairResult,
    RamseyGrid, SpectroscopyGrid,
};
pub use ridge::{extract_ridge_mzlc, extract_ridge_ramsey, fringe_frequency, CrosstalkEstimate, Method, RamseyOptions};
