use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use fluxtalk::calibration::*;
use fluxtalk::device::CrosstalkMatrix;
use fluxtalk::spectral::{magnitude_spectrum, Window};
use fluxtalk::templates::{paper_device, PAPER_LABELS};
use fluxtalk::virtual_device::*;

fn labels() -> Vec<String> {
    PAPER_LABELS.iter().map(|s| s.to_string()).collect()
}

fn single(dev: &DeviceConfig, probe: usize, source: usize, x: f64) -> DeviceConfig {
    let mut rows = CrosstalkMatrix::identity(labels()).rows();
    rows[probe][source] = x;
    dev.with_crosstalk(CrosstalkMatrix::new(labels(), rows).unwrap()).unwrap()
}

fn meta(kind_probe: &str) -> ScanMeta {
    ScanMeta {
        probe_label: kind_probe.into(),
        source_label: None,
        drive_freq: None,
        probe_bias: None,
        pulse_reduction: None,
        compensated: false,
        seed: 0,
    }
}

fn column_scan(f: &[f64], col: Vec<f64>) -> ScanMap {
    ScanMap::new(
        ScanKind::Spectroscopy,
        Axis::new("V_Q1", "V", vec![0.0]),
        Axis::new("drive_freq", "MHz", f.to_vec()),
        col.into_iter().map(|v| vec![v]).collect(),
        meta("Q1"),
    )
    .unwrap()
}

fn freq_grid() -> Vec<f64> {
    (0..401).map(|i| 4700.0 + 0.5 * i as f64).collect()
}

#[test]
fn noiseless_peak_recovered() {
    let dev = paper_device(1).unwrap().noiseless();
    let q1 = dev.element("Q1").unwrap();
    let scan = two_tone_scan(&dev, "Q1", &[q1.v_ofs()], &freq_grid()).unwrap();
    let p = extract_peaks(&scan, &PeakOptions::default()).unwrap();
    assert!((p.peak_freq[0] - 4768.6).abs() < 1e-3);
}

#[test]
fn pure_noise_columns_are_dropped() {
    let f = freq_grid();
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 0.05).unwrap();
        let col: Vec<f64> = f.iter().map(|_| n.sample(&mut rng)).collect();
        let r = extract_peaks(&column_scan(&f, col), &PeakOptions::default());
        assert!(matches!(r, Err(fluxtalk::Error::EmptyResult(_))), "seed {seed}");
    }
}

#[test]
fn noisy_peak_within_a_tenth_of_the_width() {
    let f = freq_grid();
    let fwhm = 4.0;
    let hits = (0..200)
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let n = Normal::new(0.0, 0.05).unwrap();
            let col = f.iter().map(|&x| fluxtalk::lineshape::lorentzian(x, 4768.6, fwhm) + n.sample(&mut rng)).collect();
            let p = extract_peaks(&column_scan(&f, col), &PeakOptions::default()).unwrap();
            (p.peak_freq[0] - 4768.6).abs() < 0.1 * fwhm
        })
        .count();
    assert!(hits >= 190, "{hits}");
}

fn q1_peaks(noise: f64, seed: u64, shift: f64) -> PeakSeries {
    let q1 = paper_device(0).unwrap().element("Q1").unwrap().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, noise.max(1e-300)).unwrap();
    let bias: Vec<f64> = (0..41).map(|i| -0.6 + 0.03 * i as f64).collect();
    let freq = bias.iter().map(|&v| q1.f01(v) + if noise > 0.0 { n.sample(&mut rng) } else { 0.0 }).collect();
    PeakSeries::new(bias.iter().map(|v| v + shift).collect(), freq, vec![noise.max(0.01); 41]).unwrap()
}

#[test]
fn spectrum_fit_recovers_planted_parameters() {
    let fit = fit_spectrum(&q1_peaks(0.0, 0, 0.0), 0.65, 206.2).unwrap();
    assert!((fit.f01_max / 4768.6 - 1.0).abs() < 1e-6);
    assert!((fit.ac / 2.3 - 1.0).abs() < 1e-6);
    assert!((fit.v_ofs / -0.047 - 1.0).abs() < 1e-6);
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(fit.covariance[i][j], fit.covariance[j][i]);
        }
        assert!(fit.covariance[i][i] >= 0.0);
    }
}

#[test]
fn spectrum_fit_with_half_megahertz_noise() {
    let ok = (0..50)
        .filter(|&s| {
            let fit = fit_spectrum(&q1_peaks(0.5, s, 0.0), 0.65, 206.2).unwrap();
            (fit.f01_max - 4768.6).abs() < 0.5
        })
        .count();
    assert!(ok >= 47, "{ok}");
}

#[test]
fn spectrum_fit_is_translation_equivariant() {
    let a = fit_spectrum(&q1_peaks(0.3, 4, 0.0), 0.65, 206.2).unwrap();
    let b = fit_spectrum(&q1_peaks(0.3, 4, 0.125), 0.65, 206.2).unwrap();
    assert!((b.v_ofs - a.v_ofs - 0.125).abs() < 1e-8);
    assert!((b.f01_max - a.f01_max).abs() < 1e-6);
    assert!((b.ac - a.ac).abs() < 1e-8);
}

#[test]
fn spectrum_fit_rejects_narrow_span() {
    let p = q1_peaks(0.0, 0, 0.0);
    let narrow = PeakSeries::new(p.bias[19..25].to_vec(), p.peak_freq[19..25].to_vec(), p.peak_sigma[19..25].to_vec()).unwrap();
    assert!(matches!(fit_spectrum(&narrow, 0.65, 206.2), Err(fluxtalk::Error::Precondition(_))));
}

/// Q1 probe, C1 source, on spectra fitted once from seed 0.
fn q1_plan(dev: &DeviceConfig) -> PairPlan {
    let (spectra, _) = characterize_spectra(dev, &SpectroscopyGrid::default()).unwrap();
    plan_pairs(dev, &spectra, &GridConfig::default())
        .unwrap()
        .into_iter()
        .find(|p| p.probe == "Q1" && p.source == "C1")
        .unwrap()
}

#[test]
fn mzlc_zero_crosstalk_is_consistent_with_zero() {
    let dev = single(&paper_device(0).unwrap(), 1, 0, 0.0);
    let plan = q1_plan(&dev);
    let within = (0..20)
        .filter(|&s| {
            let e = measure_pair(&dev.with_seed(s), &plan, Method::Mzlc, None).unwrap().estimate;
            e.x.abs() < 2.0 * e.sigma
        })
        .count();
    assert!(within >= 17, "{within}");
}

#[test]
fn mzlc_recovers_average_crosstalk_and_is_unbiased() {
    let dev = single(&paper_device(0).unwrap(), 1, 0, 0.0265);
    let plan = q1_plan(&dev);
    let xs: Vec<f64> = (0..100)
        .map(|s| measure_pair(&dev.with_seed(s), &plan, Method::Mzlc, None).unwrap().estimate.x)
        .collect();
    assert!(xs.iter().all(|x| (x - 0.0265).abs() < 5e-4));
    let mean = xs.iter().sum::<f64>() / 100.0;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
    assert!((mean - 0.0265).abs() < sd / 10.0, "{mean} ± {}", sd / 10.0);
}

#[test]
fn mzlc_intercept_is_the_idle_frequency() {
    let dev = single(&paper_device(0).unwrap(), 1, 0, 0.0265).noiseless();
    let plan = q1_plan(&dev);
    let e = measure_pair(&dev, &plan, Method::Mzlc, None).unwrap().estimate;
    assert!((e.intercept_freq - plan.mzlc_drive).abs() < dev.noise().linewidth());
}

#[test]
fn ramsey_zero_crosstalk_and_agreement_with_mzlc() {
    let dev = single(&paper_device(0).unwrap(), 1, 0, 0.0);
    let plan = q1_plan(&dev);
    let e = measure_pair(&dev.with_seed(3), &plan, Method::Ramsey, None).unwrap().estimate;
    assert!(e.x.abs() < 3.0 * e.sigma, "{} ± {}", e.x, e.sigma);

    let dev = single(&dev, 1, 0, 0.0265);
    let agree = (0..10)
        .filter(|&s| {
            let d = dev.with_seed(s);
            let m = measure_pair(&d, &plan, Method::Mzlc, None).unwrap().estimate;
            let r = measure_pair(&d, &plan, Method::Ramsey, None).unwrap().estimate;
            (m.x - r.x).abs() < 2.0 * m.sigma.hypot(r.sigma)
        })
        .count();
    assert!(agree >= 9, "{agree}");
}

#[test]
fn ramsey_without_fringes_is_no_signal() {
    let dev = paper_device(0).unwrap().noiseless();
    let q1 = dev.element("Q1").unwrap();
    let vp = q1.voltage_of_flux(0.8);
    let t: Vec<f64> = (0..200).map(|i| 8.0 * i as f64).collect();
    let s: Vec<f64> = (0..9).map(|i| -0.01 + 0.0025 * i as f64).collect();
    let scan = ramsey_scan(&dev, "Q1", "C1", &t, &s, vp, q1.f01(vp)).unwrap();
    let (spectra, _) = characterize_spectra(&dev, &SpectroscopyGrid::default()).unwrap();
    let fit = &spectra.iter().find(|e| e.label == "Q1").unwrap().fit;
    assert!(matches!(extract_ridge_ramsey(&scan, fit, &RamseyOptions::default()), Err(fluxtalk::Error::NoSignal)));
}

#[test]
fn halving_t2_doubles_the_fringe_peak_width() {
    let t: Vec<f64> = (0..6000).map(|i| 8.0 * i as f64).collect();
    let spectrum = |t2: f64| {
        let trace: Vec<f64> = t.iter().map(|&tau| (fluxtalk::consts::phase(20.0, tau)).cos() * (-tau / t2).exp()).collect();
        let s = magnitude_spectrum(&trace, 8.0, 8, Window::Rectangular);
        let k = s.peak_bin();
        (s.refined_peak(k) * 1e3, s.peak_width(k) * 1e3)
    };
    let (f1, w1) = spectrum(2400.0);
    let (f2, w2) = spectrum(1200.0);
    assert!((w2 / w1 - 2.0).abs() < 0.05, "{w1} {w2}");
    let bin = 1e3 / (8.0 * 6000.0 * 8.0);
    assert!((f1 - 20.0).abs() < bin && (f2 - 20.0).abs() < bin);
}

fn estimates_from(x: &CrosstalkMatrix, sigma: f64) -> Vec<CrosstalkEstimate> {
    x.off_diagonals()
        .map(|(i, k, v)| CrosstalkEstimate {
            probe: x.labels()[i].clone(),
            source: x.labels()[k].clone(),
            x: v,
            sigma,
            method: Method::Mzlc,
            intercept_freq: 0.0,
        })
        .collect()
}

#[test]
fn assemble_single_element_and_full() {
    let one = assemble_matrix(&[], &["Q1".to_string()]).unwrap();
    assert_eq!(one.rows(), vec![vec![1.0]]);
    let x = paper_device(0).unwrap().x_true().clone();
    let back = assemble_matrix(&estimates_from(&x, 1e-4), &labels()).unwrap();
    assert_eq!(back, x);
}

#[test]
fn assemble_rejects_missing_and_duplicate_pairs() {
    let x = paper_device(0).unwrap().x_true().clone();
    let mut e = estimates_from(&x, 1e-4);
    let extra = e[0].clone();
    e.push(extra);
    assert!(matches!(assemble_matrix(&e, &labels()), Err(fluxtalk::Error::PairCoverage(_))));
    e.truncate(10);
    assert!(matches!(assemble_matrix(&e, &labels()), Err(fluxtalk::Error::PairCoverage(_))));
}

#[test]
fn identity_metrics() {
    let m = metrics(&CrosstalkMatrix::identity(labels()));
    assert_eq!(
        (m.largest_negative_permil, m.largest_positive_permil, m.average_permil, m.total_permil, m.asymmetry_permil),
        (0.0, 0.0, 0.0, 0.0, 0.0)
    );
    for i in 0..4 {
        for k in 0..4 {
            assert_eq!(m.db_map[i][k], if i == k { 0.0 } else { DEFAULT_DB_FLOOR });
        }
    }
}

#[test]
fn metrics_match_naive_loops_and_are_permutation_invariant() {
    let dev = fluxtalk::templates::random_device(5, 0.06).unwrap();
    let x = dev.x_true();
    let m = metrics(x);
    let (mut lo, mut hi, mut tot, mut asym) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..4 {
        for k in 0..4 {
            if i != k {
                let v = x.get(i, k);
                lo = lo.min(v);
                hi = hi.max(v);
                tot += v.abs();
                asym += (v.abs() - x.get(k, i).abs()).abs();
            }
        }
    }
    assert_eq!(m.largest_negative_permil, 1e3 * lo);
    assert_eq!(m.largest_positive_permil, 1e3 * hi);
    assert!((m.total_permil - 1e3 * tot).abs() < 1e-12);
    assert_eq!(m.total_permil, 12.0 * m.average_permil);
    assert!((m.asymmetry_permil - 1e3 * asym).abs() < 1e-12);
    assert!((m.db_map[0][1] - 20.0 * x.get(0, 1).abs().log10()).abs() < 1e-12);

    let perm = [2, 0, 3, 1];
    let rows: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|k| x.get(perm[i], perm[k])).collect()).collect();
    let pl: Vec<String> = perm.iter().map(|&i| labels()[i].clone()).collect();
    let mp = metrics(&CrosstalkMatrix::new(pl, rows).unwrap());
    assert_eq!(mp.largest_negative_permil, m.largest_negative_permil);
    assert_eq!(mp.largest_positive_permil, m.largest_positive_permil);
    assert!((mp.average_permil - m.average_permil).abs() < 1e-12);
    assert!((mp.asymmetry_permil - m.asymmetry_permil).abs() < 1e-12);
}

#[test]
fn symmetric_magnitudes_have_zero_asymmetry() {
    let rows = vec![
        vec![1.0, 0.02, -0.03, 0.01],
        vec![-0.02, 1.0, 0.04, 0.0],
        vec![0.03, 0.04, 1.0, -0.05],
        vec![0.01, 0.0, 0.05, 1.0],
    ];
    assert_eq!(metrics(&CrosstalkMatrix::new(labels(), rows).unwrap()).asymmetry_permil, 0.0);
}

fn max_off(r: &MatrixReport) -> f64 {
    (0..4).flat_map(|i| (0..4).map(move |k| (i, k))).filter(|(i, k)| i != k).map(|(i, k)| r.rows[i][k].abs()).fold(0.0, f64::max)
}

#[test]
fn exact_estimate_compensates_to_identity() {
    let dev = paper_device(2).unwrap().noiseless();
    let v = verify_compensation(&dev, dev.x_true(), &CharacterizeOptions::default()).unwrap();
    assert!(max_off(v.mzlc.as_ref().unwrap()) < 1e-6);
}

#[test]
fn identity_compensation_remeasures_the_raw_matrix() {
    let dev = paper_device(2).unwrap();
    let v = verify_compensation(&dev, &CrosstalkMatrix::identity(labels()), &CharacterizeOptions::default()).unwrap();
    let r = v.mzlc.unwrap();
    for (i, k, x) in dev.x_true().off_diagonals() {
        assert!((r.rows[i][k] - x).abs() < 5.0 * r.sigmas[i][k] + 1e-4, "({i},{k})");
    }
}

#[test]
fn corrupted_entry_shows_up_in_the_residual() {
    let dev = paper_device(3).unwrap();
    let mut rows = dev.x_true().rows();
    rows[1][2] += 0.010;
    let bad = CrosstalkMatrix::new(labels(), rows).unwrap();
    let v = verify_compensation(&dev, &bad, &CharacterizeOptions::default()).unwrap();
    let r = v.mzlc.unwrap();
    assert!((r.rows[1][2] + 0.010).abs() < 1e-3, "{}", r.rows[1][2]);
    for (i, k) in [(0, 1), (2, 3), (3, 0)] {
        assert!(r.rows[i][k].abs() < 1e-3);
    }
}

#[test]
fn repeats_report_spread_and_both_methods_flag_agreement() {
    let dev = paper_device(4).unwrap();
    let opts = CharacterizeOptions { method: MethodChoice::Both, repeats: 3, ..Default::default() };
    let c = characterize(&dev, &opts).unwrap();
    let m = c.mzlc.as_ref().unwrap();
    assert_eq!(m.repeats, 3);
    assert_eq!(c.estimates.len(), 3);
    assert_eq!(c.agreement.len(), 12);
    let (i, k) = (1, 0);
    let xs: Vec<f64> = c.estimates.iter().map(|r| r.iter().find(|e| e.method == Method::Mzlc && e.probe == "Q1" && e.source == "C1").unwrap().x).collect();
    let mean = xs.iter().sum::<f64>() / 3.0;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    assert!((m.rows[i][k] - mean).abs() < 1e-15 && (m.sigmas[i][k] - sd).abs() < 1e-15);
}
