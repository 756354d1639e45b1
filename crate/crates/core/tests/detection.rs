use clockprobe::cesium_model::{LevelScheme, MultiColorResponse, ProbeGeometry, Sublevel};
use clockprobe::detection::{
    average_traces, decompose_noise, empty_interferometer_variance, fit_noise_linear, run_projection_noise_scan,
    run_rabi_experiment, run_rabi_replicates, ClassicalNoise, InterferometerModel, NoiseScan, NoiseScanConfig,
    PulseRecord,
};
use clockprobe::fit::fit_damped_sine;
use clockprobe::rng::stream;
use clockprobe::scenario::{noise_scan_config, rabi_experiment, ScenarioConfig, ScenarioName};

fn scan_config(atom_numbers: Vec<u64>, reps: usize, photons: f64) -> NoiseScanConfig {
    let mut cfg = ScenarioConfig::defaults(ScenarioName::NoiseFig4);
    cfg.noise.atom_numbers = atom_numbers;
    cfg.noise.photons = photons;
    cfg.reps = reps;
    noise_scan_config(&cfg).unwrap().0
}

fn scan(cfg: &NoiseScanConfig, model: &InterferometerModel, seed: u64) -> NoiseScan {
    run_projection_noise_scan(
        cfg,
        model,
        &LevelScheme::cesium_d2(),
        &ProbeGeometry::default_cesium(),
        seed,
    )
    .unwrap()
}

fn shot_only() -> InterferometerModel {
    InterferometerModel::default()
}

fn with_classical(amplitude: f64) -> InterferometerModel {
    InterferometerModel {
        classical_two_color: ClassicalNoise {
            relative_amplitude_rms: amplitude,
            relative_phase_rms: 0.0,
        },
        ..InterferometerModel::default()
    }
}

#[test]
fn empty_interferometer_is_shot_noise_limited() {
    let model = shot_only();
    for (k, n) in [1e5, 3.6e7].into_iter().enumerate() {
        let mut rng = stream(3, "empty-interferometer", &[k as u64]);
        let var = empty_interferometer_variance(n, 100_000, &model, &mut rng).unwrap();
        assert!((var * n - 1.0).abs() < 0.05, "n = {n}: {}", var * n);
    }
    let mut rng = stream(3, "empty-interferometer-1e4", &[]);
    let var = empty_interferometer_variance(3.6e7, 10_000, &model, &mut rng).unwrap();
    assert!((var * 3.6e7 - 1.0).abs() < 0.05);
}

#[test]
fn zero_atoms_leave_only_shot_noise() {
    let cfg = scan_config(vec![0], 20_000, 3.6e7);
    let s = scan(&cfg, &with_classical(1e-3), 9);
    let p = &s.points[0];
    assert_eq!(p.pole_phase, 0.0);
    let shot = 1.0 / 3.6e7;
    assert!(
        (p.variance() - shot).abs() < 3.0 * p.variance_err(),
        "{} vs {shot}",
        p.variance()
    );
}

#[test]
fn projection_noise_is_linear_without_classical_noise() {
    let cfg = scan_config(vec![0, 10_000, 30_000, 60_000, 100_000, 200_000], 4000, 3.6e7);
    let s = scan(&cfg, &shot_only(), 21);
    let d = decompose_noise(&s).unwrap();
    assert!(d.c.abs() < 2.0 * d.c_err, "c = {} ± {}", d.c, d.c_err);
    assert!(d.b > 5.0 * d.b_err, "b = {} ± {}", d.b, d.b_err);
    let lin = fit_noise_linear(&s).unwrap();
    let shot = 1.0 / 3.6e7;
    assert!(
        (lin.coefficients[0] / shot - 1.0).abs() < 0.1,
        "intercept {}",
        lin.coefficients[0]
    );
}

#[test]
fn classical_noise_shows_up_quadratically() {
    let eps = 1e-3;
    let cfg = scan_config(vec![0, 10_000, 30_000, 60_000, 100_000, 200_000], 4000, 3.6e7);
    let s = scan(&cfg, &with_classical(eps), 22);
    let d = decompose_noise(&s).unwrap();
    assert!(d.c > 3.0 * d.c_err, "c = {} ± {}", d.c, d.c_err);
    // Classical over atomic variance is ε² φ̄² / ((k_up - k_down)² N / 4).
    let scheme = LevelScheme::cesium_d2();
    let geom = ProbeGeometry::default_cesium();
    let two = MultiColorResponse::new(&[cfg.color_a.clone(), cfg.color_b.clone()], &geom, &scheme).unwrap();
    let k = two.per_atom(Sublevel::CLOCK_UP) - two.per_atom(Sublevel::CLOCK_DOWN);
    let top = s.points.last().unwrap();
    let n = top.n_atoms as f64;
    let predicted = eps * eps * top.pole_phase.powi(2) / (k * k * n / 4.0);
    let fitted = d.c * top.pole_phase / d.b;
    assert!((fitted / predicted - 1.0).abs() < 0.3, "{fitted} vs {predicted}");
    // With the photons split between two colors the crossover sits near
    // N = 2.6e5, so at these atom numbers the atomic term still leads.
    assert!(predicted < 1.0);
}

#[test]
fn crossover_regime_separates_with_correct_signs() {
    // Tune the classical amplitude so both terms match at the largest N:
    // ε² φ̄² = b φ̄ with b taken from a classical-free scan.
    let atoms = vec![0, 5_000, 20_000, 50_000, 100_000];
    let cfg = scan_config(atoms, 4000, 3.6e7);
    let b = decompose_noise(&scan(&cfg, &shot_only(), 31)).unwrap().b;
    let top = scan(&cfg, &shot_only(), 31).points.last().unwrap().pole_phase;
    let eps = (b / top).sqrt();
    let d = decompose_noise(&scan(&cfg, &with_classical(eps), 32)).unwrap();
    assert!(d.a > 0.0 && d.b > 0.0 && d.c > 0.0, "{d:?}");
    assert!(!d.negative_b);
    // The quadratic coefficient is ε² by construction of the jitter.
    assert!((d.c / (eps * eps) - 1.0).abs() < 0.5, "c = {} vs {}", d.c, eps * eps);
}

#[test]
fn decomposition_scales_with_photon_number() {
    let atoms = vec![0, 10_000, 30_000, 60_000, 100_000];
    let k = 4.0;
    let lo = decompose_noise(&scan(&scan_config(atoms.clone(), 3000, 3.6e7), &shot_only(), 41)).unwrap();
    let hi = decompose_noise(&scan(&scan_config(atoms, 3000, k * 3.6e7), &shot_only(), 41)).unwrap();
    // Shot floor goes as 1/n; atomic noise in pole-phase units does not
    // depend on the probe photon number.
    assert!((lo.a / hi.a / k - 1.0).abs() < 0.1, "a ratio {}", lo.a / hi.a);
    assert!((hi.a * k * 3.6e7 - 1.0).abs() < 0.1);
    assert!(
        (lo.b - hi.b).abs() < 2.0 * lo.b_err.hypot(hi.b_err),
        "b {} vs {}",
        lo.b,
        hi.b
    );
}

fn fig3_short() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::defaults(ScenarioName::RabiFig3);
    cfg.rabi.duration_s = 1e-3;
    cfg
}

fn residual_rms(records: &[PulseRecord]) -> f64 {
    let (t, y): (Vec<f64>, Vec<f64>) = records.iter().map(|p| (p.time_s, p.measured_phase.unwrap())).unzip();
    let fit = fit_damped_sine(&t, &y).unwrap();
    (t.iter()
        .zip(&y)
        .map(|(t, y)| (y - fit.model.eval(*t)).powi(2))
        .sum::<f64>()
        / t.len() as f64)
        .sqrt()
}

#[test]
fn noiseless_backaction_free_fit_recovers_rabi_frequency() {
    let mut cfg = fig3_short();
    cfg.backaction.enabled = false;
    cfg.interferometer = InterferometerModel::noiseless();
    let exp = rabi_experiment(&cfg, &cfg.rabi.pulses[0]).unwrap();
    let run = run_rabi_experiment(&exp, 1, 0).unwrap();
    assert!(!run.fit_failed);
    let f = run.fit.unwrap().model.frequency_hz;
    assert!((f / cfg.rabi.rabi_frequency_hz - 1.0).abs() < 1e-3, "{f}");
}

#[test]
fn single_trace_scatter_matches_per_pulse_shot_noise() {
    let cfg = fig3_short();
    let exp = rabi_experiment(&cfg, &cfg.rabi.pulses[0]).unwrap();
    let run = run_rabi_experiment(&exp, 7, 0).unwrap();
    let probes = &run.series.probes;
    let rms = (probes
        .iter()
        .map(|p| (p.measured_phase.unwrap() - p.true_phase).powi(2))
        .sum::<f64>()
        / probes.len() as f64)
        .sqrt();
    let expect = 1.0 / cfg.rabi.pulses[0].photons.sqrt();
    assert!((rms / expect - 1.0).abs() < 0.1, "{rms} vs {expect}");
}

#[test]
fn averaging_reduces_residual_by_root_m() {
    let cfg = fig3_short();
    let exp = rabi_experiment(&cfg, &cfg.rabi.pulses[0]).unwrap();
    let runs = run_rabi_replicates(&exp, 13, 50).unwrap();
    let single = residual_rms(&runs[0].series.probes);
    for m in [10usize, 50] {
        let avg = average_traces(&runs[..m]).unwrap();
        let gain = single / residual_rms(&avg);
        let expect = (m as f64).sqrt();
        assert!((gain / expect - 1.0).abs() < 0.2, "M = {m}: gain {gain} vs {expect}");
    }
}
