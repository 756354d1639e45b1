use std::f64::consts::{PI, TAU};

use clockprobe::cesium_model::{LevelScheme, ProbeColor};
use clockprobe::detection::{InterferometerModel, PulseRecord};
use clockprobe::dynamics::{
    apply_trap_dephasing, driven_probe_schedule, echo_schedule, evolve_rabi, rotate, run_schedule, BackActionModel,
    DynamicsModels, Event, MicrowaveField, MicrowavePulse, NoReadout, ProbePulse, Schedule, StateSample,
};
use clockprobe::ensemble::{prepare, EnsembleState, PreparationConfig};
use clockprobe::fit::fit_damped_sine;
use clockprobe::rng::stream;
use clockprobe::scenario::{rabi_experiment, PulseSpec, ScenarioConfig, ScenarioName};
use proptest::prelude::*;
use rand::Rng;

fn purified(trap_spread: f64) -> EnsembleState {
    prepare(&PreparationConfig {
        total_atoms: 1e5,
        pumping_efficiency: 0.8,
        purify: true,
        trap_spread,
        ..PreparationConfig::default()
    })
    .unwrap()
}

fn probe(photons: f64, duration_s: f64) -> ProbePulse {
    ProbePulse::new(vec![ProbeColor::f4_f5(160.0, photons)], duration_s)
}

fn default_backaction() -> BackActionModel {
    ScenarioConfig::defaults(ScenarioName::RabiFig3)
        .backaction
        .model(&LevelScheme::cesium_d2(), 160.0)
        .unwrap()
}

fn probe_trace(records: &[PulseRecord]) -> (Vec<f64>, Vec<f64>) {
    records.iter().map(|p| (p.time_s, p.true_phase)).unzip()
}

fn sampled_w(samples: &[StateSample]) -> (Vec<f64>, Vec<f64>) {
    samples.iter().map(|s| (s.t_s, s.mean_bloch[2])).unzip()
}

#[test]
fn noiseless_trace_matches_generalised_rabi_formula() {
    let omega = TAU * 7e3;
    let delta = 0.4 * omega;
    let field = MicrowaveField {
        rabi_frequency: omega,
        detuning: delta,
        phase: 0.0,
    };
    let schedule = driven_probe_schedule(field, 1e-3, 6e-6, 1e-6, &probe(3e5, 0.5e-6)).unwrap();
    let mut state = purified(0.0);
    let n = state.coherent_atoms();
    let models = DynamicsModels::cesium(BackActionModel::disabled());
    let series = run_schedule(&mut state, &schedule, &models, &mut NoReadout, Some(1e-6)).unwrap();
    assert_eq!(series.samples.len(), 1001);
    let general = omega.hypot(delta);
    let oracle = |t: f64| -1.0 + 2.0 * (omega / general).powi(2) * (general * t / 2.0).sin().powi(2);
    for s in &series.samples {
        let w = (s.n_up - s.n_down) / n;
        assert!((w - oracle(s.t_s)).abs() < 1e-9, "t = {}: {w}", s.t_s);
        assert!((s.mean_bloch[2] - oracle(s.t_s)).abs() < 1e-9);
    }
    for p in &series.probes {
        let w = (p.n_up - p.n_down) / n;
        assert!((w - oracle(p.time_s)).abs() < 1e-9);
    }
}

#[test]
fn resonant_drive_without_probes_is_a_cosine() {
    let omega = TAU * 3e3;
    let pulse = MicrowavePulse::new(MicrowaveField::resonant(omega), 2e-3);
    let schedule = Schedule::new(vec![Event::Microwave { start_s: 0.0, pulse }]).unwrap();
    let mut state = purified(0.0);
    let models = DynamicsModels::cesium(default_backaction());
    let series = run_schedule(&mut state, &schedule, &models, &mut NoReadout, Some(5e-6)).unwrap();
    assert!(series.probes.is_empty());
    for s in &series.samples {
        assert!((s.mean_bloch[2] + (omega * s.t_s).cos()).abs() < 1e-9);
    }
}

fn fig3_frequency(backaction: bool) -> f64 {
    let mut cfg = ScenarioConfig::defaults(ScenarioName::RabiFig3);
    cfg.rabi.duration_s = 2e-3;
    cfg.backaction.enabled = backaction;
    cfg.interferometer = InterferometerModel::noiseless();
    let exp = rabi_experiment(&cfg, &cfg.rabi.pulses[0].clone()).unwrap();
    let mut state = prepare(&exp.preparation).unwrap();
    let series = run_schedule(&mut state, &exp.schedule, &exp.models, &mut NoReadout, None).unwrap();
    let (t, y) = probe_trace(&series.probes);
    fit_damped_sine(&t, &y).unwrap().model.frequency_hz
}

#[test]
fn fig3_cadence_gives_115_us_period() {
    let nominal = 1.0 / 115e-6;
    let bare = fig3_frequency(false);
    assert!((bare / nominal - 1.0).abs() < 1e-3, "{bare} Hz");
    // Weak kicks at 4e4 photons pull the frequency up by under 2%.
    let kicked = fig3_frequency(true);
    assert!(kicked > bare && kicked / nominal - 1.0 < 0.02, "{kicked} Hz");
}

#[test]
fn gaussian_dephasing_with_64_classes() {
    let sigma = 1e3;
    let mut state = prepare(&PreparationConfig {
        total_atoms: 1e4,
        pumping_efficiency: 1.0,
        purify: true,
        n_classes: 1,
        detuning_bins: 64,
        trap_spread: sigma,
        ..PreparationConfig::default()
    })
    .unwrap();
    // Fast π/2 so the static detunings do not act during the pulse.
    let omega = 1e9;
    evolve_rabi(
        &mut state,
        &MicrowavePulse::new(MicrowaveField::resonant(omega), PI / (2.0 * omega)),
    );
    let dt = 0.05 / sigma;
    let mut worst: f64 = 0.0;
    for k in 1..=60 {
        apply_trap_dephasing(&mut state, dt);
        let t = k as f64 * dt;
        let analytic = (-(sigma * t).powi(2) / 2.0).exp();
        worst = worst.max((state.transverse_coherence() - analytic).abs());
    }
    assert!(worst < 0.02, "max deviation {worst}");
}

#[test]
fn single_class_never_dephases() {
    let mut state = prepare(&PreparationConfig {
        total_atoms: 1e4,
        pumping_efficiency: 1.0,
        purify: true,
        n_classes: 1,
        detuning_bins: 1,
        ..PreparationConfig::default()
    })
    .unwrap();
    evolve_rabi(
        &mut state,
        &MicrowavePulse::new(MicrowaveField::resonant(1e9), PI / 2e9),
    );
    for _ in 0..100 {
        apply_trap_dephasing(&mut state, 1e-3);
        assert!((state.transverse_coherence() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn echo_probes_sit_on_the_poles() {
    let omega = TAU * 8e3;
    let schedule = echo_schedule(omega, 2e-3, &probe(4e4, 0.2e-6)).unwrap();
    // One probe per Rabi period, at each `w = +1` pole.
    assert_eq!(schedule.probe_count(), 16);
    let mut state = purified(std::f64::consts::SQRT_2 / 10e-3);
    let n = state.coherent_atoms();
    let models = DynamicsModels::cesium(BackActionModel::disabled());
    let series = run_schedule(&mut state, &schedule, &models, &mut NoReadout, None).unwrap();
    for p in &series.probes {
        let w = (p.n_up - p.n_down) / n;
        assert!(w.abs() > 0.99, "t = {}: w = {w}", p.time_s);
    }
}

#[test]
fn zero_photon_echo_is_free_rabi_evolution() {
    let omega = TAU * 6e3;
    let total = 1.7e-3;
    let schedule = echo_schedule(omega, total, &probe(0.0, 0.3e-6)).unwrap();
    let mut echoed = purified(std::f64::consts::SQRT_2 / 10e-3);
    let mut free = echoed.clone();
    let models = DynamicsModels::cesium(default_backaction());
    run_schedule(&mut echoed, &schedule, &models, &mut NoReadout, None).unwrap();
    evolve_rabi(&mut free, &MicrowavePulse::new(MicrowaveField::resonant(omega), total));
    assert_eq!(echoed.lost, free.lost);
    for (a, b) in echoed.classes.iter().zip(&free.classes) {
        assert_eq!(a.weight, b.weight);
        for i in 0..3 {
            assert!((a.bloch[i] - b.bloch[i]).abs() < 1e-9);
        }
    }
}

fn fig2_decay(photons: f64) -> f64 {
    let mut cfg = ScenarioConfig::defaults(ScenarioName::RabiFig2);
    cfg.interferometer = InterferometerModel::noiseless();
    let pulse = PulseSpec {
        duration_s: cfg.rabi.pulses[0].duration_s,
        photons,
    };
    let exp = rabi_experiment(&cfg, &pulse).unwrap();
    let mut state = prepare(&exp.preparation).unwrap();
    let series = run_schedule(&mut state, &exp.schedule, &exp.models, &mut NoReadout, None).unwrap();
    let (t, y) = probe_trace(&series.probes);
    let fit = fit_damped_sine(&t, &y).unwrap();
    assert!(fit.converged, "{photons} photons");
    fit.model.decay_rate
}

#[test]
fn decay_grows_with_photons_per_pulse() {
    let levels = [1e5, 2e5, 3e5, 4.5e5, 6e5];
    let rates: Vec<f64> = levels.iter().map(|&p| fig2_decay(p)).collect();
    assert!(rates.windows(2).all(|w| w[1] >= w[0]), "{rates:?}");
}

/// Decay rate of the sampled mean `w` under a resonant drive.
fn sampled_decay(schedule: &Schedule) -> f64 {
    let mut state = purified(std::f64::consts::SQRT_2 / 10e-3);
    let models = DynamicsModels::cesium(default_backaction());
    let series = run_schedule(&mut state, schedule, &models, &mut NoReadout, Some(2e-6)).unwrap();
    let (t, w) = sampled_w(&series.samples);
    fit_damped_sine(&t, &w).unwrap().model.decay_rate
}

#[test]
fn echo_timing_beats_uniform_cadence_at_equal_dose() {
    let mut rng = stream(5, "echo-draws", &[]);
    for _ in 0..3 {
        let omega = TAU * rng.random_range(4e3..12e3);
        let photons = rng.random_range(1e5..4e5);
        let total = 1.5e-3;
        let echo = echo_schedule(omega, total, &probe(photons, 0.5e-6)).unwrap();
        let dose = echo.total_photons();
        let cadence = 2.3e-6;
        let count = ((total - 0.5e-6) / cadence).floor() + 1.0;
        let uniform = driven_probe_schedule(
            MicrowaveField::resonant(omega),
            total,
            cadence,
            0.0,
            &probe(dose / count, 0.5e-6),
        )
        .unwrap();
        assert!((uniform.total_photons() / dose - 1.0).abs() < 1e-9);
        let (g_echo, g_uniform) = (sampled_decay(&echo), sampled_decay(&uniform));
        assert!(
            g_echo <= g_uniform,
            "Ω/2π = {} Hz: echo {g_echo} vs uniform {g_uniform}",
            omega / TAU
        );
    }
}

fn unit_vector() -> impl Strategy<Value = [f64; 3]> {
    (-1.0..1.0f64, 0.0..TAU).prop_map(|(z, phi)| {
        let r = (1.0 - z * z).sqrt();
        [r * phi.cos(), r * phi.sin(), z]
    })
}

proptest! {
    #[test]
    fn rotations_preserve_norm(
        r in unit_vector(),
        axis in proptest::array::uniform3(-1e6..1e6f64),
        dt in 0.0..1e-3f64,
    ) {
        let out = rotate(r, axis, dt);
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evolve_rabi_preserves_class_norms(
        omega in 0.0..1e6f64,
        detuning in -1e6..1e6f64,
        phase in -PI..PI,
        dt in 0.0..1e-3f64,
        tilt in 0.0..PI,
    ) {
        let mut state = purified(1e3);
        evolve_rabi(&mut state, &MicrowavePulse::new(MicrowaveField::resonant(1e9), tilt / 1e9));
        let before: Vec<f64> = state.classes.iter().map(|c| c.bloch_norm()).collect();
        let field = MicrowaveField { rabi_frequency: omega, detuning, phase };
        evolve_rabi(&mut state, &MicrowavePulse::new(field, dt));
        for (c, b) in state.classes.iter().zip(before) {
            prop_assert!((c.bloch_norm() - b).abs() < 1e-12);
        }
    }
}
