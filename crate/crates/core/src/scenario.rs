//! Named experiment scenarios: layered TOML configuration, validation, and
//! runners that write CSV traces, fit reports and a run manifest.

use std::f64::consts::TAU;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::angular_momentum::{wigner_3j, wigner_6j, ExactRadical, HalfInt};
use crate::cesium_model::{
    photons_from_power, solve_balance, BalanceSearch, BalanceSolution, LevelScheme, ProbeColor, ProbeGeometry,
};
use crate::detection::{
    average_traces, decompose_noise, fit_noise_linear, run_projection_noise_scan, run_rabi_replicates,
    write_noise_scan_file, write_rabi_trace_file, InterferometerModel, NoiseScanConfig, RabiExperiment, RabiRun,
};
use crate::dynamics::{
    driven_probe_schedule, echo_schedule, BackActionModel, DynamicsModels, MicrowaveField, ProbePulse, Schedule,
    KICK_WARNING_RAD,
};
use crate::ensemble::PreparationConfig;
use crate::error::{Error, Result};
use crate::fit::fit_damped_sine;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    RabiFig2,
    RabiFig3,
    NoiseFig4,
    Balance,
    Wigner,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 5] = [
        ScenarioName::RabiFig2,
        ScenarioName::RabiFig3,
        ScenarioName::NoiseFig4,
        ScenarioName::Balance,
        ScenarioName::Wigner,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::RabiFig2 => "rabi-fig2",
            ScenarioName::RabiFig3 => "rabi-fig3",
            ScenarioName::NoiseFig4 => "noise-fig4",
            ScenarioName::Balance => "balance",
            ScenarioName::Wigner => "wigner",
        }
    }

    pub fn is_rabi(self) -> bool {
        matches!(self, ScenarioName::RabiFig2 | ScenarioName::RabiFig3)
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }
}

/// One probe-pulse setting of a Rabi scenario; each yields its own trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub duration_s: f64,
    pub photons: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RabiSettings {
    /// Ω/2π, Hz.
    pub rabi_frequency_hz: f64,
    /// δ/2π, Hz.
    pub microwave_detuning_hz: f64,
    pub duration_s: f64,
    pub cadence_s: f64,
    /// Probe detuning from `F = 4 -> F' = 5`, MHz.
    pub delta45_mhz: f64,
    pub pulses: Vec<PulseSpec>,
    /// Place probes on the Bloch-sphere poles instead of a fixed cadence.
    pub echo: bool,
}

impl Default for RabiSettings {
    fn default() -> Self {
        // Purified ensemble, 0.2 μs probes every 2.3 μs, 50 probes per cycle.
        let cadence = 2.3e-6;
        RabiSettings {
            rabi_frequency_hz: 1.0 / (50.0 * cadence),
            microwave_detuning_hz: 0.0,
            duration_s: 3500.0 * cadence,
            cadence_s: cadence,
            delta45_mhz: 160.0,
            pulses: vec![PulseSpec {
                duration_s: 0.2e-6,
                photons: 4e4,
            }],
            echo: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackActionSettings {
    pub enabled: bool,
    /// φ̄, rad per photon.
    pub stark_phase_per_photon: f64,
    /// Share of scattering events that are Raman.
    pub raman_fraction: f64,
    /// Overrides the `φ̄ γ / |Δ|` default when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scattering_prob_per_photon: Option<f64>,
}

impl Default for BackActionSettings {
    fn default() -> Self {
        BackActionSettings {
            enabled: true,
            stark_phase_per_photon: 4e-7,
            raman_fraction: 0.5,
            scattering_prob_per_photon: None,
        }
    }
}

impl BackActionSettings {
    pub fn model(&self, scheme: &LevelScheme, detuning_mhz: f64) -> Result<BackActionModel> {
        if !self.enabled {
            return Ok(BackActionModel::disabled());
        }
        let model = match self.scattering_prob_per_photon {
            Some(p) => BackActionModel {
                stark_phase_per_photon: self.stark_phase_per_photon,
                raman_prob_per_photon: p * self.raman_fraction,
                rayleigh_prob_per_photon: p * (1.0 - self.raman_fraction),
            },
            None => BackActionModel::from_detuning(
                self.stark_phase_per_photon,
                scheme.linewidth_mhz,
                detuning_mhz,
                self.raman_fraction,
            )?,
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSettings {
    pub atom_numbers: Vec<u64>,
    /// Photons in the single two-color pulse, split equally between colors.
    pub photons: f64,
    pub delta45_mhz: f64,
    /// Pins color B (from `F = 3 -> F' = 2`, MHz) instead of solving for the
    /// balance point. The scan refuses colors that are out of balance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta32_mhz: Option<f64>,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        NoiseSettings {
            atom_numbers: vec![1_000, 3_000, 10_000, 30_000, 100_000],
            photons: 3.6e7,
            delta45_mhz: 160.0,
            delta32_mhz: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceSettings {
    pub delta45_mhz: f64,
    /// Among several roots, the one closest to this detuning is reported.
    pub hint_mhz: f64,
}

impl Default for BalanceSettings {
    fn default() -> Self {
        BalanceSettings {
            delta45_mhz: 160.0,
            hint_mhz: -135.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WignerSettings {
    /// `"3j"` or `"6j"`.
    pub symbol: String,
    pub args: Vec<String>,
}

impl Default for WignerSettings {
    fn default() -> Self {
        WignerSettings {
            symbol: "6j".into(),
            args: ["1", "1", "1", "1", "1", "1"].map(String::from).to_vec(),
        }
    }
}

/// Fully resolved configuration of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioName,
    pub seed: u64,
    /// Rabi scenarios: realizations averaged. Noise scan: repetitions per
    /// atom number.
    pub reps: usize,
    pub preparation: PreparationConfig,
    pub rabi: RabiSettings,
    pub backaction: BackActionSettings,
    pub interferometer: InterferometerModel,
    pub noise: NoiseSettings,
    pub balance: BalanceSettings,
    pub wigner: WignerSettings,
}

impl ScenarioConfig {
    /// Built-in defaults for `name`.
    pub fn defaults(name: ScenarioName) -> Self {
        let mut cfg = ScenarioConfig {
            scenario: name,
            seed: 0,
            reps: 50,
            preparation: PreparationConfig {
                purify: true,
                ..PreparationConfig::default()
            },
            rabi: RabiSettings::default(),
            backaction: BackActionSettings::default(),
            interferometer: InterferometerModel::default(),
            noise: NoiseSettings::default(),
            balance: BalanceSettings::default(),
            wigner: WignerSettings::default(),
        };
        match name {
            ScenarioName::RabiFig2 => {
                // Pumped only, 140 nW in 0.5 μs and 1.0 μs pulses every 6 μs.
                let scheme = LevelScheme::cesium_d2();
                cfg.reps = 10;
                cfg.preparation.purify = false;
                cfg.rabi.rabi_frequency_hz = 5e3;
                cfg.rabi.duration_s = 1.5e-3;
                cfg.rabi.cadence_s = 6e-6;
                cfg.rabi.pulses = [0.5e-6, 1.0e-6]
                    .map(|d| PulseSpec {
                        duration_s: d,
                        photons: photons_from_power(140e-9, d, scheme.wavelength_m).round(),
                    })
                    .to_vec();
            }
            ScenarioName::NoiseFig4 => {
                cfg.reps = 3000;
                cfg.interferometer.classical_two_color.relative_amplitude_rms = 1e-3;
            }
            _ => {}
        }
        cfg
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Command-line values that override the configuration file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
}

fn merge(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Layers built-in defaults, an optional TOML file and command-line
/// overrides. A run manifest is accepted as the file: its `config` table is
/// used.
pub fn load_config(name: ScenarioName, file_text: Option<&str>, overrides: &Overrides) -> Result<ScenarioConfig> {
    let mut table = match toml::Value::try_from(ScenarioConfig::defaults(name))? {
        toml::Value::Table(t) => t,
        _ => unreachable!("config serializes to a table"),
    };
    if let Some(text) = file_text {
        let mut file: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        if let Some(toml::Value::Table(inner)) = file.remove("config") {
            file = inner;
        }
        if let Some(s) = file.get("scenario").and_then(toml::Value::as_str) {
            if s != name.as_str() {
                return Err(Error::Config(format!(
                    "configuration is for scenario {s:?}, not {:?}",
                    name.as_str()
                )));
            }
        }
        merge(&mut table, file);
    }
    if let Some(seed) = overrides.seed {
        let seed = i64::try_from(seed).map_err(|_| Error::Config("seed exceeds the TOML integer range".into()))?;
        table.insert("seed".into(), toml::Value::Integer(seed));
    }
    if let Some(reps) = overrides.reps {
        table.insert("reps".into(), toml::Value::Integer(reps as i64));
    }
    let cfg: ScenarioConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    check_config(&cfg)?;
    Ok(cfg)
}

/// Hard errors: values no scenario can run with.
pub fn check_config(cfg: &ScenarioConfig) -> Result<()> {
    cfg.interferometer.validate()?;
    match cfg.scenario {
        ScenarioName::RabiFig2 | ScenarioName::RabiFig3 => {
            cfg.preparation.validate()?;
            let r = &cfg.rabi;
            if r.pulses.is_empty() {
                return Err(Error::Config("rabi scenario needs at least one pulse setting".into()));
            }
            if !(r.rabi_frequency_hz > 0.0 && r.duration_s > 0.0 && r.cadence_s > 0.0) {
                return Err(Error::Config(
                    "Rabi frequency, duration and cadence must be positive".into(),
                ));
            }
            if cfg.reps == 0 {
                return Err(Error::Config("reps must be at least one".into()));
            }
        }
        ScenarioName::NoiseFig4 => {
            if cfg.reps < 2 {
                return Err(Error::Config("noise scan needs at least two repetitions".into()));
            }
            if !(cfg.noise.photons > 0.0) {
                return Err(Error::Config("noise scan needs probe photons".into()));
            }
            if cfg.noise.delta32_mhz.is_some_and(|d| !d.is_finite()) {
                return Err(Error::Config("pinned color B detuning must be finite".into()));
            }
        }
        ScenarioName::Balance => {}
        ScenarioName::Wigner => {
            parse_wigner_args(&cfg.wigner)?;
        }
    }
    Ok(())
}

/// Soft warnings about parameter regimes where the models stop being
/// trustworthy or the statistics are thin.
pub fn validate_config(cfg: &ScenarioConfig) -> Vec<String> {
    let mut out = Vec::new();
    let scheme = LevelScheme::cesium_d2();
    let detuning_ok = |d: f64| d.abs() >= 5.0 * scheme.linewidth_mhz && d.abs() <= 5000.0;
    match cfg.scenario {
        ScenarioName::RabiFig2 | ScenarioName::RabiFig3 => {
            let ba = &cfg.backaction;
            for p in &cfg.rabi.pulses {
                let kick = ba.stark_phase_per_photon * p.photons;
                if ba.enabled && kick > KICK_WARNING_RAD {
                    out.push(format!(
                        "mean Stark kick {kick:.3} rad per pulse ({:.3e} photons) exceeds {KICK_WARNING_RAD} rad",
                        p.photons
                    ));
                }
                if let Ok(model) = ba.model(&scheme, cfg.rabi.delta45_mhz) {
                    let prob = model.scattering_prob_per_photon() * p.photons;
                    if prob > 0.1 {
                        out.push(format!("scattering probability {prob:.3} per pulse exceeds 0.1"));
                    }
                }
            }
            if !detuning_ok(cfg.rabi.delta45_mhz) {
                out.push(format!(
                    "probe detuning {} MHz is outside 5γ..5 GHz",
                    cfg.rabi.delta45_mhz
                ));
            }
        }
        ScenarioName::NoiseFig4 => {
            if cfg.reps < 100 {
                out.push(format!(
                    "{} repetitions per point give poor variance estimates (< 100)",
                    cfg.reps
                ));
            }
            if !detuning_ok(cfg.noise.delta45_mhz) {
                out.push(format!(
                    "probe detuning {} MHz is outside 5γ..5 GHz",
                    cfg.noise.delta45_mhz
                ));
            }
        }
        ScenarioName::Balance => {
            if !detuning_ok(cfg.balance.delta45_mhz) {
                out.push(format!(
                    "probe detuning {} MHz is outside 5γ..5 GHz",
                    cfg.balance.delta45_mhz
                ));
            }
        }
        ScenarioName::Wigner => {}
    }
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    seed: u64,
    config: &'a ScenarioConfig,
}

/// Text output and files produced by a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScenarioReport {
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Runs `cfg`, writing outputs under `out_dir` (required for the simulate
/// scenarios, optional otherwise).
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: Option<&Path>) -> Result<ScenarioReport> {
    check_config(cfg)?;
    let mut report = ScenarioReport {
        warnings: validate_config(cfg),
        ..ScenarioReport::default()
    };
    match cfg.scenario {
        ScenarioName::Wigner => {
            report.lines.push(run_wigner(&cfg.wigner)?);
            return Ok(report);
        }
        ScenarioName::Balance => {
            let sol = balance_for(cfg.balance.delta45_mhz, cfg.balance.hint_mhz)?;
            report.lines.push(format_balance(&sol, cfg.balance.hint_mhz));
            return Ok(report);
        }
        _ => {}
    }
    let dir = out_dir.ok_or_else(|| Error::Config("simulate needs an output directory".into()))?;
    std::fs::create_dir_all(dir)?;
    match cfg.scenario {
        ScenarioName::RabiFig2 | ScenarioName::RabiFig3 => run_rabi_scenario(cfg, dir, &mut report)?,
        ScenarioName::NoiseFig4 => run_noise_scenario(cfg, dir, &mut report)?,
        ScenarioName::Balance | ScenarioName::Wigner => unreachable!(),
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config: cfg,
    };
    let path = dir.join("manifest.toml");
    std::fs::write(&path, toml::to_string(&manifest)?)?;
    report.files.push(path);
    Ok(report)
}

pub fn balance_for(delta45_mhz: f64, hint_mhz: f64) -> Result<BalanceSolution> {
    let scheme = LevelScheme::cesium_d2();
    let geom = ProbeGeometry::default_cesium();
    let search = BalanceSearch {
        hint_mhz,
        ..BalanceSearch::default()
    };
    solve_balance(&ProbeColor::f4_f5(delta45_mhz, 1.0), &scheme, &geom, &search)
}

fn format_balance(sol: &BalanceSolution, hint_mhz: f64) -> String {
    format!(
        "color B detuning from F=3 -> F'=2: {:.4} MHz\nresidual two-color phase per atom: {:.3e} rad ({:.3e} of single-color phase)\noffset from {hint_mhz} MHz reference: {:+.2} MHz",
        sol.detuning_mhz,
        sol.residual,
        sol.relative_residual(),
        sol.detuning_mhz - hint_mhz
    )
}

fn parse_wigner_args(w: &WignerSettings) -> Result<[HalfInt; 6]> {
    if w.args.len() != 6 {
        return Err(Error::Config(format!(
            "wigner needs six arguments, got {}",
            w.args.len()
        )));
    }
    let mut out = [HalfInt::ZERO; 6];
    for (slot, text) in out.iter_mut().zip(&w.args) {
        *slot = text.parse()?;
    }
    Ok(out)
}

/// Decimal with `digits` significant digits.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = digits as i32 - 1 - exponent;
    if (0..=20).contains(&decimals) {
        format!("{:.*}", decimals as usize, x)
    } else {
        format!("{:.*e}", digits - 1, x)
    }
}

pub fn run_wigner(w: &WignerSettings) -> Result<String> {
    let a = parse_wigner_args(w)?;
    let value: ExactRadical = match w.symbol.as_str() {
        "3j" => wigner_3j(a[0], a[1], a[2], a[3], a[4], a[5])?,
        "6j" => wigner_6j(a[0], a[1], a[2], a[3], a[4], a[5])?,
        other => return Err(Error::Config(format!("unknown symbol {other:?}; use 3j or 6j"))),
    };
    Ok(format!("{value}\n{}", format_significant(value.to_f64(), 15)))
}

/// The Rabi experiment a scenario runs for one probe pulse setting.
pub fn rabi_experiment(cfg: &ScenarioConfig, pulse: &PulseSpec) -> Result<RabiExperiment> {
    let scheme = LevelScheme::cesium_d2();
    let r = &cfg.rabi;
    let probe = ProbePulse::new(vec![ProbeColor::f4_f5(r.delta45_mhz, pulse.photons)], pulse.duration_s);
    let field = MicrowaveField {
        rabi_frequency: TAU * r.rabi_frequency_hz,
        detuning: TAU * r.microwave_detuning_hz,
        phase: 0.0,
    };
    let schedule: Schedule = if r.echo {
        echo_schedule(field.rabi_frequency, r.duration_s, &probe)?
    } else {
        driven_probe_schedule(field, r.duration_s, r.cadence_s, 0.0, &probe)?
    };
    let backaction = cfg.backaction.model(&scheme, r.delta45_mhz)?;
    Ok(RabiExperiment {
        preparation: cfg.preparation.clone(),
        schedule,
        models: DynamicsModels::cesium(backaction),
        interferometer: cfg.interferometer,
        sample_interval: None,
    })
}

#[derive(Serialize)]
struct TraceFit {
    file: String,
    pulse_duration_s: f64,
    photons_per_pulse: f64,
    probes: usize,
    fit_failed: bool,
    frequency_hz: f64,
    decay_rate_per_s: f64,
    amplitude_rad: f64,
    offset_rad: f64,
    /// `(max - min) / max` of the fitted normalized phase.
    contrast: f64,
    residual_rms_rad: f64,
}

#[derive(Serialize)]
struct RabiFitReport {
    scenario: String,
    realizations: usize,
    trace: Vec<TraceFit>,
    warnings: Vec<String>,
}

fn run_rabi_scenario(cfg: &ScenarioConfig, dir: &Path, report: &mut ScenarioReport) -> Result<()> {
    let mut fits = Vec::new();
    for (k, pulse) in cfg.rabi.pulses.iter().enumerate() {
        let exp = rabi_experiment(cfg, pulse)?;
        let runs: Vec<RabiRun> = run_rabi_replicates(&exp, cfg.seed.wrapping_add(k as u64), cfg.reps as u64)?;
        for w in runs.iter().flat_map(|r| &r.series.warnings).take(1) {
            report.warnings.push(w.clone());
        }
        let averaged = average_traces(&runs)?;
        let name = if cfg.rabi.pulses.len() == 1 {
            "rabi_trace.csv".to_string()
        } else {
            format!("rabi_trace_{k}.csv")
        };
        let path = dir.join(&name);
        write_rabi_trace_file(&path, &averaged)?;
        report.files.push(path);
        if k == 0 {
            let single = dir.join("rabi_trace_single.csv");
            write_rabi_trace_file(&single, &runs[0].series.probes)?;
            report.files.push(single);
        }

        let (t, y): (Vec<f64>, Vec<f64>) = averaged
            .iter()
            .map(|p| (p.time_s, p.measured_phase.unwrap_or(p.true_phase)))
            .unzip();
        let fit = fit_damped_sine(&t, &y).ok();
        let entry = match &fit {
            Some(f) => {
                let m = f.model;
                TraceFit {
                    file: name.clone(),
                    pulse_duration_s: pulse.duration_s,
                    photons_per_pulse: pulse.photons,
                    probes: averaged.len(),
                    fit_failed: !f.converged,
                    frequency_hz: m.frequency_hz,
                    decay_rate_per_s: m.decay_rate,
                    amplitude_rad: m.amplitude,
                    offset_rad: m.offset,
                    contrast: 2.0 * m.amplitude / (m.offset + m.amplitude),
                    residual_rms_rad: f.residual_rms,
                }
            }
            None => TraceFit {
                file: name.clone(),
                pulse_duration_s: pulse.duration_s,
                photons_per_pulse: pulse.photons,
                probes: averaged.len(),
                fit_failed: true,
                frequency_hz: 0.0,
                decay_rate_per_s: 0.0,
                amplitude_rad: 0.0,
                offset_rad: 0.0,
                contrast: 0.0,
                residual_rms_rad: 0.0,
            },
        };
        report.lines.push(format!(
            "{name}: f = {:.2} Hz, decay = {:.1} /s, contrast = {:.3}{}",
            entry.frequency_hz,
            entry.decay_rate_per_s,
            entry.contrast,
            if entry.fit_failed { " (fit failed)" } else { "" }
        ));
        fits.push(entry);
    }
    let fit_report = RabiFitReport {
        scenario: cfg.scenario.to_string(),
        realizations: cfg.reps,
        trace: fits,
        warnings: report.warnings.clone(),
    };
    let path = dir.join("fit_report.toml");
    std::fs::write(&path, toml::to_string(&fit_report)?)?;
    report.files.push(path);
    Ok(())
}

#[derive(Serialize)]
struct NoiseFitReport {
    color_b_detuning_mhz: f64,
    photons: f64,
    shot_noise_variance_rad2: f64,
    quadratic: QuadraticFit,
    linear: LinearFit,
}

#[derive(Serialize)]
struct QuadraticFit {
    a: f64,
    a_err: f64,
    b: f64,
    b_err: f64,
    c: f64,
    c_err: f64,
    r_squared: f64,
    negative_b: bool,
}

#[derive(Serialize)]
struct LinearFit {
    intercept: f64,
    intercept_err: f64,
    slope: f64,
    slope_err: f64,
    r_squared: f64,
}

/// Two-color scan inputs for a scenario, photons split evenly between the
/// colors. Color B is solved for balance unless pinned; its detuning is
/// returned alongside.
pub fn noise_scan_config(cfg: &ScenarioConfig) -> Result<(NoiseScanConfig, f64)> {
    let per_color = cfg.noise.photons / 2.0;
    let color_a = ProbeColor::f4_f5(cfg.noise.delta45_mhz, per_color);
    let (color_b, detuning) = match cfg.noise.delta32_mhz {
        Some(d) => (ProbeColor::f3_f2(d, per_color), d),
        None => {
            let sol = balance_for(cfg.noise.delta45_mhz, cfg.balance.hint_mhz)?;
            let mut color_b = sol.color_b;
            color_b.photon_number = per_color;
            (color_b, sol.detuning_mhz)
        }
    };
    let scan_cfg = NoiseScanConfig {
        atom_numbers: cfg.noise.atom_numbers.clone(),
        reps: cfg.reps,
        color_a,
        color_b,
    };
    Ok((scan_cfg, detuning))
}

fn run_noise_scenario(cfg: &ScenarioConfig, dir: &Path, report: &mut ScenarioReport) -> Result<()> {
    let scheme = LevelScheme::cesium_d2();
    let geom = ProbeGeometry::default_cesium();
    let (scan_cfg, color_b_detuning) = noise_scan_config(cfg)?;
    let scan = run_projection_noise_scan(&scan_cfg, &cfg.interferometer, &scheme, &geom, cfg.seed)?;
    let path = dir.join("noise_scan.csv");
    write_noise_scan_file(&path, &scan)?;
    report.files.push(path);

    let quad = decompose_noise(&scan)?;
    let lin = fit_noise_linear(&scan)?;
    let fit_report = NoiseFitReport {
        color_b_detuning_mhz: color_b_detuning,
        photons: cfg.noise.photons,
        shot_noise_variance_rad2: cfg.interferometer.readout_variance(cfg.noise.photons),
        quadratic: QuadraticFit {
            a: quad.a,
            a_err: quad.a_err,
            b: quad.b,
            b_err: quad.b_err,
            c: quad.c,
            c_err: quad.c_err,
            r_squared: quad.r_squared,
            negative_b: quad.negative_b,
        },
        linear: LinearFit {
            intercept: lin.coefficients[0],
            intercept_err: lin.std_error(0),
            slope: lin.coefficients[1],
            slope_err: lin.std_error(1),
            r_squared: lin.r_squared,
        },
    };
    if quad.negative_b {
        report
            .warnings
            .push("fitted atomic (linear) noise coefficient is negative beyond 2σ".into());
    }
    report.lines.push(format!(
        "variance = a + b φ + c φ²: a = {:.4e} ± {:.1e}, b = {:.4e} ± {:.1e}, c = {:.4e} ± {:.1e}",
        quad.a, quad.a_err, quad.b, quad.b_err, quad.c, quad.c_err
    ));
    let path = dir.join("fit_report.toml");
    std::fs::write(&path, toml::to_string(&fit_report)?)?;
    report.files.push(path);
    Ok(())
}
