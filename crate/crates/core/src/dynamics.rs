//! Time evolution of the ensemble: microwave rotations, probe back-action,
//! trap dephasing and execution of event schedules.
//!
//! Bloch vectors obey `dR/dt = A × R` with `A = (Ω cos φ, Ω sin φ, δ)`, so a
//! resonant drive from `w = -1` gives `w(t) = -cos Ωt`. Every segment is an
//! exact rotation; there is no ODE stepping.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cesium_model::{LevelScheme, MultiColorResponse, ProbeColor, ProbeGeometry};
use crate::detection::PulseRecord;
use crate::ensemble::EnsembleState;
use crate::error::{Error, Result};

/// Stark kicks above this size (radians per pulse) break the small-kick
/// picture and are reported.
pub const KICK_WARNING_RAD: f64 = 0.1;

/// A continuous microwave field in the rotating frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicrowaveField {
    /// Ω, rad/s.
    pub rabi_frequency: f64,
    /// δ, rad/s.
    pub detuning: f64,
    pub phase: f64,
}

impl MicrowaveField {
    pub fn resonant(rabi_frequency: f64) -> Self {
        MicrowaveField {
            rabi_frequency,
            detuning: 0.0,
            phase: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rabi_frequency >= 0.0 && self.rabi_frequency.is_finite()) {
            return Err(Error::Config("Rabi frequency must be finite and non-negative".into()));
        }
        if !(self.detuning.is_finite() && self.phase.is_finite()) {
            return Err(Error::Config("microwave detuning and phase must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicrowavePulse {
    pub rabi_frequency: f64,
    pub detuning: f64,
    pub phase: f64,
    pub duration: f64,
}

impl MicrowavePulse {
    pub fn new(field: MicrowaveField, duration: f64) -> Self {
        MicrowavePulse {
            rabi_frequency: field.rabi_frequency,
            detuning: field.detuning,
            phase: field.phase,
            duration,
        }
    }

    pub fn field(&self) -> MicrowaveField {
        MicrowaveField {
            rabi_frequency: self.rabi_frequency,
            detuning: self.detuning,
            phase: self.phase,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.field().validate()?;
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::Config("pulse duration must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// One probe pulse, possibly with several simultaneous colors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbePulse {
    pub colors: Vec<ProbeColor>,
    pub duration_s: f64,
}

impl ProbePulse {
    pub fn new(colors: Vec<ProbeColor>, duration_s: f64) -> Self {
        ProbePulse { colors, duration_s }
    }

    /// Photons summed over colors.
    pub fn photon_number(&self) -> f64 {
        self.colors.iter().map(|c| c.photon_number).sum()
    }

    /// Same colors with every photon number multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.colors {
            c.photon_number *= factor;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.colors.is_empty() {
            return Err(Error::Config("probe pulse needs at least one color".into()));
        }
        for c in &self.colors {
            c.validate()?;
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Config("probe duration must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Per-photon strengths of the probe's effect on the clock pseudo-spin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackActionModel {
    /// φ̄: ensemble-mean differential Stark phase per photon, rad.
    pub stark_phase_per_photon: f64,
    pub raman_prob_per_photon: f64,
    pub rayleigh_prob_per_photon: f64,
}

impl BackActionModel {
    pub fn disabled() -> Self {
        BackActionModel {
            stark_phase_per_photon: 0.0,
            raman_prob_per_photon: 0.0,
            rayleigh_prob_per_photon: 0.0,
        }
    }

    /// Scattering probability per photon `φ̄ γ / |Δ|`, split between Raman
    /// (`raman_fraction`) and Rayleigh events.
    pub fn from_detuning(
        stark_phase_per_photon: f64,
        linewidth_mhz: f64,
        detuning_mhz: f64,
        raman_fraction: f64,
    ) -> Result<Self> {
        if detuning_mhz == 0.0 || !detuning_mhz.is_finite() {
            return Err(Error::Config("scattering model needs a finite nonzero detuning".into()));
        }
        if !(0.0..=1.0).contains(&raman_fraction) {
            return Err(Error::Config("Raman fraction must lie in [0, 1]".into()));
        }
        let total = stark_phase_per_photon * linewidth_mhz / detuning_mhz.abs();
        let model = BackActionModel {
            stark_phase_per_photon,
            raman_prob_per_photon: total * raman_fraction,
            rayleigh_prob_per_photon: total * (1.0 - raman_fraction),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.stark_phase_per_photon,
            self.raman_prob_per_photon,
            self.rayleigh_prob_per_photon,
        ];
        if all.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::Config(
                "back-action strengths must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn scattering_prob_per_photon(&self) -> f64 {
        self.raman_prob_per_photon + self.rayleigh_prob_per_photon
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Microwave {
        start_s: f64,
        pulse: MicrowavePulse,
    },
    /// A probe pulse; `drive` keeps a microwave field on while it lasts.
    Probe {
        start_s: f64,
        pulse: ProbePulse,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        drive: Option<MicrowaveField>,
    },
    Gap {
        start_s: f64,
        duration_s: f64,
    },
}

impl Event {
    pub fn start(&self) -> f64 {
        match self {
            Event::Microwave { start_s, .. } | Event::Probe { start_s, .. } | Event::Gap { start_s, .. } => *start_s,
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            Event::Microwave { pulse, .. } => pulse.duration,
            Event::Probe { pulse, .. } => pulse.duration_s,
            Event::Gap { duration_s, .. } => *duration_s,
        }
    }

    pub fn end(&self) -> f64 {
        self.start() + self.duration()
    }

    fn validate(&self) -> Result<()> {
        if !(self.start() >= 0.0 && self.start().is_finite()) {
            return Err(Error::Schedule(format!("bad start time {}", self.start())));
        }
        match self {
            Event::Microwave { pulse, .. } => pulse.validate(),
            Event::Probe { pulse, drive, .. } => {
                pulse.validate()?;
                drive.map_or(Ok(()), |d| d.validate())
            }
            Event::Gap { duration_s, .. } => {
                if *duration_s >= 0.0 && duration_s.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Schedule("gap duration must be non-negative".into()))
                }
            }
        }
    }
}

/// Time-ordered, non-overlapping events. Time not covered by any event is
/// free evolution under the trap detuning alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    events: Vec<Event>,
}

/// Slack for floating-point round-off when consecutive events touch.
const OVERLAP_SLACK_S: f64 = 1e-12;

impl Schedule {
    pub fn new(events: Vec<Event>) -> Result<Self> {
        for e in &events {
            e.validate()?;
        }
        for (k, pair) in events.windows(2).enumerate() {
            if pair[1].start() < pair[0].end() - OVERLAP_SLACK_S {
                return Err(Error::Schedule(format!(
                    "event {} starts at {:e} s before event {} ends at {:e} s",
                    k + 1,
                    pair[1].start(),
                    k,
                    pair[0].end()
                )));
            }
        }
        Ok(Schedule { events })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn end(&self) -> f64 {
        self.events.iter().map(Event::end).fold(0.0, f64::max)
    }

    pub fn probe_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, Event::Probe { .. })).count()
    }

    pub fn total_photons(&self) -> f64 {
        self.events
            .iter()
            .map(|e| match e {
                Event::Probe { pulse, .. } => pulse.photon_number(),
                _ => 0.0,
            })
            .sum()
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: Schedule = toml::from_str(text)?;
        Schedule::new(raw.events)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

/// Continuous drive for `total_s` with probes starting every `cadence_s`
/// from `first_start_s`; the drive stays on through each probe.
pub fn driven_probe_schedule(
    field: MicrowaveField,
    total_s: f64,
    cadence_s: f64,
    first_start_s: f64,
    probe: &ProbePulse,
) -> Result<Schedule> {
    if !(cadence_s > probe.duration_s) {
        return Err(Error::Schedule("probe cadence must exceed the probe duration".into()));
    }
    let starts: Vec<f64> = (0..)
        .map(|k| first_start_s + k as f64 * cadence_s)
        .take_while(|s| s + probe.duration_s <= total_s)
        .collect();
    probes_in_drive(field, total_s, &starts, probe)
}

/// Probes centred on the `w = +1` poles of a resonant drive from `w = -1`,
/// i.e. at odd multiples of the half Rabi period `π/Ω`. Stark kicks at a
/// pole leave the Bloch vector untouched.
pub fn echo_schedule(rabi_frequency: f64, total_s: f64, probe: &ProbePulse) -> Result<Schedule> {
    if !(rabi_frequency > 0.0) {
        return Err(Error::Config("echo schedule needs Ω > 0".into()));
    }
    let half_period = PI / rabi_frequency;
    if probe.duration_s >= 2.0 * half_period {
        return Err(Error::Schedule("probe longer than the Rabi period".into()));
    }
    let starts: Vec<f64> = (0..)
        .map(|k| (2 * k + 1) as f64 * half_period - probe.duration_s / 2.0)
        .take_while(|s| s + probe.duration_s <= total_s)
        .collect();
    probes_in_drive(MicrowaveField::resonant(rabi_frequency), total_s, &starts, probe)
}

fn probes_in_drive(field: MicrowaveField, total_s: f64, starts: &[f64], probe: &ProbePulse) -> Result<Schedule> {
    let mut events = Vec::with_capacity(2 * starts.len() + 1);
    let mut t = 0.0;
    for &s in starts {
        if s > t {
            events.push(Event::Microwave {
                start_s: t,
                pulse: MicrowavePulse::new(field, s - t),
            });
        }
        events.push(Event::Probe {
            start_s: s,
            pulse: probe.clone(),
            drive: Some(field),
        });
        t = s + probe.duration_s;
    }
    if total_s > t {
        events.push(Event::Microwave {
            start_s: t,
            pulse: MicrowavePulse::new(field, total_s - t),
        });
    }
    Schedule::new(events)
}

/// Rotates `r` by `dR/dt = axis × R` over `dt`.
pub fn rotate(r: [f64; 3], axis: [f64; 3], dt: f64) -> [f64; 3] {
    let rate = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let angle = rate * dt;
    if angle == 0.0 {
        return r;
    }
    let k = axis.map(|a| a / rate);
    let (sin, cos) = angle.sin_cos();
    let kxr = [
        k[1] * r[2] - k[2] * r[1],
        k[2] * r[0] - k[0] * r[2],
        k[0] * r[1] - k[1] * r[0],
    ];
    let kdr = k[0] * r[0] + k[1] * r[1] + k[2] * r[2];
    std::array::from_fn(|i| r[i] * cos + kxr[i] * sin + k[i] * kdr * (1.0 - cos))
}

fn rotate_z(r: [f64; 3], angle: f64) -> [f64; 3] {
    let (sin, cos) = angle.sin_cos();
    [r[0] * cos - r[1] * sin, r[0] * sin + r[1] * cos, r[2]]
}

fn evolve_field(state: &mut EnsembleState, field: Option<&MicrowaveField>, dt: f64) {
    if dt <= 0.0 {
        return;
    }
    let (ox, oy, det) = match field {
        Some(f) => {
            let (s, c) = f.phase.sin_cos();
            (f.rabi_frequency * c, f.rabi_frequency * s, f.detuning)
        }
        None => (0.0, 0.0, 0.0),
    };
    for class in &mut state.classes {
        class.bloch = rotate(class.bloch, [ox, oy, det + class.static_detuning], dt);
    }
}

/// Drives every class with `pulse`, each about its own axis
/// `(Ω cos φ, Ω sin φ, δ + static detuning)`.
pub fn evolve_rabi(state: &mut EnsembleState, pulse: &MicrowavePulse) {
    evolve_field(state, Some(&pulse.field()), pulse.duration);
}

/// Free precession of each class at its static trap detuning for `dt`.
pub fn apply_trap_dephasing(state: &mut EnsembleState, dt: f64) {
    evolve_field(state, None, dt);
}

/// What one probe pulse saw and did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeOutcome {
    /// Dispersive phase of the probe before back-action.
    pub true_phase: f64,
    /// Atom-weighted mean Stark kick, rad.
    pub mean_kick: f64,
    pub max_kick: f64,
    /// Atoms moved to `lost` by Raman scattering.
    pub raman_loss: f64,
}

/// Applies one probe pulse as an instantaneous event: the dispersive phase
/// is read from the current populations, then each class receives a Stark
/// kick about `w` and loses coherence to Raman and Rayleigh scattering, all
/// scaled by its intensity relative to the ensemble mean.
pub fn apply_probe_backaction(
    state: &mut EnsembleState,
    photons: f64,
    response: &MultiColorResponse,
    model: &BackActionModel,
) -> ProbeOutcome {
    let true_phase = response.phase(&state.populations());
    let mean_intensity = if state.mean_intensity > 0.0 {
        state.mean_intensity
    } else {
        1.0
    };
    let mut max_kick: f64 = 0.0;
    let mut kick_sum = 0.0;
    let mut weight_sum = 0.0;
    let mut raman_loss = 0.0;
    for class in &mut state.classes {
        let dose = photons * class.relative_intensity / mean_intensity;
        let kick = model.stark_phase_per_photon * dose;
        max_kick = max_kick.max(kick.abs());
        kick_sum += class.weight * kick;
        weight_sum += class.weight;
        class.bloch = rotate_z(class.bloch, kick);

        let raman = (model.raman_prob_per_photon * dose).min(1.0);
        let moved = class.weight * raman;
        class.weight -= moved;
        raman_loss += moved;

        let [u, v, w] = class.bloch;
        let keep = (1.0 - model.rayleigh_prob_per_photon * dose * (1.0 - w.abs())).max(0.0);
        class.bloch = [u * keep, v * keep, w];
    }
    state.lost += raman_loss;
    ProbeOutcome {
        true_phase,
        mean_kick: if weight_sum > 0.0 { kick_sum / weight_sum } else { 0.0 },
        max_kick,
        raman_loss,
    }
}

/// Converts a true probe phase into a recorded one.
pub trait PhaseReadout {
    fn read(&mut self, true_phase: f64, photon_number: f64) -> Result<Option<f64>>;
}

/// Records no measured phase.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoReadout;

impl PhaseReadout for NoReadout {
    fn read(&mut self, _true_phase: f64, _photon_number: f64) -> Result<Option<f64>> {
        Ok(None)
    }
}

/// Everything fixed across a schedule run.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsModels {
    pub scheme: LevelScheme,
    pub geometry: ProbeGeometry,
    pub backaction: BackActionModel,
}

impl DynamicsModels {
    pub fn cesium(backaction: BackActionModel) -> Self {
        DynamicsModels {
            scheme: LevelScheme::cesium_d2(),
            geometry: ProbeGeometry::default_cesium(),
            backaction,
        }
    }
}

/// Uniformly sampled ensemble state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateSample {
    pub t_s: f64,
    pub n_up: f64,
    pub n_down: f64,
    /// Atom-weighted mean Bloch vector of the coherent classes.
    pub mean_bloch: [f64; 3],
    pub lost: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeries {
    pub probes: Vec<PulseRecord>,
    pub samples: Vec<StateSample>,
    pub warnings: Vec<String>,
}

struct Runner<'a> {
    state: &'a mut EnsembleState,
    t: f64,
    sample_interval: Option<f64>,
    next_sample: usize,
    samples: Vec<StateSample>,
}

impl Runner<'_> {
    fn sample_time(&self, k: usize) -> f64 {
        self.sample_interval.map_or(f64::INFINITY, |dt| k as f64 * dt)
    }

    fn record_sample(&mut self, t: f64) {
        self.samples.push(StateSample {
            t_s: t,
            n_up: self.state.n_up(),
            n_down: self.state.n_down(),
            mean_bloch: self.state.mean_bloch(),
            lost: self.state.lost,
        });
    }

    /// Evolves to `to`, taking samples at each sample time passed on the way.
    fn advance(&mut self, to: f64, field: Option<&MicrowaveField>) {
        loop {
            let ts = self.sample_time(self.next_sample);
            if ts > to {
                break;
            }
            evolve_field(self.state, field, ts - self.t);
            self.t = self.t.max(ts);
            self.record_sample(ts);
            self.next_sample += 1;
        }
        evolve_field(self.state, field, to - self.t);
        self.t = self.t.max(to);
    }
}

/// Executes `schedule` on `state`. Probe phases are recorded at each pulse
/// midpoint, just before that pulse's back-action; the state is also sampled
/// every `sample_interval` seconds when given.
pub fn run_schedule(
    state: &mut EnsembleState,
    schedule: &Schedule,
    models: &DynamicsModels,
    readout: &mut dyn PhaseReadout,
    sample_interval: Option<f64>,
) -> Result<TimeSeries> {
    models.backaction.validate()?;
    if let Some(dt) = sample_interval {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config("sample interval must be positive".into()));
        }
    }
    let mut cache: Vec<(Vec<ProbeColor>, MultiColorResponse)> = Vec::new();
    let mut probes = Vec::with_capacity(schedule.probe_count());
    let mut large_kicks = 0usize;
    let mut worst_kick: f64 = 0.0;

    let mut run = Runner {
        state,
        t: 0.0,
        sample_interval,
        next_sample: 0,
        samples: Vec::new(),
    };
    for event in schedule.events() {
        run.advance(event.start(), None);
        match event {
            Event::Microwave { pulse, .. } => {
                let field = pulse.field();
                run.advance(event.end(), Some(&field));
            }
            Event::Gap { .. } => run.advance(event.end(), None),
            Event::Probe { pulse, drive, .. } => {
                let mid = event.start() + pulse.duration_s / 2.0;
                run.advance(mid, drive.as_ref());
                let idx = match cache.iter().position(|(c, _)| *c == pulse.colors) {
                    Some(i) => i,
                    None => {
                        let r = MultiColorResponse::new(&pulse.colors, &models.geometry, &models.scheme)?;
                        cache.push((pulse.colors.clone(), r));
                        cache.len() - 1
                    }
                };
                let (n_up, n_down) = (run.state.n_up(), run.state.n_down());
                let photons = pulse.photon_number();
                let outcome = apply_probe_backaction(run.state, photons, &cache[idx].1, &models.backaction);
                if outcome.max_kick > KICK_WARNING_RAD {
                    large_kicks += 1;
                    worst_kick = worst_kick.max(outcome.max_kick);
                }
                let measured_phase = readout.read(outcome.true_phase, photons)?;
                probes.push(PulseRecord {
                    time_s: mid,
                    true_phase: outcome.true_phase,
                    measured_phase,
                    photon_number: photons,
                    n_up,
                    n_down,
                });
                run.advance(event.end(), drive.as_ref());
            }
        }
    }
    let end = schedule.end();
    run.advance(end, None);
    let samples = run.samples;

    let mut warnings = Vec::new();
    if large_kicks > 0 {
        warnings.push(format!(
            "{large_kicks} probe pulses gave Stark kicks above {KICK_WARNING_RAD} rad (largest {worst_kick:.3} rad)"
        ));
    }
    Ok(TimeSeries {
        probes,
        samples,
        warnings,
    })
}

/// `w(t)` for a single class starting at `w = -1` under a constant drive.
pub fn rabi_formula_w(rabi_frequency: f64, detuning: f64, t: f64) -> f64 {
    let general = rabi_frequency.hypot(detuning);
    if general == 0.0 {
        return -1.0;
    }
    -1.0 + 2.0 * (rabi_frequency / general).powi(2) * (general * t / 2.0).sin().powi(2)
}
